import json

import numpy as np
import pytest

from levitrap.packages.runner.config import parse_config, read_config_document
from levitrap.packages.runner.report import emit_report
from levitrap.packages.runner.runner import MANIFEST_FILE, REPORT_FILE, run_scenarios
from levitrap.packages.runner.tasks import run_task

from .conftest import TWO_PI


def _config(*scenarios: dict):
    content = read_config_document("table1")
    content["scenarios"] = list(scenarios)
    return parse_config(content)


def _preset_config(preset: str, *names: str):
    content = read_config_document(preset)
    content["scenarios"] = [s for s in content["scenarios"] if s["name"] in names]
    return parse_config(content)


def _columns(header) -> dict[str, int]:
    return {name: i for i, name in enumerate(header)}


def test_frequencies_scenario(tmp_path):
    config = _config({"name": "frequencies", "task": "frequencies"})
    manifest = run_scenarios(config, output_dir=tmp_path, threads=1)
    assert not manifest.failed
    assert manifest.scenarios[0].outputs == ["frequencies.csv"]

    lines = (tmp_path / "frequencies.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("species,axis,frequency-hz,beta,branch")
    assert len(lines) == 7
    assert lines[1].startswith("nanoparticle,x,1.59")

    record = json.loads((tmp_path / MANIFEST_FILE).read_text(encoding="utf-8"))
    assert record["digest"] == config.digest
    assert record["scenarios"][0]["status"] == "ok"
    assert "[ok] frequencies" in (tmp_path / REPORT_FILE).read_text(encoding="utf-8")


def test_couplings_and_steady_state(tmp_path):
    config = _config(
        {"name": "couplings", "task": "couplings"},
        {"name": "steady", "task": "steady-state", "options": {"axes": ["z"]}},
    )
    manifest = run_scenarios(config, output_dir=tmp_path, threads=2)
    assert [s.status for s in manifest.scenarios] == ["ok", "ok"]
    couplings, steady = manifest.scenarios
    assert couplings.outputs == ["couplings.csv", "couplings-derived.csv"]
    assert couplings.summary["separation-m"] == pytest.approx(52.58e-6, rel=5e-3)
    assert steady.summary["z"]["temperature-k"] == pytest.approx(23.7, rel=3e-2)


def test_sweep_rows_follow_sweep_order(tmp_path):
    config = _config(
        {
            "name": "damping",
            "task": "steady-state",
            "sweep": {
                "parameter": "particle-damping",
                "start": "1 Hz",
                "stop": "100 Hz",
                "points": 3,
                "scale": "log",
            },
            "options": {"axes": ["z"], "approximations": False},
        }
    )
    output = run_task(config, config.scenarios[0], threads=3)
    header, rows = output.tables[""]
    assert header[0] == "particle-damping-hz"
    assert [row[0] for row in rows] == pytest.approx([1.0, 10.0, 100.0])
    occupations = [row[3] for row in rows]
    assert occupations == sorted(occupations, reverse=True)
    assert output.summary["points"] == 3
    # imposed damping, in Hz
    assert rows[1][2] == pytest.approx(10.0, rel=1e-9)
    assert config.scenarios[0].sweep.values()[0] == pytest.approx(TWO_PI)


def test_failed_points_make_a_partial_scenario(tmp_path):
    config = _config(
        {
            "name": "charges",
            "task": "couplings",
            "sweep": {
                "parameter": "particle-charge",
                "start": "0 C",
                "stop": "750 e",
                "points": 2,
            },
        }
    )
    manifest = run_scenarios(config, output_dir=tmp_path)
    status = manifest.scenarios[0]
    assert status.status == "partial"
    assert len(status.failures) == 1
    assert manifest.failed
    lines = (tmp_path / "charges.csv").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 4


def test_failing_scenario_does_not_stop_the_run(tmp_path):
    config = _config(
        {"name": "search", "task": "equilibria", "options": {"box": "-1 m"}},
        {"name": "frequencies", "task": "frequencies"},
    )
    manifest = run_scenarios(config, output_dir=tmp_path)
    assert [s.status for s in manifest.scenarios] == ["failed", "ok"]
    assert "ConstraintViolation" in manifest.scenarios[0].error
    report = emit_report(manifest)
    assert "[failed] search (equilibria)" in report
    assert report.rstrip().endswith("1 of 2 scenarios succeeded.")


def test_seed_override(tmp_path):
    config = _config({"name": "frequencies", "task": "frequencies", "seed": 4})
    manifest = run_scenarios(config, output_dir=tmp_path, seed=11)
    assert not manifest.failed
    assert manifest.scenarios[0].seed == 11
    # the configuration itself is left untouched
    assert config.scenarios[0].seed == 4


def test_same_seed_writes_identical_tables(tmp_path):
    config = _config(
        {
            "name": "search",
            "task": "equilibria",
            "seed": 3,
            "options": {"restarts": 40, "check-floquet": False},
        }
    )
    first = run_scenarios(config, output_dir=tmp_path / "first", threads=1)
    second = run_scenarios(config, output_dir=tmp_path / "second", threads=2)
    outputs = first.scenarios[0].outputs
    assert outputs == second.scenarios[0].outputs
    for name in [n for n in outputs if n.endswith(".csv")]:
        assert (tmp_path / "first" / name).read_bytes() == (
            tmp_path / "second" / name
        ).read_bytes()


def test_damping_sweep_crosses_between_regimes():
    config = _config(
        {
            "name": "damping",
            "task": "steady-state",
            "sweep": {
                "parameter": "particle-damping",
                "start": "1e-8 Hz",
                "stop": "1e3 Hz",
                "points": 12,
                "scale": "log",
            },
            "options": {"axes": ["z"]},
        }
    )
    header, rows = run_task(config, config.scenarios[0], threads=4).tables[""]
    column = _columns(header)
    occupation = column["particle-occupation"]
    plateau = column["approximate-occupation"]
    line = column["feedback-limit"]

    # below the gas damping nothing is added
    assert rows[0][line] is None
    assert 0.5 < rows[0][occupation] / rows[0][plateau] < 2
    assert 0.5 < rows[-1][occupation] / rows[-1][line] < 2
    for row in rows:
        assert row[occupation] < 2 * row[plateau]
        if row[line] is not None:
            assert row[occupation] < 2 * row[line]
    occupations = [row[occupation] for row in rows]
    assert occupations == sorted(occupations, reverse=True)


def test_resonant_pair_without_displacement_noise():
    config = _config(
        {
            "name": "resonant",
            "task": "steady-state",
            "environment": {"displacement-heating-power": "0 W"},
            "options": {"axes": ["z"], "resonant-frequency": "1 kHz"},
        }
    )
    output = run_task(config, config.scenarios[0])
    assert output.summary["z"]["occupation"] == pytest.approx(110, rel=0.2)


@pytest.mark.slow
def test_ion_chain_scaling():
    config = _preset_config("fig5_nion", "n-ion")
    header, rows = run_task(config, config.scenarios[0], threads=4).tables[""]
    column = _columns(header)
    assert all(row[column["stable"]] for row in rows)
    counts = np.array([row[column["ion-count"]] for row in rows], dtype=float)
    occupations = np.array([row[column["particle-occupation"]] for row in rows])
    couplings = np.abs([row[column["lowest-coupling-hz"]] for row in rows])

    assert counts.tolist() == list(range(1, 13))
    assert np.polyfit(np.log(counts), np.log(occupations), 1)[0] == pytest.approx(-1.0, abs=0.15)
    assert np.polyfit(np.log(counts), np.log(couplings), 1)[0] == pytest.approx(0.5, abs=0.1)
    assert occupations[-1] == pytest.approx(1.5e6, rel=0.15)
    assert occupations[0] / occupations[-1] == pytest.approx(12.2, rel=0.15)


@pytest.mark.slow
def test_thirteen_ions_have_no_stable_equilibrium(tmp_path):
    config = _preset_config("fig5_nion", "thirteen-ions")
    manifest = run_scenarios(config, output_dir=tmp_path, threads=4)
    assert manifest.scenarios[0].status == "ok"
    lines = (tmp_path / "thirteen-ions.csv").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 1
    report = (tmp_path / REPORT_FILE).read_text(encoding="utf-8")
    assert "No stable equilibrium found for N=13" in report
