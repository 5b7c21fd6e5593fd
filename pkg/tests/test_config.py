import math
from pathlib import Path

import pytest
import yaml

from levitrap.core.errors import (
    ConfigError,
    ConstraintViolation,
    ParseError,
    SchemaError,
    UnitError,
)
from levitrap.core.units import format_quantity, parse_quantity
from levitrap.core.utils.enums import SolverBranch, SweepScale, TaskKind
from levitrap.core.utils.formatting import format_number, format_table
from levitrap.packages.runner.config import (
    SweepSpec,
    dump_config,
    load_config,
    merge_configs,
    parse_config,
    read_config_document,
)

from .conftest import TWO_PI


def _write(path: Path, content: dict) -> Path:
    path.write_text(yaml.safe_dump(content), encoding="utf-8")
    return path


@pytest.mark.parametrize(
    "value, kind, expected",
    [
        ("7 kHz", "frequency", TWO_PI * 7e3),
        (7000, "frequency", TWO_PI * 7e3),
        ("1e-10 mbar", "pressure", 1e-8),
        ("0.9 mm", "length", 0.9e-3),
        ("-80 V", "voltage", -80.0),
        ("750 e", "charge", 750 * 1.602176634e-19),
        ("12", "count", 12),
    ],
)
def test_parse_quantity(value, kind, expected):
    assert parse_quantity(value, kind) == pytest.approx(expected, rel=1e-12)


def test_parse_quantity_rejects_wrong_units():
    with pytest.raises(UnitError):
        parse_quantity("7 kg", "frequency", "slow-frequency")
    with pytest.raises(UnitError):
        parse_quantity("2.5", "count", "ion-count")
    with pytest.raises(UnitError):
        parse_quantity(True, "mass")


def test_format_quantity_is_lossless():
    value = parse_quantity("17.5 MHz", "frequency")
    assert parse_quantity(format_quantity(value, "frequency"), "frequency") == value
    assert format_quantity(3, "count") == 3


def test_table_formatting():
    assert format_number(1 / 3) == "3.33333333e-01"
    assert format_number(True) == "true"
    assert format_number(None) == ""
    assert format_table(("a", "b"), [[1, 2.0]]) == "a,b\n1,2.00000000e+00\n"


def test_load_bundled_preset():
    config = load_config("table1")
    assert config.ion_count == 1
    assert config.branch is SolverBranch.auto
    assert config.trap.slow_frequency == pytest.approx(TWO_PI * 7e3)
    assert config.environment.pressure == pytest.approx(1e-8)
    assert [s.kind for s in config.scenarios] == [
        TaskKind.frequencies,
        TaskKind.couplings,
        TaskKind.steady_state,
    ]
    assert config.spec.particle_frequencies[0] / TWO_PI == pytest.approx(1599.8, rel=3e-3)
    assert len(config.digest) == 64


def _reordered(value):
    if isinstance(value, dict):
        return {key: _reordered(value[key]) for key in reversed(list(value))}
    if isinstance(value, list):
        return [_reordered(item) for item in value]
    return value


def test_digest_ignores_key_order():
    digest = parse_config(read_config_document("table1")).digest
    reordered = _reordered(read_config_document("table1"))
    assert list(reordered) != list(read_config_document("table1"))
    assert parse_config(reordered).digest == digest

    changed = read_config_document("table1")
    changed["scenarios"] = changed["scenarios"][:1]
    assert parse_config(changed).digest != digest


def test_extends_inherits_tables_but_not_scenarios():
    config = load_config("fig4_micromotion")
    assert config.trap.enforce_gauss
    assert config.trap.x.dc == pytest.approx(-2.555)
    assert config.nanoparticle.radius == pytest.approx(134e-9)
    assert "frequencies" not in [s.name for s in config.scenarios]


def test_preset_merge_appends_scenarios(tmp_path):
    path = _write(
        tmp_path / "extra.yml",
        {
            "environment": {"feedback-damping": "1 Hz"},
            "scenarios": [{"name": "search", "task": "equilibria"}],
        },
    )
    config = load_config(path, preset="table1")
    assert config.environment.feedback_damping == pytest.approx(TWO_PI)
    assert [s.name for s in config.scenarios][-1] == "search"
    assert len(config.scenarios) == 4


def test_merge_configs_is_deep():
    base = {"system": {"ion": {"mass": 1, "charge": 2}}, "scenarios": [{"name": "a"}]}
    merged = merge_configs(base, {"system": {"ion": {"mass": 3}}, "scenarios": [{"name": "b"}]})
    assert merged["system"]["ion"] == {"mass": 3, "charge": 2}
    assert [s["name"] for s in merged["scenarios"]] == ["a", "b"]
    assert base["system"]["ion"]["mass"] == 1


def test_unknown_key_is_rejected():
    content = read_config_document("table1")
    content["system"]["trap"]["frequency"] = "1 Hz"
    with pytest.raises(SchemaError, match="system.trap.frequency"):
        parse_config(content)


def test_missing_key_is_rejected():
    content = read_config_document("table1")
    del content["system"]["ion"]["mass"]
    with pytest.raises(SchemaError, match="system.ion.mass"):
        parse_config(content)


def test_bad_unit_is_rejected():
    content = read_config_document("table1")
    content["environment"]["pressure"] = "1e-10 kg"
    with pytest.raises(UnitError):
        parse_config(content)


def test_yaml_errors_carry_their_position(tmp_path):
    path = tmp_path / "broken.yml"
    path.write_text("system:\n  trap: [unclosed\n", encoding="utf-8")
    with pytest.raises(ParseError) as error:
        load_config(path)
    assert error.value.line > 0


def test_missing_file_and_unknown_preset(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.yml")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.yml", preset="table0")


def test_enforced_gauss_law_on_uncompensated_trap():
    content = read_config_document("table1")
    content["system"]["trap"]["enforce-gauss"] = True
    with pytest.raises(ConstraintViolation):
        parse_config(content)


def test_scenario_validation():
    content = read_config_document("table1")
    content["scenarios"] = [
        {"name": "a", "task": "couplings"},
        {"name": "a", "task": "frequencies"},
    ]
    with pytest.raises(SchemaError, match="Several scenarios"):
        parse_config(content)

    content["scenarios"] = [{"name": "chain", "task": "n-ion-sweep"}]
    with pytest.raises(SchemaError, match="ion-count"):
        parse_config(content)

    content["scenarios"] = [{"name": "a", "task": "floquet", "options": {"mode": "fast"}}]
    with pytest.raises(SchemaError, match="Floquet mode"):
        parse_config(content)

    content["scenarios"] = [{"name": "a", "task": "frequencies", "options": {"restarts": 3}}]
    with pytest.raises(SchemaError, match="Unknown option"):
        parse_config(content)


def test_scenario_environment_override():
    content = read_config_document("table1")
    content["scenarios"] = [
        {"name": "quiet", "task": "steady-state", "environment": {"feedback-damping": "2 Hz"}}
    ]
    scenario = parse_config(content).scenarios[0]
    assert scenario.environment == {"feedback-damping": pytest.approx(2 * TWO_PI)}
    assert scenario.output == "quiet"


def test_sweep_values():
    charges = SweepSpec("particle-charge", 1.0, 3.0, points=3)
    assert charges.values().tolist() == [1.0, 2.0, 3.0]
    damping = SweepSpec("particle-damping", 1e-2, 1e2, points=5, scale=SweepScale.log)
    assert damping.values() == pytest.approx([1e-2, 1e-1, 1.0, 1e1, 1e2])
    ions = SweepSpec("ion-count", 1, 12, points=40)
    assert ions.values().tolist() == list(range(1, 13))
    with pytest.raises(SchemaError):
        SweepSpec("particle-damping", 0.0, 1.0, points=3, scale=SweepScale.log)
    with pytest.raises(SchemaError):
        SweepSpec("trap-depth", 0.0, 1.0)


def test_dumped_configuration_loads_back(tmp_path):
    original = load_config("fig3_sweep")
    path = tmp_path / "dumped.yml"
    path.write_text(dump_config(original), encoding="utf-8")
    reloaded = load_config(path)
    # frequencies go through a Hz conversion and may move by one ulp
    assert reloaded.trap.x == original.trap.x
    assert reloaded.trap.slow_frequency == pytest.approx(original.trap.slow_frequency, rel=1e-12)
    assert reloaded.nanoparticle == original.nanoparticle
    assert reloaded.ion == original.ion
    assert reloaded.environment.probe == original.environment.probe
    assert reloaded.environment.doppler_damping == pytest.approx(
        original.environment.doppler_damping, rel=1e-12
    )
    assert reloaded.environment.pressure == original.environment.pressure
    for before, after in zip(original.scenarios, reloaded.scenarios, strict=True):
        assert after.name == before.name
        assert after.options == before.options
        assert after.environment == pytest.approx(before.environment, rel=1e-12)
        assert after.sweep.points == before.sweep.points
        assert after.sweep.values() == pytest.approx(before.sweep.values(), rel=1e-12)
    assert math.isclose(
        reloaded.spec.particle_frequencies[2], original.spec.particle_frequencies[2]
    )
