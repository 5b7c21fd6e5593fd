import json
import sys
from pathlib import Path

import pytest
import yaml

from levitrap import __version__
from levitrap.__main__ import (
    EXIT_CONFIG_ERROR,
    EXIT_SCENARIO_FAILURES,
    EXIT_SUCCESS,
    main,
    parse_cli_flags,
)
from levitrap.settings import OUTPUT_DIR_ENV


@pytest.fixture
def workdir(tmp_path, monkeypatch) -> Path:
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
    return tmp_path


def _run(monkeypatch, *arguments: str) -> int:
    monkeypatch.setattr(sys, "argv", ["levitrap", *arguments])
    with pytest.raises(SystemExit) as exit_info:
        main()
    return exit_info.value.code


def _write_config(path: Path, *scenarios: dict) -> Path:
    content = {"extends": "table1", "scenarios": list(scenarios)}
    path.write_text(yaml.safe_dump(content), encoding="utf-8")
    return path


def test_parse_run_flags():
    flags = parse_cli_flags(["--debug", "run", "table1", "--out", "out", "--threads", "3"])
    assert flags.command == "run"
    assert flags.config == "table1"
    assert flags.out == Path("out")
    assert flags.threads == 3
    assert flags.seed is None
    assert flags.debug


def test_no_command_prints_help(capsys):
    with pytest.raises(SystemExit) as exit_info:
        parse_cli_flags([])
    assert exit_info.value.code == EXIT_CONFIG_ERROR
    assert "usage" in capsys.readouterr().out


def test_version(monkeypatch, capsys):
    assert _run(monkeypatch, "--version") == EXIT_SUCCESS
    assert __version__ in capsys.readouterr().out


def test_init_writes_template_once(workdir, monkeypatch):
    assert _run(monkeypatch, "init") == EXIT_SUCCESS
    template = workdir / "levitrap.yml"
    assert "system:" in template.read_text(encoding="utf-8")
    assert _run(monkeypatch, "init") == EXIT_CONFIG_ERROR


def test_invalid_configuration(workdir, monkeypatch):
    assert _run(monkeypatch, "run", str(workdir / "absent.yml")) == EXIT_CONFIG_ERROR
    broken = workdir / "broken.yml"
    broken.write_text("system: [", encoding="utf-8")
    assert _run(monkeypatch, "run", str(broken)) == EXIT_CONFIG_ERROR


def test_successful_run(workdir, monkeypatch):
    path = _write_config(workdir / "run.yml", {"name": "frequencies", "task": "frequencies"})
    code = _run(monkeypatch, "--disable-rich", "run", str(path), "--out", "out", "--seed", "7")
    assert code == EXIT_SUCCESS
    manifest = json.loads((workdir / "out" / "manifest.json").read_text(encoding="utf-8"))
    assert [s["status"] for s in manifest["scenarios"]] == ["ok"]
    assert (workdir / "out" / "frequencies.csv").is_file()
    assert (workdir / "out" / "report.txt").is_file()


def test_output_directory_from_environment(workdir, monkeypatch):
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(workdir / "from-env"))
    path = _write_config(workdir / "run.yml", {"name": "frequencies", "task": "frequencies"})
    assert _run(monkeypatch, "--disable-rich", "run", str(path)) == EXIT_SUCCESS
    assert (workdir / "from-env" / "manifest.json").is_file()


def test_failed_scenario_sets_exit_code(workdir, monkeypatch):
    path = _write_config(
        workdir / "run.yml",
        {"name": "search", "task": "equilibria", "options": {"box": "-1 m"}},
    )
    code = _run(monkeypatch, "--disable-rich", "run", str(path), "--out", "out")
    assert code == EXIT_SCENARIO_FAILURES
    report = (workdir / "out" / "report.txt").read_text(encoding="utf-8")
    assert "[failed] search" in report
