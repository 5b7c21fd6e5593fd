from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import sentry_sdk

from levitrap import __version__ as levitrap_version
from levitrap.core.metrics import scenarios_executed, write_metrics
from levitrap.core.utils.enums import TaskKind
from levitrap.packages.runner.config import RunConfig, Scenario
from levitrap.packages.runner.output import write_json, write_table
from levitrap.packages.runner.report import emit_report
from levitrap.packages.runner.tasks import run_task
from levitrap.settings import settings

log = logging.getLogger("levitrap.packages.runner.runner")

MANIFEST_FILE = "manifest.json"
REPORT_FILE = "report.txt"


@dataclass
class ScenarioStatus:
    """
    Attributes
    ----------
    name: str
    kind: TaskKind
    seed: int
    status: str
        "ok", "partial" (some sweep points failed) or "failed".
    outputs: list[str]
        Files written, relative to the output directory.
    duration: float
        Wall time in seconds.
    summary: dict[str, Any]
    notes: list[str]
    warnings: list[str]
        Validity checks that were not well satisfied.
    failures: list[str]
        Failed sweep points.
    error: str | None
        Error message of a failed scenario.
    """

    name: str
    kind: TaskKind
    seed: int = 0
    status: str = "ok"
    outputs: list[str] = field(default_factory=list)
    duration: float = 0.0
    summary: dict[str, Any] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)
    error: str | None = None

    def to_record(self) -> dict[str, Any]:
        record = dataclasses.asdict(self)
        record["kind"] = self.kind.value
        return record


@dataclass
class RunManifest:
    """
    Reproducibility metadata of a run.

    Attributes
    ----------
    digest: str
        SHA-256 of the configuration, independent of key order.
    version: str
    timestamp: str
        UTC start time, ISO 8601.
    output_dir: Path
    scenarios: list[ScenarioStatus]
    """

    digest: str
    version: str
    timestamp: str
    output_dir: Path
    scenarios: list[ScenarioStatus] = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return any(s.status != "ok" for s in self.scenarios)

    @property
    def warnings(self) -> list[str]:
        warnings: list[str] = []
        for scenario in self.scenarios:
            warnings.extend(w for w in scenario.warnings if w not in warnings)
        return warnings

    def to_record(self) -> dict[str, Any]:
        return {
            "digest": self.digest,
            "version": self.version,
            "timestamp": self.timestamp,
            "scenarios": [s.to_record() for s in self.scenarios],
            "warnings": self.warnings,
        }


def _run_scenario(
    config: RunConfig, scenario: Scenario, output_dir: Path, threads: int
) -> ScenarioStatus:
    status = ScenarioStatus(name=scenario.name, kind=scenario.kind, seed=scenario.seed)
    start = time.perf_counter()
    log.info(f"Running scenario {scenario.name} ({scenario.kind.value})")
    try:
        output = run_task(config, scenario, threads)
    except Exception as e:
        log.error(f"Scenario {scenario.name} failed", exc_info=e)
        if settings.sentry_dsn:
            sentry_sdk.capture_exception(e)
        status.status = "failed"
        status.error = f"{type(e).__name__}: {e}"
    else:
        for suffix, (header, rows) in output.tables.items():
            name = f"{scenario.output}{suffix}.csv"
            write_table(output_dir / name, header, rows)
            status.outputs.append(name)
        if output.records:
            name = f"{scenario.output}.json"
            write_json(output_dir / name, output.records)
            status.outputs.append(name)
        status.summary = output.summary
        status.notes = output.notes
        status.warnings = output.warnings
        status.failures = output.failures
        if output.failures:
            status.status = "partial"
    status.duration = time.perf_counter() - start
    scenarios_executed.labels(kind=scenario.kind.value, status=status.status).inc()
    log.info(f"Scenario {scenario.name} {status.status} in {status.duration:.3g} s")
    return status


def run_scenarios(
    config: RunConfig,
    *,
    output_dir: Path | None = None,
    threads: int | None = None,
    seed: int | None = None,
) -> RunManifest:
    """
    Run every scenario of ``config`` and write its tables, the manifest and the report.

    A failing scenario is recorded in the manifest and does not stop the others. Scenarios
    run one after the other, so every output file has a single writer. The ``threads``
    workers go to the sweep points of the running scenario, or to the restarts of its
    equilibrium search when it has a single point.
    """
    output_dir = output_dir or settings.output_dir
    threads = threads or settings.threads
    manifest = RunManifest(
        digest=config.digest,
        version=levitrap_version,
        timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        output_dir=output_dir,
    )
    output_dir.mkdir(parents=True, exist_ok=True)
    for scenario in config.scenarios:
        if seed is not None:
            scenario = dataclasses.replace(scenario, seed=seed)
        manifest.scenarios.append(_run_scenario(config, scenario, output_dir, threads))

    write_json(output_dir / MANIFEST_FILE, manifest.to_record())
    (output_dir / REPORT_FILE).write_text(emit_report(manifest), encoding="utf-8")
    if settings.metrics_file:
        write_metrics(Path(settings.metrics_file))
    log.info(f"Run finished, outputs in {output_dir}")
    return manifest
