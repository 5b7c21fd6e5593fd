import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any

log = logging.getLogger("levitrap.settings")

PRESETS_DIR = Path(__file__).parent / "presets"
OUTPUT_DIR_ENV = "LEVITRAP_OUTPUT_DIR"


@dataclass
class Settings:
    """
    Global runtime settings

    Attributes
    ----------
    output_dir: Path
        Directory receiving the CSV/JSON outputs, the manifest and the report.
    threads: int
        Worker threads evaluating sweep points and equilibrium restarts.
    seed: int
        Default random seed of the scenarios.
    log_file: str
        Path of the rotating log file.
    metrics_file: str | None
        If set, Prometheus metrics are dumped there at the end of a run.
    sentry_dsn: str
        Sentry DSN, scenario failures are reported when set.
    sentry_environment: str
    """

    output_dir: Path = Path("results")
    threads: int = 1
    seed: int = 0
    log_file: str = "levitrap.log"
    metrics_file: str | None = None

    # sentry details
    sentry_dsn: str = ""
    sentry_environment: str = "production"


settings = Settings()


def read_settings(runtime: dict[str, Any]):
    """
    Mirror the validated ``runtime`` table of a configuration into `settings`.

    The output directory follows the precedence environment variable > configuration >
    default; the command line applies its own overrides afterwards.
    """
    settings.output_dir = Path(
        os.environ.get(OUTPUT_DIR_ENV) or runtime.get("output-dir") or "results"
    )
    settings.threads = runtime.get("threads", 1)
    settings.seed = runtime.get("seed", 0)
    settings.log_file = runtime.get("log-file", "levitrap.log")
    settings.metrics_file = runtime.get("metrics-file")

    if sentry := runtime.get("sentry"):
        settings.sentry_dsn = sentry.get("dsn", "")
        settings.sentry_environment = sentry.get("environment", "production")

    log.debug("Settings loaded.")


def write_default_settings(path: Path):
    """
    Write the commented configuration template, the parameters of the reference
    experiment.
    """
    path.write_text((PRESETS_DIR / "table1.yml").read_text(encoding="utf-8"), encoding="utf-8")
