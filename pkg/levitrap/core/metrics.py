import logging
from pathlib import Path

from prometheus_client import REGISTRY, Counter, Histogram, write_to_textfile

log = logging.getLogger("levitrap.core.metrics")

scenarios_executed = Counter(
    "levitrap_scenarios", "Scenarios executed", ["kind", "status"]
)
sweep_point_duration = Histogram(
    "levitrap_sweep_point_seconds",
    "Time spent evaluating one sweep point",
    ["kind"],
    buckets=(0.001, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0, 30.0, 60.0, 300.0, float("inf")),
)
equilibrium_restarts = Counter(
    "levitrap_equilibrium_restarts", "Root-finder restarts by outcome", ["outcome"]
)
monodromy_integrations = Counter(
    "levitrap_monodromy_integrations", "Monodromy integrations", ["method"]
)


def write_metrics(path: Path):
    """
    Dump every metric in the Prometheus text format, for node-exporter style collection.
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    write_to_textfile(str(path), REGISTRY)
    log.info(f"Metrics written to {path}")
