from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from levitrap.packages.runner.runner import RunManifest


def emit_report(manifest: RunManifest) -> str:
    """
    Plain-text summary of a run: per scenario its status, headline results, stability
    flags and the validity checks that were not well satisfied.
    """
    lines = [
        f"levitrap {manifest.version} run of {manifest.timestamp}",
        f"configuration digest {manifest.digest}",
        "",
    ]
    if not manifest.scenarios:
        lines.append("No scenario to run.")
    for scenario in manifest.scenarios:
        lines.append(f"[{scenario.status}] {scenario.name} ({scenario.kind.value})")
        if scenario.error:
            lines.append(f"  error: {scenario.error}")
        for note in scenario.notes:
            lines.append(f"  {note}")
        for failure in scenario.failures:
            lines.append(f"  failed point: {failure}")
        for warning in scenario.warnings:
            lines.append(f"  validity warning: {warning}")
        if scenario.outputs:
            lines.append(f"  outputs: {', '.join(scenario.outputs)}")
        lines.append("")
    failed = sum(s.status != "ok" for s in manifest.scenarios)
    lines.append(
        f"{len(manifest.scenarios) - failed} of {len(manifest.scenarios)} scenarios succeeded."
    )
    return "\n".join(lines) + "\n"
