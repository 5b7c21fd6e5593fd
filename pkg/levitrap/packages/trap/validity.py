import logging
from dataclasses import dataclass, field

from levitrap.core.utils.enums import Species
from levitrap.core.utils.logging import warn_once
from levitrap.packages.trap.mathieu import (
    ERROR_RATIO,
    WARN_RATIO,
    MathieuParams,
    SecularFrequency,
)

log = logging.getLogger("levitrap.packages.trap.validity")


@dataclass
class ValidityReport:
    """
    Ratios that must be much smaller than one for the secular (rotating-wave) description to
    hold.

    Attributes
    ----------
    species: Species
    ratios: dict[str, float]
    passed: bool
        Every ratio is below the hard limit.
    warnings: list[str]
        Ratios above the warning threshold, formatted for the run report.
    """

    species: Species
    ratios: dict[str, float] = field(default_factory=dict)
    passed: bool = True
    warnings: list[str] = field(default_factory=list)

    @property
    def failed(self) -> dict[str, float]:
        return {k: v for k, v in self.ratios.items() if v >= ERROR_RATIO}


def rwa_validity_report(
    params: MathieuParams, spectrum: SecularFrequency, species: Species
) -> ValidityReport:
    """
    Evaluate the conditions under which the drive tones can be averaged out.

    Nanoparticle: q_f ω_f and q_s ω_s ≪ 16Ω. Ion: q_f ω_f ≪ 16Ω and
    (q_s/64)(ω_s/Ω)³ |1 − (q_s/8)²(ω_s/Ω)²| ≪ 1. Never raises.
    """
    omega = spectrum.frequency
    ws, wf = params.slow_frequency, params.fast_frequency
    axis = params.axis.name
    ratios: dict[str, float] = {}
    if omega <= 0:
        ratios[f"{axis}: secular frequency"] = float("inf")
    else:
        ratios[f"{axis}: q_f ω_f / 16Ω"] = abs(params.q_f) * wf / (16 * omega)
        if species is Species.nanoparticle:
            ratios[f"{axis}: q_s ω_s / 16Ω"] = abs(params.q_s) * ws / (16 * omega)
        else:
            x = ws / omega
            ratios[f"{axis}: slow-tone ion condition"] = (
                abs(params.q_s) / 64 * x**3 * abs(1 - (params.q_s / 8) ** 2 * x**2)
            )

    report = ValidityReport(species=species, ratios=ratios)
    for name, ratio in ratios.items():
        if ratio >= ERROR_RATIO:
            report.passed = False
        if ratio > WARN_RATIO:
            message = f"{species.value} {name} = {ratio:.3g}"
            report.warnings.append(message)
            warn_once(log, f"RWA condition not well satisfied: {message}")
    return report
