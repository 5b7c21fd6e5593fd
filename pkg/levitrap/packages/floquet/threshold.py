import logging
import math
from dataclasses import dataclass, field

from levitrap.core.errors import LevitrapError
from levitrap.core.models import ParticleSpec, TrapConfiguration
from levitrap.core.utils.enums import SolverBranch
from levitrap.packages.equilibrium.search import two_body_equilibrium
from levitrap.packages.floquet.monodromy import (
    MIN_SAMPLES_PER_FAST_PERIOD,
    screen_floquet_stability,
)
from levitrap.packages.trap.mathieu import build_system_spec

log = logging.getLogger("levitrap.packages.floquet.threshold")

THRESHOLD_PARAMETERS = ("particle-charge", "particle-mass")


@dataclass
class ThresholdResult:
    """
    Attributes
    ----------
    parameter: str
    threshold: float
        Midpoint of the final bracket.
    stable_value: float
        Closest value found stable.
    unstable_value: float
        Closest value found unstable.
    evaluations: list[tuple[float, bool, float]]
        (value, stable, largest multiplier) of every evaluated point.
    """

    parameter: str
    threshold: float
    stable_value: float
    unstable_value: float
    evaluations: list[tuple[float, bool, float]] = field(default_factory=list)


def _with_parameter(particle: ParticleSpec, parameter: str, value: float) -> ParticleSpec:
    if parameter == "particle-charge":
        return particle.replace(charge=value)
    if parameter == "particle-mass":
        return particle.replace(mass=value)
    raise ValueError(f"Cannot scan {parameter!r}, expected one of {THRESHOLD_PARAMETERS}")


def two_body_floquet_stable(
    trap: TrapConfiguration,
    nanoparticle: ParticleSpec,
    ion: ParticleSpec,
    branch: SolverBranch = SolverBranch.auto,
    samples_per_fast_period: int = MIN_SAMPLES_PER_FAST_PERIOD,
) -> tuple[bool, float]:
    """
    Floquet stability of the z-aligned ion-nanoparticle pair. Parameters for which the
    secular frequencies or the equilibrium cannot be built count as unstable.
    """
    try:
        spec = build_system_spec(trap, nanoparticle, ion, 1, branch)
        config = two_body_equilibrium(spec, check_stability=False)
        return screen_floquet_stability(config, spec, samples_per_fast_period)
    except LevitrapError as e:
        log.debug(f"Treating failed point as unstable: {e}")
        return False, math.inf


def floquet_threshold(
    trap: TrapConfiguration,
    nanoparticle: ParticleSpec,
    ion: ParticleSpec,
    parameter: str,
    low: float,
    high: float,
    *,
    relative_tolerance: float = 1e-3,
    branch: SolverBranch = SolverBranch.auto,
    samples_per_fast_period: int = MIN_SAMPLES_PER_FAST_PERIOD,
) -> ThresholdResult:
    """
    Bisect ``parameter`` of the nanoparticle between ``low`` and ``high`` for the onset of
    Floquet instability. Exactly one end of the bracket must be stable.
    """
    evaluations: list[tuple[float, bool, float]] = []

    def evaluate(value: float) -> bool:
        particle = _with_parameter(nanoparticle, parameter, value)
        stable, largest = two_body_floquet_stable(
            trap, particle, ion, branch, samples_per_fast_period
        )
        evaluations.append((value, stable, largest))
        log.debug(f"{parameter} = {value:.6g}: {'stable' if stable else 'unstable'}")
        return stable

    low_stable, high_stable = evaluate(low), evaluate(high)
    if low_stable == high_stable:
        raise ValueError(
            f"{parameter} bracket [{low:.6g}, {high:.6g}] does not contain a stability change"
        )
    stable_value, unstable_value = (low, high) if low_stable else (high, low)
    while abs(stable_value - unstable_value) > relative_tolerance * abs(stable_value):
        middle = (stable_value + unstable_value) / 2
        if evaluate(middle):
            stable_value = middle
        else:
            unstable_value = middle
    threshold = (stable_value + unstable_value) / 2
    log.info(f"Floquet threshold for {parameter}: {threshold:.6g}")
    return ThresholdResult(
        parameter=parameter,
        threshold=threshold,
        stable_value=stable_value,
        unstable_value=unstable_value,
        evaluations=evaluations,
    )
