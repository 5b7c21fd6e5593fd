"""
Mathieu parameterisation of the two-tone Paul trap and secular-frequency solvers.

The dimensionless equation of motion along one axis reads

    u'' + (a + 2 q_f cos(2τ) + 2 q_s l² cos(2lτ)) u = 0,    τ = ω_f t / 2

Note that ``q_s`` is stored with the 1/l² factor of its definition; the slow modulation
strength entering the equation is ``q_s * l**2``. Never multiply by l² twice.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass

from cachetools import LRUCache, cached

from levitrap.core.errors import (
    NegativeDiscriminant,
    NoStableRoot,
    PerturbationOutOfRange,
    RegimeViolation,
)
from levitrap.core.models import ParticleSpec, SystemSpec, TrapConfiguration
from levitrap.core.utils.enums import Axis, SolverBranch
from levitrap.core.utils.logging import warn_once

log = logging.getLogger("levitrap.packages.trap.mathieu")

WARN_RATIO = 0.1
ERROR_RATIO = 0.5


@dataclass(frozen=True, slots=True)
class MathieuParams:
    """
    Attributes
    ----------
    a: float
        DC stiffness.
    q_s: float
        Slow RF stiffness, including the 1/l² factor.
    q_f: float
        Fast RF stiffness.
    l: float
        Ratio ω_s/ω_f.
    axis: Axis
    fast_frequency: float
        ω_f in rad/s, needed to go back to physical time.
    """

    a: float
    q_s: float
    q_f: float
    l: float  # noqa: E741
    axis: Axis
    fast_frequency: float

    @property
    def slow_frequency(self) -> float:
        return self.l * self.fast_frequency

    @property
    def slow_strength(self) -> float:
        """q_s l², the amplitude actually multiplying cos(2lτ)."""
        return self.q_s * self.l**2

    @property
    def time_scale(self) -> float:
        """(ω_f/2)², converts dimensionless stiffness to s⁻²."""
        return self.fast_frequency**2 / 4

    def stiffness(self, t: float) -> float:
        """
        Time-dependent curvature W(t) in s⁻², such that ẍ = −W(t)x.
        """
        return self.time_scale * (
            self.a
            + 2 * self.q_f * math.cos(self.fast_frequency * t)
            + 2 * self.slow_strength * math.cos(self.slow_frequency * t)
        )


@dataclass(frozen=True, slots=True)
class SecularFrequency:
    """
    One entry of a secular spectrum.

    Attributes
    ----------
    axis: Axis
    frequency: float
        Ω in rad/s.
    beta: float
        Dimensionless frequency, Ω = β ω_f / 2.
    branch: SolverBranch
        The solver that produced the value, never `SolverBranch.auto`.
    residual: float | None
        Relative residual of the secular equation at ``beta``. Zero up to rounding for the
        quartic branches, of order β²/l² for the nanoparticle limit.
    """

    axis: Axis
    frequency: float
    beta: float
    branch: SolverBranch
    residual: float | None = None


@dataclass(frozen=True, slots=True)
class SecularSpectrum:
    x: SecularFrequency
    y: SecularFrequency
    z: SecularFrequency

    def __getitem__(self, axis: Axis) -> SecularFrequency:
        return (self.x, self.y, self.z)[axis.value]

    @property
    def frequencies(self) -> tuple[float, float, float]:
        return (self.x.frequency, self.y.frequency, self.z.frequency)


def check_small(
    name: str,
    ratio: float,
    error: type[Exception] = RegimeViolation,
    logger: logging.Logger = log,
) -> str | None:
    """
    Apply the "much smaller than" convention to a ratio.

    Returns the warning message when the ratio is above 0.1, raises ``error`` when it is
    above 0.5.
    """
    ratio = abs(ratio)
    if ratio > ERROR_RATIO:
        message = f"{name} = {ratio:.3g} exceeds {ERROR_RATIO}"
        if issubclass(error, RegimeViolation):
            raise error(message, ratio)
        raise error(message)
    if ratio > WARN_RATIO:
        message = f"{name} = {ratio:.3g} is not much smaller than 1"
        warn_once(logger, message)
        return message
    return None


def compute_mathieu_params(
    trap: TrapConfiguration, particle: ParticleSpec, axis: Axis
) -> MathieuParams:
    """
    Dimensionless Mathieu parameters of ``particle`` along ``axis``.

    Raises
    ------
    NonPositiveMass
    ZeroCharge
    ConstraintViolation
        The trap voltages break Gauss' law and the trap enforces it.
    """
    particle.validate()
    trap.check_gauss()
    electrodes = trap.axis(axis)
    wf = trap.fast_frequency
    scale = particle.charge * electrodes.alpha / (particle.mass * electrodes.distance**2 * wf**2)
    l = trap.frequency_ratio  # noqa: E741
    return MathieuParams(
        a=4 * scale * electrodes.dc,
        q_s=2 * scale * electrodes.slow / l**2,
        q_f=2 * scale * electrodes.fast,
        l=l,
        axis=axis,
        fast_frequency=wf,
    )


def quartic_roots(params: MathieuParams) -> tuple[float, float]:
    """
    Both solutions β² of β² = a + q_f²/2 + q_s²l⁴/(2(l²−β²)), largest first.

    Raises
    ------
    NoStableRoot
        The roots are complex.
    """
    big_a = params.a + params.q_f**2 / 2
    big_b = params.slow_strength**2 / 2
    l2 = params.l**2
    discriminant = (big_a - l2) ** 2 - 4 * big_b
    if discriminant < 0:
        raise NoStableRoot(f"Secular equation on {params.axis.name} has complex roots")
    large = ((big_a + l2) + math.sqrt(discriminant)) / 2
    if large == 0:
        return 0.0, 0.0
    # Vieta, the difference form loses every digit when β² ≪ l²
    small = (big_a * l2 + big_b) / large
    return large, small


def _in_nanoparticle_limit(params: MathieuParams) -> float:
    return max(abs(params.a), params.q_f**2, params.slow_strength**2) / params.l**2


def secular_frequency(
    params: MathieuParams, branch: SolverBranch = SolverBranch.auto
) -> SecularFrequency:
    """
    Secular frequency of one axis.

    The quartic root is the one continuous with Ω_f = (ω_f/2)√(a + q_f²/2) when l → 0: the
    largest root when a + q_f²/2 > l² (tagged ion-branch), the smallest otherwise
    (full-quartic). With ``SolverBranch.auto`` the nanoparticle limit β² = a + q_f²/2 +
    q_s²l²/2 is used instead when a, q_f² and q_s²l⁴ are all below 0.1 l². That limit drops
    β² next to l² and does not solve the secular equation exactly, see
    `SecularFrequency.residual`.

    Raises
    ------
    NoStableRoot
        Complex roots or β² ≤ 0.
    PerturbationOutOfRange
        a, q_f² or q_s²l⁴ above 0.5.
    """
    for name, value in (
        ("a", params.a),
        ("q_f²", params.q_f**2),
        ("q_s²l⁴", params.slow_strength**2),
    ):
        check_small(f"{params.axis.name}-axis {name}", value, PerturbationOutOfRange)

    if branch is SolverBranch.auto:
        if _in_nanoparticle_limit(params) < WARN_RATIO:
            branch = SolverBranch.nanoparticle_limit
        else:
            big_a = params.a + params.q_f**2 / 2
            branch = (
                SolverBranch.ion_branch if big_a > params.l**2 else SolverBranch.full_quartic
            )

    if branch is SolverBranch.nanoparticle_limit:
        beta2 = params.a + params.q_f**2 / 2 + params.slow_strength**2 / (2 * params.l**2)
    else:
        large, small = quartic_roots(params)
        beta2 = large if branch is SolverBranch.ion_branch else small

    if not beta2 > 0:
        raise NoStableRoot(
            f"Secular equation on {params.axis.name} has no positive root (β² = {beta2:.3g})"
        )
    beta = math.sqrt(beta2)
    return SecularFrequency(
        axis=params.axis,
        frequency=beta * params.fast_frequency / 2,
        beta=beta,
        branch=branch,
        residual=secular_residual(params, beta),
    )


def secular_residual(params: MathieuParams, beta: float) -> float:
    """
    Relative residual of the secular equation at ``beta``.
    """
    u = beta**2
    rhs = params.a + params.q_f**2 / 2 + params.slow_strength**2 / (2 * (params.l**2 - u))
    return abs(u - rhs) / max(abs(u), abs(rhs))


def nanoparticle_frequency_approx(
    trap: TrapConfiguration, particle: ParticleSpec, axis: Axis
) -> float:
    """
    Secular frequency in the heavy-particle limit, dominated by the slow tone.

    Raises
    ------
    RegimeViolation
        a, q_f² or q_s²l⁴ is not small compared to l².
    """
    params = compute_mathieu_params(trap, particle, axis)
    check_small(f"{axis.name}-axis nanoparticle-limit ratio", _in_nanoparticle_limit(params))
    electrodes = trap.axis(axis)
    ratio = particle.charge * electrodes.alpha / (particle.mass * electrodes.distance**2)
    omega2 = ratio * electrodes.dc + 0.5 * ratio**2 * (
        (electrodes.slow / trap.slow_frequency) ** 2
        + (electrodes.fast / trap.fast_frequency) ** 2
    )
    if omega2 <= 0:
        raise NoStableRoot(f"Nanoparticle is not confined along {axis.name}")
    return math.sqrt(omega2)


def ion_frequency_approx(trap: TrapConfiguration, particle: ParticleSpec, axis: Axis) -> float:
    """
    Closed-form ion frequency, the large root of the secular quartic.

    Raises
    ------
    NegativeDiscriminant
    """
    params = compute_mathieu_params(trap, particle, axis)
    electrodes = trap.axis(axis)
    single_tone2 = params.time_scale * (params.a + params.q_f**2 / 2)
    slow2 = trap.slow_frequency**2 / 4
    coupling = (particle.charge * electrodes.slow * electrodes.alpha) ** 2 / (
        2 * particle.mass**2 * electrodes.distance**4
    )
    discriminant = (single_tone2 - slow2) ** 2 - coupling
    if discriminant < 0:
        raise NegativeDiscriminant(
            f"Ion frequency on {axis.name} is complex (discriminant {discriminant:.3g})"
        )
    omega2 = (single_tone2 + slow2 + math.sqrt(discriminant)) / 2
    if omega2 <= 0:
        raise NoStableRoot(f"Ion is not confined along {axis.name}")
    return math.sqrt(omega2)


@cached(cache=LRUCache(maxsize=512), lock=threading.Lock())
def secular_spectrum(
    trap: TrapConfiguration, particle: ParticleSpec, branch: SolverBranch = SolverBranch.auto
) -> SecularSpectrum:
    entries = [
        secular_frequency(compute_mathieu_params(trap, particle, axis), branch) for axis in Axis
    ]
    return SecularSpectrum(*entries)


def build_system_spec(
    trap: TrapConfiguration,
    nanoparticle: ParticleSpec,
    ion: ParticleSpec,
    ion_count: int = 1,
    branch: SolverBranch = SolverBranch.auto,
) -> SystemSpec:
    """
    Assemble a `SystemSpec`, computing the secular frequencies of both species.
    """
    particle_spectrum = secular_spectrum(trap, nanoparticle, branch)
    ion_spectrum = secular_spectrum(trap, ion, branch)
    log.debug(
        "Secular frequencies: nanoparticle %s Hz, ion %s Hz",
        [f"{w / (2 * math.pi):.6g}" for w in particle_spectrum.frequencies],
        [f"{w / (2 * math.pi):.6g}" for w in ion_spectrum.frequencies],
    )
    return SystemSpec(
        trap=trap,
        nanoparticle=nanoparticle,
        ion=ion,
        ion_count=ion_count,
        particle_frequencies=particle_spectrum.frequencies,
        ion_frequencies=ion_spectrum.frequencies,
        branch=branch,
    )
