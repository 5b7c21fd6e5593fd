"""
Periodic long-time state of the micromotion-resolved dynamics and its purity.

The symmetric covariance equation dΣ/dt = BΣ + ΣBᵀ + C is integrated in packed form, only
the d(d+1)/2 upper-triangular entries are propagated.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass

import numpy as np
from cachetools import LRUCache, cached
from scipy.linalg import solve_continuous_lyapunov

from levitrap.core.errors import FloquetUnstable, NonPhysicalCovariance, SingularResolvent
from levitrap.core.models import EquilibriumConfiguration, SystemSpec
from levitrap.core.utils.enums import Axis
from levitrap.packages.cooling.rates import DissipationRates
from levitrap.packages.floquet.monodromy import (
    ATOL,
    MIN_SAMPLES_PER_FAST_PERIOD,
    RTOL,
    FloquetSolution,
    PeriodicOperator,
    integrate_monodromy,
    propagate,
    sampling_grid,
)
from levitrap.packages.floquet.system import (
    TimeDependentSystem,
    axis_coordinates,
    build_time_dependent_system,
)

log = logging.getLogger("levitrap.packages.floquet.steady_state")

# 1/cond(1 − X(T_s)) below which the fixed point is not trusted
RESOLVENT_CONDITION = 1e-14
PURITY_TOLERANCE = 1e-6


@cached(cache=LRUCache(maxsize=32), lock=threading.Lock())
def packing_matrices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Duplication (n² × p) and elimination (p × n²) matrices for the row-major upper triangle
    of a symmetric n × n matrix, p = n(n+1)/2.
    """
    rows, cols = np.triu_indices(n)
    p = len(rows)
    duplication = np.zeros((n * n, p))
    elimination = np.zeros((p, n * n))
    packed = np.arange(p)
    duplication[rows * n + cols, packed] = 1.0
    duplication[cols * n + rows, packed] = 1.0
    elimination[packed, rows * n + cols] = 1.0
    return duplication, elimination


def pack(matrix: np.ndarray) -> np.ndarray:
    return matrix[np.triu_indices(matrix.shape[-1])]


def unpack(packed: np.ndarray, n: int) -> np.ndarray:
    """Full symmetric matrices from packed vectors, any leading shape."""
    packed = np.asarray(packed)
    rows, cols = np.triu_indices(n)
    full = np.zeros(packed.shape[:-1] + (n, n))
    full[..., rows, cols] = packed
    full[..., cols, rows] = packed
    return full


def packed_index(n: int, i: int, j: int) -> int:
    i, j = min(i, j), max(i, j)
    return i * n - i * (i - 1) // 2 + (j - i)


def _lift(drift: np.ndarray) -> np.ndarray:
    n = drift.shape[0]
    duplication, elimination = packing_matrices(n)
    identity = np.eye(n)
    return elimination @ (np.kron(drift, identity) + np.kron(identity, drift)) @ duplication


def covariance_operator(system: TimeDependentSystem) -> PeriodicOperator:
    """
    Packed covariance equation as a periodic linear system with constant forcing C.
    """
    forcing = np.zeros((3, system.size * (system.size + 1) // 2))
    forcing[0] = pack(system.diffusion)
    return PeriodicOperator(
        static=_lift(system.static),
        slow=_lift(system.slow),
        fast=_lift(system.fast),
        slow_frequency=system.slow_frequency,
        fast_frequency=system.fast_frequency,
        forcing=forcing,
    )


def _fixed_point(
    operator: PeriodicOperator, period: float, rtol: float, atol: float
) -> tuple[np.ndarray, np.ndarray]:
    """
    Initial value f₀ of the periodic solution, f₀ = (1 − X(T))⁻¹ y(T) with y the response
    to the forcing from rest; returns f₀ and X(T).
    """
    n = operator.size
    augmented = np.hstack([np.eye(n), np.zeros((n, 1))])
    final, _, _ = propagate(operator, augmented, period, rtol=rtol, atol=atol)
    monodromy, response = final[:, :n], final[:, n]
    resolvent = np.eye(n) - monodromy
    if 1 / np.linalg.cond(resolvent) < RESOLVENT_CONDITION:
        raise SingularResolvent("1 − X(T_s) is singular, the system is marginally stable")
    return np.linalg.solve(resolvent, response), monodromy


def _periodicity_error(start: np.ndarray, end: np.ndarray) -> float:
    scale = np.linalg.norm(start)
    return float(np.linalg.norm(end - start) / scale) if scale else float(np.linalg.norm(end))


def periodic_steady_state(
    system: TimeDependentSystem,
    samples_per_fast_period: int = MIN_SAMPLES_PER_FAST_PERIOD,
    *,
    force_integration: bool = False,
    rtol: float = RTOL,
    atol: float = ATOL,
) -> FloquetSolution:
    """
    Long-time periodic first moments and covariance, sampled over one slow period.

    Time-independent systems are solved directly with a continuous Lyapunov solve and
    sampled once, unless ``force_integration`` is set.

    Raises
    ------
    FloquetUnstable
    SingularResolvent
    ResolutionTooCoarse
    IntegratorFailure
    """
    moments = integrate_monodromy(
        system,
        samples_per_fast_period,
        force_integration=force_integration,
        rtol=rtol,
        atol=atol,
    )
    if not moments.stable:
        raise FloquetUnstable(
            f"Floquet multiplier |λ| = {moments.max_multiplier:.9g} outside the unit circle",
            moments.max_multiplier,
        )
    n = system.size

    if not system.periodic and not force_integration:
        covariance = solve_continuous_lyapunov(system.static, -system.diffusion)
        covariance = (covariance + covariance.T) / 2
        means = None
        if system.driven:
            means = -np.linalg.solve(system.static, system.drive[0])[None, :]
        moments.times = np.zeros(1)
        moments.covariances = pack(covariance)[None, :]
        moments.means = means
        moments.periodicity_error = 0.0
        return moments

    grid = sampling_grid(system, samples_per_fast_period)
    period = system.slow_period

    operator = covariance_operator(system)
    start, _ = _fixed_point(operator, period, rtol, atol)
    end, samples, _ = propagate(operator, start, period, t_eval=grid, rtol=rtol, atol=atol)
    assert samples is not None
    covariances = samples[..., 0]
    error = _periodicity_error(start, end[:, 0])

    means = None
    if system.driven:
        drive = PeriodicOperator.moments(system)
        mean_start, _ = _fixed_point(drive, period, rtol, atol)
        _, mean_samples, _ = propagate(
            drive, mean_start, period, t_eval=grid, rtol=rtol, atol=atol
        )
        assert mean_samples is not None
        means = mean_samples[..., 0]

    if error > 1e-6:
        log.warning(f"Periodic covariance mismatch after one period: {error:.3g}")
    log.debug(f"Periodic steady state of size {n} sampled on {len(grid)} points")
    moments.times = grid
    moments.covariances = covariances
    moments.means = means
    moments.periodicity_error = error
    return moments


@dataclass
class PurityResult:
    """
    Attributes
    ----------
    purity: float
        Time-averaged purity μ of the selected coordinate.
    effective_occupation: float
        n_eff = (1/μ − 1)/2.
    times: np.ndarray
    integrand: np.ndarray
        ℏ/(2√det Σ(t)) on ``times``.
    potential_energy: np.ndarray
        ½ M W(t)⟨δR²⟩(t) in joules.
    kinetic_energy: np.ndarray
        ⟨P²⟩(t)/2M in joules.
    """

    purity: float
    effective_occupation: float
    times: np.ndarray
    integrand: np.ndarray
    potential_energy: np.ndarray
    kinetic_energy: np.ndarray

    def to_rows(self) -> list[list[float]]:
        return [
            [float(t), float(u), float(k), float(p)]
            for t, u, k, p in zip(
                self.times, self.potential_energy, self.kinetic_energy, self.integrand
            )
        ]


def time_averaged_purity(
    solution: FloquetSolution, system: TimeDependentSystem, index: int | None = None
) -> PurityResult:
    """
    Purity of one coordinate (the nanoparticle by default) averaged over the slow period.

    Raises
    ------
    NonPhysicalCovariance
        The 2×2 covariance breaks the uncertainty bound.
    """
    if solution.covariances is None or solution.times is None:
        raise ValueError("The solution carries no covariance samples")
    index = system.particle if index is None else index
    if index is None:
        raise ValueError("Select the coordinate whose purity is computed")
    n = system.size
    d = n // 2
    packed = solution.covariances
    xx = packed[:, packed_index(n, index, index)]
    xp = packed[:, packed_index(n, index, d + index)]
    pp = packed[:, packed_index(n, d + index, d + index)]
    determinant = xx * pp - xp**2
    worst = float(np.min(determinant))
    # scaled covariances: the vacuum has unit determinant
    if worst < 1 - PURITY_TOLERANCE:
        raise NonPhysicalCovariance(
            f"Covariance determinant {worst:.9g} is below the uncertainty bound"
        )
    integrand = 1 / np.sqrt(determinant)
    purity = float(np.mean(integrand))
    purity = min(purity, 1.0)

    mean_x = mean_p = 0.0
    if solution.means is not None:
        mean_x = solution.means[:, index]
        mean_p = solution.means[:, d + index]
    mass = system.masses[index]
    length = system.zero_point_length[index]
    momentum = system.zero_point_momentum[index]
    times = solution.times
    curvature = system.curvature(times)[:, index]
    position2 = length**2 * (xx + mean_x**2)
    momentum2 = momentum**2 * (pp + mean_p**2)
    return PurityResult(
        purity=purity,
        effective_occupation=(1 / purity - 1) / 2,
        times=times,
        integrand=integrand,
        potential_energy=0.5 * mass * curvature * position2,
        kinetic_energy=momentum2 / (2 * mass),
    )


@dataclass
class MicromotionPenalty:
    with_micromotion: PurityResult
    without_micromotion: PurityResult

    @property
    def ratio(self) -> float:
        """n_eff with micromotion over n_eff with the secular potential."""
        return (
            self.with_micromotion.effective_occupation
            / self.without_micromotion.effective_occupation
        )


def axis_purity(
    config: EquilibriumConfiguration,
    spec: SystemSpec,
    rates: DissipationRates,
    axis: Axis,
    *,
    micromotion: bool = True,
    samples_per_fast_period: int = MIN_SAMPLES_PER_FAST_PERIOD,
    force_integration: bool = False,
) -> PurityResult:
    """
    Time-averaged nanoparticle purity along ``axis`` for an on-axis layout.
    """
    system = build_time_dependent_system(
        config, spec, rates, coordinates=axis_coordinates(spec, axis), micromotion=micromotion
    )
    solution = periodic_steady_state(
        system, samples_per_fast_period, force_integration=force_integration
    )
    return time_averaged_purity(solution, system)


def micromotion_penalty(
    config: EquilibriumConfiguration,
    spec: SystemSpec,
    rates: DissipationRates,
    axis: Axis = Axis.x,
    samples_per_fast_period: int = MIN_SAMPLES_PER_FAST_PERIOD,
) -> MicromotionPenalty:
    """
    Effective occupation with the full two-tone curvature against the same pipeline run
    with the secular curvature Ω².
    """
    return MicromotionPenalty(
        with_micromotion=axis_purity(
            config, spec, rates, axis, samples_per_fast_period=samples_per_fast_period
        ),
        without_micromotion=axis_purity(
            config,
            spec,
            rates,
            axis,
            micromotion=False,
            samples_per_fast_period=samples_per_fast_period,
        ),
    )

