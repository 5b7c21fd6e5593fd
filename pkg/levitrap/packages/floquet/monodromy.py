"""
Fundamental matrix of the periodic drift over one slow period and Floquet stability.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from levitrap.core.errors import IntegratorFailure, ResolutionTooCoarse
from levitrap.core.metrics import monodromy_integrations
from levitrap.core.models import EquilibriumConfiguration, SystemSpec
from levitrap.packages.floquet.system import (
    TimeDependentSystem,
    build_time_dependent_system,
    decoupled_blocks,
)

log = logging.getLogger("levitrap.packages.floquet.monodromy")

MIN_SAMPLES_PER_FAST_PERIOD = 200
FALLBACK_STEPS_PER_FAST_PERIOD = 400
STABILITY_TOLERANCE = 1e-6
RTOL = 1e-10
ATOL = 1e-12


@dataclass
class FloquetSolution:
    """
    Attributes
    ----------
    monodromy: np.ndarray
        X(T_s) of the first-moment equation.
    multipliers: np.ndarray
        Eigenvalues of ``monodromy``.
    stable: bool
        Every multiplier lies within the unit circle, up to the tolerance.
    times: np.ndarray | None
        Sampling grid over [0, T_s).
    trajectory: np.ndarray | None
        X(t) on ``times``, only kept on request.
    means: np.ndarray | None
        Periodic first moments on ``times``, shape (len(times), 2d).
    covariances: np.ndarray | None
        Periodic covariance on ``times`` in packed upper-triangular form.
    periodicity_error: float | None
        Relative mismatch between the periodic covariance at 0 and propagated to T_s.
    method: str
        "expm", "dop853" or "rk4".
    """

    monodromy: np.ndarray
    multipliers: np.ndarray
    stable: bool
    times: np.ndarray | None = None
    trajectory: np.ndarray | None = None
    means: np.ndarray | None = None
    covariances: np.ndarray | None = None
    periodicity_error: float | None = None
    method: str = "dop853"

    @property
    def max_multiplier(self) -> float:
        return float(np.max(np.abs(self.multipliers)))


@dataclass
class PeriodicOperator:
    """
    Linear ODE dY/dt = (L₀ + cos(ω_s t)L_s + cos(ω_f t)L_f)Y + forcing on the last column.
    """

    static: np.ndarray
    slow: np.ndarray
    fast: np.ndarray
    slow_frequency: float
    fast_frequency: float
    forcing: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.static.shape[0]

    @property
    def periodic(self) -> bool:
        return bool(np.any(self.slow) or np.any(self.fast))

    def matrix(self, t: float) -> np.ndarray:
        return (
            self.static
            + math.cos(self.slow_frequency * t) * self.slow
            + math.cos(self.fast_frequency * t) * self.fast
        )

    def source(self, t: float) -> np.ndarray:
        assert self.forcing is not None
        return (
            self.forcing[0]
            + math.cos(self.slow_frequency * t) * self.forcing[1]
            + math.cos(self.fast_frequency * t) * self.forcing[2]
        )

    @classmethod
    def moments(cls, system: TimeDependentSystem, driven: bool = True) -> PeriodicOperator:
        return cls(
            static=system.static,
            slow=system.slow,
            fast=system.fast,
            slow_frequency=system.slow_frequency,
            fast_frequency=system.fast_frequency,
            forcing=system.drive if driven and system.driven else None,
        )


def sampling_grid(system: TimeDependentSystem, samples_per_fast_period: int) -> np.ndarray:
    """
    Uniform grid over [0, T_s) with ``samples_per_fast_period`` points per fast period.

    Raises
    ------
    ResolutionTooCoarse
    """
    if samples_per_fast_period < MIN_SAMPLES_PER_FAST_PERIOD:
        raise ResolutionTooCoarse(
            f"{samples_per_fast_period} samples per fast period do not resolve the fast tone "
            f"(at least {MIN_SAMPLES_PER_FAST_PERIOD} are needed)"
        )
    harmonic = round(system.fast_frequency / system.slow_frequency)
    count = samples_per_fast_period * harmonic
    return np.linspace(0, system.slow_period, count, endpoint=False)


def _rk4(
    operator: PeriodicOperator, initial: np.ndarray, period: float, steps: int, t_eval=None
):
    shape = initial.shape
    forced = operator.forcing is not None

    def rhs(t, y):
        dy = operator.matrix(t) @ y
        if forced:
            dy[:, -1] += operator.source(t)
        return dy

    h = period / steps
    y = initial.astype(float).copy()
    samples = []
    eval_steps = None
    if t_eval is not None:
        eval_steps = set(np.rint(np.asarray(t_eval) / h).astype(int).tolist())
    for step in range(steps):
        t = step * h
        if eval_steps is not None and step in eval_steps:
            samples.append(y.copy())
        k1 = rhs(t, y)
        k2 = rhs(t + h / 2, y + h / 2 * k1)
        k3 = rhs(t + h / 2, y + h / 2 * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(y)):
        raise IntegratorFailure("Fixed-step integration diverged")
    trajectory = np.array(samples).reshape(-1, *shape) if samples else None
    return y.reshape(shape), trajectory


def propagate(
    operator: PeriodicOperator,
    initial: np.ndarray,
    period: float,
    *,
    t_eval: np.ndarray | None = None,
    rtol: float = RTOL,
    atol: float = ATOL,
) -> tuple[np.ndarray, np.ndarray | None, str]:
    """
    Integrate the matrix ODE of ``operator`` from ``initial`` (shape (n, m)) over one period.

    Returns the final value, the samples on ``t_eval`` (shape (len(t_eval), n, m)) and the
    method that succeeded. An adaptive Dormand-Prince 8(5,3) pass is tried first, a
    fixed-step RK4 pass with T_f/400 steps is the fallback.

    Raises
    ------
    IntegratorFailure
    """
    initial = np.atleast_2d(np.asarray(initial, dtype=float))
    if initial.shape[0] != operator.size:
        initial = initial.T
    shape = initial.shape
    forced = operator.forcing is not None

    def rhs(t, y):
        state = y.reshape(shape)
        derivative = operator.matrix(t) @ state
        if forced:
            derivative[:, -1] += operator.source(t)
        return derivative.ravel()

    samples = None
    # the end point is always evaluated, the grid itself stops short of the period
    times = None if t_eval is None else np.append(t_eval, period)
    result = solve_ivp(
        rhs,
        (0.0, period),
        initial.ravel(),
        method="DOP853",
        t_eval=times,
        rtol=rtol,
        atol=atol,
    )
    if result.success and np.all(np.isfinite(result.y)):
        if t_eval is not None:
            samples = result.y[:, :-1].T.reshape(-1, *shape)
        monodromy_integrations.labels(method="dop853").inc()
        return result.y[:, -1].reshape(shape), samples, "dop853"

    log.warning(f"Adaptive integration failed ({result.message}), using fixed steps")
    harmonic = round(operator.fast_frequency / operator.slow_frequency)
    final, samples = _rk4(
        operator, initial, period, FALLBACK_STEPS_PER_FAST_PERIOD * harmonic, t_eval
    )
    monodromy_integrations.labels(method="rk4").inc()
    return final, samples, "rk4"


def floquet_stability(
    solution: FloquetSolution | np.ndarray, tolerance: float = STABILITY_TOLERANCE
) -> bool:
    """
    Whether every eigenvalue of the monodromy matrix lies within the unit circle,
    max|λ| ≤ 1 + ``tolerance``.
    """
    monodromy = solution.monodromy if isinstance(solution, FloquetSolution) else solution
    multipliers = np.linalg.eigvals(np.atleast_2d(monodromy))
    return bool(np.max(np.abs(multipliers)) <= 1 + tolerance)


def integrate_monodromy(
    system: TimeDependentSystem,
    samples_per_fast_period: int = MIN_SAMPLES_PER_FAST_PERIOD,
    *,
    keep_trajectory: bool = False,
    force_integration: bool = False,
    rtol: float = RTOL,
    atol: float = ATOL,
) -> FloquetSolution:
    """
    Fundamental matrix of the homogeneous first-moment equation over one slow period.

    Constant drifts use the matrix exponential unless ``force_integration`` is set.

    Raises
    ------
    ResolutionTooCoarse
    IntegratorFailure
    """
    grid = sampling_grid(system, samples_per_fast_period)
    operator = PeriodicOperator.moments(system, driven=False)
    identity = np.eye(system.size)
    trajectory = None
    if not operator.periodic and not force_integration:
        monodromy = expm(system.static * system.slow_period)
        method = "expm"
        monodromy_integrations.labels(method=method).inc()
        if keep_trajectory:
            trajectory = np.array([expm(system.static * t) for t in grid])
    else:
        monodromy, trajectory, method = propagate(
            operator,
            identity,
            system.slow_period,
            t_eval=grid if keep_trajectory else None,
            rtol=rtol,
            atol=atol,
        )
    multipliers = np.linalg.eigvals(monodromy)
    return FloquetSolution(
        monodromy=monodromy,
        multipliers=multipliers,
        stable=floquet_stability(monodromy),
        times=grid if keep_trajectory else None,
        trajectory=trajectory,
        method=method,
    )


def screen_floquet_stability(
    config: EquilibriumConfiguration,
    spec: SystemSpec,
    samples_per_fast_period: int = MIN_SAMPLES_PER_FAST_PERIOD,
) -> tuple[bool, float]:
    """
    Floquet stability of the dissipation-free micromotion dynamics around ``config``.

    Returns the stability flag and the largest multiplier modulus over all decoupled
    coordinate blocks.
    """
    largest = 0.0
    for block in decoupled_blocks(config, spec):
        system = build_time_dependent_system(config, spec, coordinates=block)
        solution = integrate_monodromy(system.without_dissipation(), samples_per_fast_period)
        largest = max(largest, solution.max_multiplier)
        if not solution.stable:
            log.debug(f"Floquet unstable block {block.tolist()}, |λ| = {largest:.9g}")
            return False, largest
    return True, largest
