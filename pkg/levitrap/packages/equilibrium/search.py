"""
Static equilibria of one nanoparticle and N ions.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.optimize import root

from levitrap.core.errors import (
    CoincidentParticles,
    ConstraintViolation,
    LevitrapError,
    NoStableEquilibrium,
)
from levitrap.core.metrics import equilibrium_restarts
from levitrap.core.models import EquilibriumConfiguration, SystemSpec
from levitrap.core.units import COULOMB_CONSTANT
from levitrap.core.utils.enums import Axis, ChainTopology, Layout
from levitrap.packages.equilibrium.coulomb import force_residual, potential_hessian
from levitrap.packages.floquet.monodromy import screen_floquet_stability
from levitrap.packages.linear.system import build_linearized_system, dynamical_stability

log = logging.getLogger("levitrap.packages.equilibrium.search")

# the root finder works in micrometers
LENGTH_SCALE = 1e-6
POLISH_TARGET = 1e-26
ACCEPTED_RESIDUAL = 1e-24
POLISH_ITERATIONS = 30
# coordinates below this are treated as zero when classifying layouts
AXIS_TOLERANCE = 1e-10
MIN_SEPARATION_RADII = 10


@dataclass
class SearchSettings:
    """
    Attributes
    ----------
    restarts: int | None
        Number of root-finder runs, `None` picks 5000 + N! for N ≤ 8 and 10⁴N otherwise.
    box: float
        Half-width in meters of the cube (or segment) seeds are drawn from.
    seed: int
        Root of every per-restart random stream.
    dedup_distance: float
        Configurations closer than this, in meters, are the same equilibrium.
    axis_restricted: bool | None
        Only solve for z coordinates with every object on the z axis. `None` enables it
        for N > 8.
    threads: int
        Worker threads running restarts.
    min_hit_fraction: float
        Equilibria reached by a smaller fraction of restarts are discarded.
    check_floquet: bool
        Also require Floquet stability of the micromotion dynamics.
    samples_per_fast_period: int
        Resolution of the Floquet screening.
    """

    restarts: int | None = None
    box: float = 100e-6
    seed: int = 0
    dedup_distance: float = 1e-9
    axis_restricted: bool | None = None
    threads: int = 1
    min_hit_fraction: float = 1e-4
    check_floquet: bool = True
    samples_per_fast_period: int = 200

    def validate(self):
        if self.restarts is not None and self.restarts < 1:
            raise ConstraintViolation("At least one restart is required")
        if self.box <= 0:
            raise ConstraintViolation("The seed box must have a positive size")
        if self.dedup_distance <= 1e-12:
            raise ConstraintViolation("Deduplication distance must exceed the solver tolerance")
        if self.threads < 1:
            raise ConstraintViolation("At least one worker thread is required")

    def restart_count(self, ion_count: int) -> int:
        if self.restarts is not None:
            return self.restarts
        if ion_count <= 8:
            return 5000 + math.factorial(ion_count)
        return 10_000 * ion_count

    def restricted(self, ion_count: int) -> bool:
        if self.axis_restricted is not None:
            return self.axis_restricted
        return ion_count > 8


@dataclass
class SearchResult:
    """
    Attributes
    ----------
    configurations: list[EquilibriumConfiguration]
        Stable equilibria, sorted by layout then by number of hits.
    rejected: list[EquilibriumConfiguration]
        Distinct equilibria that failed a stability criterion or a validity check.
    diagnostics: dict[str, Any]
        Restart outcome counters.
    """

    configurations: list[EquilibriumConfiguration]
    rejected: list[EquilibriumConfiguration] = field(default_factory=list)
    diagnostics: dict[str, Any] = field(default_factory=dict)


def _max_residual(positions: np.ndarray, spec: SystemSpec) -> float:
    return float(np.max(np.abs(force_residual(positions, spec))))


def classify_layout(positions: np.ndarray) -> Layout:
    """
    On-axis when every object sits on the same trap axis.
    """
    for axis in Axis:
        others = [j for j in range(3) if j != axis.value]
        if np.all(np.abs(positions[:, others]) < AXIS_TOLERANCE):
            return Layout.on_axis(axis)
    return Layout.off_axis


def classify_topology(positions: np.ndarray) -> ChainTopology:
    particle = positions[-1, Axis.z.value]
    ions = positions[:-1, Axis.z.value]
    above = int(np.sum(ions > particle))
    below = len(ions) - above
    if above == 0 or below == 0:
        return ChainTopology.one_sided
    if above == below:
        return ChainTopology.symmetric_split
    return ChainTopology.asymmetric_split


def canonical_positions(positions: np.ndarray) -> np.ndarray:
    """
    Representative of a configuration under the trap mirror symmetries and ion exchange:
    ions on average on the positive side of the nanoparticle along every axis, ions sorted
    by (z, y, x).
    """
    positions = np.array(positions, dtype=float).reshape(-1, 3)
    offset = positions[:-1].mean(axis=0) - positions[-1]
    for j in range(3):
        if offset[j] < -AXIS_TOLERANCE:
            positions[:, j] *= -1
    ions = positions[:-1]
    order = np.lexsort((ions[:, 0], ions[:, 1], ions[:, 2]))
    positions[:-1] = ions[order]
    return positions


def two_body_equilibrium(
    spec: SystemSpec, axis: Axis = Axis.z, *, check_stability: bool = True
) -> EquilibriumConfiguration:
    """
    Closed-form equilibrium of one ion and the nanoparticle aligned along ``axis``.

    D³ = Q_iQ_p/(4πε₀) (1/(M_pΩ_p²) + 1/(M_iΩ_i²)); the ion sits on the positive side,
    each object displaced from the trap centre in proportion to its compliance.
    """
    if spec.ion_count != 1:
        raise ConstraintViolation("The closed-form equilibrium needs exactly one ion")
    stiffness = spec.stiffness()
    j = axis.value
    ion_stiffness, particle_stiffness = stiffness[0, j], stiffness[-1, j]
    strength = COULOMB_CONSTANT * spec.ion.charge * spec.nanoparticle.charge
    distance = np.cbrt(strength * (1 / particle_stiffness + 1 / ion_stiffness))
    positions = np.zeros((2, 3))
    positions[0, j] = strength / (distance**2 * ion_stiffness)
    positions[1, j] = -strength / (distance**2 * particle_stiffness)
    config = EquilibriumConfiguration(
        positions=positions,
        residual=_max_residual(positions, spec),
        layout=Layout.on_axis(axis),
        topology=ChainTopology.one_sided if axis is Axis.z else None,
    )
    if check_stability:
        _check_dynamics(config, spec)
    return config


def _scales(spec: SystemSpec) -> float:
    # force at one length unit of the stiffest spring
    return float(np.max(spec.stiffness())) * LENGTH_SCALE


class _Problem:
    def __init__(self, spec: SystemSpec, restricted: bool):
        self.spec = spec
        self.restricted = restricted
        self.force_scale = _scales(spec)
        n = spec.object_count
        self.indices = (
            np.arange(n) * 3 + Axis.z.value if restricted else np.arange(3 * n)
        )

    def positions(self, unknowns: np.ndarray) -> np.ndarray:
        flat = np.zeros(3 * self.spec.object_count)
        flat[self.indices] = unknowns * LENGTH_SCALE
        return flat.reshape(-1, 3)

    def residual(self, positions: np.ndarray) -> np.ndarray:
        return force_residual(positions, self.spec)[self.indices]

    def jacobian(self, positions: np.ndarray) -> np.ndarray:
        hessian = potential_hessian(positions, self.spec)
        return hessian[np.ix_(self.indices, self.indices)]

    def __call__(self, unknowns: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        positions = self.positions(unknowns)
        value = self.residual(positions) / self.force_scale
        jac = self.jacobian(positions) * LENGTH_SCALE / self.force_scale
        return value, jac

    def polish(self, positions: np.ndarray) -> tuple[np.ndarray, float]:
        """
        Damped Newton steps on the physical residual, halving the step while the largest
        force component grows.
        """
        current = positions.reshape(-1)[self.indices].copy()
        residual = self.residual(positions)
        best = float(np.max(np.abs(residual)))
        for _ in range(POLISH_ITERATIONS):
            if best < POLISH_TARGET:
                break
            try:
                step = np.linalg.solve(self.jacobian(self._full(current)), residual)
            except np.linalg.LinAlgError:
                break
            factor = 1.0
            improved = False
            while factor > 1e-4:
                trial = current - factor * step
                trial_residual = self.residual(self._full(trial))
                trial_best = float(np.max(np.abs(trial_residual)))
                if trial_best < best:
                    current, residual, best = trial, trial_residual, trial_best
                    improved = True
                    break
                factor /= 2
            if not improved:
                break
        return self._full(current), best

    def _full(self, values: np.ndarray) -> np.ndarray:
        flat = np.zeros(3 * self.spec.object_count)
        flat[self.indices] = values
        return flat.reshape(-1, 3)


def _solve_restart(
    problem: _Problem, seed: np.random.SeedSequence, box: float
) -> np.ndarray | None:
    rng = np.random.default_rng(seed)
    start = rng.uniform(-box, box, size=len(problem.indices)) / LENGTH_SCALE
    try:
        solution = root(problem, start, jac=True, method="hybr")
        positions, residual = problem.polish(problem.positions(solution.x))
    except (CoincidentParticles, FloatingPointError, np.linalg.LinAlgError):
        equilibrium_restarts.labels(outcome="failed").inc()
        return None
    if not np.all(np.isfinite(positions)) or residual >= ACCEPTED_RESIDUAL:
        equilibrium_restarts.labels(outcome="not-converged").inc()
        return None
    equilibrium_restarts.labels(outcome="converged").inc()
    return positions


def _check_dynamics(config: EquilibriumConfiguration, spec: SystemSpec):
    report = dynamical_stability(build_linearized_system(config, spec))
    config.dynamically_stable = report.stable
    config.diagnostics["max-real-ratio"] = report.max_real_ratio


def _check_floquet(config: EquilibriumConfiguration, spec: SystemSpec, samples: int):
    stable, largest = screen_floquet_stability(config, spec, samples)
    config.floquet_stable = stable
    config.max_multiplier = largest


def _separations_valid(positions: np.ndarray, spec: SystemSpec) -> bool:
    radius = spec.nanoparticle.radius
    if radius <= 0:
        return True
    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    off = ~np.eye(len(positions), dtype=bool)
    return bool(np.all(dist[off] > MIN_SEPARATION_RADII * radius))


def search_equilibria(spec: SystemSpec, settings: SearchSettings | None = None) -> SearchResult:
    """
    Multi-start root search for equilibria, keeping those that are dynamically and (if
    requested) Floquet stable.

    Every restart draws its seed positions from its own child of
    ``np.random.SeedSequence(settings.seed)``, so results do not depend on the number of
    threads.
    """
    settings = settings or SearchSettings()
    settings.validate()
    n = spec.ion_count
    restarts = settings.restart_count(n)
    restricted = settings.restricted(n)
    problem = _Problem(spec, restricted)
    seeds = np.random.SeedSequence(settings.seed).spawn(restarts)
    log.info(
        f"Searching equilibria for N={n} with {restarts} restarts"
        f"{' on the z axis' if restricted else ''}"
    )

    with ThreadPoolExecutor(max_workers=settings.threads) as pool:
        solutions = list(pool.map(lambda s: _solve_restart(problem, s, settings.box), seeds))

    diagnostics: dict[str, Any] = Counter()
    diagnostics["restarts"] = restarts
    distinct: list[EquilibriumConfiguration] = []
    for positions in solutions:
        if positions is None:
            diagnostics["not-converged"] += 1
            continue
        diagnostics["converged"] += 1
        canonical = canonical_positions(positions)
        for config in distinct:
            if np.linalg.norm(config.positions - canonical) < settings.dedup_distance:
                config.hits += 1
                break
        else:
            distinct.append(
                EquilibriumConfiguration(
                    positions=canonical, residual=_max_residual(canonical, spec)
                )
            )
    diagnostics["distinct"] = len(distinct)

    stable: list[EquilibriumConfiguration] = []
    rejected: list[EquilibriumConfiguration] = []
    for config in distinct:
        config.layout = classify_layout(config.positions)
        if config.layout is Layout.on_axis_z:
            config.topology = classify_topology(config.positions)
        if config.hits / restarts < settings.min_hit_fraction:
            diagnostics["rare"] += 1
            config.diagnostics["rejected"] = "rare"
            rejected.append(config)
            continue
        if not _separations_valid(config.positions, spec):
            diagnostics["too-close"] += 1
            config.diagnostics["rejected"] = "too-close"
            rejected.append(config)
            continue
        try:
            _check_dynamics(config, spec)
            if config.dynamically_stable and settings.check_floquet:
                _check_floquet(config, spec, settings.samples_per_fast_period)
        except LevitrapError as e:
            log.debug(f"Stability check failed: {e}")
            config.dynamically_stable = False
        if config.stable and (config.floquet_stable or not settings.check_floquet):
            stable.append(config)
        else:
            diagnostics["unstable"] += 1
            config.diagnostics["rejected"] = "unstable"
            rejected.append(config)

    stable.sort(key=lambda c: (c.layout.value, -c.hits))
    diagnostics["stable"] = len(stable)
    log.info(f"Found {len(stable)} stable equilibria out of {len(distinct)} distinct roots")
    return SearchResult(configurations=stable, rejected=rejected, diagnostics=dict(diagnostics))


def find_equilibria(
    spec: SystemSpec, settings: SearchSettings | None = None, *, strict: bool = False
) -> list[EquilibriumConfiguration]:
    """
    Stable equilibria of ``spec``, possibly none.

    Raises
    ------
    NoStableEquilibrium
        Only with ``strict``, when nothing passes the stability criteria.
    """
    result = search_equilibria(spec, settings)
    if not result.configurations:
        message = f"No stable equilibrium found for N={spec.ion_count}"
        if strict:
            raise NoStableEquilibrium(message, result.diagnostics)
        log.warning(message)
    return result.configurations
