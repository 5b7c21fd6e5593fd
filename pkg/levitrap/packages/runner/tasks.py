"""
Scenario tasks. Each task evaluates one point of the parameter space and returns table
rows; sweeps evaluate their points in parallel and concatenate the rows in sweep order.
"""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from levitrap.core.errors import DivisionByZero, LevitrapError, RegimeViolation
from levitrap.core.metrics import sweep_point_duration
from levitrap.core.models import (
    EquilibriumConfiguration,
    ParticleSpec,
    SystemSpec,
    TrapConfiguration,
)
from levitrap.core.units import to_hz
from levitrap.core.utils.enums import Axis, Layout, SolverBranch, Species, TaskKind
from levitrap.packages.cooling.approximations import (
    com_occupation,
    independent_ion_occupation,
    occupation_approx,
)
from levitrap.packages.cooling.lyapunov import axis_steady_state, solve_steady_state_N
from levitrap.packages.cooling.rates import (
    DissipationRates,
    Environment,
    dissipation_rates,
    gas_damping_rate,
)
from levitrap.packages.equilibrium.search import (
    SearchSettings,
    search_equilibria,
    two_body_equilibrium,
)
from levitrap.packages.floquet.monodromy import (
    MIN_SAMPLES_PER_FAST_PERIOD,
    screen_floquet_stability,
)
from levitrap.packages.floquet.steady_state import axis_purity, micromotion_penalty
from levitrap.packages.floquet.threshold import floquet_threshold
from levitrap.packages.linear.modes import normal_modes
from levitrap.packages.linear.system import (
    LinearizedSystem,
    build_linearized_system,
    coupling_rates,
    renormalized_frequencies,
)
from levitrap.packages.runner.config import RunConfig, Scenario, SweepSpec, environment_changes
from levitrap.packages.trap.displacement import classical_frequency_oracle
from levitrap.packages.trap.mathieu import (
    build_system_spec,
    compute_mathieu_params,
    secular_frequency,
)
from levitrap.packages.trap.validity import rwa_validity_report

log = logging.getLogger("levitrap.packages.runner.tasks")

DEFAULT_RESTARTS_PER_ION = 1000


@dataclass(frozen=True)
class Point:
    """
    Everything a task needs to evaluate one point of a scenario.

    Attributes
    ----------
    particle_damping: float | None
        Total nanoparticle damping γ_p imposed by a sweep; the feedback damping is then
        γ_p − γ_gas, floored at zero.
    """

    trap: TrapConfiguration
    nanoparticle: ParticleSpec
    ion: ParticleSpec
    ion_count: int
    branch: SolverBranch
    environment: Environment
    particle_damping: float | None = None

    @classmethod
    def from_config(cls, config: RunConfig, scenario: Scenario) -> Point:
        environment = config.environment
        if scenario.environment:
            environment = environment.replace(**environment_changes(scenario.environment))
        return cls(
            trap=config.trap,
            nanoparticle=config.nanoparticle,
            ion=config.ion,
            ion_count=config.ion_count,
            branch=config.branch,
            environment=environment,
        )

    def with_parameter(self, parameter: str, value: float) -> Point:
        environment = self.environment
        match parameter:
            case "particle-charge":
                return dataclasses.replace(
                    self, nanoparticle=self.nanoparticle.replace(charge=float(value))
                )
            case "particle-mass":
                return dataclasses.replace(
                    self, nanoparticle=self.nanoparticle.replace(mass=float(value))
                )
            case "particle-damping":
                return dataclasses.replace(self, particle_damping=float(value))
            case "ion-count":
                return dataclasses.replace(self, ion_count=int(value))
            case "feedback-damping":
                environment = environment.replace(feedback_damping=float(value))
            case "doppler-damping":
                environment = environment.replace(doppler_damping=float(value))
            case "displacement-heating-power":
                environment = environment.replace(displacement_heating_power=float(value))
            case "pressure":
                environment = environment.replace(pressure=float(value))
            case _:
                raise ValueError(f"Unknown sweep parameter {parameter!r}")
        return dataclasses.replace(self, environment=environment)

    def spec(self) -> SystemSpec:
        return build_system_spec(
            self.trap, self.nanoparticle, self.ion, self.ion_count, self.branch
        )

    def rates(self, system: LinearizedSystem) -> DissipationRates:
        environment = self.environment
        if self.particle_damping is not None:
            gas = gas_damping_rate(
                self.nanoparticle, environment.temperature, environment.pressure
            )
            if self.particle_damping < gas:
                log.debug("Requested damping is below the gas damping, no feedback applied")
            environment = environment.replace(
                feedback_damping=max(self.particle_damping - gas, 0.0)
            )
        return dissipation_rates(system, environment)


@dataclass
class PointResult:
    """
    Attributes
    ----------
    tables: dict[str, list[list[Any]]]
        Rows of every table of the task, by file suffix.
    records: list[dict[str, Any]]
        Structured data written to the JSON side file.
    summary: dict[str, Any]
        Headline values, kept in the manifest for single-point scenarios.
    notes: list[str]
        Sentences for the run report.
    warnings: list[str]
        Validity checks that were not well satisfied.
    """

    tables: dict[str, list[list[Any]]] = field(default_factory=dict)
    records: list[dict[str, Any]] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def add_row(self, suffix: str, row: list[Any]):
        self.tables.setdefault(suffix, []).append(row)


@dataclass
class TaskOutput:
    """
    Result of a whole scenario.

    Attributes
    ----------
    tables: dict[str, tuple[tuple[str, ...], list[list[Any]]]]
        Header and rows by file suffix.
    failures: list[str]
        Sweep points that raised, the scenario is then partial.
    """

    tables: dict[str, tuple[tuple[str, ...], list[list[Any]]]] = field(default_factory=dict)
    records: list[dict[str, Any]] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)


Evaluator = Callable[[Point, Scenario, int], PointResult]


@dataclass(frozen=True)
class Task:
    kind: TaskKind
    headers: Callable[[Scenario], dict[str, tuple[str, ...]]]
    evaluate: Evaluator


TASKS: dict[TaskKind, Task] = {}


def task(kind: TaskKind, headers: Callable[[Scenario], dict[str, tuple[str, ...]]]):
    def decorator(evaluate: Evaluator) -> Evaluator:
        TASKS[kind] = Task(kind=kind, headers=headers, evaluate=evaluate)
        return evaluate

    return decorator


def _search_settings(
    scenario: Scenario, threads: int, *, restarts: int | None = None, axial: bool = False
) -> SearchSettings:
    options = scenario.options
    return SearchSettings(
        restarts=restarts or options.get("restarts"),
        box=options.get("box", 100e-6),
        seed=scenario.seed,
        dedup_distance=options.get("dedup-distance", 1e-9),
        axis_restricted=options.get("axis-restricted", True if axial else None),
        threads=threads,
        min_hit_fraction=options.get("min-hit-fraction", 1e-4),
        check_floquet=options.get("check-floquet", True),
        samples_per_fast_period=options.get(
            "samples-per-fast-period", MIN_SAMPLES_PER_FAST_PERIOD
        ),
    )


def _axial_configuration(
    spec: SystemSpec,
    scenario: Scenario,
    threads: int,
    result: PointResult,
    restarts: int | None = None,
) -> EquilibriumConfiguration | None:
    """
    The equilibrium along z used by the chain tasks: the closed form for one ion, the most
    frequently found stable axial configuration otherwise.
    """
    if spec.ion_count == 1:
        config = two_body_equilibrium(spec)
        if not config.dynamically_stable:
            result.notes.append("two-body z layout: unstable")
        return config
    found = search_equilibria(
        spec, _search_settings(scenario, threads, restarts=restarts, axial=True)
    )
    axial = [c for c in found.configurations if c.layout is Layout.on_axis_z]
    if not axial:
        result.notes.append(f"No stable equilibrium found for N={spec.ion_count}")
        return None
    return axial[0]


def _stability_word(config: EquilibriumConfiguration) -> str:
    return "stable" if config.stable else "unstable"


# frequencies


def _frequency_headers(scenario: Scenario) -> dict[str, tuple[str, ...]]:
    return {
        "": (
            "species",
            "axis",
            "frequency-hz",
            "beta",
            "branch",
            "secular-residual",
            "a",
            "q-slow",
            "q-fast",
            "max-rwa-ratio",
            "oracle-frequency-hz",
        )
    }


@task(TaskKind.frequencies, _frequency_headers)
def secular_frequencies_task(point: Point, scenario: Scenario, threads: int) -> PointResult:
    result = PointResult()
    oracle = scenario.options.get("oracle", False)
    for species, particle in (
        (Species.nanoparticle, point.nanoparticle),
        (Species.ion, point.ion),
    ):
        frequencies = []
        for axis in Axis:
            params = compute_mathieu_params(point.trap, particle, axis)
            secular = secular_frequency(params, point.branch)
            report = rwa_validity_report(params, secular, species)
            result.warnings.extend(report.warnings)
            measured = to_hz(classical_frequency_oracle(params)) if oracle else None
            frequencies.append(to_hz(secular.frequency))
            result.add_row(
                "",
                [
                    species.value,
                    axis.name,
                    to_hz(secular.frequency),
                    secular.beta,
                    secular.branch.value,
                    secular.residual,
                    params.a,
                    params.q_s,
                    params.q_f,
                    max(report.ratios.values()),
                    measured,
                ],
            )
            if not report.passed:
                result.notes.append(
                    f"{species.value} {axis.name}: secular description invalid "
                    f"({', '.join(report.failed)})"
                )
        result.summary[f"{species.value}-frequencies-hz"] = frequencies
    return result


# equilibria


def _equilibrium_headers(scenario: Scenario) -> dict[str, tuple[str, ...]]:
    return {
        "": (
            "configuration",
            "layout",
            "topology",
            "hits",
            "residual-n",
            "dynamically-stable",
            "floquet-stable",
            "max-multiplier",
            "min-separation-m",
        )
    }


def _min_separation(config: EquilibriumConfiguration) -> float:
    positions = config.positions
    distances = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=-1)
    return float(np.min(distances[~np.eye(len(positions), dtype=bool)]))


@task(TaskKind.equilibria, _equilibrium_headers)
def equilibria_task(point: Point, scenario: Scenario, threads: int) -> PointResult:
    result = PointResult()
    spec = point.spec()
    found = search_equilibria(spec, _search_settings(scenario, threads))
    for index, config in enumerate(found.configurations):
        result.add_row(
            "",
            [
                index,
                config.layout.value,
                config.topology.value if config.topology else None,
                config.hits,
                config.residual,
                config.dynamically_stable,
                config.floquet_stable,
                config.max_multiplier,
                _min_separation(config),
            ],
        )
        result.notes.append(f"{config.layout.value}: {_stability_word(config)}")
    result.records.append(
        {
            "ion-count": spec.ion_count,
            "stable": [c.to_record() for c in found.configurations],
            "rejected": [
                c.to_record() | {"reason": c.diagnostics.get("rejected")} for c in found.rejected
            ],
            "diagnostics": found.diagnostics,
        }
    )
    result.summary["stable-configurations"] = len(found.configurations)
    if not found.configurations:
        result.notes.append(f"No stable equilibrium found for N={spec.ion_count}")
    return result


# couplings


def _coupling_headers(scenario: Scenario) -> dict[str, tuple[str, ...]]:
    return {
        "": ("axis", "mode", "ion-frequency-hz", "particle-frequency-hz", "coupling-hz"),
        "-derived": ("separation-m", "gas-damping-hz"),
    }


@task(TaskKind.couplings, _coupling_headers)
def couplings_task(point: Point, scenario: Scenario, threads: int) -> PointResult:
    result = PointResult()
    spec = point.spec()
    config = _axial_configuration(spec, scenario, threads, result)
    if config is None:
        return result
    system = build_linearized_system(config, spec)
    omega = renormalized_frequencies(system)
    rates = coupling_rates(system)
    if rates.per_axis is not None:
        for axis in Axis:
            j = axis.value
            result.add_row(
                "",
                [axis.name, None, to_hz(omega[0, j]), to_hz(omega[-1, j]), to_hz(rates[axis])],
            )
        result.summary["couplings-hz"] = [to_hz(g) for g in rates.per_axis]
    else:
        assert rates.modes is not None
        modes = rates.modes
        for alpha in range(modes.count):
            result.add_row(
                "",
                [
                    Axis.z.name,
                    alpha + 1,
                    to_hz(modes.frequencies[alpha]),
                    to_hz(modes.particle_frequency),
                    to_hz(modes.couplings[alpha]),
                ],
            )
        result.records.append({"ion-count": spec.ion_count, "modes": modes.to_rows()})
    nearest = np.linalg.norm(config.ion_positions - config.particle_position, axis=1)
    separation = config.separation(int(np.argmin(nearest)))
    gas = gas_damping_rate(
        point.nanoparticle, point.environment.temperature, point.environment.pressure
    )
    result.add_row("-derived", [separation, to_hz(gas)])
    result.summary["separation-m"] = separation
    result.summary["gas-damping-hz"] = to_hz(gas)
    result.notes.append(f"{config.layout.value}: {_stability_word(config)}")
    return result


# steady state


def _steady_state_headers(scenario: Scenario) -> dict[str, tuple[str, ...]]:
    return {
        "": (
            "axis",
            "total-damping-hz",
            "particle-occupation",
            "particle-temperature-k",
            "ion-occupation",
            "residual",
            "approximate-occupation",
            "feedback-limit",
            "independent-ion-occupation",
            "com-occupation",
        )
    }


def _optional(result: PointResult, name: str, compute: Callable[[], float]) -> float | None:
    try:
        return compute()
    except (RegimeViolation, DivisionByZero) as e:
        result.warnings.append(f"{name}: {e}")
        return None


def _feedback_limit(rates: DissipationRates, axis: Axis) -> float | None:
    if rates.feedback_damping <= 0:
        return None
    return rates.particle_heating(axis) / rates.feedback_damping


@task(TaskKind.steady_state, _steady_state_headers)
def steady_state_task(point: Point, scenario: Scenario, threads: int) -> PointResult:
    result = PointResult()
    spec = point.spec()
    config = _axial_configuration(spec, scenario, threads, result)
    if config is None:
        return result
    system = build_linearized_system(config, spec)
    rates = point.rates(system)
    result.warnings.extend(rates.warnings)
    damping = to_hz(rates.particle_damping)
    approximations = scenario.options.get("approximations", True)

    if spec.ion_count > 1:
        state = solve_steady_state_N(system, rates, Axis.z)
        independent = com = None
        if approximations:
            independent = _optional(
                result, "independent ions", lambda: independent_ion_occupation(system, rates)
            )
            com = _optional(result, "centre of mass", lambda: com_occupation(system, rates))
        states = [(Axis.z, state, None, independent, com)]
    else:
        resonant = scenario.options.get("resonant-frequency")
        override = (resonant, resonant) if resonant is not None else None
        states = []
        for axis in scenario.options.get("axes", list(Axis)):
            state = axis_steady_state(system, rates, axis, frequencies=override)
            approx = None
            if approximations and override is None:
                approx = _optional(
                    result,
                    f"weak-coupling estimate {axis.name}",
                    lambda axis=axis: occupation_approx(system, rates, axis),
                )
            states.append((axis, state, approx, None, None))

    for axis, state, approx, independent, com in states:
        occupation = state.particle_occupation
        temperature = state.particle_temperature
        result.add_row(
            "",
            [
                axis.name,
                damping,
                occupation,
                temperature,
                float(np.mean(state.ion_occupations)),
                state.residual,
                approx,
                _feedback_limit(rates, axis),
                independent,
                com,
            ],
        )
        result.summary[axis.name] = {"occupation": occupation, "temperature-k": temperature}
        result.notes.append(
            f"{axis.name}: n = {occupation:.4g}, T = {temperature:.4g} K "
            f"({_stability_word(config)})"
        )
    return result


# floquet


def _floquet_headers(scenario: Scenario) -> dict[str, tuple[str, ...]]:
    match scenario.options.get("mode", "purity"):
        case "stability":
            return {"": ("stable", "max-multiplier")}
        case "penalty":
            return {
                "": (
                    "axis",
                    "effective-occupation",
                    "secular-effective-occupation",
                    "ratio",
                )
            }
        case "threshold":
            return {
                "": ("parameter", "threshold", "stable-value", "unstable-value", "evaluations"),
                "-evaluations": ("value", "stable", "max-multiplier"),
            }
        case _:
            headers = {
                "": ("axis", "total-damping-hz", "purity", "effective-occupation"),
            }
            if scenario.options.get("traces", False):
                headers["-traces"] = (
                    "time-s",
                    "potential-energy-j",
                    "kinetic-energy-j",
                    "purity-integrand",
                )
            return headers


@task(TaskKind.floquet, _floquet_headers)
def floquet_task(point: Point, scenario: Scenario, threads: int) -> PointResult:
    result = PointResult()
    options = scenario.options
    mode = options.get("mode", "purity")
    samples = options.get("samples-per-fast-period", MIN_SAMPLES_PER_FAST_PERIOD)

    if mode == "threshold":
        threshold = floquet_threshold(
            point.trap,
            point.nanoparticle,
            point.ion,
            options["parameter"],
            options["low"],
            options["high"],
            relative_tolerance=options.get("relative-tolerance", 1e-3),
            branch=point.branch,
            samples_per_fast_period=samples,
        )
        result.add_row(
            "",
            [
                threshold.parameter,
                threshold.threshold,
                threshold.stable_value,
                threshold.unstable_value,
                len(threshold.evaluations),
            ],
        )
        for value, stable, largest in threshold.evaluations:
            result.add_row("-evaluations", [value, stable, largest])
        result.summary["threshold"] = threshold.threshold
        result.notes.append(
            f"Floquet stability lost at {threshold.parameter} = {threshold.threshold:.4g}"
        )
        return result

    spec = point.spec()
    config = _axial_configuration(spec, scenario, threads, result)
    if config is None:
        return result

    if mode == "stability":
        stable, largest = screen_floquet_stability(config, spec, samples)
        result.add_row("", [stable, largest])
        result.summary["floquet-stable"] = stable
        result.notes.append(
            f"{config.layout.value}: {'stable' if stable else 'unstable'} (|λ| = {largest:.9g})"
        )
        return result

    system = build_linearized_system(config, spec)
    rates = point.rates(system)
    result.warnings.extend(rates.warnings)
    axis = options.get("axis", Axis.x)
    if mode == "penalty":
        penalty = micromotion_penalty(config, spec, rates, axis, samples)
        result.add_row(
            "",
            [
                axis.name,
                penalty.with_micromotion.effective_occupation,
                penalty.without_micromotion.effective_occupation,
                penalty.ratio,
            ],
        )
        result.summary["penalty"] = penalty.ratio
        result.notes.append(f"{axis.name}: micromotion multiplies n_eff by {penalty.ratio:.4g}")
        return result

    purity = axis_purity(config, spec, rates, axis, samples_per_fast_period=samples)
    result.add_row(
        "",
        [axis.name, to_hz(rates.particle_damping), purity.purity, purity.effective_occupation],
    )
    if options.get("traces", False):
        for row in purity.to_rows():
            result.add_row("-traces", row)
    result.summary[axis.name] = {
        "purity": purity.purity,
        "effective-occupation": purity.effective_occupation,
    }
    result.notes.append(
        f"{axis.name}: purity {purity.purity:.4g}, n_eff = {purity.effective_occupation:.4g}"
    )
    return result


# ion chains


def _chain_headers(scenario: Scenario) -> dict[str, tuple[str, ...]]:
    return {
        "": (
            "stable",
            "topology",
            "particle-occupation",
            "particle-temperature-k",
            "lowest-mode-hz",
            "lowest-coupling-hz",
            "effective-coupling-hz",
            "independent-ion-occupation",
            "com-occupation",
        ),
        "-modes": ("mode", "frequency-hz", "coupling-hz"),
    }


@task(TaskKind.n_ion_sweep, _chain_headers)
def n_ion_task(point: Point, scenario: Scenario, threads: int) -> PointResult:
    result = PointResult()
    spec = point.spec()
    n = spec.ion_count
    restarts = scenario.options.get("restarts") or (
        scenario.options.get("restarts-per-ion", DEFAULT_RESTARTS_PER_ION) * n
    )
    config = _axial_configuration(spec, scenario, threads, result, restarts=restarts)
    if config is None:
        result.add_row("", [False] + [None] * 8)
        result.summary[str(n)] = {"stable": False}
        return result

    system = build_linearized_system(config, spec)
    rates = point.rates(system)
    result.warnings.extend(rates.warnings)
    state = solve_steady_state_N(system, rates, Axis.z)
    modes = normal_modes(system)
    independent = _optional(
        result, f"independent ions N={n}", lambda: independent_ion_occupation(system, rates)
    )
    com = _optional(result, f"centre of mass N={n}", lambda: com_occupation(system, rates, modes))
    result.add_row(
        "",
        [
            True,
            config.topology.value if config.topology else None,
            state.particle_occupation,
            state.particle_temperature,
            to_hz(modes.frequencies[0]),
            to_hz(modes.couplings[0]),
            to_hz(float(np.sqrt(modes.effective_coupling_squared()))),
            independent,
            com,
        ],
    )
    for alpha in range(modes.count):
        result.add_row(
            "-modes", [alpha + 1, to_hz(modes.frequencies[alpha]), to_hz(modes.couplings[alpha])]
        )
    result.records.append({"ion-count": n, "configuration": config.to_record()})
    result.summary[str(n)] = {"stable": True, "occupation": state.particle_occupation}
    result.notes.append(f"N={n}: n = {state.particle_occupation:.4g}")
    return result


# sweeps


def sweep_column(sweep: SweepSpec) -> tuple[str, Callable[[Any], Any]]:
    """Name and unit conversion of the column holding the swept value."""
    if sweep.kind == "frequency":
        return f"{sweep.parameter}-hz", lambda v: to_hz(float(v))
    if sweep.kind == "count":
        return sweep.parameter, int
    return sweep.parameter, float


def run_task(config: RunConfig, scenario: Scenario, threads: int = 1) -> TaskOutput:
    """
    Evaluate ``scenario`` at every sweep point.

    Points run on ``threads`` workers; a single point gets the workers for its own inner
    parallelism instead. Rows come out in sweep order regardless of scheduling. A failing
    point is recorded in `TaskOutput.failures` when the scenario is a sweep, and raised
    otherwise.
    """
    definition = TASKS[scenario.kind]
    headers = definition.headers(scenario)
    base = Point.from_config(config, scenario)
    sweep = scenario.sweep
    values: list[Any] = [None] if sweep is None else list(sweep.values())
    inner_threads = threads if len(values) == 1 else 1

    def evaluate(value: Any) -> PointResult | LevitrapError:
        current = base if value is None else base.with_parameter(sweep.parameter, value)
        with sweep_point_duration.labels(kind=scenario.kind.value).time():
            try:
                return definition.evaluate(current, scenario, inner_threads)
            except LevitrapError as e:
                if sweep is None:
                    raise
                return e

    with ThreadPoolExecutor(max_workers=max(1, min(threads, len(values)))) as pool:
        results = list(pool.map(evaluate, values))

    output = TaskOutput()
    column, convert = sweep_column(sweep) if sweep is not None else ("", lambda v: v)
    for suffix, header in headers.items():
        output.tables[suffix] = ((column,) + header if sweep is not None else header, [])
    for value, point_result in zip(values, results):
        if isinstance(point_result, LevitrapError):
            message = f"{column} = {convert(value)}: {point_result}"
            log.warning(f"Sweep point failed in {scenario.name}, {message}")
            output.failures.append(message)
            continue
        for suffix, rows in point_result.tables.items():
            target = output.tables[suffix][1]
            if sweep is None:
                target.extend(rows)
            else:
                target.extend([convert(value)] + row for row in rows)
        output.records.extend(point_result.records)
        output.notes.extend(point_result.notes)
        for warning in point_result.warnings:
            if warning not in output.warnings:
                output.warnings.append(warning)
        if sweep is None:
            output.summary = point_result.summary
        elif scenario.kind is TaskKind.n_ion_sweep:
            output.summary.update(point_result.summary)
    if sweep is not None:
        output.summary.setdefault("points", len(values))
    return output
