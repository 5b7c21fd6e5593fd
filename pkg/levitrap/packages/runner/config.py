"""
Configuration files: reading, validation, SI normalisation and re-emission.

A configuration is one YAML (or JSON) document with the tables ``system``, ``environment``,
``runtime`` and ``scenarios``. Quantities are either numbers, read in the default unit of
their key, or strings such as ``"7e-11 mbar"``.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from levitrap.core.errors import ConfigError, ParseError, SchemaError
from levitrap.core.models import AxisElectrodes, ParticleSpec, SystemSpec, TrapConfiguration
from levitrap.core.units import format_quantity, parse_quantity
from levitrap.core.utils.enums import SWEEP_PARAMETERS, Axis, SolverBranch, SweepScale, TaskKind
from levitrap.packages.cooling.rates import Environment, ProbeSpec
from levitrap.packages.floquet.threshold import THRESHOLD_PARAMETERS
from levitrap.packages.trap.mathieu import build_system_spec
from levitrap.settings import PRESETS_DIR

log = logging.getLogger("levitrap.packages.runner.config")

AXIS_SCHEMA = {
    "distance": "length",
    "alpha": "dimensionless",
    "dc": "voltage",
    "slow": "voltage",
    "fast": "voltage",
}
# environment keys a scenario may override
ENVIRONMENT_FIELDS = {
    "temperature": "temperature",
    "pressure": "pressure",
    "doppler-damping": "frequency",
    "doppler-heating-power": "power",
    "displacement-heating-power": "power",
    "feedback-damping": "frequency",
    "gas-heating-power": "power",
}
SCHEMA: dict[str, Any] = {
    "system": {
        "trap": {
            "slow-frequency": "frequency",
            "fast-frequency": "frequency",
            "enforce-gauss": "bool",
            "axes": {axis.name: AXIS_SCHEMA for axis in Axis},
        },
        "nanoparticle": {
            "mass": "mass",
            "charge": "charge",
            "radius": "length",
            "density": "density",
            "permittivity": "dimensionless",
        },
        "ion": {"mass": "mass", "charge": "charge"},
        "ion-count": "count",
        "secular-branch": "branch",
    },
    "environment": {
        **ENVIRONMENT_FIELDS,
        "probe": {
            "wavelength": "wavelength",
            "feedback-constant": "feedback",
            "geometry-factor": "dimensionless",
        },
    },
    "runtime": {
        "output-dir": "str",
        "threads": "count",
        "seed": "count",
        "log-file": "str",
        "metrics-file": "str",
        "sentry": {"dsn": "str", "environment": "str"},
    },
}
REQUIRED = (
    "system.trap.slow-frequency",
    "system.trap.fast-frequency",
    *(f"system.trap.axes.{a.name}.{key}" for a in Axis for key in ("distance", "alpha")),
    "system.nanoparticle.mass",
    "system.nanoparticle.charge",
    "system.ion.mass",
    "system.ion.charge",
)

SCENARIO_KEYS = {"name", "task", "sweep", "output", "seed", "environment", "options"}
SWEEP_KEYS = {"parameter", "start", "stop", "points", "scale"}
SEARCH_OPTIONS = {
    "restarts": "count",
    "box": "length",
    "axis-restricted": "bool",
    "check-floquet": "bool",
    "samples-per-fast-period": "count",
    "min-hit-fraction": "dimensionless",
    "dedup-distance": "length",
}
TASK_OPTIONS: dict[TaskKind, dict[str, str]] = {
    TaskKind.frequencies: {"oracle": "bool"},
    TaskKind.equilibria: SEARCH_OPTIONS,
    TaskKind.couplings: SEARCH_OPTIONS,
    TaskKind.steady_state: SEARCH_OPTIONS
    | {"axes": "axes", "resonant-frequency": "frequency", "approximations": "bool"},
    TaskKind.floquet: {
        "mode": "str",
        "axis": "axis",
        "samples-per-fast-period": "count",
        "parameter": "str",
        "low": "threshold",
        "high": "threshold",
        "relative-tolerance": "dimensionless",
        "traces": "bool",
    },
    TaskKind.n_ion_sweep: SEARCH_OPTIONS | {"restarts-per-ion": "count"},
}
FLOQUET_MODES = ("stability", "purity", "penalty", "threshold")


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _parse_value(value: Any, kind: str, key: str) -> Any:
    match kind:
        case "bool":
            if not isinstance(value, bool):
                raise SchemaError(f"{key}: expected true or false, got {value!r}")
            return value
        case "str":
            if not isinstance(value, str):
                raise SchemaError(f"{key}: expected a string, got {value!r}")
            return value
        case "branch":
            try:
                return SolverBranch(value)
            except ValueError:
                choices = ", ".join(b.value for b in SolverBranch)
                raise SchemaError(f"{key}: unknown branch {value!r} ({choices})") from None
        case "axis":
            try:
                return Axis.parse(str(value))
            except ValueError as e:
                raise SchemaError(f"{key}: {e}") from None
        case "axes":
            values = value if isinstance(value, list) else [value]
            return [_parse_value(v, "axis", key) for v in values]
        case "count":
            return int(parse_quantity(value, "count", key))
        case _:
            return parse_quantity(value, kind, key)


def _parse_section(content: Any, schema: dict[str, Any], path: str = "") -> dict[str, Any]:
    if content is None:
        return {}
    if not isinstance(content, dict):
        raise SchemaError(f"{path or 'configuration'}: expected a table")
    for key in content:
        if key not in schema:
            raise SchemaError(f"Unknown key {_join(path, str(key))}")
    parsed: dict[str, Any] = {}
    for key, value in content.items():
        kind = schema[key]
        name = _join(path, key)
        if isinstance(kind, dict):
            parsed[key] = _parse_section(value, kind, name)
        elif value is not None:
            parsed[key] = _parse_value(value, kind, name)
    return parsed


def _lookup(parsed: dict[str, Any], dotted: str) -> Any:
    node: Any = parsed
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            return None
        node = node[part]
    return node


@dataclass(frozen=True)
class SweepSpec:
    """
    Attributes
    ----------
    parameter: str
        One of `SWEEP_PARAMETERS`.
    start: float
    stop: float
    points: int
    scale: SweepScale
    """

    parameter: str
    start: float
    stop: float
    points: int = 1
    scale: SweepScale = SweepScale.linear

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMETERS:
            raise SchemaError(
                f"Cannot sweep {self.parameter!r}, expected one of {', '.join(SWEEP_PARAMETERS)}"
            )
        if not (math.isfinite(self.start) and math.isfinite(self.stop)):
            raise SchemaError(f"Sweep bounds of {self.parameter} must be finite")
        if self.points < 1:
            raise SchemaError("A sweep needs at least one point")
        if self.stop < self.start:
            raise SchemaError(f"Sweep bounds of {self.parameter} are not ordered")
        if self.scale is SweepScale.log and self.start <= 0:
            raise SchemaError("Logarithmic sweeps need positive bounds")

    @property
    def kind(self) -> str:
        return SWEEP_PARAMETERS[self.parameter]

    def values(self) -> np.ndarray:
        if self.points == 1:
            values = np.array([self.start])
        elif self.scale is SweepScale.log:
            values = np.geomspace(self.start, self.stop, self.points)
        else:
            values = np.linspace(self.start, self.stop, self.points)
        if self.kind == "count":
            return np.unique(np.rint(values).astype(int))
        return values

    def to_config(self) -> dict[str, Any]:
        return {
            "parameter": self.parameter,
            "start": format_quantity(self.start, self.kind),
            "stop": format_quantity(self.stop, self.kind),
            "points": self.points,
            "scale": self.scale.value,
        }


@dataclass
class Scenario:
    """
    One task to run, possibly over a parameter sweep.

    Attributes
    ----------
    name: str
    kind: TaskKind
    sweep: SweepSpec | None
    output: str
        Stem of the files written for this scenario.
    seed: int
    environment: dict[str, Any]
        Environment keys overridden for this scenario only, in SI.
    options: dict[str, Any]
        Task options, already converted to SI.
    """

    name: str
    kind: TaskKind
    sweep: SweepSpec | None = None
    output: str = ""
    seed: int = 0
    environment: dict[str, Any] = field(default_factory=dict)
    options: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.output = self.output or self.name

    def to_config(self) -> dict[str, Any]:
        content: dict[str, Any] = {"name": self.name, "task": self.kind.value}
        if self.sweep is not None:
            content["sweep"] = self.sweep.to_config()
        content["output"] = self.output
        content["seed"] = self.seed
        if self.environment:
            content["environment"] = {
                key: format_quantity(value, ENVIRONMENT_FIELDS[key])
                for key, value in self.environment.items()
            }
        if self.options:
            content["options"] = _dump_options(self.kind, self.options)
        return content


def _parse_options(kind: TaskKind, content: Any, scenario: str) -> dict[str, Any]:
    if content is None:
        return {}
    if not isinstance(content, dict):
        raise SchemaError(f"{scenario}.options: expected a table")
    allowed = TASK_OPTIONS[kind]
    options: dict[str, Any] = {}
    for key, value in content.items():
        if key not in allowed:
            raise SchemaError(f"Unknown option {scenario}.options.{key} for task {kind.value}")
        if allowed[key] == "threshold":
            continue
        options[key] = _parse_value(value, allowed[key], f"{scenario}.options.{key}")

    if kind is TaskKind.floquet:
        mode = options.setdefault("mode", "purity")
        if mode not in FLOQUET_MODES:
            raise SchemaError(f"{scenario}: unknown Floquet mode {mode!r}")
        if mode == "threshold":
            parameter = options.get("parameter")
            if parameter not in THRESHOLD_PARAMETERS:
                raise SchemaError(
                    f"{scenario}: threshold parameter must be one of {THRESHOLD_PARAMETERS}"
                )
            for bound in ("low", "high"):
                if bound not in content:
                    raise SchemaError(f"{scenario}: threshold scans need options.{bound}")
                options[bound] = parse_quantity(
                    content[bound], SWEEP_PARAMETERS[parameter], f"{scenario}.options.{bound}"
                )
    return options


def _dump_options(kind: TaskKind, options: dict[str, Any]) -> dict[str, Any]:
    allowed = TASK_OPTIONS[kind]
    dumped: dict[str, Any] = {}
    for key, value in options.items():
        match allowed[key]:
            case "axis":
                dumped[key] = value.name
            case "axes":
                dumped[key] = [axis.name for axis in value]
            case "threshold":
                dumped[key] = format_quantity(value, SWEEP_PARAMETERS[options["parameter"]])
            case "bool" | "str" | "count":
                dumped[key] = value
            case quantity:
                dumped[key] = format_quantity(value, quantity)
    return dumped


def _parse_sweep(content: Any, scenario: str) -> SweepSpec:
    if not isinstance(content, dict):
        raise SchemaError(f"{scenario}.sweep: expected a table")
    for key in content:
        if key not in SWEEP_KEYS:
            raise SchemaError(f"Unknown key {scenario}.sweep.{key}")
    parameter = content.get("parameter")
    if parameter not in SWEEP_PARAMETERS:
        raise SchemaError(f"{scenario}.sweep: cannot sweep {parameter!r}")
    kind = SWEEP_PARAMETERS[parameter]
    for key in ("start", "stop"):
        if key not in content:
            raise SchemaError(f"Missing key {scenario}.sweep.{key}")
    try:
        scale = SweepScale(content.get("scale", "linear"))
    except ValueError:
        raise SchemaError(f"{scenario}.sweep.scale must be linear or log") from None
    return SweepSpec(
        parameter=parameter,
        start=parse_quantity(content["start"], kind, f"{scenario}.sweep.start"),
        stop=parse_quantity(content["stop"], kind, f"{scenario}.sweep.stop"),
        points=_parse_value(content.get("points", 1), "count", f"{scenario}.sweep.points"),
        scale=scale,
    )


def _parse_scenario(content: Any, index: int, default_seed: int) -> Scenario:
    if not isinstance(content, dict):
        raise SchemaError(f"scenarios[{index}]: expected a table")
    for key in content:
        if key not in SCENARIO_KEYS:
            raise SchemaError(f"Unknown key scenarios[{index}].{key}")
    name = str(content.get("name") or f"scenario-{index + 1}")
    if "task" not in content:
        raise SchemaError(f"Missing key {name}.task")
    try:
        kind = TaskKind(content["task"])
    except ValueError:
        choices = ", ".join(k.value for k in TaskKind)
        raise SchemaError(f"{name}: unknown task {content['task']!r} ({choices})") from None
    sweep = _parse_sweep(content["sweep"], name) if content.get("sweep") is not None else None
    if kind is TaskKind.n_ion_sweep and (sweep is None or sweep.parameter != "ion-count"):
        raise SchemaError(f"{name}: n-ion-sweep scenarios need a sweep over ion-count")
    output = content.get("output") or name
    if not isinstance(output, str) or "/" in output or "\\" in output:
        raise SchemaError(f"{name}.output must be a plain file name")
    seed = content.get("seed", default_seed)
    return Scenario(
        name=name,
        kind=kind,
        sweep=sweep,
        output=output,
        seed=_parse_value(seed, "count", f"{name}.seed"),
        environment=_parse_section(
            content.get("environment"), ENVIRONMENT_FIELDS, f"{name}.environment"
        ),
        options=_parse_options(kind, content.get("options"), name),
    )


@dataclass
class RunConfig:
    """
    A validated configuration, every quantity in SI units.

    Attributes
    ----------
    trap: TrapConfiguration
    nanoparticle: ParticleSpec
    ion: ParticleSpec
    ion_count: int
    branch: SolverBranch
    environment: Environment
    spec: SystemSpec
        System built from the above, with its secular frequencies.
    scenarios: list[Scenario]
    runtime: dict[str, Any]
        The ``runtime`` table, mirrored into `levitrap.settings.settings`.
    digest: str
        SHA-256 of the merged configuration, independent of key order.
    source: Path | None
    """

    trap: TrapConfiguration
    nanoparticle: ParticleSpec
    ion: ParticleSpec
    ion_count: int
    branch: SolverBranch
    environment: Environment
    spec: SystemSpec
    scenarios: list[Scenario] = field(default_factory=list)
    runtime: dict[str, Any] = field(default_factory=dict)
    digest: str = ""
    source: Path | None = None


def _read_document(path: Path) -> dict[str, Any]:
    if not path.is_file():
        raise ConfigError(f"Configuration file {path} does not exist")
    try:
        content = yaml.load(path.read_text(encoding="utf-8"), yaml.SafeLoader)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark
        line, column = (mark.line + 1, mark.column + 1) if mark else (0, 0)
        raise ParseError(f"{path.name}: {e.problem}", line, column) from e
    except yaml.YAMLError as e:
        raise ParseError(f"{path.name}: {e}", 0, 0) from e
    if content is None:
        return {}
    if not isinstance(content, dict):
        raise SchemaError(f"{path.name}: the document must be a table")
    return content


def preset_path(name: str) -> Path:
    path = PRESETS_DIR / f"{name}.yml"
    if not path.is_file():
        available = ", ".join(sorted(p.stem for p in PRESETS_DIR.glob("*.yml")))
        raise ConfigError(f"Unknown preset {name!r} (available: {available})")
    return path


def merge_configs(
    base: dict[str, Any], override: dict[str, Any], *, append_scenarios: bool = True
) -> dict[str, Any]:
    """
    Deep-merge ``override`` over ``base``. Tables are merged key by key, scenario lists are
    concatenated, or replaced when ``append_scenarios`` is disabled.
    """
    merged = copy.deepcopy(base)
    if not append_scenarios:
        merged.pop("scenarios", None)
    for key, value in override.items():
        if key == "scenarios" and append_scenarios:
            merged["scenarios"] = list(merged.get("scenarios") or []) + list(value or [])
        elif isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_configs(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _resolve_extends(content: dict[str, Any], seen: frozenset[str]) -> dict[str, Any]:
    # a document inherits the tables of its base, never its scenarios
    base_name = content.pop("extends", None)
    if base_name is None:
        return content
    if base_name in seen:
        raise SchemaError(f"Preset {base_name!r} extends itself")
    base = _resolve_extends(_read_document(preset_path(base_name)), seen | {base_name})
    return merge_configs(base, content, append_scenarios=False)


def config_digest(content: dict[str, Any]) -> str:
    canonical = json.dumps(content, sort_keys=True, default=str, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def read_config_document(path: Path | str, preset: str | None = None) -> dict[str, Any]:
    """
    The merged, unvalidated document: ``path`` (or the bundled preset of that name) with its
    ``extends`` chain resolved, merged over ``preset`` when given.
    """
    path = Path(path)
    if not path.exists() and path.suffix == "" and (PRESETS_DIR / f"{path}.yml").is_file():
        path = preset_path(str(path))
    content = _resolve_extends(_read_document(path), frozenset())
    if preset is not None:
        base = _resolve_extends(_read_document(preset_path(preset)), frozenset({preset}))
        content = merge_configs(base, content)
    return content


def _build_trap(parsed: dict[str, Any]) -> TrapConfiguration:
    trap = parsed["trap"]
    axes = {
        axis.name: AxisElectrodes(**trap["axes"][axis.name]) for axis in Axis
    }
    return TrapConfiguration(
        x=axes["x"],
        y=axes["y"],
        z=axes["z"],
        slow_frequency=trap["slow-frequency"],
        fast_frequency=trap["fast-frequency"],
        enforce_gauss=trap.get("enforce-gauss", True),
    )


def _build_nanoparticle(parsed: dict[str, Any]) -> ParticleSpec:
    content = parsed["nanoparticle"]
    radius = content.get("radius")
    if "density" in content:
        if radius is not None:
            raise SchemaError("system.nanoparticle: give either radius or density, not both")
        radius = (3 * content["mass"] / (4 * math.pi * content["density"])) ** (1 / 3)
    if radius is None or radius <= 0:
        raise SchemaError("system.nanoparticle needs a positive radius or a density")
    return ParticleSpec(
        mass=content["mass"],
        charge=content["charge"],
        radius=radius,
        permittivity=content.get("permittivity", 2.11),
    )


def _build_environment(parsed: dict[str, Any]) -> Environment:
    probe = parsed.get("probe", {})
    return Environment(
        **environment_changes(parsed),
        probe=ProbeSpec(**{k.replace("-", "_"): v for k, v in probe.items()}),
    )


def environment_changes(parsed: dict[str, Any]) -> dict[str, Any]:
    """Keyword arguments of `Environment` from a parsed environment table, probe excluded."""
    return {k.replace("-", "_"): v for k, v in parsed.items() if k in ENVIRONMENT_FIELDS}


def parse_config(content: dict[str, Any], source: Path | None = None) -> RunConfig:
    """
    Validate a merged document and convert it to a `RunConfig`.

    Raises
    ------
    SchemaError
    UnitError
    TrapModelError
        The system itself is invalid (e.g. Gauss' law is enforced and broken).
    """
    digest = config_digest(content)
    scenarios_content = content.get("scenarios") or []
    if not isinstance(scenarios_content, list):
        raise SchemaError("scenarios: expected a list")
    tables = {k: v for k, v in content.items() if k != "scenarios"}
    parsed = _parse_section(tables, SCHEMA)
    for dotted in REQUIRED:
        if _lookup(parsed, dotted) is None:
            raise SchemaError(f"Missing key {dotted}")

    system = parsed["system"]
    runtime = parsed.get("runtime", {})
    scenarios = [
        _parse_scenario(entry, i, runtime.get("seed", 0))
        for i, entry in enumerate(scenarios_content)
    ]
    outputs = [s.output for s in scenarios]
    duplicates = {o for o in outputs if outputs.count(o) > 1}
    if duplicates:
        raise SchemaError(f"Several scenarios write to {', '.join(sorted(duplicates))}")

    trap = _build_trap(system)
    nanoparticle = _build_nanoparticle(system)
    ion = ParticleSpec(mass=system["ion"]["mass"], charge=system["ion"]["charge"])
    ion_count = system.get("ion-count", 1)
    branch = system.get("secular-branch", SolverBranch.auto)
    spec = build_system_spec(trap, nanoparticle, ion, ion_count, branch)
    return RunConfig(
        trap=trap,
        nanoparticle=nanoparticle,
        ion=ion,
        ion_count=ion_count,
        branch=branch,
        environment=_build_environment(parsed.get("environment", {})),
        spec=spec,
        scenarios=scenarios,
        runtime=runtime,
        digest=digest,
        source=source,
    )


def load_config(path: Path | str, preset: str | None = None) -> RunConfig:
    """
    Read, merge and validate a configuration file.

    ``path`` may also be the name of a bundled preset.

    Raises
    ------
    ParseError
    SchemaError
    UnitError
    ConfigError
        The file or preset does not exist.
    """
    content = read_config_document(path, preset)
    config = parse_config(content, Path(path))
    log.info(
        f"Loaded {path} ({len(config.scenarios)} scenarios, digest {config.digest[:12]})"
    )
    return config


def _electrodes_to_config(electrodes: AxisElectrodes) -> dict[str, Any]:
    return {
        "distance": format_quantity(electrodes.distance, "length"),
        "alpha": electrodes.alpha,
        "dc": format_quantity(electrodes.dc, "voltage"),
        "slow": format_quantity(electrodes.slow, "voltage"),
        "fast": format_quantity(electrodes.fast, "voltage"),
    }


def dump_config(config: RunConfig) -> str:
    """
    Re-emit ``config`` as YAML with explicit SI units. Loading the result gives back the
    same values.
    """
    trap = config.trap
    environment = config.environment
    env: dict[str, Any] = {
        "temperature": format_quantity(environment.temperature, "temperature"),
        "pressure": format_quantity(environment.pressure, "pressure"),
        "doppler-damping": format_quantity(environment.doppler_damping, "frequency"),
        "doppler-heating-power": format_quantity(environment.doppler_heating_power, "power"),
        "displacement-heating-power": format_quantity(
            environment.displacement_heating_power, "power"
        ),
        "feedback-damping": format_quantity(environment.feedback_damping, "frequency"),
    }
    if environment.gas_heating_power is not None:
        env["gas-heating-power"] = format_quantity(environment.gas_heating_power, "power")
    env["probe"] = {
        "wavelength": format_quantity(environment.probe.wavelength, "wavelength"),
        "feedback-constant": format_quantity(environment.probe.feedback_constant, "feedback"),
        "geometry-factor": environment.probe.geometry_factor,
    }
    content = {
        "system": {
            "trap": {
                "slow-frequency": format_quantity(trap.slow_frequency, "frequency"),
                "fast-frequency": format_quantity(trap.fast_frequency, "frequency"),
                "enforce-gauss": trap.enforce_gauss,
                "axes": {axis.name: _electrodes_to_config(e) for axis, e in trap},
            },
            "nanoparticle": {
                "mass": format_quantity(config.nanoparticle.mass, "mass"),
                "charge": format_quantity(config.nanoparticle.charge, "charge"),
                "radius": format_quantity(config.nanoparticle.radius, "length"),
                "permittivity": config.nanoparticle.permittivity,
            },
            "ion": {
                "mass": format_quantity(config.ion.mass, "mass"),
                "charge": format_quantity(config.ion.charge, "charge"),
            },
            "ion-count": config.ion_count,
            "secular-branch": config.branch.value,
        },
        "environment": env,
        "runtime": copy.deepcopy(config.runtime),
        "scenarios": [scenario.to_config() for scenario in config.scenarios],
    }
    return yaml.safe_dump(content, sort_keys=False, allow_unicode=True)
