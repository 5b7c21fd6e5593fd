from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Any, Iterator

import numpy as np

from levitrap.core.errors import ConstraintViolation, NonPositiveMass, ZeroCharge
from levitrap.core.utils.enums import Axis, ChainTopology, Layout, SolverBranch, Species
from levitrap.core.utils.logging import warn_once

log = logging.getLogger("levitrap.core.models")

GAUSS_TOLERANCE = 1e-9


@dataclass(frozen=True, slots=True)
class AxisElectrodes:
    """
    Electrode parameters of one trap axis.

    Attributes
    ----------
    distance: float
        Electrode distance d_j in meters.
    alpha: float
        Geometric factor α_j in (0, 1].
    dc: float
        Static voltage U_0j in volts.
    slow: float
        Amplitude U_sj of the slow RF tone in volts.
    fast: float
        Amplitude U_fj of the fast RF tone in volts.
    """

    distance: float
    alpha: float
    dc: float = 0.0
    slow: float = 0.0
    fast: float = 0.0

    @property
    def weight(self) -> float:
        return self.alpha / self.distance**2


@dataclass(frozen=True, slots=True)
class TrapConfiguration:
    """
    Linear Paul trap driven by a static voltage and two RF tones.

    Attributes
    ----------
    x: AxisElectrodes
    y: AxisElectrodes
    z: AxisElectrodes
    slow_frequency: float
        ω_s in rad/s.
    fast_frequency: float
        ω_f in rad/s.
    enforce_gauss: bool
        Raise `ConstraintViolation` when the voltages break the Laplace constraint. When
        disabled the violation is only logged.
    """

    x: AxisElectrodes
    y: AxisElectrodes
    z: AxisElectrodes
    slow_frequency: float
    fast_frequency: float
    enforce_gauss: bool = True

    def __post_init__(self):
        if not self.fast_frequency > self.slow_frequency > 0:
            raise ConstraintViolation(
                "Drive frequencies must satisfy fast > slow > 0 "
                f"(got slow={self.slow_frequency}, fast={self.fast_frequency})"
            )
        for axis in Axis:
            electrodes = self.axis(axis)
            if electrodes.distance <= 0:
                raise ConstraintViolation(f"Electrode distance on {axis.name} must be positive")
            if not 0 < electrodes.alpha <= 1:
                raise ConstraintViolation(f"Geometric factor on {axis.name} must lie in (0, 1]")

    def axis(self, axis: Axis) -> AxisElectrodes:
        return (self.x, self.y, self.z)[axis.value]

    def __iter__(self) -> Iterator[tuple[Axis, AxisElectrodes]]:
        return iter(zip(Axis, (self.x, self.y, self.z)))

    @property
    def frequency_ratio(self) -> float:
        """l = ω_s/ω_f."""
        return self.slow_frequency / self.fast_frequency

    @property
    def slow_period(self) -> float:
        return 2 * np.pi / self.slow_frequency

    @property
    def fast_period(self) -> float:
        return 2 * np.pi / self.fast_frequency

    def gauss_residuals(self) -> dict[str, float]:
        """
        Relative violation of Σ_j U α_j/d_j² = 0 for the DC and both RF tones.
        """
        residuals = {}
        for tone in ("dc", "slow", "fast"):
            terms = [getattr(e, tone) * e.weight for _, e in self]
            scale = max(abs(t) for t in terms)
            residuals[tone] = abs(sum(terms)) / scale if scale else 0.0
        return residuals

    def check_gauss(self):
        """
        Raises
        ------
        ConstraintViolation
            If a tone breaks the constraint and ``enforce_gauss`` is set.
        """
        broken = {k: v for k, v in self.gauss_residuals().items() if v > GAUSS_TOLERANCE}
        if not broken:
            return
        details = ", ".join(f"{k}: {v:.3g}" for k, v in broken.items())
        if self.enforce_gauss:
            raise ConstraintViolation(f"Trap voltages violate Gauss' law ({details})")
        warn_once(log, f"Trap voltages violate Gauss' law ({details}), continuing anyway")

    def replace(self, **changes: Any) -> TrapConfiguration:
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True, slots=True)
class ParticleSpec:
    """
    A trapped point charge: an ion (radius 0) or a dielectric nanosphere.

    Attributes
    ----------
    mass: float
        Mass in kg.
    charge: float
        Charge in coulombs.
    radius: float
        Radius in meters, 0 for ions.
    permittivity: float
        Relative permittivity, only meaningful for nanoparticles.
    """

    mass: float
    charge: float
    radius: float = 0.0
    permittivity: float = 1.0

    @property
    def species(self) -> Species:
        return Species.nanoparticle if self.radius > 0 else Species.ion

    @property
    def charge_to_mass(self) -> float:
        return self.charge / self.mass

    def validate(self):
        if not self.mass > 0:
            raise NonPositiveMass(f"Mass must be positive, got {self.mass}")
        if self.charge == 0:
            raise ZeroCharge("Trapped objects must carry a charge")
        if self.radius < 0:
            raise ConstraintViolation(f"Radius must be non-negative, got {self.radius}")
        if self.radius > 0 and not self.permittivity > 1:
            raise ConstraintViolation("A nanoparticle needs a relative permittivity above 1")

    def replace(self, **changes: Any) -> ParticleSpec:
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True, slots=True)
class SystemSpec:
    """
    One nanoparticle and ``ion_count`` identical ions in the same trap.

    Build instances with `levitrap.packages.trap.mathieu.build_system_spec`, which fills the
    secular frequencies.

    Attributes
    ----------
    trap: TrapConfiguration
    nanoparticle: ParticleSpec
    ion: ParticleSpec
    ion_count: int
    particle_frequencies: tuple[float, float, float]
        Secular angular frequencies Ω_jp of the nanoparticle (x, y, z).
    ion_frequencies: tuple[float, float, float]
        Secular angular frequencies Ω_ji of one ion (x, y, z).
    branch: SolverBranch
        Secular-frequency solver used to fill the frequencies.
    """

    trap: TrapConfiguration
    nanoparticle: ParticleSpec
    ion: ParticleSpec
    ion_count: int
    particle_frequencies: tuple[float, float, float]
    ion_frequencies: tuple[float, float, float]
    branch: SolverBranch = SolverBranch.auto

    def __post_init__(self):
        if self.ion_count < 1:
            raise ConstraintViolation(f"At least one ion is required, got {self.ion_count}")
        if self.ion.charge * self.nanoparticle.charge <= 0:
            raise ConstraintViolation("Ion and nanoparticle charges must share the same sign")

    @property
    def object_count(self) -> int:
        return self.ion_count + 1

    def masses(self) -> np.ndarray:
        """Mass of every object, ions first and the nanoparticle last."""
        return np.array([self.ion.mass] * self.ion_count + [self.nanoparticle.mass])

    def charges(self) -> np.ndarray:
        return np.array([self.ion.charge] * self.ion_count + [self.nanoparticle.charge])

    def stiffness(self) -> np.ndarray:
        """
        Trap spring constants M_σΩ_jσ², shape (N+1, 3), same object order as `masses`.
        """
        ion = self.ion.mass * np.asarray(self.ion_frequencies) ** 2
        particle = self.nanoparticle.mass * np.asarray(self.particle_frequencies) ** 2
        return np.vstack([np.tile(ion, (self.ion_count, 1)), particle])

    def replace(self, **changes: Any) -> SystemSpec:
        return dataclasses.replace(self, **changes)


@dataclass
class EquilibriumConfiguration:
    """
    Static equilibrium of the nanoparticle and the ions.

    Attributes
    ----------
    positions: np.ndarray
        Array of shape (N+1, 3) in meters, ions first (sorted along z) and the nanoparticle
        last.
    residual: float
        Largest absolute force component at ``positions``, in newtons.
    dynamically_stable: bool
        Whether the linearised secular motion is bounded.
    floquet_stable: bool | None
        Whether the micromotion-resolved motion is bounded, `None` if not checked.
    layout: Layout
    topology: ChainTopology | None
        Only set for layouts on the z axis.
    hits: int
        Number of restarts that converged onto this configuration.
    max_multiplier: float | None
        Largest Floquet multiplier modulus, when checked.
    """

    positions: np.ndarray
    residual: float
    dynamically_stable: bool = False
    floquet_stable: bool | None = None
    layout: Layout = Layout.off_axis
    topology: ChainTopology | None = None
    hits: int = 1
    max_multiplier: float | None = None
    diagnostics: dict[str, Any] = field(default_factory=dict)

    @property
    def ion_count(self) -> int:
        return self.positions.shape[0] - 1

    @property
    def particle_position(self) -> np.ndarray:
        return self.positions[-1]

    @property
    def ion_positions(self) -> np.ndarray:
        return self.positions[:-1]

    @property
    def stable(self) -> bool:
        return self.dynamically_stable and self.floquet_stable is not False

    def separation(self, ion: int = 0) -> float:
        return float(np.linalg.norm(self.ion_positions[ion] - self.particle_position))

    def to_record(self) -> dict[str, Any]:
        return {
            "nanoparticle": self.particle_position.tolist(),
            "ions": self.ion_positions.tolist(),
            "residual": self.residual,
            "dynamically-stable": self.dynamically_stable,
            "floquet-stable": self.floquet_stable,
            "max-multiplier": self.max_multiplier,
            "layout": self.layout.value,
            "topology": self.topology.value if self.topology else None,
            "hits": self.hits,
        }
