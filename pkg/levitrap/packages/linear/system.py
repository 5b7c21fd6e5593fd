from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from levitrap.core.errors import ImaginaryFrequency, NotConverged, OffAxisLayout
from levitrap.core.models import EquilibriumConfiguration, SystemSpec
from levitrap.core.units import HBAR
from levitrap.core.utils.enums import Axis, Layout
from levitrap.packages.equilibrium.coulomb import potential_hessian

if TYPE_CHECKING:
    from levitrap.packages.linear.modes import NormalModes

log = logging.getLogger("levitrap.packages.linear.system")

# largest force component accepted as an equilibrium, newtons
CONVERGED_RESIDUAL = 1e-24


@dataclass
class LinearizedSystem:
    """
    Quadratic expansion of the secular Hamiltonian around a static equilibrium.

    Attributes
    ----------
    spec: SystemSpec
    config: EquilibriumConfiguration
    inverse_mass: np.ndarray
        Diagonal matrix M̄ of inverse masses, size 3(N+1).
    potential: np.ndarray
        Generalised potential matrix V̄ in kg/s², the Hessian of the total energy.
    """

    spec: SystemSpec
    config: EquilibriumConfiguration
    inverse_mass: np.ndarray
    potential: np.ndarray

    @property
    def coordinate_masses(self) -> np.ndarray:
        return 1 / np.diag(self.inverse_mass)

    @property
    def object_count(self) -> int:
        return self.spec.object_count

    def index(self, obj: int, axis: Axis) -> int:
        """Flat coordinate index of ``obj`` (``-1`` for the nanoparticle) along ``axis``."""
        return (obj % self.object_count) * 3 + axis.value

    def axis_indices(self, axis: Axis) -> np.ndarray:
        return np.arange(self.object_count) * 3 + axis.value

    def zero_point(self) -> tuple[np.ndarray, np.ndarray]:
        """
        Zero-point position and momentum scales, arrays of shape (N+1, 3) built from the
        renormalised frequencies. Their product is ℏ/2.
        """
        omega = renormalized_frequencies(self)
        mass = self.coordinate_masses.reshape(-1, 3)
        return np.sqrt(HBAR / (2 * mass * omega)), np.sqrt(HBAR * mass * omega / 2)


@dataclass
class StabilityReport:
    stable: bool
    eigenvalues: np.ndarray
    max_real_ratio: float


@dataclass
class CouplingRates:
    """
    Attributes
    ----------
    per_axis: tuple[float, float, float] | None
        Two-body rates g_x, g_y, g_z in rad/s, set for on-axis single-ion layouts.
    modes: NormalModes | None
        Ion normal modes along z with their couplings, set for chains.
    """

    per_axis: tuple[float, float, float] | None = None
    modes: NormalModes | None = None

    def __getitem__(self, axis: Axis) -> float:
        if self.per_axis is None:
            raise OffAxisLayout("Per-axis couplings are only defined for a single on-axis ion")
        return self.per_axis[axis.value]


def build_linearized_system(
    config: EquilibriumConfiguration, spec: SystemSpec
) -> LinearizedSystem:
    """
    Assemble M̄ and V̄ at ``config``.

    The trap blocks of V̄ are M_σ diag(Ω_jσ²) of each species, the Coulomb blocks come from
    the analytic Hessian of the pairwise energy.

    Raises
    ------
    NotConverged
        ``config`` is not an equilibrium.
    """
    if config.residual > CONVERGED_RESIDUAL:
        raise NotConverged(
            f"Configuration residual {config.residual:.3g} N is above {CONVERGED_RESIDUAL} N"
        )
    masses = np.repeat(spec.masses(), 3)
    return LinearizedSystem(
        spec=spec,
        config=config,
        inverse_mass=np.diag(1 / masses),
        potential=potential_hessian(config.positions, spec),
    )


def renormalized_frequencies(system: LinearizedSystem) -> np.ndarray:
    """
    Ω'_jσ = √(V̄_jσ,jσ / M_σ) for every object and axis, shape (N+1, 3).

    Raises
    ------
    ImaginaryFrequency
        A diagonal entry of V̄ is not positive.
    """
    diagonal = np.diag(system.potential) * np.diag(system.inverse_mass)
    if np.any(diagonal <= 0):
        bad = [
            f"object {i // 3} along {Axis(i % 3).name}" for i in np.nonzero(diagonal <= 0)[0]
        ]
        raise ImaginaryFrequency(f"Non-positive restoring force for {', '.join(bad)}")
    return np.sqrt(diagonal).reshape(-1, 3)


def dynamical_stability(system: LinearizedSystem) -> StabilityReport:
    """
    Stability of the secular Hamiltonian motion.

    The eigenvalues of K̄ = [[0, M̄], [−V̄, 0]] are ±i√w with w the eigenvalues of the
    mass-weighted potential M̄^½ V̄ M̄^½, which is symmetric. The motion is stable when every
    w is positive, i.e. all eigenvalues of K̄ are imaginary and K̄ is diagonalisable.
    """
    root = np.sqrt(np.diag(system.inverse_mass))
    weighted = root[:, None] * system.potential * root[None, :]
    w = np.linalg.eigvalsh((weighted + weighted.T) / 2)
    roots = 1j * np.sqrt(w.astype(complex))
    eigenvalues = np.concatenate([roots, -roots])
    largest = np.max(np.abs(eigenvalues))
    ratio = float(np.max(np.abs(eigenvalues.real)) / largest) if largest else 0.0
    stable = bool(np.all(w > 0))
    return StabilityReport(stable=stable, eigenvalues=eigenvalues, max_real_ratio=ratio)


def coupling_rates(system: LinearizedSystem, modes: NormalModes | None = None) -> CouplingRates:
    """
    Coulomb coupling rates between ion and nanoparticle motion.

    For a single ion on a trap axis, g_j = V̄_{ji,jp} R_ji R_jp / ℏ with zero-point lengths
    built from the renormalised frequencies; on the z axis this is
    −Q_iQ_p R_zi R_zp/(2πε₀D³ℏ). For chains pass the normal modes.

    Raises
    ------
    OffAxisLayout
        A single ion off the trap axes, where the per-axis decoupling fails.
    """
    if system.spec.ion_count > 1:
        if modes is None:
            from levitrap.packages.linear.modes import normal_modes

            modes = normal_modes(system)
        return CouplingRates(modes=modes)
    if system.config.layout is Layout.off_axis:
        raise OffAxisLayout("Two-body coupling rates need both objects on a trap axis")
    zpf, _ = system.zero_point()
    rates = []
    for axis in Axis:
        element = system.potential[system.index(0, axis), system.index(-1, axis)]
        rates.append(float(element * zpf[0, axis.value] * zpf[-1, axis.value] / HBAR))
    return CouplingRates(per_axis=(rates[0], rates[1], rates[2]))
