"""
Micromotion-resolved linear dynamics around a static equilibrium.

Coordinates are scaled by their zero-point amplitudes, X = δR/R^zpf and Π = P/P^zpf with
R^zpf P^zpf = ℏ/2, so that the ground state has unit covariance. The state vector is
(X_1, ..., X_d, Π_1, ..., Π_d) over the selected coordinates and its drift is

    B(t) = B₀ + cos(ω_s t) B_s + cos(ω_f t) B_f

with the drive w(t) = w₀ + cos(ω_s t) w_s + cos(ω_f t) w_f acting on the means.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from levitrap.core.models import EquilibriumConfiguration, SystemSpec
from levitrap.core.units import HBAR
from levitrap.core.utils.enums import Axis, Layout
from levitrap.core.utils.logging import warn_once
from levitrap.packages.cooling.rates import DissipationRates
from levitrap.packages.equilibrium.coulomb import coulomb_hessian
from levitrap.packages.trap.mathieu import compute_mathieu_params

log = logging.getLogger("levitrap.packages.floquet.system")

COMMENSURABILITY_TOLERANCE = 1e-9


@dataclass
class TimeDependentSystem:
    """
    Attributes
    ----------
    coordinates: np.ndarray
        Flat coordinate indices (object-major, 3 per object) kept in this system.
    masses: np.ndarray
        Mass of every kept coordinate.
    frequencies: np.ndarray
        Frequencies defining the zero-point scaling, rad/s.
    static: np.ndarray
        B₀, size 2d.
    slow: np.ndarray
        B_s, the slow-tone part of the drift.
    fast: np.ndarray
        B_f, the fast-tone part of the drift.
    drive: np.ndarray
        Rows w₀, w_s, w_f of the mean drive, shape (3, 2d).
    diffusion: np.ndarray
        Constant scaled diffusion matrix C, size 2d.
    slow_frequency: float
        ω_s in rad/s.
    fast_frequency: float
        ω_f in rad/s, an integer multiple of ω_s.
    stiffness: np.ndarray
        Rows (W₀, W_s, W_f) of the trap curvature of every kept coordinate,
        W(t) = W₀ + W_s cos(ω_s t) + W_f cos(ω_f t).
    particle: int | None
        Position of the nanoparticle coordinate within ``coordinates`` when a single one is
        kept, `None` otherwise.
    """

    coordinates: np.ndarray
    masses: np.ndarray
    frequencies: np.ndarray
    static: np.ndarray
    slow: np.ndarray
    fast: np.ndarray
    drive: np.ndarray
    diffusion: np.ndarray
    slow_frequency: float
    fast_frequency: float
    stiffness: np.ndarray
    particle: int | None = None

    @property
    def size(self) -> int:
        return self.static.shape[0]

    @property
    def slow_period(self) -> float:
        return 2 * math.pi / self.slow_frequency

    @property
    def fast_period(self) -> float:
        return 2 * math.pi / self.fast_frequency

    @property
    def periodic(self) -> bool:
        return bool(np.any(self.slow) or np.any(self.fast))

    @property
    def driven(self) -> bool:
        return bool(np.any(self.drive))

    @property
    def zero_point_length(self) -> np.ndarray:
        return np.sqrt(HBAR / (2 * self.masses * self.frequencies))

    @property
    def zero_point_momentum(self) -> np.ndarray:
        return HBAR / (2 * self.zero_point_length)

    def drift(self, t: float) -> np.ndarray:
        return (
            self.static
            + math.cos(self.slow_frequency * t) * self.slow
            + math.cos(self.fast_frequency * t) * self.fast
        )

    def force(self, t: float) -> np.ndarray:
        return (
            self.drive[0]
            + math.cos(self.slow_frequency * t) * self.drive[1]
            + math.cos(self.fast_frequency * t) * self.drive[2]
        )

    def curvature(self, t: float | np.ndarray) -> np.ndarray:
        """W(t) of every kept coordinate, shape (len(t), d) for arrays."""
        t = np.atleast_1d(t)
        return (
            self.stiffness[0][None, :]
            + np.cos(self.slow_frequency * t)[:, None] * self.stiffness[1][None, :]
            + np.cos(self.fast_frequency * t)[:, None] * self.stiffness[2][None, :]
        )

    def without_dissipation(self) -> TimeDependentSystem:
        """The Hamiltonian part only, used to screen equilibria."""
        d = len(self.coordinates)
        static = self.static.copy()
        static[np.arange(2 * d), np.arange(2 * d)] = 0.0
        return TimeDependentSystem(
            coordinates=self.coordinates,
            masses=self.masses,
            frequencies=self.frequencies,
            static=static,
            slow=self.slow,
            fast=self.fast,
            drive=self.drive,
            diffusion=np.zeros_like(self.diffusion),
            slow_frequency=self.slow_frequency,
            fast_frequency=self.fast_frequency,
            stiffness=self.stiffness,
            particle=self.particle,
        )


def commensurate_fast_frequency(slow: float, fast: float) -> float:
    """
    Closest ω_f that is an integer multiple of ω_s, so that the drift has period T_s.
    """
    ratio = fast / slow
    harmonic = max(1, round(ratio))
    if abs(ratio - harmonic) > COMMENSURABILITY_TOLERANCE * ratio:
        warn_once(
            log,
            f"ω_f/ω_s = {ratio:.9g} is not an integer, rounding ω_f to {harmonic} ω_s",
        )
    return harmonic * slow


def decoupled_blocks(config: EquilibriumConfiguration, spec: SystemSpec) -> list[np.ndarray]:
    """
    Coordinate sets whose dynamics decouple: one per axis when every object sits on a trap
    axis, everything together otherwise.
    """
    if config.layout is Layout.off_axis:
        return [np.arange(3 * spec.object_count)]
    return [np.arange(spec.object_count) * 3 + axis.value for axis in Axis]


def axis_coordinates(spec: SystemSpec, axis: Axis) -> np.ndarray:
    return np.arange(spec.object_count) * 3 + axis.value


def _curvature_tones(spec: SystemSpec) -> np.ndarray:
    """
    (W₀, W_s, W_f) of every flat coordinate, shape (3, 3(N+1)).
    """
    tones = np.zeros((3, spec.object_count, 3))
    rows = ((slice(0, spec.ion_count), spec.ion), (slice(-1, None), spec.nanoparticle))
    for row, particle in rows:
        for axis in Axis:
            params = compute_mathieu_params(spec.trap, particle, axis)
            scale = params.time_scale
            tones[:, row, axis.value] = np.array(
                [scale * params.a, 2 * scale * params.slow_strength, 2 * scale * params.q_f]
            )[:, None]
    return tones.reshape(3, -1)


def _scaling_frequencies(
    potential: np.ndarray, masses: np.ndarray, stiffness: np.ndarray
) -> np.ndarray:
    """
    Renormalised Ω' = √(V̄_kk/M_k), falling back to the secular frequency where the Coulomb
    shift makes it imaginary.
    """
    omega2 = np.diag(potential) / masses
    secular = np.sqrt(stiffness / masses)
    bad = omega2 <= 0
    if np.any(bad):
        warn_once(log, "Imaginary renormalised frequency, scaling with the secular one")
    return np.where(bad, secular, np.sqrt(np.abs(omega2)))


def build_time_dependent_system(
    config: EquilibriumConfiguration,
    spec: SystemSpec,
    rates: DissipationRates | None = None,
    *,
    coordinates: np.ndarray | None = None,
    micromotion: bool = True,
) -> TimeDependentSystem:
    """
    Linearised micromotion dynamics of ``config``.

    The potential matrix is V̄_m(t) = Coulomb Hessian + diag(M W(t)) with W(t) the full
    two-tone curvature; the drive is F(t) = M(W(t) − Ω²)d. With ``micromotion`` disabled
    W(t) is replaced by the secular Ω², which gives back the time-independent dynamics.
    Without ``rates`` the system is dissipation-free.

    Dissipators keep their secular form written in quadratures: the position diffusion is
    γ + 2Γ and the momentum diffusion γ + 2Γ' with Γ' = Γ_dop for ions and
    2Γ_jp − Γ_gas for the nanoparticle, both in units of the zero-point variances.
    """
    n_flat = 3 * spec.object_count
    coordinates = np.arange(n_flat) if coordinates is None else np.asarray(coordinates)
    d = len(coordinates)
    positions = config.positions
    flat_masses = np.repeat(spec.masses(), 3)
    masses = flat_masses[coordinates]
    secular = spec.stiffness().reshape(-1) / flat_masses

    hessian = coulomb_hessian(positions, spec)
    tones = _curvature_tones(spec)
    if not micromotion:
        tones = np.zeros_like(tones)
        tones[0] = secular

    # the static potential includes the secular trap, so this is the renormalised V̄
    potential = hessian + np.diag(flat_masses * secular)
    block = np.ix_(coordinates, coordinates)
    frequencies = _scaling_frequencies(
        potential[block], masses, spec.stiffness().reshape(-1)[coordinates]
    )
    length = np.sqrt(HBAR / (2 * masses * frequencies))
    momentum = HBAR / (2 * length)

    # Π̇_k = −(R_l/P_k) V̄_kl X_l, Ẋ_k = (P_k/(M_k R_k)) Π_k
    to_momentum = length[None, :] / momentum[:, None]
    static = np.zeros((2 * d, 2 * d))
    slow = np.zeros_like(static)
    fast = np.zeros_like(static)
    static[np.arange(d), d + np.arange(d)] = momentum / (masses * length)
    static_potential = hessian[block] + np.diag(masses * tones[0, coordinates])
    static[d:, :d] = -to_momentum * static_potential
    slow[d:, :d] = -np.diag(masses * tones[1, coordinates] * length / momentum)
    fast[d:, :d] = -np.diag(masses * tones[2, coordinates] * length / momentum)

    drive = np.zeros((3, 2 * d))
    displacement = positions.reshape(-1)[coordinates]
    drive[0, d:] = -masses * (tones[0, coordinates] - secular[coordinates]) * displacement
    drive[1, d:] = -masses * tones[1, coordinates] * displacement
    drive[2, d:] = -masses * tones[2, coordinates] * displacement
    drive[:, d:] /= momentum[None, :]

    diffusion = np.zeros((2 * d, 2 * d))
    particle_index = None
    if rates is not None:
        dampings = np.zeros(d)
        position_noise = np.zeros(d)
        momentum_noise = np.zeros(d)
        for k, flat in enumerate(coordinates):
            obj, j = divmod(int(flat), 3)
            axis = Axis(j)
            if obj == spec.ion_count:
                dampings[k] = rates.particle_damping
                position_noise[k] = rates.gas_heating[j]
                momentum_noise[k] = 2 * rates.particle_heating(axis) - rates.gas_heating[j]
            else:
                dampings[k] = rates.doppler_damping
                position_noise[k] = momentum_noise[k] = rates.ion_heating(frequencies[k])
        static[np.arange(2 * d), np.arange(2 * d)] = -np.tile(dampings, 2) / 2
        diffusion[np.arange(d), np.arange(d)] = dampings + 2 * position_noise
        diffusion[d + np.arange(d), d + np.arange(d)] = dampings + 2 * momentum_noise

    particle_rows = np.nonzero(coordinates // 3 == spec.ion_count)[0]
    if len(particle_rows) == 1:
        particle_index = int(particle_rows[0])

    return TimeDependentSystem(
        coordinates=coordinates,
        masses=masses,
        frequencies=frequencies,
        static=static,
        slow=slow,
        fast=fast,
        drive=drive,
        diffusion=diffusion,
        slow_frequency=spec.trap.slow_frequency,
        fast_frequency=commensurate_fast_frequency(
            spec.trap.slow_frequency, spec.trap.fast_frequency
        ),
        stiffness=tones[:, coordinates],
        particle=particle_index,
    )
