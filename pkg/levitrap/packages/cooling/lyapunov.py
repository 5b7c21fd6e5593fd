"""
Steady states of the secular master equation.

Covariances are written in the ladder basis v = (b_1, b_1†, ..., b_m, b_m†) with the
nanoparticle mode last, σ_kl = ½⟨v_k v_l + v_l v_k⟩ − ⟨v_k⟩⟨v_l⟩, and obey
dσ/dt = Aσ + σAᵀ + C. Because σ is symmetrised the diffusion matrix carries the vacuum
contribution γ/2 of every damped mode, and the Hamiltonian coupling only enters through A.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_sylvester

from levitrap.core.errors import NotHurwitz, OffAxisLayout
from levitrap.core.units import BOLTZMANN, HBAR
from levitrap.core.utils.enums import Axis, Layout
from levitrap.packages.cooling.rates import DissipationRates
from levitrap.packages.linear.system import (
    LinearizedSystem,
    coupling_rates,
    renormalized_frequencies,
)

log = logging.getLogger("levitrap.packages.cooling.lyapunov")

HURWITZ_MARGIN = 1e-15
# above this dimension the vectorised solve is replaced by Bartels-Stewart
KRONECKER_LIMIT = 4


@dataclass
class SteadyStateResult:
    """
    Attributes
    ----------
    covariance: np.ndarray
        Ladder covariance σ, complex, size 2m.
    occupations: np.ndarray
        Mean phonon number of every mode, nanoparticle last.
    frequencies: np.ndarray | None
        Mode frequencies used to convert occupations to temperatures.
    residual: float
        ‖Aσ + σAᵀ + C‖ / (‖C‖ + 2‖A‖‖σ‖).
    axis: Axis | None
    """

    covariance: np.ndarray
    occupations: np.ndarray
    frequencies: np.ndarray | None = None
    residual: float = 0.0
    axis: Axis | None = None

    @property
    def particle_occupation(self) -> float:
        return float(self.occupations[-1])

    @property
    def ion_occupations(self) -> np.ndarray:
        return self.occupations[:-1]

    @property
    def temperatures(self) -> np.ndarray | None:
        """T = ℏΩ'(⟨n⟩ + ½)/k_B for every mode."""
        if self.frequencies is None:
            return None
        return HBAR * self.frequencies * (self.occupations + 0.5) / BOLTZMANN

    @property
    def particle_temperature(self) -> float:
        temperatures = self.temperatures
        return float(temperatures[-1]) if temperatures is not None else float("nan")

    @property
    def particle_purity(self) -> float:
        return 1 / (2 * self.particle_occupation + 1)


def ladder_drift_diffusion(
    frequencies: np.ndarray,
    couplings: np.ndarray,
    dampings: np.ndarray,
    heatings: np.ndarray,
    squeezing: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Drift and diffusion matrices of m coupled modes.

    Parameters
    ----------
    frequencies: np.ndarray
        Mode frequencies ω_k, rad/s.
    couplings: np.ndarray
        Symmetric m×m matrix of rates g_kl for H = ℏ Σ g_kl (b_k + b_k†)(b_l + b_l†)/2 over
        ordered pairs; the diagonal is ignored.
    dampings: np.ndarray
        Energy damping rate γ_k of every mode.
    heatings: np.ndarray
        Total heating rate Γ_k of every mode.
    squeezing: np.ndarray
        Phase-sensitive diffusion ⟨bb⟩ of every mode, Γ_gas − Γ_jp for the nanoparticle.
    """
    m = len(frequencies)
    drift = np.zeros((2 * m, 2 * m), dtype=complex)
    diffusion = np.zeros((2 * m, 2 * m), dtype=complex)
    for k in range(m):
        a, ad = 2 * k, 2 * k + 1
        drift[a, a] = -1j * frequencies[k] - dampings[k] / 2
        drift[ad, ad] = 1j * frequencies[k] - dampings[k] / 2
        diffusion[a, ad] = diffusion[ad, a] = heatings[k] + dampings[k] / 2
        diffusion[a, a] = diffusion[ad, ad] = squeezing[k]
        for other in range(m):
            if other == k:
                continue
            g = couplings[k, other]
            drift[a, 2 * other] = drift[a, 2 * other + 1] = -1j * g
            drift[ad, 2 * other] = drift[ad, 2 * other + 1] = 1j * g
    return drift, diffusion


def build_drift_diffusion(
    system: LinearizedSystem,
    rates: DissipationRates,
    axis: Axis,
    *,
    frequencies: tuple[float, float] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    4×4 drift A_j and diffusion C_j of the ion-nanoparticle pair along ``axis``.

    ``frequencies`` overrides (Ω'_ji, Ω'_jp) while keeping the couplings and rates, which
    is how resonant operation is explored.

    Raises
    ------
    OffAxisLayout
        Not a single ion on a trap axis, the axes do not decouple.
    """
    if system.spec.ion_count != 1 or system.config.layout is Layout.off_axis:
        raise OffAxisLayout("Per-axis drift matrices need a single ion on a trap axis")
    omega = renormalized_frequencies(system)
    j = axis.value
    omega_i, omega_p = frequencies if frequencies else (omega[0, j], omega[-1, j])
    g = coupling_rates(system)[axis]
    heating = rates.particle_heating(axis)
    return ladder_drift_diffusion(
        frequencies=np.array([omega_i, omega_p]),
        couplings=np.array([[0.0, g], [g, 0.0]]),
        dampings=np.array([rates.doppler_damping, rates.particle_damping]),
        heatings=np.array([rates.doppler_heating[j], heating]),
        squeezing=np.array([0.0, rates.gas_heating[j] - heating]),
    )


def check_hurwitz(drift: np.ndarray) -> np.ndarray:
    """
    Raises
    ------
    NotHurwitz
        An eigenvalue of ``drift`` has a real part above −10⁻¹⁵‖A‖.
    """
    eigenvalues = np.linalg.eigvals(drift)
    margin = -HURWITZ_MARGIN * np.linalg.norm(drift, 2)
    worst = float(np.max(eigenvalues.real))
    if worst >= margin:
        raise NotHurwitz(f"Drift matrix is not Hurwitz (max Re λ = {worst:.3g})")
    return eigenvalues


def solve_lyapunov(drift: np.ndarray, diffusion: np.ndarray) -> np.ndarray:
    """
    Solve Aσ + σAᵀ + C = 0 (plain transpose, complex A allowed).
    """
    n = drift.shape[0]
    if n <= KRONECKER_LIMIT:
        identity = np.eye(n)
        operator = np.kron(drift, identity) + np.kron(identity, drift)
        solution = np.linalg.solve(operator, -diffusion.reshape(-1))
        return solution.reshape(n, n)
    return solve_sylvester(drift, drift.T, -diffusion)


def lyapunov_residual(drift: np.ndarray, diffusion: np.ndarray, sigma: np.ndarray) -> float:
    residual = drift @ sigma + sigma @ drift.T + diffusion
    scale = np.linalg.norm(diffusion) + 2 * np.linalg.norm(drift) * np.linalg.norm(sigma)
    return float(np.linalg.norm(residual) / scale) if scale else 0.0


def solve_steady_state(
    drift: np.ndarray,
    diffusion: np.ndarray,
    frequencies: np.ndarray | None = None,
    axis: Axis | None = None,
) -> SteadyStateResult:
    """
    Stationary covariance and occupations ⟨n⟩ = Re σ[b, b†] − ½ of every mode.

    Raises
    ------
    NotHurwitz
    """
    check_hurwitz(drift)
    sigma = solve_lyapunov(drift, diffusion)
    sigma = (sigma + sigma.T) / 2
    m = drift.shape[0] // 2
    occupations = np.array([sigma[2 * k, 2 * k + 1].real - 0.5 for k in range(m)])
    residual = lyapunov_residual(drift, diffusion, sigma)
    if residual > 1e-10:
        log.warning(f"Lyapunov residual {residual:.3g} is larger than expected")
    return SteadyStateResult(
        covariance=sigma,
        occupations=occupations,
        frequencies=None if frequencies is None else np.asarray(frequencies, dtype=float),
        residual=residual,
        axis=axis,
    )


def axis_steady_state(
    system: LinearizedSystem,
    rates: DissipationRates,
    axis: Axis,
    *,
    frequencies: tuple[float, float] | None = None,
) -> SteadyStateResult:
    """
    Convenience wrapper: build the 4×4 matrices along ``axis`` and solve them.
    """
    drift, diffusion = build_drift_diffusion(system, rates, axis, frequencies=frequencies)
    if frequencies is None:
        omega = renormalized_frequencies(system)
        frequencies = (omega[0, axis.value], omega[-1, axis.value])
    return solve_steady_state(drift, diffusion, np.array(frequencies), axis)


def chain_drift_diffusion(
    system: LinearizedSystem, rates: DissipationRates, axis: Axis = Axis.z
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Drift, diffusion and mode frequencies of N ions and the nanoparticle along ``axis``.
    """
    if system.config.layout is not Layout.on_axis(axis):
        raise OffAxisLayout(f"Chain dynamics along {axis.name} need an on-axis layout")
    n = system.spec.ion_count
    j = axis.value
    omega = renormalized_frequencies(system)[:, j]
    zpf, _ = system.zero_point()
    scales = zpf[:, j]
    idx = system.axis_indices(axis)
    block = system.potential[np.ix_(idx, idx)]
    couplings = block * np.outer(scales, scales) / HBAR
    heating = rates.particle_heating(axis)
    ion_heating = [rates.ion_heating(w) for w in omega[:n]]
    drift, diffusion = ladder_drift_diffusion(
        frequencies=omega,
        couplings=couplings,
        dampings=np.array([rates.doppler_damping] * n + [rates.particle_damping]),
        heatings=np.array(ion_heating + [heating]),
        squeezing=np.array([0.0] * n + [rates.gas_heating[j] - heating]),
    )
    return drift, diffusion, omega


def solve_steady_state_N(
    system: LinearizedSystem, rates: DissipationRates, axis: Axis = Axis.z
) -> SteadyStateResult:
    """
    Stationary state of N Doppler-cooled ions coupled to the nanoparticle along ``axis``.

    Raises
    ------
    NotHurwitz
    OffAxisLayout
    """
    drift, diffusion, omega = chain_drift_diffusion(system, rates, axis)
    return solve_steady_state(drift, diffusion, omega, axis)
