"""
Trap and Coulomb potential energy of the ion-nanoparticle system, with analytic derivatives.

Positions are arrays of shape (N+1, 3): ions first, the nanoparticle last. Flattened
coordinate vectors follow ``positions.reshape(-1)``, i.e. object-major.
"""

import numpy as np

from levitrap.core.errors import CoincidentParticles
from levitrap.core.models import SystemSpec
from levitrap.core.units import COULOMB_CONSTANT

# separations below this are treated as coincident
MIN_SEPARATION = 1e-15


def _pairs(positions: np.ndarray, charges: np.ndarray):
    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    off = ~np.eye(len(positions), dtype=bool)
    if np.any(dist[off] < MIN_SEPARATION):
        raise CoincidentParticles("Two trapped objects occupy the same position")
    np.fill_diagonal(dist, np.inf)
    products = COULOMB_CONSTANT * np.outer(charges, charges)
    return diff, dist, products


def coulomb_energy(positions: np.ndarray, spec: SystemSpec) -> float:
    """
    Pairwise Coulomb energy in joules of all ion-ion and ion-nanoparticle pairs.

    Raises
    ------
    CoincidentParticles
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    _, dist, products = _pairs(positions, spec.charges())
    return float(np.sum(np.triu(products / dist, k=1)))


def trap_energy(positions: np.ndarray, spec: SystemSpec) -> float:
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    return float(0.5 * np.sum(spec.stiffness() * positions**2))


def total_energy(positions: np.ndarray, spec: SystemSpec) -> float:
    return trap_energy(positions, spec) + coulomb_energy(positions, spec)


def force_residual(positions: np.ndarray, spec: SystemSpec) -> np.ndarray:
    """
    Gradient of the total potential energy, M_σΩ_jσ²R + ∂V/∂R, flattened to 3(N+1).

    It vanishes at an equilibrium.

    Raises
    ------
    CoincidentParticles
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    diff, dist, products = _pairs(positions, spec.charges())
    coulomb = -np.sum((products / dist**3)[:, :, None] * diff, axis=1)
    return (spec.stiffness() * positions + coulomb).reshape(-1)


def coulomb_hessian(positions: np.ndarray, spec: SystemSpec) -> np.ndarray:
    """
    Hessian of the Coulomb energy alone, shape (3(N+1), 3(N+1)).
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    n = len(positions)
    diff, dist, products = _pairs(positions, spec.charges())
    outer = diff[:, :, :, None] * diff[:, :, None, :]
    identity = np.eye(3)
    # ∂²/∂R_a∂R_b of q_a q_b/|R_a − R_b| for a ≠ b, the diagonal is overwritten below
    with np.errstate(invalid="ignore"):
        blocks = -(products / dist**5)[:, :, None, None] * (
            3 * outer - (dist**2)[:, :, None, None] * identity
        )
    idx = np.arange(n)
    blocks[idx, idx] = 0.0
    blocks[idx, idx] = -blocks.sum(axis=1)
    return blocks.transpose(0, 2, 1, 3).reshape(3 * n, 3 * n)


def potential_hessian(positions: np.ndarray, spec: SystemSpec) -> np.ndarray:
    """
    Hessian of trap plus Coulomb energy, the generalised potential matrix V̄.
    """
    return coulomb_hessian(positions, spec) + np.diag(spec.stiffness().reshape(-1))
