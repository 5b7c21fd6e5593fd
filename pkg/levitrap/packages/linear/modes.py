from dataclasses import dataclass

import numpy as np

from levitrap.core.errors import NotPositiveDefinite, OffAxisLayout
from levitrap.core.utils.enums import Axis, Layout
from levitrap.packages.linear.system import LinearizedSystem, renormalized_frequencies

DEGENERACY = 1e-6


@dataclass
class NormalModes:
    """
    Axial normal modes of the ion chain and their coupling to the nanoparticle.

    Attributes
    ----------
    matrix: np.ndarray
        Orthogonal matrix S, row α holds the participation of each ion in mode α.
    frequencies: np.ndarray
        Mode frequencies ν_α in rad/s, ascending.
    couplings: np.ndarray
        Mode-nanoparticle coupling rates g_α in rad/s.
    particle_frequency: float
        Renormalised axial nanoparticle frequency Ω'_zp.
    """

    matrix: np.ndarray
    frequencies: np.ndarray
    couplings: np.ndarray
    particle_frequency: float

    @property
    def count(self) -> int:
        return len(self.frequencies)

    @property
    def degenerate_pair(self) -> bool:
        if self.count < 2:
            return False
        return abs(self.frequencies[1] - self.frequencies[0]) < DEGENERACY * self.frequencies[0]

    def effective_coupling_squared(self) -> float:
        """
        Coupling of the centre-of-mass-like combination: g₁² for even chains, g₁² + g₂²
        when the chain is odd or the lowest pair is degenerate.
        """
        g2 = self.couplings[0] ** 2
        if self.count >= 2 and (self.count % 2 == 1 or self.degenerate_pair):
            g2 += self.couplings[1] ** 2
        return float(g2)

    def to_rows(self) -> list[list[float]]:
        return [
            [alpha + 1, float(self.frequencies[alpha]), float(self.couplings[alpha])]
            + self.matrix[alpha].tolist()
            for alpha in range(self.count)
        ]


def normal_modes(system: LinearizedSystem) -> NormalModes:
    """
    Diagonalise the mass-weighted axial ion block of V̄.

    g_α = Σ_k S_αk V̄_{kz,pz} / (2√(M_i M_p ν_α Ω'_zp)).

    Raises
    ------
    OffAxisLayout
        The chain is not along z, axial motion does not decouple.
    NotPositiveDefinite
    """
    if system.config.layout is not Layout.on_axis_z:
        raise OffAxisLayout("Axial normal modes need every object on the z axis")
    spec = system.spec
    n = spec.ion_count
    z = system.axis_indices(Axis.z)
    ions, particle = z[:n], z[-1]
    block = system.potential[np.ix_(ions, ions)] / spec.ion.mass
    nu2, vectors = np.linalg.eigh((block + block.T) / 2)
    if np.any(nu2 <= 0):
        raise NotPositiveDefinite("Axial ion potential is not positive definite")
    matrix = vectors.T.copy()
    for row in matrix:
        # orient each mode so its ion displacements point along +z on average
        reference = row.sum() if abs(row.sum()) > 1e-12 else row[np.argmax(np.abs(row))]
        if reference < 0:
            row *= -1
    nu = np.sqrt(nu2)
    omega_p = float(renormalized_frequencies(system)[-1, Axis.z.value])
    row = system.potential[ions, particle]
    masses = spec.ion.mass * spec.nanoparticle.mass
    couplings = (matrix @ row) / (2 * np.sqrt(masses * nu * omega_p))
    return NormalModes(
        matrix=matrix, frequencies=nu, couplings=couplings, particle_frequency=omega_p
    )
