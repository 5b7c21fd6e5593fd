import numpy as np
import pytest

from levitrap.core.errors import ImaginaryFrequency, NotConverged, OffAxisLayout
from levitrap.core.models import EquilibriumConfiguration
from levitrap.core.units import HBAR
from levitrap.core.utils.enums import Axis, Layout
from levitrap.packages.equilibrium.search import (
    SearchSettings,
    find_equilibria,
    two_body_equilibrium,
)
from levitrap.packages.linear.modes import normal_modes
from levitrap.packages.linear.system import (
    LinearizedSystem,
    build_linearized_system,
    coupling_rates,
    dynamical_stability,
    renormalized_frequencies,
)


def _chain(spec, ions: int) -> LinearizedSystem:
    settings = SearchSettings(restarts=100, axis_restricted=True, check_floquet=False)
    configs = find_equilibria(spec.replace(ion_count=ions), settings, strict=True)
    axial = next(c for c in configs if c.layout is Layout.on_axis_z)
    return build_linearized_system(axial, spec.replace(ion_count=ions))


def test_renormalized_frequencies(system):
    omega = renormalized_frequencies(system)
    assert omega.shape == (2, 3)
    assert omega[-1, Axis.z.value] == pytest.approx(6686.0, rel=2e-3)
    # the Coulomb field stiffens z and softens the transverse axes
    bare = np.array(system.spec.particle_frequencies)
    assert omega[-1, Axis.z.value] > bare[Axis.z.value]
    assert omega[-1, Axis.x.value] < bare[Axis.x.value]


def test_zero_point_product(system):
    position, momentum = system.zero_point()
    np.testing.assert_allclose(position * momentum, HBAR / 2, rtol=1e-12)
    assert position[0, Axis.z.value] == pytest.approx(1.0505e-8, rel=1e-2)
    assert position[-1, Axis.z.value] == pytest.approx(1.985e-11, rel=1e-2)


def test_two_body_couplings(system):
    rates = coupling_rates(system)
    assert rates[Axis.z] == pytest.approx(-4702.0, rel=1e-2)
    assert rates[Axis.x] > 0
    assert rates[Axis.y] > 0


def test_two_body_is_dynamically_stable(system):
    report = dynamical_stability(system)
    assert report.stable
    assert report.max_real_ratio == 0.0
    assert len(report.eigenvalues) == 12
    assert np.allclose(report.eigenvalues.real, 0.0)


def test_inverted_potential_is_unstable(system):
    flipped = LinearizedSystem(
        spec=system.spec,
        config=system.config,
        inverse_mass=system.inverse_mass,
        potential=-system.potential,
    )
    report = dynamical_stability(flipped)
    assert not report.stable
    assert report.max_real_ratio == pytest.approx(1.0)
    with pytest.raises(ImaginaryFrequency):
        renormalized_frequencies(flipped)


def test_unconverged_configuration_is_rejected(spec):
    positions = np.array([[0.0, 0.0, 1e-5], [0.0, 0.0, -1e-5]])
    config = EquilibriumConfiguration(positions=positions, residual=1.0)
    with pytest.raises(NotConverged):
        build_linearized_system(config, spec)


def test_off_axis_layout_has_no_per_axis_couplings(spec):
    config = two_body_equilibrium(spec)
    config.layout = Layout.off_axis
    system = build_linearized_system(config, spec)
    with pytest.raises(OffAxisLayout):
        coupling_rates(system)
    with pytest.raises(OffAxisLayout):
        normal_modes(system)


def test_single_ion_mode_matches_two_body_coupling(system):
    modes = normal_modes(system)
    assert modes.count == 1
    assert abs(modes.couplings[0]) == pytest.approx(abs(coupling_rates(system)[Axis.z]), rel=1e-9)
    assert modes.effective_coupling_squared() == pytest.approx(modes.couplings[0] ** 2)


def test_two_ion_normal_modes(spec):
    system = _chain(spec, 2)
    modes = coupling_rates(system).modes
    assert modes is not None
    assert modes.count == 2
    np.testing.assert_allclose(modes.matrix @ modes.matrix.T, np.eye(2), atol=1e-12)
    assert np.all(np.diff(modes.frequencies) > 0)
    assert len(modes.to_rows()) == 2
    assert modes.to_rows()[0][:3] == [1, modes.frequencies[0], modes.couplings[0]]
