import math

import numpy as np
import pytest

from levitrap.core.errors import ResolutionTooCoarse
from levitrap.core.utils.enums import Axis, Layout
from levitrap.packages.cooling.approximations import com_occupation
from levitrap.packages.cooling.lyapunov import axis_steady_state
from levitrap.packages.cooling.rates import dissipation_rates
from levitrap.packages.equilibrium.search import (
    SearchSettings,
    find_equilibria,
    two_body_equilibrium,
)
from levitrap.packages.floquet.monodromy import (
    PeriodicOperator,
    floquet_stability,
    integrate_monodromy,
    propagate,
    sampling_grid,
    screen_floquet_stability,
)
from levitrap.packages.floquet.steady_state import (
    axis_purity,
    micromotion_penalty,
    pack,
    packed_index,
    packing_matrices,
    unpack,
)
from levitrap.packages.floquet.system import (
    axis_coordinates,
    build_time_dependent_system,
    commensurate_fast_frequency,
    decoupled_blocks,
)
from levitrap.packages.floquet.threshold import floquet_threshold
from levitrap.packages.linear.modes import normal_modes
from levitrap.packages.linear.system import build_linearized_system, renormalized_frequencies
from levitrap.packages.trap.mathieu import build_system_spec

from .conftest import ELEMENTARY, TWO_PI


def _mathieu(a: float, q: float) -> PeriodicOperator:
    # x'' + (a − 2q cos 2t) x = 0
    return PeriodicOperator(
        static=np.array([[0.0, 1.0], [-a, 0.0]]),
        slow=np.zeros((2, 2)),
        fast=np.array([[0.0, 0.0], [2 * q, 0.0]]),
        slow_frequency=1.0,
        fast_frequency=2.0,
    )


@pytest.fixture
def feedback_rates(system, environment):
    return dissipation_rates(system, environment.replace(feedback_damping=TWO_PI * 1.0))


def test_packing_layout():
    rng = np.random.default_rng(3)
    matrix = rng.normal(size=(4, 4))
    matrix = matrix + matrix.T
    packed = pack(matrix)
    assert len(packed) == 10
    np.testing.assert_array_equal(unpack(packed, 4), matrix)
    duplication, elimination = packing_matrices(4)
    np.testing.assert_array_equal(duplication @ packed, matrix.reshape(-1))
    np.testing.assert_array_equal(elimination @ matrix.reshape(-1), packed)
    assert packed[packed_index(4, 3, 1)] == matrix[1, 3]


def test_commensurate_frequency(trap):
    fast = commensurate_fast_frequency(trap.slow_frequency, trap.fast_frequency)
    assert fast == pytest.approx(2500 * trap.slow_frequency, rel=1e-15)
    assert commensurate_fast_frequency(1.0, 2500.3) == 2500.0


def test_sampling_grid(spec):
    config = two_body_equilibrium(spec)
    system = build_time_dependent_system(
        config, spec, coordinates=axis_coordinates(spec, Axis.z)
    )
    grid = sampling_grid(system, 200)
    assert len(grid) == 200 * 2500
    assert grid[-1] < system.slow_period
    with pytest.raises(ResolutionTooCoarse):
        sampling_grid(system, 20)


def test_decoupled_blocks(spec):
    config = two_body_equilibrium(spec)
    blocks = decoupled_blocks(config, spec)
    assert [b.tolist() for b in blocks] == [[0, 3], [1, 4], [2, 5]]
    config.layout = Layout.off_axis
    assert len(decoupled_blocks(config, spec)) == 1


def test_axis_blocks_scale_with_renormalised_frequencies(spec):
    config = two_body_equilibrium(spec)
    expected = renormalized_frequencies(build_linearized_system(config, spec))
    for axis, block in zip(Axis, decoupled_blocks(config, spec)):
        system = build_time_dependent_system(config, spec, coordinates=block)
        assert system.size == 4
        np.testing.assert_allclose(system.frequencies, expected[:, axis.value], rtol=1e-9)


@pytest.mark.slow
def test_screened_search_keeps_the_axial_pair(spec):
    stable, largest = screen_floquet_stability(two_body_equilibrium(spec), spec, 200)
    assert stable
    assert largest == pytest.approx(1.0, abs=1e-6)

    found = find_equilibria(spec, SearchSettings(restarts=20, seed=1))
    config = next(c for c in found if c.layout is Layout.on_axis_z)
    assert config.floquet_stable
    assert config.max_multiplier == pytest.approx(1.0, abs=1e-6)
    assert config.diagnostics["max-real-ratio"] == 0.0


def test_free_oscillation_returns_after_one_period():
    operator = PeriodicOperator(
        static=np.array([[0.0, 1.0], [-1.0, 0.0]]),
        slow=np.zeros((2, 2)),
        fast=np.zeros((2, 2)),
        slow_frequency=1.0,
        fast_frequency=200.0,
    )
    final, _, method = propagate(operator, np.eye(2), TWO_PI)
    assert method == "dop853"
    np.testing.assert_allclose(final, np.eye(2), atol=1e-8)


def test_mathieu_monodromy_is_symplectic():
    monodromy, _, _ = propagate(_mathieu(0.1, 0.2), np.eye(2), TWO_PI)
    assert np.linalg.det(monodromy) == pytest.approx(1.0, rel=1e-8)
    assert floquet_stability(monodromy)


def test_mathieu_resonance_is_unstable():
    # inside the first instability tongue, |a − 1| < q
    monodromy, _, _ = propagate(_mathieu(1.0, 0.1), np.eye(2), math.pi)
    assert not floquet_stability(monodromy)


def test_secular_dynamics_use_the_matrix_exponential(spec):
    config = two_body_equilibrium(spec)
    system = build_time_dependent_system(
        config, spec, coordinates=axis_coordinates(spec, Axis.x), micromotion=False
    )
    solution = integrate_monodromy(system)
    assert solution.method == "expm"
    assert solution.stable
    np.testing.assert_allclose(np.abs(solution.multipliers), 1.0, atol=1e-9)


def test_secular_purity_matches_lyapunov(system, feedback_rates):
    result = axis_purity(
        system.config, system.spec, feedback_rates, Axis.z, micromotion=False
    )
    expected = axis_steady_state(system, feedback_rates, Axis.z).particle_occupation
    assert result.effective_occupation == pytest.approx(expected, rel=5e-2)
    assert 0 < result.purity <= 1
    assert len(result.to_rows()) == 1


def test_static_axis_has_no_micromotion_penalty(system, feedback_rates):
    penalty = micromotion_penalty(system.config, system.spec, feedback_rates, Axis.z)
    assert penalty.ratio == pytest.approx(1.0, abs=1e-6)


@pytest.mark.slow
def test_micromotion_penalty_on_driven_axis(compensated_trap, nanoparticle, ion, environment):
    spec = build_system_spec(compensated_trap, nanoparticle, ion)
    system = build_linearized_system(two_body_equilibrium(spec), spec)
    rates = dissipation_rates(system, environment.replace(feedback_damping=TWO_PI * 1.0))
    penalty = micromotion_penalty(system.config, spec, rates, Axis.x)
    assert penalty.ratio == pytest.approx(1.8, rel=0.2)
    energies = penalty.with_micromotion
    assert np.all(energies.potential_energy > 0)
    assert np.all(energies.kinetic_energy > 0)


@pytest.mark.slow
def test_charge_threshold(trap, nanoparticle, ion):
    result = floquet_threshold(
        trap,
        nanoparticle,
        ion,
        "particle-charge",
        150 * ELEMENTARY,
        400 * ELEMENTARY,
        relative_tolerance=1e-2,
    )
    assert result.threshold / ELEMENTARY == pytest.approx(215, rel=0.1)
    assert result.evaluations


@pytest.mark.slow
def test_mass_threshold(trap, nanoparticle, ion):
    result = floquet_threshold(
        trap, nanoparticle, ion, "particle-mass", 2e-17, 1.5e-16, relative_tolerance=1e-2
    )
    assert result.threshold == pytest.approx(7e-17, rel=0.15)


@pytest.mark.slow
def test_more_ions_cool_better(spec, environment):
    settings = SearchSettings(restarts=300, axis_restricted=True, check_floquet=False)
    quiet = environment.replace(displacement_heating_power=0.0)
    couplings, occupations = [], []
    for ions in (1, 2, 4):
        chain = spec.replace(ion_count=ions)
        found = find_equilibria(chain, settings, strict=True)
        config = next(c for c in found if c.layout is Layout.on_axis_z)
        system = build_linearized_system(config, chain)
        modes = normal_modes(system)
        couplings.append(modes.effective_coupling_squared())
        occupations.append(com_occupation(system, dissipation_rates(system, quiet), modes))
    assert couplings == sorted(couplings)
    assert occupations == sorted(occupations, reverse=True)
