import dataclasses
import logging

import pytest

from levitrap.core.errors import ConstraintViolation, PerturbationOutOfRange, SidebandTooLarge
from levitrap.core.utils.enums import Axis, SolverBranch, Species
from levitrap.packages.trap.displacement import (
    classical_frequency_oracle,
    displacement_function,
)
from levitrap.packages.trap.mathieu import (
    MathieuParams,
    SecularFrequency,
    build_system_spec,
    compute_mathieu_params,
    ion_frequency_approx,
    nanoparticle_frequency_approx,
    secular_frequency,
    secular_residual,
)
from levitrap.packages.trap.validity import rwa_validity_report

from .conftest import TWO_PI, table1_trap


def test_nanoparticle_mathieu_parameters(trap, nanoparticle):
    params = compute_mathieu_params(trap, nanoparticle, Axis.x)
    assert params.a == pytest.approx(7.38e-9, rel=5e-3)
    assert params.slow_strength == pytest.approx(9.129e-8, rel=5e-3)
    assert params.q_f == pytest.approx(1.54e-6, rel=5e-3)
    assert params.l**2 == pytest.approx(1.6e-7, rel=1e-12)
    # q_s carries the 1/l² factor
    assert params.q_s == pytest.approx(params.slow_strength / params.l**2)


def test_secular_frequencies(spec):
    particle = [w / TWO_PI for w in spec.particle_frequencies]
    ion = [w / TWO_PI for w in spec.ion_frequencies]
    assert particle == pytest.approx([1599.8, 1195.3, 1063.3], rel=3e-3)
    assert ion == pytest.approx([3.971e6, 3.906e6, 0.68636e6], rel=1.5e-2)


def test_auto_branch_selection(trap, nanoparticle, ion):
    heavy = secular_frequency(compute_mathieu_params(trap, nanoparticle, Axis.x))
    light = secular_frequency(compute_mathieu_params(trap, ion, Axis.x))
    assert heavy.branch is SolverBranch.nanoparticle_limit
    assert light.branch is SolverBranch.ion_branch
    assert heavy.frequency == pytest.approx(heavy.beta * trap.fast_frequency / 2)


def test_quartic_root_exceeds_nanoparticle_limit(trap, nanoparticle):
    params = compute_mathieu_params(trap, nanoparticle, Axis.x)
    limit = secular_frequency(params, SolverBranch.nanoparticle_limit)
    quartic = secular_frequency(params, SolverBranch.full_quartic)
    assert quartic.frequency / limit.frequency == pytest.approx(1.133, rel=1e-2)


def test_only_quartic_branches_solve_secular_equation(trap, nanoparticle):
    params = compute_mathieu_params(trap, nanoparticle, Axis.x)
    quartic = secular_frequency(params, SolverBranch.full_quartic)
    limit = secular_frequency(params, SolverBranch.nanoparticle_limit)
    assert quartic.residual < 1e-9
    assert limit.residual > 1e-3
    assert limit.residual == pytest.approx(secular_residual(params, limit.beta))
    auto = secular_frequency(params)
    assert auto.residual == pytest.approx(secular_residual(params, auto.beta))


@pytest.mark.parametrize("axis", list(Axis))
def test_quartic_roots_solve_secular_equation(trap, ion, axis):
    params = compute_mathieu_params(trap, ion, axis)
    root = secular_frequency(params, SolverBranch.ion_branch)
    assert secular_residual(params, root.beta) < 1e-9


@pytest.mark.parametrize("axis", list(Axis))
def test_closed_forms_match_solvers(trap, nanoparticle, ion, axis):
    ion_params = compute_mathieu_params(trap, ion, axis)
    assert ion_frequency_approx(trap, ion, axis) == pytest.approx(
        secular_frequency(ion_params, SolverBranch.ion_branch).frequency, rel=1e-9
    )
    particle_params = compute_mathieu_params(trap, nanoparticle, axis)
    assert nanoparticle_frequency_approx(trap, nanoparticle, axis) == pytest.approx(
        secular_frequency(particle_params, SolverBranch.nanoparticle_limit).frequency, rel=1e-9
    )


def test_gauss_law(nanoparticle, ion):
    strict = table1_trap().replace(enforce_gauss=True)
    with pytest.raises(ConstraintViolation):
        build_system_spec(strict, nanoparticle, ion)
    # compensated voltages pass with enforcement on
    build_system_spec(table1_trap(compensated=True), nanoparticle, ion)


def test_gauss_tolerance_is_tight(caplog):
    compensated = table1_trap(compensated=True)
    assert max(compensated.gauss_residuals().values()) < 1e-9
    rounded = compensated.replace(y=dataclasses.replace(compensated.y, dc=-3.915))
    assert 1e-9 < rounded.gauss_residuals()["dc"] < 1e-3
    with pytest.raises(ConstraintViolation):
        rounded.check_gauss()

    with caplog.at_level(logging.WARNING, logger="levitrap.core.models"):
        rounded.replace(enforce_gauss=False).check_gauss()
    assert "continuing anyway" in caplog.text


def test_strong_drive_is_rejected(trap, ion):
    doubly_charged = ion.replace(charge=2 * ion.charge)
    with pytest.raises(PerturbationOutOfRange):
        secular_frequency(compute_mathieu_params(trap, doubly_charged, Axis.x))


def test_validity_warns_for_slow_tone(trap, nanoparticle):
    params = compute_mathieu_params(trap, nanoparticle, Axis.x)
    report = rwa_validity_report(params, secular_frequency(params), Species.nanoparticle)
    assert report.passed
    assert report.ratios["x: q_s ω_s / 16Ω"] == pytest.approx(0.156, rel=2e-2)
    assert report.warnings


def test_validity_fails_above_hard_limit():
    params = MathieuParams(a=0.0, q_s=0.0, q_f=0.32, l=0.01, axis=Axis.x, fast_frequency=1.0)
    spectrum = SecularFrequency(
        axis=Axis.x, frequency=0.01, beta=0.02, branch=SolverBranch.ion_branch
    )
    report = rwa_validity_report(params, spectrum, Species.ion)
    assert not report.passed
    assert report.failed == {"x: q_f ω_f / 16Ω": pytest.approx(2.0)}


def test_displacement_function_is_normalised(trap, ion):
    params = compute_mathieu_params(trap, ion, Axis.x)
    displacement = displacement_function(params, secular_frequency(params))
    assert displacement(0.0) == pytest.approx(1.0)
    assert sum(displacement.tones().values()) == pytest.approx(1.0)


def test_large_slow_sideband_is_rejected():
    params = MathieuParams(a=0.0, q_s=1.0, q_f=0.0, l=0.1, axis=Axis.z, fast_frequency=1.0)
    spectrum = SecularFrequency(
        axis=Axis.z, frequency=0.025, beta=0.05, branch=SolverBranch.full_quartic
    )
    with pytest.raises(SidebandTooLarge):
        displacement_function(params, spectrum)


def test_oracle_matches_static_axis(trap, ion):
    params = compute_mathieu_params(trap, ion, Axis.z)
    measured = classical_frequency_oracle(params)
    assert measured == pytest.approx(secular_frequency(params).frequency, rel=1e-3)


@pytest.mark.slow
def test_oracle_brackets_heavy_particle_frequency(trap, nanoparticle):
    # Ω/ω_s is not small on x, the exact motion sits between the two approximations
    params = compute_mathieu_params(trap, nanoparticle, Axis.x)
    limit = secular_frequency(params, SolverBranch.nanoparticle_limit).frequency
    quartic = secular_frequency(params, SolverBranch.full_quartic).frequency
    measured = classical_frequency_oracle(params)
    assert 1.03 * limit < measured < quartic
