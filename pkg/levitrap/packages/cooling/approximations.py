"""
Analytic estimates of the nanoparticle occupation, checked against the Lyapunov solve.
"""

import logging
from dataclasses import dataclass

import numpy as np

from levitrap.core.errors import DivisionByZero
from levitrap.core.units import HBAR
from levitrap.core.utils.enums import Axis
from levitrap.core.utils.logging import warn_once
from levitrap.packages.cooling.lyapunov import axis_steady_state
from levitrap.packages.cooling.rates import DissipationRates
from levitrap.packages.linear.modes import NormalModes, normal_modes
from levitrap.packages.linear.system import (
    LinearizedSystem,
    coupling_rates,
    renormalized_frequencies,
)
from levitrap.packages.trap.mathieu import WARN_RATIO, check_small

log = logging.getLogger("levitrap.packages.cooling.approximations")

# relative size of a denominator treated as zero
DEGENERATE_DENOMINATOR = 1e-300


def _pair(system: LinearizedSystem, axis: Axis) -> tuple[float, float, float]:
    omega = renormalized_frequencies(system)
    j = axis.value
    return float(omega[0, j]), float(omega[-1, j]), coupling_rates(system)[axis]


def occupation_approx(system: LinearizedSystem, rates: DissipationRates, axis: Axis) -> float:
    """
    Weak-coupling estimate Γ_jp(Ω'_ji² − Ω'_jp²)²/(4γ_dop g_j² Ω'_ji Ω'_jp).

    Valid when |g_j| and γ_dop are much smaller than Ω'_ji and the nanoparticle damping is
    negligible next to the sympathetic rate.

    Raises
    ------
    RegimeViolation
    DivisionByZero
        No coupling or no Doppler damping.
    """
    omega_i, omega_p, g = _pair(system, axis)
    check_small(f"|g_{axis.name}|/Ω'_i", g / omega_i, logger=log)
    check_small("γ_dop/Ω'_i", rates.doppler_damping / omega_i, logger=log)
    denominator = 4 * rates.doppler_damping * g**2 * omega_i * omega_p
    if denominator == 0:
        raise DivisionByZero("Occupation estimate needs a coupling and Doppler damping")
    heating = rates.particle_heating(axis)
    return heating * (omega_i**2 - omega_p**2) ** 2 / denominator


def sympathetic_rate(
    system: LinearizedSystem,
    rates: DissipationRates,
    axis: Axis = Axis.z,
    modes: NormalModes | None = None,
) -> float:
    """
    Effective damping of the nanoparticle provided by the Doppler-cooled ions.

    For a single ion γ_eff = γ_dop·4Ω'_jp g_j²/Ω'_ji³. For a chain along z only the
    modes making up the centre-of-mass motion contribute, γ_eff = γ_dop·4Ω'_zp g²/ν₁³ with
    g² from :meth:`NormalModes.effective_coupling_squared`.

    Raises
    ------
    RegimeViolation
        Nanoparticle frequency not much below the ion frequency.
    OffAxisLayout
    """
    if system.spec.ion_count == 1 and modes is None:
        omega_i, omega_p, g = _pair(system, axis)
        check_small("Ω'_p/Ω'_i", omega_p / omega_i, logger=log)
        return rates.doppler_damping * 4 * omega_p * g**2 / omega_i**3

    modes = modes or normal_modes(system)
    ion_frequency = float(np.mean(renormalized_frequencies(system)[:-1, Axis.z.value]))
    nu = modes.frequencies
    contributing = 2 if modes.count >= 2 and (modes.count % 2 or modes.degenerate_pair) else 1
    for alpha in range(contributing):
        ratio = abs(nu[alpha] - ion_frequency) / np.sqrt(nu[alpha] * ion_frequency)
        if ratio > WARN_RATIO:
            warn_once(
                log,
                f"Mode {alpha + 1} detuned from the ion frequency "
                f"(|ν−Ω'_zi|/√(νΩ'_zi) = {ratio:.3g}), cooling rate is approximate",
            )
    check_small("Ω'_zp/ν₁", modes.particle_frequency / nu[0], logger=log)
    return (
        rates.doppler_damping
        * 4
        * modes.particle_frequency
        * modes.effective_coupling_squared()
        / nu[0] ** 3
    )


def com_occupation(
    system: LinearizedSystem, rates: DissipationRates, modes: NormalModes | None = None
) -> float:
    """Γ_zp/γ_eff with the centre-of-mass cooling rate of the chain."""
    rate = sympathetic_rate(system, rates, Axis.z, modes)
    if rate == 0:
        raise DivisionByZero("Chain provides no sympathetic cooling")
    return rates.particle_heating(Axis.z) / rate


def independent_ion_occupation(system: LinearizedSystem, rates: DissipationRates) -> float:
    """
    Γ_zp/Σ_k γ_eff,k treating every ion as a separate cooler.

    Each ion keeps its Coulomb-shifted frequency Ω'_zi,k and its own coupling
    g_z,k = V̄_{kz,pz} R_zi,k R_zp/ℏ, the ion-ion coupling is dropped.
    """
    n = system.spec.ion_count
    omega = renormalized_frequencies(system)[:, Axis.z.value]
    zpf, _ = system.zero_point()
    scales = zpf[:, Axis.z.value]
    idx = system.axis_indices(Axis.z)
    couplings = system.potential[idx[:n], idx[-1]] * scales[:n] * scales[-1] / HBAR
    total = float(
        np.sum(rates.doppler_damping * 4 * omega[-1] * couplings**2 / omega[:n] ** 3)
    )
    if total == 0:
        raise DivisionByZero("Ions provide no sympathetic cooling")
    return rates.particle_heating(Axis.z) / total


def closed_form_occupation(
    system: LinearizedSystem, rates: DissipationRates, axis: Axis
) -> float:
    """
    Rational closed form of the two-body nanoparticle occupation.

    All rates are normalised to Ω'_ji. This expression is experimental: it does not reduce
    to Γ_jp/γ_p when the coupling vanishes, use :func:`closed_form_discrepancy` to compare it
    with the Lyapunov solve.

    Raises
    ------
    DivisionByZero
        A denominator factor vanishes.
    """
    warn_once(log, "Closed-form occupation is experimental, prefer the Lyapunov solve")
    omega_i, omega_p, g = _pair(system, axis)
    return _closed_form(
        g=g / omega_i,
        frequency=omega_p / omega_i,
        gamma_d=rates.doppler_damping / omega_i,
        gamma_p=rates.particle_damping / omega_i,
        heating=rates.particle_heating(axis) / omega_i,
        doppler_heating=rates.doppler_heating[axis.value] / omega_i,
    )


def _closed_form(
    g: float,
    frequency: float,
    gamma_d: float,
    gamma_p: float,
    heating: float,
    doppler_heating: float,
) -> float:
    w = frequency
    big_a = gamma_d + 2 * doppler_heating
    k = (gamma_d / 2) ** 2 + 1
    plus = gamma_p + gamma_d
    times = gamma_p * gamma_d
    chi = times**2 + 4 * gamma_d**2 * w**2

    def h(eta: float) -> float:
        return times + eta * plus**2

    n1 = (
        (times * plus * h(3) + gamma_d**3 * (4 + plus * gamma_d**2))
        * (times + 2 * gamma_d * heating)
        - big_a * (times**2 * h(2) + 8 * k * gamma_d**2 * h(0.5)) * w
        + 4 * gamma_d * (h(2) ** 2 - 6 * gamma_d * heating * h(4 / 3)) * w**2
        - 4 * big_a * gamma_d**2 * h(2) * w**3
    )
    n2 = (plus**2 + 4 * (1 + w**2)) ** 2 - 64 * w**2
    n3 = (
        k * times**2 * plus * (4 + plus**2) * big_a
        - 8 * k * times**2 * plus * gamma_d * w
        - 4
        * (
            -4 * times * plus * h(-2)
            + times**2 * plus * h(2)
            + 3 * plus * gamma_d**4 * h(1 / 3)
            + 16 * gamma_d**3
            + 8 * plus * gamma_d**4
        )
        * heating
        * w
        + 8 * k * plus * big_a * (2 * k * gamma_d**2 + times * h(1)) * w**2
        - 8
        * gamma_d
        * (
            4 * k * plus * gamma_d**2
            + 2 * (-4 * h(3) + 2 * times * h(1.5) + gamma_d**4) * heating
        )
        * w**3
        + 16 * k * plus * big_a * gamma_d**2 * w**4
        - 64 * gamma_d**3 * heating * w**5
    )
    numerator = 32 * g**4 * n1 - k * chi * gamma_d * heating * n2 + 4 * g**2 * gamma_d * n3
    factors = (
        gamma_d,
        4 * k * chi - 64 * gamma_d**2 * g**2 * w,
        64 * plus**2 * g**2 * w + times * n2,
    )
    for factor in factors:
        if abs(factor) < DEGENERATE_DENOMINATOR:
            raise DivisionByZero("Closed-form occupation has a vanishing denominator")
    return numerator / (factors[0] * factors[1] * factors[2])


@dataclass
class ClosedFormReport:
    """
    Attributes
    ----------
    closed_form: float
    numeric: float
        Occupation from the Lyapunov solve.
    relative_error: float
    agrees: bool
        Relative error below ``tolerance``.
    """

    closed_form: float
    numeric: float
    relative_error: float
    agrees: bool


def closed_form_discrepancy(
    system: LinearizedSystem,
    rates: DissipationRates,
    axis: Axis,
    tolerance: float = 1e-6,
) -> ClosedFormReport:
    """
    Compare the closed form with the Lyapunov occupation along ``axis``.
    """
    numeric = axis_steady_state(system, rates, axis).particle_occupation
    try:
        closed = closed_form_occupation(system, rates, axis)
    except DivisionByZero:
        closed = float("nan")
    error = abs(closed - numeric) / abs(numeric) if numeric else float("inf")
    agrees = bool(np.isfinite(error) and error < tolerance)
    if not agrees:
        log.debug(
            f"Closed form {closed:.6g} differs from the Lyapunov value {numeric:.6g} "
            f"along {axis.name} (relative {error:.3g})"
        )
    return ClosedFormReport(
        closed_form=closed, numeric=numeric, relative_error=error, agrees=agrees
    )
