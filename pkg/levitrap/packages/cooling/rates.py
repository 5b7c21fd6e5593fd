import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from levitrap.core.errors import NonPositiveTemperature
from levitrap.core.models import ParticleSpec
from levitrap.core.units import BOLTZMANN, EPSILON_0, HBAR, NITROGEN_MASS, SPEED_OF_LIGHT
from levitrap.core.utils.enums import Axis
from levitrap.core.utils.logging import warn_once
from levitrap.packages.linear.system import LinearizedSystem, renormalized_frequencies
from levitrap.packages.trap.mathieu import ERROR_RATIO, WARN_RATIO

log = logging.getLogger("levitrap.packages.cooling.rates")


@dataclass(frozen=True, slots=True)
class ProbeSpec:
    """
    Optical position measurement used for feedback cooling.

    Attributes
    ----------
    wavelength: float
        Probe wavelength λ₀ in meters.
    feedback_constant: float
        c_fb in Hz·m²/W, relates the feedback damping to the detected power.
    geometry_factor: float
        ζ, 1, 2 or 7 depending on the collection geometry; 7 overestimates the heating.
    """

    wavelength: float = 780e-9
    feedback_constant: float = 1.57e-6
    geometry_factor: float = 7.0


@dataclass(frozen=True, slots=True)
class Environment:
    """
    Everything that damps or heats the motion.

    Attributes
    ----------
    temperature: float
        Gas temperature in K.
    pressure: float
        Gas pressure in Pa.
    doppler_damping: float
        γ_dop of every ion, rad/s.
    doppler_heating_power: float
        Ė_dop in W.
    displacement_heating_power: float
        Ė_td (electrode noise and vibrations) in W.
    feedback_damping: float
        γ_fb in rad/s.
    gas_heating_power: float | None
        Fixed Ė_gas in W, overrides γ_gas k_B T.
    probe: ProbeSpec
    """

    temperature: float = 300.0
    pressure: float = 1e-8
    doppler_damping: float = 2 * math.pi * 10e3
    doppler_heating_power: float = 3.8e-22
    displacement_heating_power: float = 2.8e-26
    feedback_damping: float = 0.0
    gas_heating_power: float | None = None
    probe: ProbeSpec = field(default_factory=ProbeSpec)

    def replace(self, **changes: Any) -> "Environment":
        return replace(self, **changes)


@dataclass
class DissipationRates:
    """
    Rates entering the dissipators, per axis where they depend on the frequency.

    Attributes
    ----------
    gas_damping: float
        γ_gas, rad/s.
    feedback_damping: float
        γ_fb, rad/s.
    doppler_damping: float
        γ_dop, rad/s.
    gas_heating: np.ndarray
        Γ_gas_j = γ_gas k_B T/(ℏΩ'_jp), rad/s.
    backaction_heating: np.ndarray
        Γ_ba_j, rad/s.
    displacement_heating: np.ndarray
        Γ_td_j = Ė_td/(ℏΩ'_jp), rad/s.
    doppler_heating: np.ndarray
        Γ_dop_j = Ė_dop/(ℏΩ'_ji) of the first ion, rad/s.
    environment: Environment
    rwa_ratios: np.ndarray
        Γ_gas_j/(2Ω'_jp(n_j + ½)) with n_j = k_B T/(ℏΩ'_jp) the occupation of the gas bath:
        the counter-rotating gas correlations relative to the thermal ones. Must be small
        for the secular gas dissipator to hold.
    warnings: list[str]
    """

    gas_damping: float
    feedback_damping: float
    doppler_damping: float
    gas_heating: np.ndarray
    backaction_heating: np.ndarray
    displacement_heating: np.ndarray
    doppler_heating: np.ndarray
    environment: Environment
    rwa_ratios: np.ndarray
    warnings: list[str] = field(default_factory=list)

    @property
    def particle_damping(self) -> float:
        """γ_p = γ_fb + γ_gas."""
        return self.feedback_damping + self.gas_damping

    def particle_heating(self, axis: Axis) -> float:
        """Γ_jp = Γ_gas_j + Γ_td_j + Γ_ba_j."""
        j = axis.value
        return float(
            self.gas_heating[j] + self.displacement_heating[j] + self.backaction_heating[j]
        )

    def ion_heating(self, frequency: float) -> float:
        """Doppler heating rate of an ion mode of angular frequency ``frequency``."""
        return self.environment.doppler_heating_power / (HBAR * frequency)

    @property
    def rwa_valid(self) -> np.ndarray:
        return self.rwa_ratios < WARN_RATIO


def gas_damping_rate(particle: ParticleSpec, temperature: float, pressure: float) -> float:
    """
    Damping of the nanoparticle by residual nitrogen,
    γ_gas = 0.619 (6πR_p²/M_p) P √(2m₀/(πk_BT)).

    Raises
    ------
    NonPositiveTemperature
    """
    if temperature <= 0:
        raise NonPositiveTemperature(f"Temperature must be positive, got {temperature}")
    if pressure < 0:
        raise ValueError(f"Pressure must be non-negative, got {pressure}")
    return (
        0.619
        * (6 * math.pi * particle.radius**2 / particle.mass)
        * pressure
        * math.sqrt(2 * NITROGEN_MASS / (math.pi * BOLTZMANN * temperature))
    )


def polarizability(particle: ParticleSpec) -> float:
    """α_p = 4πε₀R_p³(ε−1)/(ε+2)."""
    eps = particle.permittivity
    return 4 * math.pi * EPSILON_0 * particle.radius**3 * (eps - 1) / (eps + 2)


def backaction_rate(
    particle: ParticleSpec,
    probe: ProbeSpec,
    feedback_damping: float,
    zero_point_length: float,
) -> float:
    """
    Recoil heating of the measurement needed to reach ``feedback_damping``,
    Γ_ba = ζ(γ_fb/c_fb) α_p² k₀⁵ (R^zpf)²/(15π²ℏε₀²c).
    """
    if feedback_damping < 0:
        raise ValueError("Feedback damping must be non-negative")
    k0 = 2 * math.pi / probe.wavelength
    return (
        probe.geometry_factor
        * (feedback_damping / probe.feedback_constant)
        * polarizability(particle) ** 2
        * k0**5
        * zero_point_length**2
        / (15 * math.pi**2 * HBAR * EPSILON_0**2 * SPEED_OF_LIGHT)
    )


def dissipation_rates(system: LinearizedSystem, environment: Environment) -> DissipationRates:
    """
    Evaluate every rate at the renormalised frequencies of ``system``.
    """
    particle = system.spec.nanoparticle
    omega = renormalized_frequencies(system)
    omega_p, omega_i = omega[-1], omega[0]
    zpf, _ = system.zero_point()

    gamma_gas = gas_damping_rate(particle, environment.temperature, environment.pressure)
    heating_power = (
        environment.gas_heating_power
        if environment.gas_heating_power is not None
        else gamma_gas * BOLTZMANN * environment.temperature
    )
    gas_heating = heating_power / (HBAR * omega_p)
    backaction = np.array(
        [
            backaction_rate(
                particle, environment.probe, environment.feedback_damping, zpf[-1, j]
            )
            for j in range(3)
        ]
    )
    bath_occupation = BOLTZMANN * environment.temperature / (HBAR * omega_p)
    rwa = gas_heating / (2 * omega_p * (bath_occupation + 0.5))
    warnings = []
    for axis in Axis:
        ratio = rwa[axis.value]
        if ratio > WARN_RATIO:
            message = f"gas dissipator {axis.name}: Γ_gas/2Ω'(n + ½) = {ratio:.3g}"
            warnings.append(message)
            if ratio >= ERROR_RATIO:
                warn_once(log, f"Secular gas dissipator invalid, {message}")
            else:
                warn_once(log, f"Secular gas dissipator marginal, {message}")

    return DissipationRates(
        gas_damping=gamma_gas,
        feedback_damping=environment.feedback_damping,
        doppler_damping=environment.doppler_damping,
        gas_heating=gas_heating,
        backaction_heating=backaction,
        displacement_heating=environment.displacement_heating_power / (HBAR * omega_p),
        doppler_heating=environment.doppler_heating_power / (HBAR * omega_i),
        environment=environment,
        rwa_ratios=rwa,
        warnings=warnings,
    )
