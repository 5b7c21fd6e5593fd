import math

import pytest

from levitrap.core.models import AxisElectrodes, ParticleSpec, SystemSpec, TrapConfiguration
from levitrap.core.utils.logging import reset_warnings
from levitrap.packages.cooling.rates import Environment
from levitrap.packages.equilibrium.search import two_body_equilibrium
from levitrap.packages.linear.system import LinearizedSystem, build_linearized_system
from levitrap.packages.trap.mathieu import build_system_spec

TWO_PI = 2 * math.pi
ELEMENTARY = 1.6e-19


def table1_trap(*, compensated: bool = False) -> TrapConfiguration:
    dc_x, dc_y = (-2.555, -3.91547661569) if compensated else (3.235, -3.235)
    return TrapConfiguration(
        x=AxisElectrodes(distance=0.9e-3, alpha=0.93, dc=dc_x, slow=80.0, fast=1350.0),
        y=AxisElectrodes(distance=0.9e-3, alpha=0.93, dc=dc_y, slow=-80.0, fast=-1350.0),
        z=AxisElectrodes(distance=1.7e-3, alpha=0.38, dc=56.5),
        slow_frequency=TWO_PI * 7e3,
        fast_frequency=TWO_PI * 17.5e6,
        enforce_gauss=compensated,
    )


@pytest.fixture(autouse=True)
def _fresh_warnings():
    reset_warnings()
    yield


@pytest.fixture
def trap() -> TrapConfiguration:
    return table1_trap()


@pytest.fixture
def compensated_trap() -> TrapConfiguration:
    return table1_trap(compensated=True)


@pytest.fixture
def nanoparticle() -> ParticleSpec:
    return ParticleSpec(mass=2.0e-17, charge=750 * ELEMENTARY, radius=134e-9, permittivity=2.11)


@pytest.fixture
def ion() -> ParticleSpec:
    return ParticleSpec(mass=40 * 1.6e-27, charge=ELEMENTARY)


@pytest.fixture
def environment() -> Environment:
    # 1e-10 mbar
    return Environment(
        temperature=300.0,
        pressure=1e-8,
        doppler_damping=TWO_PI * 10e3,
        doppler_heating_power=3.8e-22,
        displacement_heating_power=2.8e-26,
    )


@pytest.fixture
def spec(trap, nanoparticle, ion) -> SystemSpec:
    return build_system_spec(trap, nanoparticle, ion)


@pytest.fixture
def system(spec) -> LinearizedSystem:
    return build_linearized_system(two_body_equilibrium(spec), spec)
