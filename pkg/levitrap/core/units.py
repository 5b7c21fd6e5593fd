"""
Physical constants and unit handling.

Internally everything is SI with angular frequencies in rad/s. Configuration files and
output tables use plain Hz; the factor 2π is applied here and nowhere else.
"""

import math
import re

from scipy import constants

from levitrap.core.errors import UnitError

HBAR = constants.hbar
BOLTZMANN = constants.k
ELEMENTARY_CHARGE = constants.e
EPSILON_0 = constants.epsilon_0
SPEED_OF_LIGHT = constants.c
COULOMB_CONSTANT = 1 / (4 * math.pi * EPSILON_0)
TWO_PI = 2 * math.pi

# residual gas is taken to be nitrogen
NITROGEN_MASS = 4.65e-26

_QUANTITY_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([^\s\d].*)?$")

# kind -> unit -> factor to SI (frequencies go to rad/s)
UNITS: dict[str, dict[str, float]] = {
    "frequency": {
        "hz": TWO_PI,
        "khz": TWO_PI * 1e3,
        "mhz": TWO_PI * 1e6,
        "ghz": TWO_PI * 1e9,
        "rad/s": 1.0,
    },
    "length": {"m": 1.0, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9},
    "voltage": {"v": 1.0, "mv": 1e-3, "kv": 1e3},
    "mass": {"kg": 1.0, "g": 1e-3, "amu": constants.atomic_mass},
    "charge": {"c": 1.0, "e": ELEMENTARY_CHARGE},
    "pressure": {"pa": 1.0, "mbar": 100.0, "torr": constants.torr},
    "temperature": {"k": 1.0},
    "power": {"w": 1.0, "j/s": 1.0},
    "density": {"kg/m3": 1.0, "kg/m^3": 1.0, "g/cm3": 1e3},
    "wavelength": {"m": 1.0, "um": 1e-6, "nm": 1e-9},
    "feedback": {"hz*m2/w": 1.0, "hz m2/w": 1.0},
    "dimensionless": {"": 1.0},
    "count": {"": 1.0},
}

# unit written back by dump_config
CANONICAL_UNITS = {
    "frequency": "Hz",
    "length": "m",
    "voltage": "V",
    "mass": "kg",
    "charge": "C",
    "pressure": "Pa",
    "temperature": "K",
    "power": "W",
    "density": "kg/m3",
    "wavelength": "m",
    "feedback": "Hz*m2/W",
    "dimensionless": "",
    "count": "",
}


def parse_quantity(value: str | int | float, kind: str, key: str = "value") -> float:
    """
    Convert a configuration value to SI.

    Parameters
    ----------
    value: str | int | float
        A bare number (interpreted in the canonical unit of ``kind``, Hz for frequencies)
        or a string ``"<number> <unit>"``.
    kind: str
        Quantity kind, a key of `UNITS`.
    key: str
        Configuration key, used in error messages.

    Raises
    ------
    UnitError
        The unit is unknown or belongs to another kind of quantity.
    """
    table = UNITS[kind]
    if isinstance(value, bool):
        raise UnitError(f"{key}: expected a {kind}, got a boolean")
    if isinstance(value, (int, float)):
        number, unit = float(value), CANONICAL_UNITS[kind].lower()
    elif isinstance(value, str):
        match = _QUANTITY_RE.match(value)
        if not match:
            raise UnitError(f"{key}: cannot read {value!r} as a {kind}")
        number = float(match.group(1))
        unit = (match.group(2) or CANONICAL_UNITS[kind]).strip().lower()
    else:
        raise UnitError(f"{key}: expected a {kind}, got {type(value).__name__}")
    if unit not in table:
        known = ", ".join(u for u in table if u) or "no unit"
        raise UnitError(f"{key}: unit {unit!r} is not a valid {kind} unit (accepted: {known})")
    if kind == "count":
        if number != int(number):
            raise UnitError(f"{key}: expected an integer, got {value!r}")
    return number * table[unit]


def format_quantity(value: float, kind: str) -> str | float:
    """
    Inverse of `parse_quantity` in the canonical unit, lossless for floats.
    """
    if kind in ("dimensionless", "count"):
        return int(value) if kind == "count" else value
    factor = UNITS[kind][CANONICAL_UNITS[kind].lower()]
    return f"{value / factor!r} {CANONICAL_UNITS[kind]}"


def to_hz(angular: float) -> float:
    return angular / TWO_PI


def from_hz(frequency: float) -> float:
    return frequency * TWO_PI
