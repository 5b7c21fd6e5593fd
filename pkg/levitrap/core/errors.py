from typing import Any


class LevitrapError(Exception):
    """
    Base class of every error raised by levitrap.
    """

    pass


# configuration


class ConfigError(LevitrapError):
    pass


class ParseError(ConfigError):
    """
    The configuration file is not valid YAML/JSON.

    Attributes
    ----------
    line: int
        1-based line of the syntax error.
    column: int
        1-based column of the syntax error.
    """

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class SchemaError(ConfigError):
    pass


class UnitError(ConfigError):
    pass


# trap model


class TrapModelError(LevitrapError):
    pass


class NonPositiveMass(TrapModelError):
    pass


class ZeroCharge(TrapModelError):
    pass


class ConstraintViolation(TrapModelError):
    pass


class NoStableRoot(TrapModelError):
    pass


class PerturbationOutOfRange(TrapModelError):
    pass


class RegimeViolation(LevitrapError):
    """
    A quantity required to be small by a perturbative approximation crossed the hard limit.
    """

    def __init__(self, message: str, ratio: float | None = None):
        super().__init__(message)
        self.ratio = ratio


class NegativeDiscriminant(TrapModelError):
    pass


class SidebandTooLarge(TrapModelError):
    pass


class IntegrationDiverged(TrapModelError):
    pass


class NonPositiveTemperature(LevitrapError):
    pass


# equilibrium


class EquilibriumError(LevitrapError):
    pass


class CoincidentParticles(EquilibriumError):
    pass


class NotConverged(EquilibriumError):
    pass


class NoStableEquilibrium(EquilibriumError):
    """
    No candidate passed both stability criteria.

    Attributes
    ----------
    diagnostics: dict[str, Any]
        Counters collected during the search (restarts, converged roots, rejections).
    """

    def __init__(self, message: str, diagnostics: dict[str, Any] | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


# linearisation


class LinearSystemError(LevitrapError):
    pass


class ImaginaryFrequency(LinearSystemError):
    pass


class OffAxisLayout(LinearSystemError):
    pass


class NotPositiveDefinite(LinearSystemError):
    pass


# steady state


class SteadyStateError(LevitrapError):
    pass


class NotHurwitz(SteadyStateError):
    pass


class DivisionByZero(SteadyStateError):
    pass


# micromotion


class FloquetError(LevitrapError):
    pass


class IntegratorFailure(FloquetError):
    pass


class ResolutionTooCoarse(FloquetError):
    pass


class SingularResolvent(FloquetError):
    pass


class NonPhysicalCovariance(FloquetError):
    pass


class FloquetUnstable(FloquetError):
    """
    A Floquet multiplier lies outside the unit circle, there is no periodic steady state.
    """

    def __init__(self, message: str, max_multiplier: float):
        super().__init__(message)
        self.max_multiplier = max_multiplier
