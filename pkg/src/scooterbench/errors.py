"""Exception types shared across the bench."""


class ScooterBenchError(Exception):
    """Base class for all bench errors."""


class DomainError(ScooterBenchError, ValueError):
    """An argument is outside the physical domain of an operation."""


class ConfigError(ScooterBenchError):
    """Configuration file or parameter set is invalid."""


class ValidationError(ScooterBenchError, ValueError):
    """Input data violates a structural precondition."""


class FitError(ScooterBenchError):
    """Parameter identification cannot proceed on the given data."""


class SimulationError(ScooterBenchError):
    """A simulation run failed to produce a usable result."""
