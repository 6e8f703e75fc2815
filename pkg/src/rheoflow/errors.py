"""Shared exception types so the CLI can map failures to exit codes."""


class NumericalFailure(RuntimeError):
    """An iteration or factorization failed to produce a usable result."""


class StepFailure(NumericalFailure):
    """A time step did not converge even after the dt-halving retry."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class ConfigError(Exception):
    """Malformed or inconsistent run configuration."""


class FieldFormatError(Exception):
    """Malformed binary field file."""
