"""Exception hierarchy.  The CLI maps these onto exit codes."""
from __future__ import annotations

EXIT_OK = 0
EXIT_STAGE_FAILURE = 2
EXIT_CONFIG_ERROR = 3


class QuenchrollError(Exception):
    """Base class for all library errors."""

    exit_code = EXIT_STAGE_FAILURE


class ConfigError(QuenchrollError, ValueError):
    """Invalid parameters or configuration."""

    exit_code = EXIT_CONFIG_ERROR


class DomainError(ConfigError):
    """Input outside the range where an operation is defined."""


class StageError(QuenchrollError):
    """A numerical stage failed; carries the stage name and diagnostics."""

    def __init__(self, message: str, stage: str = "", diagnostics: dict | None = None):
        super().__init__(f"[{stage}] {message}" if stage else message)
        self.stage = stage
        self.diagnostics = dict(diagnostics or {})


class ConvergenceError(StageError):
    """Newton or fixed-point iteration failed to converge."""


class NonContractionError(ConvergenceError):
    """Fixed-point map failed to contract."""


class SelectionError(StageError):
    """No admissible root of the matching constraint was found."""


class SimulationError(StageError):
    """Time integration blew up or produced non-finite values."""
