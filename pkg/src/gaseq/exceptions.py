"""Custom exception hierarchy for the gas market equilibrium library."""

from __future__ import annotations

from collections.abc import Sequence
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .model import Diagnostic


class GasEqError(Exception):
    """Base exception for all gaseq errors."""

    pass


class ValidationError(GasEqError):
    """Base exception for validation errors."""

    pass


class InvalidInputError(ValidationError):
    """Malformed numeric input (shape mismatch, non-finite entries)."""

    pass


class SizeLimitError(ValidationError):
    """Problem exceeds the size an algorithm accepts."""

    pass


class InvalidElasticityError(ValidationError):
    """Price elasticity of the wrong sign."""

    pass


class ModelValidationError(ValidationError):
    """Market model violates one or more invariants."""

    def __init__(self, diagnostics: Sequence[Diagnostic], message: str | None = None) -> None:
        self.diagnostics = tuple(diagnostics)
        if message is None:
            lines = [f"{len(self.diagnostics)} model violation(s):"]
            lines.extend(f"  - {d}" for d in self.diagnostics)
            message = "\n".join(lines)
        super().__init__(message)


class CalibrationDataError(ValidationError):
    """Calibration data inconsistent with the model or with its bounds."""

    pass


class PlanValidationError(ValidationError):
    """Year update cannot be turned into a simulation plan."""

    pass


class InvalidComparisonError(ValidationError):
    """Two runs cannot be compared."""

    pass


class RegionMapError(ValidationError):
    """Region map does not cover every trader country."""

    pass


class AssemblyError(GasEqError):
    """Internal inconsistency while assembling the complementarity system."""

    pass


class SolverFailedError(GasEqError):
    """A solved equilibrium was required but the solver did not deliver one."""

    pass


class ModelFileError(GasEqError):
    """Base exception for model and data file problems."""

    pass


class ModelParseError(ModelFileError):
    """File content is not valid JSON or has the wrong shape."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None) -> None:
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class SchemaVersionError(ModelFileError):
    """File declares an unsupported schema version."""

    pass
