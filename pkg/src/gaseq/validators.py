"""Input validation for the gas market equilibrium library."""

import math
import re
from collections.abc import Mapping
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .exceptions import InvalidInputError

_IDENTIFIER_REGEX = re.compile(r"[A-Za-z0-9_\-\.]+")
MAX_IDENTIFIER_LENGTH = 64


def validate_identifier(value: Any, what: str = "identifier") -> str:
    """Validate an id: 1-64 chars of letters, digits, underscore, hyphen or dot."""
    if not isinstance(value, str):
        raise InvalidInputError(f"{what} must be a string, got {type(value).__name__}")

    if not value or len(value) > MAX_IDENTIFIER_LENGTH:
        raise InvalidInputError(
            f"{what} must have 1-{MAX_IDENTIFIER_LENGTH} characters, got {len(value)}"
        )

    if not _IDENTIFIER_REGEX.fullmatch(value):
        raise InvalidInputError(f"{what} '{value}' contains invalid characters")

    return value


def validate_real(value: Any, what: str = "value") -> float:
    """Validate a finite real number and return it as float."""
    if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
        raise InvalidInputError(f"{what} must be a number, got {type(value).__name__}")

    result = float(value)
    if not math.isfinite(result):
        raise InvalidInputError(f"{what} must be finite, got {result}")

    return result


def validate_optional_real(value: Any, what: str = "value") -> float | None:
    """Validate a finite real number or None."""
    if value is None:
        return None
    return validate_real(value, what)


def validate_positive_int(value: Any, what: str = "value") -> int:
    """Validate an integer >= 1."""
    if not isinstance(value, int) or isinstance(value, bool):
        raise InvalidInputError(f"{what} must be an integer, got {type(value).__name__}")

    if value < 1:
        raise InvalidInputError(f"{what} must be at least 1, got {value}")

    return value


def validate_positive_real(value: Any, what: str = "value") -> float:
    """Validate a finite real number > 0."""
    result = validate_real(value, what)
    if result <= 0.0:
        raise InvalidInputError(f"{what} must be positive, got {result}")
    return result


def validate_real_mapping(values: Any, what: str = "mapping") -> dict[Any, float]:
    """Validate a mapping of keys to finite reals; returns a copy."""
    if not isinstance(values, Mapping):
        raise InvalidInputError(f"{what} must be a mapping, got {type(values).__name__}")
    return {key: validate_real(value, f"{what}[{key}]") for key, value in values.items()}


def validate_vector(value: Any, length: int | None = None, what: str = "vector") -> NDArray[np.float64]:
    """Validate a finite 1-D real vector, optionally of a given length."""
    try:
        array = np.array(value, dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise InvalidInputError(f"{what} must be numeric: {e}") from None

    if array.ndim != 1:
        raise InvalidInputError(f"{what} must be one-dimensional, got shape {array.shape}")

    if length is not None and array.shape[0] != length:
        raise InvalidInputError(f"{what} must have length {length}, got {array.shape[0]}")

    if not np.all(np.isfinite(array)):
        raise InvalidInputError(f"{what} contains non-finite entries")

    return array


def validate_square_matrix(value: Any, what: str = "matrix") -> NDArray[np.float64]:
    """Validate a finite, non-empty, square real matrix."""
    try:
        array = np.array(value, dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise InvalidInputError(f"{what} must be numeric: {e}") from None

    if array.ndim != 2 or array.shape[0] != array.shape[1]:
        raise InvalidInputError(f"{what} must be square, got shape {array.shape}")

    if array.shape[0] < 1:
        raise InvalidInputError(f"{what} must have dimension at least 1")

    if not np.all(np.isfinite(array)):
        raise InvalidInputError(f"{what} contains non-finite entries")

    return array
