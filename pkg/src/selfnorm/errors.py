"""Exception types shared across the package."""

from __future__ import annotations

__all__ = [
    "DegenerateModelError",
    "EnumerationTooLargeError",
    "NoiseDominatedError",
    "UnsupportedMomentError",
]


class DegenerateModelError(ValueError):
    """The model has zero (or negative) variance and cannot be normalized."""


class UnsupportedMomentError(ValueError):
    """A requested moment does not exist for the innovation family."""


class EnumerationTooLargeError(ValueError):
    """Exact enumeration was requested but the outcome space exceeds the cap."""


class NoiseDominatedError(ValueError):
    """Too few rate points rise above the Monte Carlo noise floor to fit."""
