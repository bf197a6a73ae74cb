"""Exception hierarchy shared across the package."""

from __future__ import annotations


class SarFieldError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(SarFieldError, ValueError):
    """A model parameter is outside its admissible range or non-finite."""


class ShapeMismatchError(SarFieldError, ValueError):
    """Array shapes are inconsistent with each other or with the grid."""


class FactorizationError(SarFieldError, RuntimeError):
    """Sparse factorization failed or a solve could not meet its residual bound."""


class DegenerateDataError(SarFieldError, ValueError):
    """Input data carries no variability where variability is required."""


class DegeneratePixelError(DegenerateDataError):
    """A pixel has zero variance across replicates.

    The offending pixel is reported as a ``(row, col)`` attribute.
    """

    def __init__(self, pixel: tuple[int, int], message: str | None = None):
        self.pixel = pixel
        super().__init__(message or f"pixel {pixel} has zero variance across replicates")


class DatasetFormatError(SarFieldError, ValueError):
    """A dataset container is missing required members or has bad shapes."""


class EstimationError(SarFieldError, RuntimeError):
    """Likelihood evaluation or window estimation failed."""
