"""Exception types raised across the optimizer."""

from __future__ import annotations


class NeuroParetoError(Exception):
    """Base class for every error the package raises on purpose."""


class ConfigError(NeuroParetoError):
    """Raised when a problem definition or run configuration is invalid."""


class DomainError(NeuroParetoError, ValueError):
    """Raised when a function receives arguments outside its domain."""


class InternalError(NeuroParetoError):
    """Raised when an internal invariant is breached."""


class TrainingError(NeuroParetoError):
    """Raised when a model cannot be trained on the data it was given."""


class ModelStateError(NeuroParetoError):
    """Raised when a model is used before it is trained or fitted."""


class NumericError(NeuroParetoError):
    """Raised when a computation stays non-finite after recovery attempts."""


class EstimationError(NeuroParetoError):
    """Raised when a constants protocol has no usable samples."""


class FeatureError(NeuroParetoError):
    """Raised when acquisition features are malformed."""
