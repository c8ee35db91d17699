"""Error types shared across the laboratory modules."""

from __future__ import annotations


class LabError(Exception):
    """Base class for all laboratory errors."""


class NonStochastic(LabError):
    """A transition matrix row does not sum to 1 (beyond tolerance) or has negative entries."""


class NotPrimitive(LabError):
    """No power of the transition matrix is strictly positive: uniform ergodicity fails."""


class Unsupported(LabError):
    """The requested quantity has no exact value for this process kind."""


class BudgetExceeded(LabError):
    """An exact enumeration or sampling budget was exceeded."""


class EmptySet(LabError):
    """A target set is empty or has an empty complement where a proper subset is required."""


class EmptyInput(LabError):
    """An operation received an empty collection where a nonempty one is required."""


class MixedBlock(LabError):
    """Differently labeled indices fell inside one gap-cluster during block decomposition."""


class PathTooShort(LabError):
    """The sample path does not cover the largest index the sum needs."""


class DegenerateVariance(LabError):
    """The estimated second moment is indistinguishable from zero: the limit variance vanishes."""


class InsufficientReplications(LabError):
    """Too few replications for a stable second-moment estimate."""


class NoiseFloor(LabError):
    """Distance estimates are indistinguishable from Monte Carlo error; increase replications."""


class EmptySample(LabError):
    """A sample-based estimator received zero samples."""


class UnsupportedIndexFamily(LabError):
    """The index family violates a structural requirement (e.g. mixed polynomial degrees)."""


class ConfigError(LabError):
    """Invalid experiment configuration; message carries the offending field."""
