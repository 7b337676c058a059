"""Exception hierarchy and warning categories."""


class ProxybiasError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(ProxybiasError, ValueError):
    """Array shapes or lengths are inconsistent."""


class SingularDesign(ProxybiasError, ValueError):
    """Design matrix fails the conditioning floor or is rank deficient."""


class DegenerateDesign(ProxybiasError, ValueError):
    """Residualization left no usable variation in the adversary design."""


class MissingColumns(ProxybiasError, ValueError):
    """A required variable block (controls, instrument) is absent."""


class DivisionByNearZero(ProxybiasError, ZeroDivisionError):
    """A ratio estimator hit a denominator below tolerance."""


class DomainError(ProxybiasError, ValueError):
    """A probability or rate argument is outside its valid range."""


class IndexOutOfRange(ProxybiasError, IndexError):
    """A coefficient index does not exist in the referenced fit."""


class EmptyLabeledSet(ProxybiasError, ValueError):
    """An operation requiring labeled rows received none."""


class InsufficientLabels(ProxybiasError, ValueError):
    """Requested subsample size exceeds (or underflows) the labeled pool."""


class NonFiniteParams(ProxybiasError, FloatingPointError):
    """Model parameters contain NaN or infinity."""


class NonFiniteLoss(ProxybiasError, FloatingPointError):
    """Training diverged; the loss is no longer finite."""


class CalibrationFailed(ProxybiasError, RuntimeError):
    """A generator could not hit its calibration target within retry budget."""


class ReplicateFailure(ProxybiasError, RuntimeError):
    """A bootstrap replicate raised; carries the replicate index."""

    def __init__(self, replicate, message):
        super().__init__(f"bootstrap replicate {replicate} failed: {message}")
        self.replicate = replicate


class WeakInstrumentWarning(UserWarning):
    """First-stage relevance of the instrument block is weak."""


class NonMonotoneLossWarning(UserWarning):
    """Training loss increased over a 100-step window."""


class OverparameterizedWarning(UserWarning):
    """Fewer labeled rows than model parameters."""
