"""Exception types shared across the package."""


class SpinbenchError(Exception):
    """Base class for package-specific failures."""


class InsufficientDataError(SpinbenchError):
    """Input data too short/sparse for the requested estimate."""


class ModelInconsistencyError(SpinbenchError):
    """An internal consistency oracle failed (signals a convention bug)."""


class AmbiguousLinewidthError(SpinbenchError):
    """Distribution is multi-modal beyond the allowed prominence."""


class SelectionFailureError(SpinbenchError):
    """Spin-packet selection retained no usable polarization."""


class DegenerateFitError(SpinbenchError):
    """Decay fit has singular normal equations or no decay to fit."""
