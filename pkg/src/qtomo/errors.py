"""Exception hierarchy shared across the package.

Runtime numerical failures (coverage gaps, ill-conditioned inversions,
insufficient time spans, ...) derive from ``NumericalError`` so the CLI can
map them to a dedicated exit code.
"""


class QtomoError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(QtomoError):
    """Invalid experiment configuration. Carries the offending field path."""

    def __init__(self, message, field_path=""):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}" if field_path else message)


class NumericalError(QtomoError):
    """Base for numerical / coverage failures (CLI exit code 3)."""


class ShapeError(QtomoError):
    """Operands have incompatible dimensions or mode counts."""


class BasisError(QtomoError):
    """State is expressed in a basis the operation does not accept."""


class IndexOutOfBasis(QtomoError):
    """A basis or mode index lies outside the truncated range."""


class ParityError(QtomoError):
    """Index pair (nu, beta) has mismatched parity."""


class IndexDomainError(QtomoError):
    """Index pair violates a domain restriction such as nu > |beta|."""


class NeedsJointSamples(QtomoError):
    """Operation requires per-shot joint position samples, not binned data."""


class NotAQuantumState(QtomoError):
    """Requested parameters do not describe a valid quantum state."""


class TruncationError(NumericalError):
    """Too much state mass lies outside the truncated basis."""


class GridCoverageError(NumericalError):
    """Spatial grid too narrow or too coarse for the requested operation."""


class CoverageError(NumericalError):
    """Measurement record does not cover the required angle/time set."""


class FilterTruncationError(NumericalError):
    """Frequency axis too short for the filtered backprojection integral."""


class InversionError(NumericalError):
    """State inversion is ill-conditioned or inconsistent."""


class NumericalRankError(NumericalError):
    """Linear system lost rank beyond the predicted degeneracies."""


class MomentDivergenceError(NumericalError):
    """Position moments do not converge on the recorded grid."""


class DiagonalUnrecoverable(NumericalError):
    """The requested diagonal element cannot be recovered from the data."""


class IncommensurabilityError(NumericalError):
    """System frequencies are commensurable; joint inversion unavailable."""


class InsufficientTimeSpan(NumericalError):
    """Finite-time leakage bound exceeds the requested tolerance."""


class InconsistentData(NumericalError):
    """Measured data is incompatible with any valid quantum state."""
