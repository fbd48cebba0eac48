"""Small result wrappers shared by the reconstruction paths."""

from dataclasses import dataclass, field

from .states import DensityMatrix


@dataclass(frozen=True)
class ReconstructedState:
    """A recovered state plus the diagnostics of how it was recovered.

    projection_distance is the Frobenius distance moved by the projection
    onto the physical (PSD, unit trace) cone; large values flag data that is
    inconsistent with any quantum state.  leakage_bounds (when present) map
    matrix entries to certified finite-time cross-term bounds.
    """

    state: DensityMatrix
    projection_distance: float
    residual: float = 0.0
    condition_number: float = 0.0
    leakage_bounds: dict = field(default_factory=dict)
