"""Exception hierarchy.

Every error carries a short machine-readable ``kind`` used by the CLI
error records.
"""


class BmpError(Exception):
    kind = "error"


class ModelError(BmpError, ValueError):
    """Invalid model file or violated model invariant."""

    kind = "model"

    def __init__(self, message, state=None, field=None):
        super().__init__(message)
        self.state = state
        self.field = field


class NonSimpleLeading(BmpError):
    kind = "non_simple_leading"


class Reducible(BmpError):
    kind = "reducible"


class NotSupercritical(BmpError):
    kind = "not_supercritical"


class SemigroupOverflow(BmpError, OverflowError):
    kind = "overflow"


class CapExceeded(BmpError, ValueError):
    kind = "cap_exceeded"


class SumMismatch(BmpError, ValueError):
    kind = "sum_mismatch"


class NotInResolventSet(BmpError, ValueError):
    kind = "not_in_resolvent_set"


class GridTooCoarse(BmpError, ValueError):
    kind = "grid_too_coarse"


class NonpositiveMoment(BmpError, ValueError):
    kind = "nonpositive_moment"


class PopulationOverflow(BmpError):
    """Raised when a trajectory exceeds the particle cap.

    ``safe_horizon`` is ``log(cap) / lambda`` when the growth rate is known.
    """

    kind = "population_overflow"

    def __init__(self, message, safe_horizon=None):
        super().__init__(message)
        self.safe_horizon = safe_horizon
