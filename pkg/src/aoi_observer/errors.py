"""Exception types shared across the package."""


class AoiObserverError(Exception):
    """Base class for all library-specific errors."""


class DimensionMismatch(AoiObserverError, ValueError):
    """Matrix/vector shapes are incompatible with the requested operation."""


class NotJointlyObservable(AoiObserverError):
    """The stacked sensing model does not observe the full state."""


class NumericalRankAmbiguity(AoiObserverError):
    """Singular-value gap at a rank decision is too small to trust."""


class InfeasibleChain(AoiObserverError):
    """Rate-parameter recursion left the representable floating-point range."""


class PlacementFailed(AoiObserverError):
    """Pole placement did not reach the requested spectrum within tolerance."""


class HorizonInconclusive(AoiObserverError):
    """A power-ratio scan did not settle within the scan horizon."""


class HorizonTooShort(AoiObserverError):
    """A deadline/threshold search ran past the available schedule horizon."""


class SubsetBlowup(AoiObserverError):
    """Exhaustive subset enumeration would exceed the configured guard size."""


class GenerationFailed(AoiObserverError):
    """Randomized graph-sequence generation exhausted its retry budget."""


class ScenarioError(AoiObserverError, ValueError):
    """A scenario document is malformed or internally inconsistent."""
