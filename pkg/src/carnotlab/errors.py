"""Exception types shared across modules."""


class StructureError(ValueError):
    """Structural data (tensor shapes, layer sizes, file contents) is inconsistent."""


class UnsupportedStepError(ValueError):
    """The requested nilpotency step exceeds the implemented series order."""


class NonGeneratingError(RuntimeError):
    """Iterated brackets failed to span the tangent space within the step cap."""

    def __init__(self, message, partial_ranks=None):
        super().__init__(message)
        self.partial_ranks = partial_ranks


class IntegrationError(RuntimeError):
    """ODE integration failed; carries the last good state."""

    def __init__(self, message, last_state=None, last_time=None):
        super().__init__(message)
        self.last_state = last_state
        self.last_time = last_time


class AdmissibilityError(ValueError):
    """A density failed the line-integral admissibility check."""

    def __init__(self, message, violating_curves=None):
        super().__init__(message)
        self.violating_curves = violating_curves or []


class InsufficientPointsError(RuntimeError):
    """A sampling region was exhausted before the requested count was reached."""
