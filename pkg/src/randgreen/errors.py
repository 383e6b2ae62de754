"""Exception types raised by randgreen operations."""


class RandGreenError(Exception):
    """Base class for all library errors."""


class ZeroVector(RandGreenError):
    """A homogeneous coordinate vector was (numerically) zero."""


class IndeterminacyHit(RandGreenError):
    """A point landed on the indeterminacy set of a degenerate map."""


class RejectionExhausted(RandGreenError):
    """Too many consecutive degenerate draws from a driver."""


class DegenerateEncounter(RandGreenError):
    """A map of the driven sequence fell below the degeneracy floor."""

    def __init__(self, step, distance=None):
        self.step = step
        self.distance = distance
        msg = f"degenerate map at step {step}"
        if distance is not None:
            msg += f" (distance to degenerate locus {distance:.3e})"
        super().__init__(msg)


class DegenerateFiber(RandGreenError):
    """The binary form defining a fiber vanished identically."""


class TrackingFailure(RandGreenError):
    """Homotopy continuation recovered fewer than d**k endpoints."""

    def __init__(self, lost, expected=None):
        self.lost = lost
        self.expected = expected
        super().__init__(f"{lost} homotopy path(s) lost"
                         + (f" out of {expected}" if expected else ""))


class SchemaError(RandGreenError):
    """Configuration document failed validation.

    ``errors`` is a list of ``(path, reason)`` pairs.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        lines = [f"{path or '<root>'}: {reason}" for path, reason in self.errors]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))


class EmptySelection(RandGreenError):
    """A record filter selected nothing."""
