"""Exception types raised across the package."""


class AtscLabError(Exception):
    """Base class for all package-specific errors."""


class PlanError(AtscLabError):
    """A ring-barrier plan violates a structural invariant."""


class EmptyRing(PlanError):
    """One ring has no phase on a barrier side the other ring occupies."""


class BadTiming(PlanError):
    """A duration is non-positive or not a multiple of the 0.1 s grid."""


class NoActions(PlanError):
    """The plan admits fewer than two phase pairs."""


class InvalidAction(AtscLabError):
    """A masked-out phase pair was applied; indicates a caller bug."""


class OverAdvance(AtscLabError):
    """advance() was asked to move past the controller decision point."""


class SpecError(AtscLabError):
    """A scenario/network description failed validation.

    The message carries the offending field path.
    """


class PlanMismatch(AtscLabError):
    """Coordination or schedule parameters reference disabled phases."""


class AllMasked(AtscLabError):
    """A categorical distribution was built with no valid entry."""


class ShapeError(AtscLabError):
    """Array shapes do not chain through a network."""


class SizeMismatch(AtscLabError):
    """Observation vectors do not match the declared agent sizes."""


class NonFiniteLoss(AtscLabError):
    """A training loss or gradient went non-finite; update was aborted."""


class CheckpointMismatch(AtscLabError):
    """A checkpoint's agent shapes disagree with the scenario."""


class MissingRoute(AtscLabError):
    """A requested route produced no completed vehicles."""


class RouteMismatch(AtscLabError):
    """Two metric tables do not cover the same routes/movements."""
