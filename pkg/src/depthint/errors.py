"""Exception types raised across the package."""


class DepthIntError(ValueError):
    """Base class for data errors (maps to CLI exit code 2)."""


class ShapeMismatch(DepthIntError):
    pass


class DimensionNotDivisible(DepthIntError):
    pass


class NoObservations(DepthIntError):
    pass


class NonPositiveDepth(DepthIntError):
    pass


class GridTooLarge(DepthIntError):
    pass


class PredictorFailure(DepthIntError):
    pass


class EmptyMask(DepthIntError):
    pass


class ConfidenceOutOfRange(DepthIntError):
    pass


class NotEnoughValidPixels(DepthIntError):
    pass


class NoPointsGenerated(DepthIntError):
    pass


class ClusteringFailed(DepthIntError):
    pass


class ProjectionDegenerate(DepthIntError):
    pass


class DegenerateFit(DepthIntError):
    pass


class NonPositiveGT(DepthIntError):
    pass


class EmptyInput(DepthIntError):
    pass


class MalformedHeader(DepthIntError):
    pass


class DepthOutOfRange(DepthIntError):
    pass


class DidNotConverge(RuntimeWarning):
    """Emitted (as a warning) when CG stops above tolerance."""
