"""Exception types raised across the package."""


class LFEError(Exception):
    """Base class for all package errors."""


class OutOfChart(LFEError):
    pass


class SingularMetric(LFEError):
    pass


class BaseMismatch(LFEError):
    pass


class ZeroVector(LFEError):
    pass


class OpenMesh(LFEError):
    pass


class NotNormalized(LFEError):
    pass


class LeftChartAtlas(LFEError):
    """Integration left every chart of the atlas.

    ``location`` holds ``(chart, coords)`` of the last valid state.
    """

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class StepUnderflow(LFEError):
    pass


class NonCausalCurve(LFEError):
    pass


class NonExactField(LFEError):
    pass


class NotTimelike(LFEError):
    pass


class NotMonotoneT(LFEError):
    pass


class ParameterRangeError(LFEError):
    pass


class NoConvergence(LFEError):
    """Shooting failed; ``result`` carries the best iterate found."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class DegenerateNu(LFEError):
    pass


class EmptyCandidateSet(LFEError):
    pass


class NotAGeodesic(LFEError):
    pass


class NoAngularStructure(LFEError):
    pass


class AmbiguousWinding(LFEError):
    pass


class ConfigError(LFEError):
    pass
