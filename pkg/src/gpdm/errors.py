"""Exception and warning types raised across the package."""


class GpdmError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgument(GpdmError, ValueError):
    """Malformed inputs: shapes, ranges, non-finite values, duplicates."""


class TuningFailed(GpdmError):
    """The bandwidth sweep never showed a usable log-log slope."""


class DegenerateGeometry(GpdmError):
    """Normals or tangents could not be estimated from the local samples."""


class OrientationAmbiguous(GpdmError):
    """A boundary normal points neither clearly in nor out."""


class DisconnectedPoint(GpdmError):
    """A kernel row has no weight besides (or including) the point itself."""


class InvalidCoefficient(GpdmError):
    """A diffusion coefficient or tensor is not admissible at some point."""


class IllConditionedDiffusion(GpdmError):
    """The tangent diffusion tensor is numerically singular."""


class ExtrapolationSingular(GpdmError):
    """The ghost extrapolation system cannot be solved reliably."""


class InvalidBoundaryCondition(GpdmError):
    """Boundary coefficients make the boundary rows singular."""


class SolverFailure(GpdmError):
    """A sparse factorization or eigensolve broke down."""


class StencilFailure(GpdmError):
    """No admissible neighbours for the one-sided normal derivative stencil."""


class CollarOverlapWarning(UserWarning):
    """Ghost rays from different boundary points pass close to each other."""


class NonconvergentRegimeWarning(UserWarning):
    """Parameters are outside the range where the estimator is consistent."""


class RankDeficientExtrapolationWarning(UserWarning):
    """Ghost values were fixed by a truncated pseudo-inverse (near-coincident rays)."""
