"""Exception types raised by the estimation pipeline."""

from __future__ import annotations


class DyadicGMMError(Exception):
    """Base class for all package errors."""

    code = "error"


class DegenerateDensity(DyadicGMMError):
    """The kernel estimate of the index density is (numerically) zero at some pair.

    Happens when one index value sits far from all others, so the
    denominator of the estimated link probability vanishes.
    """

    code = "degenerate_density"


class NotConverged(DyadicGMMError):
    """An iterative solver hit its iteration budget. ``result`` carries the last state."""

    code = "not_converged"

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class SingularNormalEquations(DyadicGMMError):
    """M'M stayed singular up to the damping ceiling.

    Typical cause: insufficient variation in the degrees, which makes the
    estimated derivative matrix collinear.
    """

    code = "singular_normal_equations"


class DegenerateAnchors(DyadicGMMError):
    """The two anchor coefficients of a minimax-type normalisation coincide."""

    code = "degenerate_anchors"


class DegenerateScale(DyadicGMMError):
    """Standard deviation too small to standardise."""

    code = "degenerate_scale"


class SingularBread(DyadicGMMError):
    """The bread M'M of the sandwich variance is too ill-conditioned to invert.

    Large condition numbers usually come from numerical trouble when
    inverting the matrix of derivatives of the moment conditions.
    """

    code = "singular_bread"


class NonpositiveVariance(DyadicGMMError):
    code = "nonpositive_variance"


class MleNonexistent(DyadicGMMError):
    """Some node has degree 0 or N-1, so the beta-model MLE does not exist."""

    code = "mle_nonexistent"
