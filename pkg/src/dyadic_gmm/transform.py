"""Normalisation and standardisation of coefficient vectors.

Kernel-based estimates are identified only up to a positive affine map (and,
because the kernel is symmetric, a global sign). These functions pin the
location/scale down:

* ``dbmm`` maps the least-connected node's coefficient to 0 and the
  best-connected node's to 1 (degree-based minimax);
* ``coefficient_minimax`` does the same with the smallest/largest coefficient,
  which is what the solver applies between iterations;
* ``standardize`` + ``sign_fix`` + ``trim`` is the conventional alternative.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DegenerateAnchors, DegenerateScale

ANCHOR_TOL = 1e-12
SCALE_TOL = 1e-12


class TransformMode(str, enum.Enum):
    DBMM = "dbmm"
    STANDARDIZE = "std"


@dataclass(frozen=True)
class TransformSpec:
    mode: TransformMode = TransformMode.DBMM
    trim_bound: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "mode", TransformMode(self.mode))
        if not self.trim_bound > 0:
            raise ValueError("trim_bound must be positive")


def degree_anchors(d) -> tuple[int, int]:
    """(argmin degree, argmax degree); ties go to the lowest node index."""
    d = np.asarray(d)
    lo, hi = int(np.argmin(d)), int(np.argmax(d))
    if lo == hi:
        raise DegenerateAnchors("all degrees are equal; anchors coincide")
    return lo, hi


def _minimax(eta, lo, hi):
    span = eta[hi] - eta[lo]
    if not abs(span) >= ANCHOR_TOL:
        raise DegenerateAnchors(f"anchor coefficients differ by {abs(span):.3g}")
    out = (eta - eta[lo]) / span
    # exact anchor values regardless of rounding
    out[lo] = 0.0
    out[hi] = 1.0
    return out


def dbmm(eta, d) -> np.ndarray:
    """(eta - eta[lo]) / (eta[hi] - eta[lo]) with lo/hi the min/max-degree nodes.

    If the estimate came out in reversed order, the division by a negative
    span flips it back.
    """
    eta = np.asarray(eta, dtype=float)
    lo, hi = degree_anchors(d)
    return _minimax(eta, lo, hi)


def coefficient_minimax(eta) -> np.ndarray:
    """Map min(eta) to 0 and max(eta) to 1 (lowest index wins ties)."""
    eta = np.asarray(eta, dtype=float)
    return _minimax(eta, int(np.argmin(eta)), int(np.argmax(eta)))


def standardize(eta) -> np.ndarray:
    """Mean 0, standard deviation 1 (N-1 denominator)."""
    eta = np.asarray(eta, dtype=float)
    s = eta.std(ddof=1)
    if not s > SCALE_TOL:
        raise DegenerateScale(f"standard deviation {s:.3g} too small to standardise")
    return (eta - eta.mean()) / s


def sign_fix(eta_std, d) -> np.ndarray:
    """Flip all signs if the coefficients are ordered against the degrees.

    Order agreement is measured by Kendall's tau; tau = 0 leaves the input
    unchanged.
    """
    eta_std = np.asarray(eta_std, dtype=float)
    tau = stats.kendalltau(eta_std, np.asarray(d, dtype=float)).statistic
    if np.isfinite(tau) and tau < 0:
        return -eta_std
    return eta_std.copy()


def trim(eta_std, bound: float = 4.0) -> tuple[np.ndarray, np.ndarray]:
    """Clamp to [-bound, bound]; also return the indices that were clamped."""
    if not bound > 0:
        raise ValueError("bound must be positive")
    eta_std = np.asarray(eta_std, dtype=float)
    mask = np.abs(eta_std) > bound
    return np.clip(eta_std, -bound, bound), np.flatnonzero(mask)


def transform_truth(eta0, d, spec: TransformSpec) -> np.ndarray:
    """Transform true coefficients with statistics computed from themselves.

    DBMM uses the degree anchors of the observed network; standardisation
    uses the truth's own mean and sd (no trimming, no sign fix: the truth has
    the right order by construction).
    """
    if spec.mode is TransformMode.DBMM:
        return dbmm(eta0, d)
    return standardize(eta0)


def affine_map(src, dst) -> tuple[float, float]:
    """(a, b) with dst = a*src + b, fitted exactly from two distinct entries."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    i, j = int(np.argmin(src)), int(np.argmax(src))
    a = (dst[j] - dst[i]) / (src[j] - src[i])
    return float(a), float(dst[i] - a * src[i])
