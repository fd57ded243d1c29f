"""Sandwich variance of the transformed estimates and the studentised statistic.

With identity weighting the GMM covariance is

    V = (M'M)^-1 M' Omega M (M'M)^-1

where M is the moment Jacobian and Omega the covariance of the moments
(scaled by N-1). V-hat plugs in the kernel Jacobian and the residual outer
product, V0 the exact Jacobian and moment covariance at the truths under
the correspondingly transformed error law.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import NonpositiveVariance, SingularBread
from .gmm import jacobian_from_field, jacobian_from_pair_density
from .kernel import KernelProbabilityField
from .model import AffineTransformed, ErrorDistribution, Network, pair_index_values, pair_indices
from .transform import affine_map

COND_LIMIT = 1e12


@dataclass(frozen=True)
class VarianceEstimate:
    V: np.ndarray
    omega: np.ndarray
    condition: float

    def __getitem__(self, idx):
        return self.V[idx]


def residual_matrix(g: Network, F) -> np.ndarray:
    """Symmetric matrix of g_ij - F_ij with zero diagonal."""
    n = g.n
    i, j = pair_indices(n)
    E = np.zeros((n, n))
    E[i, j] = g.pair_vector() - np.asarray(F, dtype=float)
    E[j, i] = E[i, j]
    return E


def omega_hat(eta_t, g: Network, field: KernelProbabilityField) -> np.ndarray:
    """Omega_ij = 1/(N-1) sum_{k != i, j} (g_ik - F_ik)(g_jk - F_jk).

    The k = i and k = j terms drop out because the residual matrix has a
    zero diagonal.
    """
    n = g.n
    if field.n != n or not np.allclose(field.eta, np.asarray(eta_t, dtype=float)):
        raise ValueError("field was not computed at eta_t")
    E = residual_matrix(g, field.F)
    om = E @ E.T / (n - 1)
    return 0.5 * (om + om.T)


def sandwich_variance(M, omega) -> VarianceEstimate:
    """(M'M)^-1 M' Omega M (M'M)^-1 through an SVD of M.

    Raises SingularBread if cond(M'M) > 1e12.
    """
    M = np.asarray(M, dtype=float)
    omega = np.asarray(omega, dtype=float)
    U, s, Wt = linalg.svd(M)
    cond = math.inf if s[-1] == 0 else float((s[0] / s[-1]) ** 2)
    if not cond <= COND_LIMIT:
        raise SingularBread(
            f"condition estimate of M'M is {cond:.3g}; the derivative matrix cannot be inverted reliably"
        )
    # (M'M)^-1 M' = W diag(1/s) U'
    B = (Wt.T / s) @ U.T
    V = B @ omega @ B.T
    return VarianceEstimate(V=0.5 * (V + V.T), omega=omega, condition=cond)


def estimated_variance(eta_t, g: Network, field: KernelProbabilityField) -> VarianceEstimate:
    return sandwich_variance(jacobian_from_field(field), omega_hat(eta_t, g, field))


def exact_omega(F, n, diagonal_only=False) -> np.ndarray:
    """Covariance of sqrt(N-1) m under independent links with probabilities F (pair order).

    Node i's moment collects N-1 independent Bernoulli terms, and nodes i
    and j share exactly one of them (the pair ij).
    """
    F = np.asarray(F, dtype=float)
    i, j = pair_indices(n)
    w = F * (1.0 - F)
    om = np.zeros((n, n))
    if not diagonal_only:
        om[i, j] = w
        om[j, i] = w
    diag = np.bincount(i, weights=w, minlength=n) + np.bincount(j, weights=w, minlength=n)
    om[np.diag_indices(n)] = diag
    return om / (n - 1)


def transformed_error(eta0, eta0_t, err: ErrorDistribution) -> AffineTransformed:
    """Error law under which eta0_t reproduces eta0's link probabilities.

    With eta0 = a*eta0_t + b, P(link) = F(a v_t + 2b), the CDF of (u - 2b)/a.
    """
    a, b = affine_map(eta0_t, eta0)
    if not a > 0:
        raise ValueError("truth transform is not order preserving")
    return AffineTransformed(err, 1.0 / a, -b / a)


def asymptotic_variance(eta0_t, err: ErrorDistribution, g: Network, omega="exact") -> VarianceEstimate:
    """V0 at the transformed truths; ``err`` must be the transformed error law.

    ``omega`` is "exact" (full moment covariance) or "diagonal" (drop the
    shared-pair covariances), the latter as a sensitivity variant.
    """
    eta0_t = np.asarray(eta0_t, dtype=float)
    n = eta0_t.size
    if g.n != n:
        raise ValueError("size mismatch between truths and network")
    v = pair_index_values(eta0_t)
    F = np.asarray(err.cdf(v), dtype=float)
    M0 = jacobian_from_pair_density(np.asarray(err.pdf(v), dtype=float), n)
    if omega not in ("exact", "diagonal"):
        raise ValueError(f"unknown omega variant {omega!r}")
    return sandwich_variance(M0, exact_omega(F, n, diagonal_only=omega == "diagonal"))


def phi_statistic(eta_hat_t, eta0_t, V, i: int) -> float:
    """sqrt(N-1) (eta_hat_i - eta0_i) / sqrt(V_ii)."""
    eta_hat_t = np.asarray(eta_hat_t, dtype=float)
    eta0_t = np.asarray(eta0_t, dtype=float)
    V = V.V if isinstance(V, VarianceEstimate) else np.asarray(V, dtype=float)
    vii = float(V[i, i])
    if not vii > 0:
        raise NonpositiveVariance(f"V[{i},{i}] = {vii:.3g}")
    n = eta_hat_t.size
    return math.sqrt(n - 1) * (eta_hat_t[i] - eta0_t[i]) / math.sqrt(vii)


def phi_index(anchors, n) -> int:
    """First node that is not an anchor (anchors have zero variance by construction)."""
    for k in range(n):
        if k not in anchors:
            return k
    raise ValueError("no non-anchor node")


@dataclass(frozen=True)
class PhiSample:
    phi: np.ndarray
    excluded: np.ndarray
    D11: np.ndarray
    D_excluded_stage1: np.ndarray
    D_excluded: np.ndarray
    phi_bound: float = 5.0
    D_bounds: tuple = (2.0, 0.8)

    @property
    def inliers(self):
        return self.phi[~self.excluded]

    @property
    def D_inliers(self):
        return self.D11[~self.D_excluded]


def exclude_outliers(values, bound) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return ~(np.abs(values) <= bound)


def two_stage_exclusion(D, first=2.0, second=0.8):
    """Masks after dropping |D| > first, and after additionally dropping |D| > second."""
    D = np.asarray(D, dtype=float)
    stage1 = exclude_outliers(D, first)
    stage2 = stage1 | exclude_outliers(D, second)
    return stage1, stage2


def phi_sample(phi, D11, phi_bound=5.0, D_bounds=(2.0, 0.8)) -> PhiSample:
    phi = np.asarray(phi, dtype=float)
    D11 = np.asarray(D11, dtype=float)
    s1, s2 = two_stage_exclusion(D11, *D_bounds)
    return PhiSample(
        phi=phi,
        excluded=exclude_outliers(phi, phi_bound),
        D11=D11,
        D_excluded_stage1=s1,
        D_excluded=s2,
        phi_bound=phi_bound,
        D_bounds=tuple(D_bounds),
    )


def histogram(values, bin_width: float):
    """Bins of width ``bin_width`` aligned at multiples of the width.

    Returns (left edges, counts, heights) with height = count / (n * width),
    so that heights times width sum to one.
    """
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return np.zeros(0), np.zeros(0, dtype=int), np.zeros(0)
    k = np.floor(values / bin_width).astype(np.int64)
    lo, hi = int(k.min()), int(k.max())
    counts = np.bincount(k - lo, minlength=hi - lo + 1)
    edges = np.arange(lo, hi + 1) * bin_width
    heights = counts / (values.size * bin_width)
    return edges, counts, heights


def histogram_csv(values, bin_width: float) -> str:
    edges, counts, heights = histogram(values, bin_width)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["left", "right", "count", "height"])
    for e, c, h in zip(edges, counts, heights):
        w.writerow([repr(float(e)), repr(float(e + bin_width)), int(c), repr(float(h))])
    return buf.getvalue()


PHI_BIN_WIDTHS = (1.0, 0.2, 0.1)
