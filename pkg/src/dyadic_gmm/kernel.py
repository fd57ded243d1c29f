"""Leave-one-out kernel estimates of link probabilities and their index derivative.

For a candidate coefficient vector the index of pair l is v_l = eta_i + eta_j and

    p1[l] = 1/(h(L-1)) sum_{m != l} 1(g_m = 1) K((v_l - v_m)/h)
    p0[l] = 1/(h(L-1)) sum_{m != l} 1(g_m = 0) K((v_l - v_m)/h)

with derivatives pd1, pd0 carrying K' and an extra 1/h.  The estimated
error CDF at v_l is F = p1/(p1 + p0) and f is its derivative in v_l.

Two evaluation paths give the same numbers: a direct O(L^2) double loop,
and for large L a Chebyshev interpolant of the (entire) kernel sums on
[min v, max v] built from an adaptive number of nodes.  The direct loop is
the reference; the interpolant is checked against it in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np
from scipy.fft import dct

from .errors import DegenerateDensity
from .model import Network, n_pairs, pair_index_values

INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
# K(z) = 0.5 * (3 - z^2) * phi(z); the loops accumulate (3 - z^2) e^{-z^2/2}
_KSCALE = 0.5 * INV_SQRT_2PI


def kernel_eval(z):
    """Fourth-order Gaussian kernel 0.5 (3 - z^2) phi(z).

    Symmetric, integrates to one, zero second and third moments. Takes
    negative values for |z| > sqrt(3).
    """
    z = np.asarray(z, dtype=float)
    return _KSCALE * (3.0 - z * z) * np.exp(-0.5 * z * z)


def kernel_deriv(z):
    """K'(z) = 0.5 (z^3 - 5 z) phi(z)."""
    z = np.asarray(z, dtype=float)
    return _KSCALE * (z * z - 5.0) * z * np.exp(-0.5 * z * z)


@numba.njit(cache=True, nogil=True)
def _direct_sums(x, v, gf, h, exclude):
    # out rows: sum K, sum g K, sum K', sum g K' (without the 0.5*phi constant)
    P = x.shape[0]
    L = v.shape[0]
    out = np.zeros((4, P))
    inv = 1.0 / h
    for t in range(P):
        s = 0.0
        s1 = 0.0
        d = 0.0
        d1 = 0.0
        xt = x[t] * inv
        skip = exclude[t]
        for m in range(L):
            if m == skip:
                continue
            z = xt - v[m] * inv
            z2 = z * z
            e = math.exp(-0.5 * z2)
            k = (3.0 - z2) * e
            kd = (z2 - 5.0) * z * e
            s += k
            s1 += gf[m] * k
            d += kd
            d1 += gf[m] * kd
        out[0, t] = s
        out[1, t] = s1
        out[2, t] = d
        out[3, t] = d1
    return out


def direct_kernel_sums(x, v, g, h, exclude=None, block_size=2048):
    """Raw kernel sums at targets ``x`` over sample ``v`` by direct summation.

    ``exclude[t]`` is the sample index left out for target t (-1: none).
    Targets are processed in independent blocks, so any slice of targets
    can be evaluated on its own (e.g. in a worker thread).
    """
    x = np.ascontiguousarray(x, dtype=float)
    v = np.ascontiguousarray(v, dtype=float)
    gf = np.ascontiguousarray(g, dtype=float)
    if exclude is None:
        exclude = np.full(x.size, -1, dtype=np.int64)
    exclude = np.ascontiguousarray(exclude, dtype=np.int64)
    out = np.empty((4, x.size))
    for a in range(0, x.size, block_size):
        b = min(x.size, a + block_size)
        out[:, a:b] = _direct_sums(x[a:b], v, gf, h, exclude[a:b])
    return out


def _chebyshev_nodes(a, b, p):
    t = np.cos(np.pi * (np.arange(p) + 0.5) / p)
    return 0.5 * (a + b) + 0.5 * (b - a) * t


def chebyshev_kernel_sums(x, v, g, h, rel_tol=1e-14, max_nodes=None):
    """Kernel sums at ``x`` (no exclusion) via a Chebyshev interpolant.

    Returns None when the interpolant would need more nodes than direct
    summation costs, or cannot reach ``rel_tol``.
    """
    x = np.asarray(x, dtype=float)
    a = float(min(x.min(), v.min()))
    b = float(max(x.max(), v.max()))
    if not b - a > 1e-9 * h:
        return None
    if max_nodes is None:
        max_nodes = max(x.size // 4, 16)
    width = (b - a) / h
    p = int(32 * math.ceil((6.0 * width + 40.0) / 32.0))
    while p <= max_nodes:
        nodes = _chebyshev_nodes(a, b, p)
        vals = direct_kernel_sums(nodes, v, g, h)
        coef = dct(vals, type=2, axis=1) / p
        coef[:, 0] *= 0.5
        scale = np.abs(coef).max()
        tail = np.abs(coef[:, -6:]).max()
        if tail <= rel_tol * max(scale, 1e-300):
            s = (2.0 * x - (a + b)) / (b - a)
            return np.polynomial.chebyshev.chebval(s, coef.T)
        p *= 2
    return None


def kernel_sums(x, v, g, h, exclude=None, method="auto"):
    """Kernel sums with optional leave-one-out exclusion.

    ``method`` is "direct", "chebyshev" or "auto" (Chebyshev when it is
    cheaper than the double loop).
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    if method == "direct":
        return direct_kernel_sums(x, v, g, h, exclude)
    if method not in ("auto", "chebyshev"):
        raise ValueError(f"unknown method {method!r}")
    small = x.size * v.size < 2_000_000
    if method == "auto" and small:
        return direct_kernel_sums(x, v, g, h, exclude)
    out = chebyshev_kernel_sums(
        x, v, g, h, max_nodes=None if method == "auto" else max(x.size, 64)
    )
    if out is None:
        return direct_kernel_sums(x, v, g, h, exclude)
    if exclude is not None:
        exclude = np.asarray(exclude)
        has = exclude >= 0
        # self term of the excluded sample point: K(0) = 3 (unscaled), K'(0) = 0
        out[0, has] -= 3.0
        out[1, has] -= 3.0 * g[exclude[has]]
    return out


@dataclass(frozen=True)
class KernelSpec:
    """Kernel configuration.

    The bandwidth defaults to L^(-1/7) with L = N(N-1)/2 pairs.
    """

    family: str = "fourth_order_gaussian"
    bandwidth: Optional[float] = None
    eps_clamp: float = 1e-6
    eps_den: float = 1e-12
    method: str = "auto"

    def __post_init__(self):
        if self.family != "fourth_order_gaussian":
            raise ValueError(f"unsupported kernel family {self.family!r}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")

    def h(self, n_pairs_: int) -> float:
        if self.bandwidth is not None:
            return float(self.bandwidth)
        return float(n_pairs_) ** (-1.0 / 7.0)


@dataclass(frozen=True)
class KernelProbabilityField:
    """Per-pair kernel estimates at one coefficient vector (arrays in pair order)."""

    eta: np.ndarray
    v: np.ndarray
    g: np.ndarray
    h: float
    p1: np.ndarray
    p0: np.ndarray
    pd1: np.ndarray
    pd0: np.ndarray
    F: np.ndarray
    f: np.ndarray
    f_raw: np.ndarray
    clamped: np.ndarray
    clamp_count: int
    eps_clamp: float
    extra: dict = field(default_factory=dict)

    @property
    def density(self):
        """Unconditional leave-one-out kernel density of the index, p1 + p0."""
        return self.p1 + self.p0

    @property
    def n(self) -> int:
        return self.eta.size


def _assemble(sums, g, h, L, spec, context=""):
    norm = 1.0 / (h * (L - 1))
    p1 = _KSCALE * norm * sums[1]
    p0 = _KSCALE * norm * (sums[0] - sums[1])
    pd1 = _KSCALE * norm / h * sums[3]
    pd0 = _KSCALE * norm / h * (sums[2] - sums[3])
    den = p1 + p0
    bad = ~(den > spec.eps_den)
    if np.any(bad):
        raise DegenerateDensity(
            f"index density estimate <= {spec.eps_den:g} at {int(bad.sum())} pair(s)"
            f"{context}; min {float(np.min(den)):.3g}"
        )
    ratio = p1 / den
    lo, hi = spec.eps_clamp, 1.0 - spec.eps_clamp
    clamped = (ratio < lo) | (ratio > hi)
    F = np.clip(ratio, lo, hi)
    f_raw = (pd1 * p0 - p1 * pd0) / (den * den)
    # f is the derivative of the clamped CDF: zero where clamping is active
    f = np.where(clamped, 0.0, np.maximum(f_raw, 0.0))
    return p1, p0, pd1, pd0, F, f, f_raw, clamped


def compute_field(eta, g: Network, spec: KernelSpec = KernelSpec()) -> KernelProbabilityField:
    """Kernel estimates for every pair at coefficient vector ``eta``."""
    eta = np.asarray(eta, dtype=float)
    n = eta.size
    if n != g.n:
        raise ValueError(f"eta has {n} entries, network has {g.n} nodes")
    if n < 4:
        raise ValueError("need at least four nodes")
    L = n_pairs(n)
    h = spec.h(L)
    v = pair_index_values(eta)
    gv = g.pair_vector()
    sums = kernel_sums(v, v, gv, h, exclude=np.arange(L), method=spec.method)
    p1, p0, pd1, pd0, F, f, f_raw, clamped = _assemble(sums, gv, h, L, spec)
    return KernelProbabilityField(
        eta=eta,
        v=v,
        g=gv,
        h=h,
        p1=p1,
        p0=p0,
        pd1=pd1,
        pd0=pd0,
        F=F,
        f=f,
        f_raw=f_raw,
        clamped=clamped,
        clamp_count=int(clamped.sum()),
        eps_clamp=spec.eps_clamp,
    )


def compute_cdf_only(eta, g: Network, spec: KernelSpec = KernelSpec()) -> np.ndarray:
    """Clamped F for every pair; what the objective needs."""
    return compute_field(eta, g, spec).F


def frozen_sample_cdf(v_eval, v_sample, g_sample, h, spec: KernelSpec = KernelSpec()):
    """F at moved evaluation points, sample indices held fixed, own pair left out.

    ``v_eval[l]`` replaces the evaluation point of pair l only. This is the
    function the analytic derivative f differentiates.
    """
    L = v_sample.size
    sums = direct_kernel_sums(v_eval, v_sample, g_sample, h, exclude=np.arange(L))
    return _assemble(sums, g_sample, h, L, spec)[4]


def evaluate_cdf(fld: KernelProbabilityField, x, spec: KernelSpec = KernelSpec()):
    """Estimated CDF and density at arbitrary index values, using all pairs.

    Points where the index density estimate vanishes come back as NaN.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    L = fld.v.size
    sums = kernel_sums(x, fld.v, fld.g, fld.h, method=spec.method)
    norm = 1.0 / (fld.h * L)
    p1 = _KSCALE * norm * sums[1]
    p0 = _KSCALE * norm * (sums[0] - sums[1])
    pd1 = _KSCALE * norm / fld.h * sums[3]
    pd0 = _KSCALE * norm / fld.h * (sums[2] - sums[3])
    den = p1 + p0
    ok = den > spec.eps_den
    with np.errstate(divide="ignore", invalid="ignore"):
        F = np.where(ok, np.clip(p1 / den, spec.eps_clamp, 1 - spec.eps_clamp), np.nan)
        f = np.where(ok, np.maximum((pd1 * p0 - p1 * pd0) / (den * den), 0.0), np.nan)
    return F, f
