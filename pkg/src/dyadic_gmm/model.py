"""Dyadic network formation model: data types, error families and the simulator.

A pair {i, j} links iff u_ij <= eta_i + eta_j, with u_ij drawn i.i.d. from an
error distribution F_u.  Everything here is deterministic given a seed.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence, Union

import numpy as np
from scipy import special, stats

MIN_NODES = 4
PROBABILITY_GUARD = 1e-6


class Tag(str, enum.Enum):
    TRUE_RAW = "TrueRaw"
    TRUE_TRANSFORMED = "TrueTransformed"
    ESTIMATE_RAW = "EstimateRaw"
    ESTIMATE_TRANSFORMED = "EstimateTransformed"


@dataclass(frozen=True)
class FixedEffectVector:
    """N individual fixed effects together with a provenance tag."""

    values: np.ndarray
    tag: Tag = Tag.TRUE_RAW

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size < MIN_NODES:
            raise ValueError(f"need a 1-d vector with at least {MIN_NODES} entries")
        if not np.all(np.isfinite(values)):
            raise ValueError("fixed effects must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "tag", Tag(self.tag))

    def __len__(self):
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def retag(self, values, tag):
        return FixedEffectVector(values, tag)


@lru_cache(maxsize=64)
def _pairs(n):
    i, j = np.triu_indices(n, 1)
    i.flags.writeable = False
    j.flags.writeable = False
    return i, j


def pair_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Row/column arrays of all unordered pairs in the order (0,1), (0,2), ..., (1,2), ...

    The linear pair index l runs over this order.
    """
    return _pairs(int(n))


def pair_linear_index(i: int, j: int, n: int) -> int:
    if i == j:
        raise ValueError("no self pairs")
    if i > j:
        i, j = j, i
    return i * (2 * n - i - 1) // 2 + (j - i - 1)


def pair_from_linear(l: int, n: int) -> tuple[int, int]:
    i, j = pair_indices(n)
    return int(i[l]), int(j[l])


def n_pairs(n: int) -> int:
    return n * (n - 1) // 2


@dataclass(frozen=True)
class Network:
    """Undirected, unweighted network without self-links."""

    adjacency: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.adjacency)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("adjacency must be square")
        if not np.all((a == 0) | (a == 1)):
            raise ValueError("adjacency entries must be 0 or 1")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(a) != 0):
            raise ValueError("adjacency must have a zero diagonal")
        a = a.astype(np.uint8)
        a.flags.writeable = False
        object.__setattr__(self, "adjacency", a)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def pair_vector(self) -> np.ndarray:
        """Link indicators stacked in pair order."""
        i, j = pair_indices(self.n)
        return self.adjacency[i, j]

    @classmethod
    def from_pair_vector(cls, n, g):
        a = np.zeros((n, n), dtype=np.uint8)
        i, j = pair_indices(n)
        a[i, j] = g
        return cls(a | a.T)

    @classmethod
    def from_edges(cls, n, edges):
        a = np.zeros((n, n), dtype=np.uint8)
        for i, j in edges:
            if i == j:
                raise ValueError(f"self-link at node {i}")
            a[i, j] = a[j, i] = 1
        return cls(a)

    def edges(self) -> list[tuple[int, int]]:
        i, j = pair_indices(self.n)
        on = self.adjacency[i, j] == 1
        return list(zip(i[on].tolist(), j[on].tolist()))

    @classmethod
    def complete(cls, n):
        return cls(np.ones((n, n), dtype=np.uint8) - np.eye(n, dtype=np.uint8))

    @classmethod
    def empty(cls, n):
        return cls(np.zeros((n, n), dtype=np.uint8))


# --- error distributions -------------------------------------------------


class ErrorDistribution:
    """Distribution of the pair noise u. Subclasses supply cdf/pdf/ppf."""

    def cdf(self, x):
        raise NotImplementedError

    def pdf(self, x):
        raise NotImplementedError

    def ppf(self, q):
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None):
        # inverse-CDF draws: one uniform per variate, in order
        return self.ppf(rng.random(size))

    @property
    def support(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Logistic(ErrorDistribution):
    loc: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def cdf(self, x):
        return special.expit((np.asarray(x, dtype=float) - self.loc) / self.scale)

    def pdf(self, x):
        p = self.cdf(x)
        return p * (1.0 - p) / self.scale

    def ppf(self, q):
        return self.loc + self.scale * special.logit(q)

    def describe(self):
        return {"family": "logistic", "loc": self.loc, "scale": self.scale}


@dataclass(frozen=True)
class Beta(ErrorDistribution):
    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("beta parameters must be positive")

    @property
    def _dist(self):
        return stats.beta(self.alpha, self.beta)

    def cdf(self, x):
        return self._dist.cdf(x)

    def pdf(self, x):
        return self._dist.pdf(x)

    def ppf(self, q):
        return self._dist.ppf(q)

    @property
    def support(self):
        return (0.0, 1.0)

    def describe(self):
        return {"family": "beta", "alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True)
class Exponential(ErrorDistribution):
    rate: float

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rate must be positive")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, -np.expm1(-self.rate * np.maximum(x, 0.0)), 0.0)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, self.rate * np.exp(-self.rate * np.maximum(x, 0.0)), 0.0)

    def ppf(self, q):
        return -np.log1p(-np.asarray(q, dtype=float)) / self.rate

    @property
    def support(self):
        return (0.0, math.inf)

    def describe(self):
        return {"family": "exponential", "rate": self.rate}


@dataclass(frozen=True)
class AffineTransformed(ErrorDistribution):
    """Law of a*u + 2b for u ~ base.

    Pairs with the coefficient map eta -> a*eta + b: every index becomes
    a*v + 2b, so link probabilities are unchanged.
    """

    base: ErrorDistribution
    a: float
    b: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("affine scale must be positive")

    def _u(self, x):
        return (np.asarray(x, dtype=float) - 2.0 * self.b) / self.a

    def cdf(self, x):
        return self.base.cdf(self._u(x))

    def pdf(self, x):
        return self.base.pdf(self._u(x)) / self.a

    def ppf(self, q):
        return self.a * self.base.ppf(q) + 2.0 * self.b

    @property
    def support(self):
        lo, hi = self.base.support
        return (self.a * lo + 2 * self.b, self.a * hi + 2 * self.b)

    def describe(self):
        return {"family": "affine", "a": self.a, "b": self.b, "base": self.base.describe()}


@dataclass(frozen=True)
class Reflected(ErrorDistribution):
    """Law of -u for u ~ base."""

    base: ErrorDistribution

    def cdf(self, x):
        return 1.0 - self.base.cdf(-np.asarray(x, dtype=float))

    def pdf(self, x):
        return self.base.pdf(-np.asarray(x, dtype=float))

    def ppf(self, q):
        return -self.base.ppf(1.0 - np.asarray(q, dtype=float))

    @property
    def support(self):
        lo, hi = self.base.support
        return (-hi, -lo)

    def describe(self):
        return {"family": "reflected", "base": self.base.describe()}


def error_from_dict(d: dict) -> ErrorDistribution:
    fam = d["family"]
    if fam == "logistic":
        return Logistic(float(d.get("loc", 0.0)), float(d.get("scale", 1.0)))
    if fam == "beta":
        return Beta(float(d["alpha"]), float(d["beta"]))
    if fam == "exponential":
        return Exponential(float(d["rate"]))
    if fam == "affine":
        return AffineTransformed(error_from_dict(d["base"]), float(d["a"]), float(d["b"]))
    if fam == "reflected":
        return Reflected(error_from_dict(d["base"]))
    raise ValueError(f"unknown error family {fam!r}")


# --- DGP -----------------------------------------------------------------


@dataclass(frozen=True)
class UniformInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("need lo < hi")


@dataclass(frozen=True)
class ClusteredDesign:
    """A uniform bulk followed by a fixed list of outlying values (placed last)."""

    bulk_lo: float
    bulk_hi: float
    outliers: tuple[float, ...]

    def __post_init__(self):
        if not self.bulk_lo < self.bulk_hi:
            raise ValueError("need bulk_lo < bulk_hi")
        object.__setattr__(self, "outliers", tuple(float(x) for x in self.outliers))


@dataclass(frozen=True)
class Explicit:
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(x) for x in self.values))


EtaDesign = Union[UniformInterval, ClusteredDesign, Explicit]


@dataclass(frozen=True)
class DgpConfig:
    n: int
    eta_design: EtaDesign
    error: ErrorDistribution
    seed: int = 0

    def __post_init__(self):
        if self.n < MIN_NODES:
            raise ValueError(f"need n >= {MIN_NODES}, got {self.n}")


# stream ids keep the fixed-effect draws and the link draws independent
ETA_STREAM = 0
LINK_STREAM = 1


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based Philox generator keyed by (seed, stream)."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(stream)])
    return np.random.Generator(np.random.Philox(ss))


def draw_fixed_effects(cfg: DgpConfig) -> FixedEffectVector:
    design = cfg.eta_design
    rng = make_rng(cfg.seed, ETA_STREAM)
    if isinstance(design, Explicit):
        if len(design.values) != cfg.n:
            raise ValueError(f"explicit design has {len(design.values)} values, n={cfg.n}")
        values = np.array(design.values)
    elif isinstance(design, UniformInterval):
        values = rng.uniform(design.lo, design.hi, cfg.n)
    elif isinstance(design, ClusteredDesign):
        k = len(design.outliers)
        if k >= cfg.n:
            raise ValueError("more outliers than nodes")
        bulk = rng.uniform(design.bulk_lo, design.bulk_hi, cfg.n - k)
        values = np.concatenate([bulk, design.outliers])
    else:
        raise TypeError(f"unknown design {design!r}")
    return FixedEffectVector(values, Tag.TRUE_RAW)


def pair_index_values(eta) -> np.ndarray:
    """Index v_ij = eta_i + eta_j for every pair, in pair order."""
    eta = np.asarray(eta, dtype=float)
    i, j = pair_indices(eta.size)
    return eta[i] + eta[j]


def link_probability(eta, err: ErrorDistribution, i: int, j: int) -> float:
    eta = np.asarray(eta, dtype=float)
    return float(err.cdf(eta[i] + eta[j]))


def link_probabilities(eta, err: ErrorDistribution) -> np.ndarray:
    return np.asarray(err.cdf(pair_index_values(eta)), dtype=float)


def simulate_network(eta, err: ErrorDistribution, seed: int, warn: bool = True) -> Network:
    """Draw one network: g_ij = 1 iff u_ij <= eta_i + eta_j.

    Pair noise is drawn in linear pair order from the (seed, LINK_STREAM)
    stream, one uniform per pair.
    """
    eta = np.asarray(eta, dtype=float)
    if not np.all(np.isfinite(eta)):
        raise ValueError("fixed effects must be finite")
    v = pair_index_values(eta)
    if warn:
        p = np.asarray(err.cdf(v))
        if np.any(p < PROBABILITY_GUARD) or np.any(p > 1 - PROBABILITY_GUARD):
            warnings.warn(
                "some exact link probabilities are within 1e-6 of 0 or 1",
                RuntimeWarning,
                stacklevel=2,
            )
    u = err.sample(make_rng(seed, LINK_STREAM), v.size)
    return Network.from_pair_vector(eta.size, (u <= v).astype(np.uint8))


def degrees(g: Network) -> np.ndarray:
    a = g.adjacency
    return a.sum(axis=1, dtype=float) / (g.n - 1)


def expected_degrees(eta, err: ErrorDistribution) -> np.ndarray:
    """(1/(N-1)) sum_{j != i} F_u(eta_i + eta_j) for every i."""
    eta = np.asarray(eta, dtype=float)
    n = eta.size
    p = np.asarray(err.cdf(eta[:, None] + eta[None, :]), dtype=float)
    np.fill_diagonal(p, 0.0)
    return p.sum(axis=1) / (n - 1)


def oracle_expected_degree(eta, err: ErrorDistribution, i: int) -> float:
    return float(expected_degrees(eta, err)[i])


def as_values(eta: Union[FixedEffectVector, Sequence[float], np.ndarray]) -> np.ndarray:
    return np.asarray(eta, dtype=float)
