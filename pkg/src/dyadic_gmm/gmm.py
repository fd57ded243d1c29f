"""Degree-based moment conditions and the damped Gauss-Newton estimator.

The N moments are m_i(eta) = d_i - (1/(N-1)) sum_{j != i} F(eta, v_ij): the
observed degree minus its kernel-estimated expectation. The objective is the
identity-weighted Q = m'm.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numba
import numpy as np
from scipy import linalg

from .errors import (
    DegenerateAnchors,
    DegenerateDensity,
    DegenerateScale,
    DyadicGMMError,
    NotConverged,
    SingularNormalEquations,
)
from .kernel import KernelProbabilityField, KernelSpec, compute_field
from .model import (
    ErrorDistribution,
    FixedEffectVector,
    Network,
    Tag,
    degrees,
    make_rng,
    pair_index_values,
    pair_indices,
)
from .transform import (
    TransformMode,
    TransformSpec,
    coefficient_minimax,
    degree_anchors,
    dbmm,
    sign_fix,
    standardize,
    trim,
)


def _pair_sum_per_node(values, n):
    """sum_{j != i} values[pair(i, j)] for every node i."""
    i, j = pair_indices(n)
    out = np.bincount(i, weights=values, minlength=n)
    out += np.bincount(j, weights=values, minlength=n)
    return out


def moments_from_field(fld: KernelProbabilityField, d) -> np.ndarray:
    n = fld.n
    return np.asarray(d, dtype=float) - _pair_sum_per_node(fld.F, n) / (n - 1)


def moments(eta, g: Network, spec: KernelSpec = KernelSpec()) -> np.ndarray:
    return moments_from_field(compute_field(eta, g, spec), degrees(g))


def objective(eta, g: Network, spec: KernelSpec = KernelSpec()) -> float:
    m = moments(eta, g, spec)
    return float(m @ m)


def jacobian_from_pair_density(f, n) -> np.ndarray:
    """Derivative matrix built from a per-pair density: M_ij = -f_ij/(N-1), M_ii = sum_j M_ij."""
    i, j = pair_indices(n)
    M = np.zeros((n, n))
    M[i, j] = f
    M[j, i] = f
    M *= -1.0 / (n - 1)
    M[np.diag_indices(n)] = M.sum(axis=1)
    return M


def jacobian_from_field(fld: KernelProbabilityField) -> np.ndarray:
    return jacobian_from_pair_density(fld.f, fld.n)


def jacobian(eta, g: Network, spec: KernelSpec = KernelSpec()) -> np.ndarray:
    """Analytic derivative matrix of the moments.

    Each pair's estimated CDF is differentiated in its own index only; the
    other pairs' indices (the kernel sample points) are held fixed.
    """
    return jacobian_from_field(compute_field(eta, g, spec))


@numba.njit(cache=True, nogil=True)
def _sample_point_terms(v, gf, h, p1, p0, clamped, pi, pj, n):
    # A[l, k] = sum over sample pairs m that contain node k of dF_l / dv_m
    L = v.shape[0]
    A = np.zeros((L, n))
    inv = 1.0 / h
    c = 0.5 / math.sqrt(2.0 * math.pi) / (h * h * (L - 1))
    for l in range(L):
        if clamped[l]:
            continue
        den = p1[l] + p0[l]
        a1 = p0[l] / (den * den)
        a0 = p1[l] / (den * den)
        vl = v[l] * inv
        for m in range(L):
            if m == l:
                continue
            z = vl - v[m] * inv
            z2 = z * z
            kd = (z2 - 5.0) * z * math.exp(-0.5 * z2) * c
            if gf[m] > 0.5:
                w = -kd * a1
            else:
                w = kd * a0
            A[l, pi[m]] += w
            A[l, pj[m]] += w
    return A


def exact_jacobian(eta, g: Network, spec: KernelSpec = KernelSpec()) -> np.ndarray:
    """Full derivative of the moments, including movement of the kernel sample points.

    Rows sum to zero: the moments do not change under a common shift of all
    coefficients. O(L^2) direct loop, meant for checks and small problems.
    """
    fld = compute_field(eta, g, spec)
    n = fld.n
    i, j = pair_indices(n)
    A = _sample_point_terms(
        fld.v, fld.g.astype(float), fld.h, fld.p1, fld.p0, fld.clamped,
        i.astype(np.int64), j.astype(np.int64), n,
    )
    own = np.where(fld.clamped, 0.0, fld.f_raw)
    rows = np.arange(fld.v.size)
    A[rows, i] += own
    A[rows, j] += own
    J = np.zeros((n, n))
    np.add.at(J, i, A)
    np.add.at(J, j, A)
    return -J / (n - 1)


# --- oracle mode: the true error distribution in place of the kernel estimates


def oracle_moments(eta, g: Network, err: ErrorDistribution, d=None) -> np.ndarray:
    """Moments with F replaced by the true CDF. ``d`` overrides observed degrees."""
    eta = np.asarray(eta, dtype=float)
    n = eta.size
    F = np.asarray(err.cdf(pair_index_values(eta)), dtype=float)
    d = degrees(g) if d is None else np.asarray(d, dtype=float)
    return d - _pair_sum_per_node(F, n) / (n - 1)


def oracle_jacobian(eta, err: ErrorDistribution) -> np.ndarray:
    """Exact derivative matrix of the oracle moments, entries from the true density."""
    eta = np.asarray(eta, dtype=float)
    return jacobian_from_pair_density(np.asarray(err.pdf(pair_index_values(eta))), eta.size)


def sign_symmetry_check(eta, g: Network, spec: KernelSpec = KernelSpec()) -> tuple[float, float]:
    """Objective at eta and at -eta on the same network. Equal for any symmetric kernel."""
    eta = np.asarray(eta, dtype=float)
    return objective(eta, g, spec), objective(-eta, g, spec)


# --- solver -----------------------------------------------------------------


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 5000
    tol_step: float = 1e-8
    tol_obj: float = 1e-12
    levenberg_lambda0: float = 1e-3
    lambda_growth: float = 10.0
    lambda_max: float = 1e10
    seed: int = 0
    n_restarts: int = 3
    restart_noise: float = 0.1

    def __post_init__(self):
        for name in ("max_iters", "tol_step", "tol_obj", "levenberg_lambda0", "lambda_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.lambda_growth > 1:
            raise ValueError("lambda_growth must exceed 1")
        if self.n_restarts < 0:
            raise ValueError("n_restarts must be non-negative")


@dataclass
class SolverTrace:
    iterations: int = 0
    final_objective: float = math.nan
    objective_history: list = field(default_factory=list)
    restart_index: int = 0
    damping_events: int = 0
    rejected_steps: int = 0
    field_evaluations: int = 0
    converged: bool = False
    reason: str = ""
    last_step_norm: float = math.nan
    final_lambda: float = math.nan
    attempts: list = field(default_factory=list)

    def summary(self) -> dict:
        out = asdict(self)
        del out["objective_history"]
        return out


@dataclass
class EstimationResult:
    coefficients: FixedEffectVector
    raw: FixedEffectVector
    transform: TransformSpec
    degrees: np.ndarray
    anchors: tuple[int, int]
    trimmed: np.ndarray
    trace: SolverTrace
    field: Optional[KernelProbabilityField]
    kernel: KernelSpec
    method: str = "semiparametric"
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def converged(self):
        return self.trace.converged

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "n": int(self.coefficients.values.size),
            "coefficients": self.coefficients.values.tolist(),
            "coefficients_tag": self.coefficients.tag.value,
            "raw": self.raw.values.tolist(),
            "transform": {
                "mode": self.transform.mode.value,
                "trim_bound": self.transform.trim_bound,
                "anchor_low": int(self.anchors[0]),
                "anchor_high": int(self.anchors[1]),
                "trimmed": [int(k) for k in self.trimmed],
            },
            "trace": self.trace.summary(),
            "kernel": {
                "family": self.kernel.family,
                "bandwidth": None if self.field is None else self.field.h,
                "bandwidth_override": self.kernel.bandwidth,
                "eps_clamp": self.kernel.eps_clamp,
            },
            "field": None
            if self.field is None
            else {"clamp_count": self.field.clamp_count, "n_pairs": int(self.field.v.size)},
        }
        out.update(self.extra)
        return out


class _Normalizer:
    """In-loop normalisation of the iterate."""

    def __init__(self, mode: TransformMode, trim_bound: float):
        self.mode = mode
        self.trim_bound = trim_bound
        self.trimmed = np.zeros(0, dtype=int)

    def __call__(self, x):
        if self.mode is TransformMode.DBMM:
            return coefficient_minimax(x)
        z, mask = trim(standardize(x), self.trim_bound)
        self.trimmed = mask
        return z


def _initial_values(d):
    span = d.max() - d.min()
    return (d - d.min()) / span


def _solve_damped(A, b, lam):
    n = A.shape[0]
    try:
        c = linalg.cho_factor(A + lam * np.eye(n), check_finite=True)
        return -linalg.cho_solve(c, b)
    except (linalg.LinAlgError, ValueError):
        return None


def _rank_score(d):
    r = np.argsort(np.argsort(d, kind="stable"), kind="stable")
    return r / (d.size - 1.0)


def _start_field(start, d, g, spec, norm, trace):
    # an isolated extreme index can leave the kernel density estimate
    # negative there; blend toward the evenly spread rank score until valid
    ranks = _rank_score(d)
    for w in (0.0, 0.25, 0.5, 0.75, 1.0):
        eta = norm((1.0 - w) * start + w * ranks)
        trace.field_evaluations += 1
        try:
            return eta, compute_field(eta, g, spec)
        except DegenerateDensity:
            trace.damping_events += 1
    raise DegenerateDensity("no admissible starting value")


def _run(start, g, d, spec, cfg: SolverConfig, norm: _Normalizer):
    trace = SolverTrace()
    eta, fld = _start_field(start, d, g, spec, norm, trace)
    m = moments_from_field(fld, d)
    q = float(m @ m)
    trace.objective_history.append(q)
    lam = cfg.levenberg_lambda0
    trimmed = norm.trimmed
    for it in range(1, cfg.max_iters + 1):
        trace.iterations = it
        M = jacobian_from_field(fld)
        A = M.T @ M
        b = M.T @ m
        accepted = False
        while True:
            step = _solve_damped(A, b, lam)
            if step is None:
                lam *= cfg.lambda_growth
                if lam > cfg.lambda_max:
                    raise SingularNormalEquations(
                        "M'M singular up to the damping ceiling; insufficient degree variation?"
                    )
                continue
            step_norm = float(np.linalg.norm(step))
            trace.last_step_norm = step_norm
            if step_norm < cfg.tol_step:
                trace.converged = True
                trace.reason = "step"
                break
            try:
                cand = norm(eta + step)
                fld_c = compute_field(cand, g, spec)
                trace.field_evaluations += 1
                m_c = moments_from_field(fld_c, d)
                q_c = float(m_c @ m_c)
            except DegenerateDensity:
                trace.damping_events += 1
                q_c = math.inf
            except (DegenerateAnchors, DegenerateScale):
                q_c = math.inf
            if q_c < q:
                accepted = True
                break
            trace.rejected_steps += 1
            lam *= cfg.lambda_growth
            if lam > cfg.lambda_max:
                if np.linalg.cond(A) > 1e14:
                    raise SingularNormalEquations(
                        "no descent step at the damping ceiling and M'M is numerically singular;"
                        " insufficient degree variation?"
                    )
                trace.reason = "stalled"
                break
        if not accepted:
            break
        dq = q - q_c
        # the step that counts is the one that survives normalisation
        moved = float(np.linalg.norm(cand - eta))
        trace.last_step_norm = moved
        eta, fld, m, q = cand, fld_c, m_c, q_c
        trimmed = norm.trimmed
        trace.objective_history.append(q)
        lam = max(lam / cfg.lambda_growth, 1e-15)
        if moved < cfg.tol_step:
            trace.converged = True
            trace.reason = "step"
            break
        if dq <= cfg.tol_obj:
            trace.converged = True
            trace.reason = "objective"
            break
    else:
        trace.reason = "max_iters"
    trace.final_objective = q
    trace.final_lambda = lam
    return eta, trimmed, trace


def fit(
    g: Network,
    spec: KernelSpec = KernelSpec(),
    solver: SolverConfig = SolverConfig(),
    transform: TransformSpec = TransformSpec(),
    init=None,
    strict: bool = False,
) -> EstimationResult:
    """Semiparametric GMM estimate of the fixed effects from a network alone.

    The iterate is re-normalised after every accepted step: coefficient
    minimax in DBMM mode, standardise-then-trim in standardisation mode.
    The final answer is DBMM normalised (anchors: min/max-degree nodes), or
    sign-fixed against the degrees in standardisation mode. If the first run
    does not converge, up to ``n_restarts`` perturbed starts are tried and
    the lowest objective wins.
    """
    t0 = time.perf_counter()
    if not isinstance(transform, TransformSpec):
        transform = TransformSpec(transform)
    d = degrees(g)
    if d.min() == d.max():
        raise DegenerateAnchors("all degrees equal; nothing to estimate")
    anchors = degree_anchors(d)
    norm = _Normalizer(transform.mode, transform.trim_bound)
    start = _initial_values(d) if init is None else np.asarray(init, dtype=float)

    rng = make_rng(solver.seed, 7)
    best = None
    attempts = []
    for r in range(solver.n_restarts + 1):
        x0 = start if r == 0 else start + rng.uniform(-solver.restart_noise, solver.restart_noise, d.size)
        try:
            eta, trimmed, trace = _run(x0, g, d, spec, solver, norm)
        except (SingularNormalEquations, DegenerateDensity) as exc:
            attempts.append({"restart": r, "error": exc.code})
            if r == solver.n_restarts and best is None:
                raise
            continue
        trace.restart_index = r
        attempts.append(
            {"restart": r, "objective": trace.final_objective, "converged": trace.converged,
             "reason": trace.reason, "iterations": trace.iterations}
        )
        if best is None or trace.final_objective < best[2].final_objective:
            best = (eta, trimmed, trace)
        if trace.converged:
            break
    eta, trimmed, trace = best
    trace.attempts = attempts

    if transform.mode is TransformMode.DBMM:
        coef = dbmm(eta, d)
        trimmed = np.zeros(0, dtype=int)
    else:
        coef = sign_fix(eta, d)
    try:
        fld = compute_field(coef, g, spec)
    except DegenerateDensity:
        fld = None
    result = EstimationResult(
        coefficients=FixedEffectVector(coef, Tag.ESTIMATE_TRANSFORMED),
        raw=FixedEffectVector(eta, Tag.ESTIMATE_RAW),
        transform=transform,
        degrees=d,
        anchors=anchors,
        trimmed=np.asarray(trimmed, dtype=int),
        trace=trace,
        field=fld,
        kernel=spec,
        wall_time=time.perf_counter() - t0,
    )
    if strict and not trace.converged:
        raise NotConverged(f"solver stopped ({trace.reason}) after {trace.iterations} iterations", result)
    return result
