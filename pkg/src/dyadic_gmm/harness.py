"""Seeded Monte Carlo replications, diagnostics and deterministic output files."""

from __future__ import annotations

import csv
import io
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import __version__
from .config import ExperimentPreset, transform_specs
from .errors import DegenerateScale, DyadicGMMError
from .gmm import EstimationResult, fit
from .inference import (
    PHI_BIN_WIDTHS,
    asymptotic_variance,
    estimated_variance,
    histogram,
    histogram_csv,
    phi_index,
    phi_sample,
    phi_statistic,
    transformed_error,
)
from .kernel import evaluate_cdf
from .logit import logit_fit
from .model import (
    DgpConfig,
    degrees,
    draw_fixed_effects,
    simulate_network,
)
from .transform import TransformMode, dbmm, standardize

__all__ = [
    "slope_diagnostic",
    "histogram",
    "error_cdf_curve",
    "predict_newcomer",
    "run_replication",
    "run_preset",
    "summarize",
    "records_csv",
    "summary_json",
]


def slope_diagnostic(truths_t, estimates_t):
    """OLS slope and intercept of estimates on truths, and Kendall's tau."""
    x = np.asarray(truths_t, dtype=float)
    y = np.asarray(estimates_t, dtype=float)
    if x.shape != y.shape or x.size < 4:
        raise ValueError("need equal-length vectors with at least four entries")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if not sxx > 1e-24:
        raise DegenerateScale("truths have zero variance")
    slope = float(xc @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * x.mean())
    tau = float(stats.kendalltau(x, y).statistic)
    return slope, intercept, tau


def error_cdf_curve(result: EstimationResult, grid):
    """Estimated error CDF on ``grid`` (any order), made nondecreasing by a running max.

    Grid points where the kernel density estimate vanishes take the value
    of the previous valid point (eps_clamp before the first one).
    """
    grid = np.asarray(grid, dtype=float)
    order = np.argsort(grid, kind="stable")
    F, _ = evaluate_cdf(result.field, grid[order], result.kernel)
    eps = result.kernel.eps_clamp
    prev = eps
    for k in range(F.size):
        if np.isnan(F[k]):
            F[k] = prev
        prev = F[k]
    F = np.maximum.accumulate(F)
    out = np.empty_like(F)
    out[order] = F
    return grid, out


def _reference_curve(result: EstimationResult, points=1025):
    v = result.field.v
    grid = np.linspace(v.min(), v.max(), points)
    return error_cdf_curve(result, grid)


def fitted_link_probabilities(result: EstimationResult, i: int) -> np.ndarray:
    """Monotonised estimated link probabilities of node i to every node (self entry included)."""
    coef = result.coefficients.values
    grid, F = _reference_curve(result)
    return np.interp(coef[i] + coef, grid, F)


def predict_newcomer(result: EstimationResult, eta_new_t: float) -> np.ndarray:
    """Link probabilities of a new node with transformed coefficient ``eta_new_t`` to each existing node."""
    coef = result.coefficients.values
    x = float(eta_new_t) + coef
    grid, F = _reference_curve(result)
    if x.min() < grid[0] or x.max() > grid[-1]:
        warnings.warn("newcomer index outside the observed index range; extrapolating flat", RuntimeWarning,
                      stacklevel=2)
    return np.interp(x, grid, F)


# --- replications -------------------------------------------------------------


@dataclass
class ReplicationRecord:
    replication: int
    seed: int
    values: dict
    truths: np.ndarray
    results: dict = field(default_factory=dict)
    wall_time: float = 0.0


def _semi_columns(prefix, res, truth_t):
    est = res.coefficients.values
    slope, icpt, tau = slope_diagnostic(truth_t, est)
    return {
        f"{prefix}_status": "ok" if res.converged else "not_converged",
        f"{prefix}_slope": slope,
        f"{prefix}_intercept": icpt,
        f"{prefix}_rank_corr": tau,
        f"{prefix}_mse": float(np.mean((est - truth_t) ** 2)),
        f"{prefix}_objective": res.trace.final_objective,
        f"{prefix}_iterations": res.trace.iterations,
        f"{prefix}_restart": res.trace.restart_index,
        f"{prefix}_trimmed": int(res.trimmed.size),
    }


def run_replication(preset: ExperimentPreset, r: int, keep_results: bool = False) -> ReplicationRecord:
    """One replication: draw truths, simulate, estimate, diagnose. Errors are recorded, not raised."""
    t_start = time.perf_counter()
    seed = preset.base_seed + r
    dgp = DgpConfig(preset.n, preset.eta_design, preset.error, seed)
    eta0 = draw_fixed_effects(dgp).values
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        g = simulate_network(eta0, preset.error, seed)
    d = degrees(g)
    vals = {"replication": r, "seed": seed, "mean_degree": float(d.mean()),
            "min_degree": float(d.min()), "max_degree": float(d.max())}
    rec = ReplicationRecord(r, seed, vals, eta0)
    try:
        t_dbmm = dbmm(eta0, d)
    except DyadicGMMError as exc:
        t_dbmm = exc
    t_std = standardize(eta0)

    if "semiparametric" in preset.methods:
        for tspec in transform_specs(preset):
            prefix = "semi_" + tspec.mode.value
            truth_t = t_dbmm if tspec.mode is TransformMode.DBMM else t_std
            try:
                if isinstance(truth_t, DyadicGMMError):
                    raise truth_t
                res = fit(g, preset.kernel, preset.solver, tspec)
                vals.update(_semi_columns(prefix, res, truth_t))
                if keep_results:
                    rec.results[prefix] = res
            except DyadicGMMError as exc:
                vals[f"{prefix}_status"] = exc.code
                continue
            if preset.phi and tspec.mode is TransformMode.DBMM:
                vals.update(_phi_columns(res, eta0, truth_t, g, preset))

    if "logit" in preset.methods:
        try:
            lf = logit_fit(g)
            if isinstance(t_dbmm, DyadicGMMError):
                raise t_dbmm
            est = dbmm(lf.eta.values, d)
            slope, icpt, tau = slope_diagnostic(t_dbmm, est)
            vals.update({
                "logit_status": "ok",
                "logit_slope": slope,
                "logit_intercept": icpt,
                "logit_rank_corr": tau,
                "logit_mse": float(np.mean((est - t_dbmm) ** 2)),
                "logit_iterations": lf.iterations,
            })
            if keep_results:
                rec.results["logit"] = lf
        except DyadicGMMError as exc:
            vals["logit_status"] = exc.code
    rec.wall_time = time.perf_counter() - t_start
    return rec


def _phi_columns(res, eta0, truth_t, g, preset):
    out = {}
    i = phi_index(res.anchors, preset.n)
    out["phi_index"] = i
    try:
        V = estimated_variance(res.coefficients.values, g, res.field)
        V0 = asymptotic_variance(truth_t, transformed_error(eta0, truth_t, preset.error), g)
        out["V_hat"] = float(V.V[i, i])
        out["V0"] = float(V0.V[i, i])
        out["D11"] = float(V0.V[i, i] - V.V[i, i])
        out["phi"] = phi_statistic(res.coefficients.values, truth_t, V, i)
        out["phi_status"] = "ok"
    except (DyadicGMMError, ValueError) as exc:
        out["phi_status"] = getattr(exc, "code", "error")
    return out


def _worker(args):
    preset, r = args
    return run_replication(preset, r)


def run_preset(preset: ExperimentPreset, workers: int = 1, replications=None, progress=None):
    """All replications of a preset, in replication order.

    ``workers > 1`` runs replications in separate processes; results do
    not depend on the worker count.
    """
    reps = list(range(preset.B)) if replications is None else list(replications)
    if workers <= 1:
        out = []
        for r in reps:
            out.append(run_replication(preset, r))
            if progress:
                progress(out[-1])
        return out
    with ProcessPoolExecutor(max_workers=workers) as ex:
        out = []
        for rec in ex.map(_worker, [(preset, r) for r in reps]):
            out.append(rec)
            if progress:
                progress(rec)
        return out


# --- summaries and files -------------------------------------------------------------


def _ok(records, prefix, key):
    vals = [rec.values.get(f"{prefix}_{key}") for rec in records
            if rec.values.get(f"{prefix}_status") == "ok"]
    return np.array([v for v in vals if v is not None], dtype=float)


def _median(x):
    return float(np.median(x)) if x.size else None


def summarize(preset: ExperimentPreset, records) -> dict:
    out = {"preset": preset.name, "B": len(records)}
    prefixes = []
    if "semiparametric" in preset.methods:
        prefixes += ["semi_" + t.value for t in preset.transforms]
    if "logit" in preset.methods:
        prefixes.append("logit")
    for p in prefixes:
        statuses = [rec.values.get(f"{p}_status", "missing") for rec in records]
        codes = {c: statuses.count(c) for c in sorted(set(statuses))}
        block = {
            "status_counts": codes,
            "median_slope": _median(_ok(records, p, "slope")),
            "median_rank_corr": _median(_ok(records, p, "rank_corr")),
            "median_mse": _median(_ok(records, p, "mse")),
        }
        if p.startswith("semi"):
            trims = _ok(records, p, "trimmed")
            block["median_trimmed"] = _median(trims)
        out[p] = block
    if "semi_dbmm" in out and "semi_std" in out:
        wins = []
        for rec in records:
            v = rec.values
            if v.get("semi_dbmm_status") == "ok":
                s_std = v["semi_std_slope"] if v.get("semi_std_status") == "ok" else -math.inf
                wins.append(v["semi_dbmm_slope"] > s_std)
        out["dbmm_slope_wins"] = float(np.mean(wins)) if wins else None
    if preset.phi:
        recs = [rec for rec in records if rec.values.get("phi_status") == "ok"]
        ps = phi_sample([rec.values["phi"] for rec in recs], [rec.values["D11"] for rec in recs])
        x = ps.inliers
        out["phi"] = {
            "count": int(ps.phi.size),
            "excluded": int(ps.excluded.sum()),
            "mean": float(x.mean()) if x.size else None,
            "sd": float(x.std(ddof=1)) if x.size > 1 else None,
            "ks": float(stats.kstest(x, "norm").statistic) if x.size else None,
            "D_excluded_stage1": int(ps.D_excluded_stage1.sum()),
            "D_excluded": int(ps.D_excluded.sum()),
            "median_abs_D_inliers": _median(np.abs(ps.D_inliers)),
            "histograms": {repr(w): _hist_dict(x, w) for w in PHI_BIN_WIDTHS},
        }
    return out


def _hist_dict(x, w):
    edges, counts, heights = histogram(x, w)
    return {"left": edges.tolist(), "count": counts.tolist(), "height": heights.tolist()}


def metadata_lines(preset: ExperimentPreset) -> list[str]:
    return [
        f"version=v{__version__}",
        f"preset={preset.name}",
        f"base_seed={preset.base_seed}",
        f"preset_hash={preset.digest}",
    ]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def records_csv(preset: ExperimentPreset, records) -> str:
    """One row per replication; missing cells are empty. Wall times are not written."""
    cols = []
    for rec in records:
        for k in rec.values:
            if k not in cols:
                cols.append(k)
    buf = io.StringIO()
    for line in metadata_lines(preset):
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for rec in records:
        w.writerow([_fmt(rec.values.get(c)) for c in cols])
    return buf.getvalue()


def summary_json(preset: ExperimentPreset, records) -> str:
    doc = {"metadata": dict(s.split("=", 1) for s in metadata_lines(preset)),
           "config": dict(preset.settings),
           "summary": summarize(preset, records)}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def phi_histogram_csvs(records) -> dict:
    phis = [rec.values["phi"] for rec in records if rec.values.get("phi_status") == "ok"]
    ps = phi_sample(phis, np.zeros(len(phis)))
    return {w: histogram_csv(ps.inliers, w) for w in PHI_BIN_WIDTHS}
