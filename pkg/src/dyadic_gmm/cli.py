"""Command-line interface: simulate, estimate, mc, compare, hist."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import builtin_presets, load_preset
from .edgelist import read_edge_list, write_edge_list
from .errors import DyadicGMMError
from .gmm import SolverConfig, fit
from .harness import phi_histogram_csvs, records_csv, run_preset, slope_diagnostic, summary_json
from .inference import histogram_csv
from .kernel import KernelSpec
from .logit import logit_fit
from .model import (
    Beta,
    DgpConfig,
    Exponential,
    Logistic,
    UniformInterval,
    degrees,
    draw_fixed_effects,
    simulate_network,
)
from .transform import TransformSpec, dbmm, standardize


def _error_from_args(a):
    if a.error == "logistic":
        return Logistic(a.loc, a.scale)
    if a.error == "beta":
        return Beta(a.alpha, a.beta)
    return Exponential(a.rate)


def _write_vector_csv(path, values, name="eta"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", name])
        for k, x in enumerate(values):
            w.writerow([k, repr(float(x))])


def read_vector(path, column=None) -> np.ndarray:
    """Coefficients from a result JSON (``coefficients``) or a CSV column."""
    p = Path(path)
    if p.suffix == ".json":
        return np.asarray(json.loads(p.read_text())["coefficients"], dtype=float)
    with open(p, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header, body = rows[0], rows[1:]
    if column is None:
        column = "eta" if "eta" in header else header[-1]
    k = header.index(column)
    return np.array([float(r[k]) for r in body if r[k] != ""])


def cmd_simulate(a):
    err = _error_from_args(a)
    eta = draw_fixed_effects(DgpConfig(a.n, UniformInterval(a.eta_low, a.eta_high), err, a.seed)).values
    g = simulate_network(eta, err, a.seed)
    write_edge_list(g, a.edges)
    if a.truths:
        _write_vector_csv(a.truths, eta)
    print(f"n={g.n} links={len(g.edges())} mean_degree={degrees(g).mean():.4f}", file=sys.stderr)
    return 0


def cmd_estimate(a):
    g = read_edge_list(a.edges)
    if a.method == "logit":
        doc = logit_fit(g, max_iters=a.max_iters or 200).to_dict()
    else:
        solver = SolverConfig(max_iters=a.max_iters or 5000, seed=a.seed)
        res = fit(g, KernelSpec(bandwidth=a.bandwidth), solver, TransformSpec(a.transform))
        doc = res.to_dict()
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if a.out:
        Path(a.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_mc(a):
    target = a.preset
    if a.full_scale:
        if target != "phi_normality":
            raise SystemExit("--full-scale applies to the phi_normality preset")
        target = "phi_normality_full"
    preset = load_preset(target)
    over = {}
    if a.replications is not None:
        over["B"] = a.replications
    if a.base_seed is not None:
        over["base_seed"] = a.base_seed
    if over:
        preset = preset.with_overrides(**over)
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def progress(rec):
        if a.verbose:
            print(f"replication {rec.replication} done in {rec.wall_time:.1f}s", file=sys.stderr)

    records = run_preset(preset, workers=a.workers, progress=progress)
    (out / f"{preset.name}_records.csv").write_text(records_csv(preset, records))
    (out / f"{preset.name}_summary.json").write_text(summary_json(preset, records))
    if preset.phi:
        for w, text in phi_histogram_csvs(records).items():
            (out / f"{preset.name}_phi_hist_w{w:g}.csv").write_text(text)
    print(f"wrote {len(records)} records to {out}", file=sys.stderr)
    return 0


def cmd_compare(a):
    x = read_vector(a.truth, a.truth_column)
    y = read_vector(a.estimate, a.estimate_column)
    if x.size != y.size:
        raise SystemExit(f"length mismatch: {x.size} vs {y.size}")
    if a.normalize == "dbmm":
        if not a.edges:
            raise SystemExit("--normalize dbmm needs --edges for the degree anchors")
        d = degrees(read_edge_list(a.edges))
        x, y = dbmm(x, d), dbmm(y, d)
    elif a.normalize == "std":
        x, y = standardize(x), standardize(y)
    slope, icpt, tau = slope_diagnostic(x, y)
    doc = {"slope": slope, "intercept": icpt, "rank_corr": tau, "mse": float(np.mean((y - x) ** 2))}
    sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_hist(a):
    v = read_vector(a.values, a.column)
    text = histogram_csv(v, a.width)
    if a.out:
        Path(a.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="dyadic-gmm", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="draw fixed effects and a network")
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--eta-low", type=float, default=-1.0)
    s.add_argument("--eta-high", type=float, default=3.0)
    s.add_argument("--error", choices=["logistic", "beta", "exponential"], default="logistic")
    s.add_argument("--loc", type=float, default=0.0)
    s.add_argument("--scale", type=float, default=1.0)
    s.add_argument("--alpha", type=float, default=5.0)
    s.add_argument("--beta", type=float, default=1.0)
    s.add_argument("--rate", type=float, default=1.5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--edges", required=True, help="output edge list")
    s.add_argument("--truths", help="output CSV of the true coefficients")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="estimate fixed effects from an edge list")
    e.add_argument("edges")
    e.add_argument("--method", choices=["semi", "logit"], default="semi")
    e.add_argument("--transform", choices=["dbmm", "std"], default="dbmm")
    e.add_argument("--bandwidth", type=float, default=None)
    e.add_argument("--max-iters", type=int, default=None)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", help="output JSON (default: stdout)")
    e.set_defaults(func=cmd_estimate)

    m = sub.add_parser("mc", help="run a Monte Carlo preset")
    m.add_argument("preset", help=f"preset name ({', '.join(builtin_presets())}) or config file")
    m.add_argument("--out-dir", default=".")
    m.add_argument("--workers", type=int, default=1)
    m.add_argument("--replications", type=int, default=None, help="override B")
    m.add_argument("--base-seed", type=int, default=None)
    m.add_argument("--full-scale", action="store_true", help="full-size phi design (N=100, B=192)")
    m.add_argument("-v", "--verbose", action="store_true")
    m.set_defaults(func=cmd_mc)

    c = sub.add_parser("compare", help="slope and rank diagnostics of estimates against truths")
    c.add_argument("truth")
    c.add_argument("estimate")
    c.add_argument("--truth-column")
    c.add_argument("--estimate-column")
    c.add_argument("--normalize", choices=["none", "dbmm", "std"], default="none")
    c.add_argument("--edges", help="edge list supplying degrees for --normalize dbmm")
    c.set_defaults(func=cmd_compare)

    h = sub.add_parser("hist", help="bin a column of values")
    h.add_argument("values")
    h.add_argument("--column")
    h.add_argument("--width", type=float, default=1.0)
    h.add_argument("--out")
    h.set_defaults(func=cmd_hist)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DyadicGMMError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
