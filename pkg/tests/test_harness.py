import json
import warnings

import numpy as np
import pytest

from dyadic_gmm.config import (
    SCHEMA,
    builtin_presets,
    format_config,
    load_preset,
    parse_config,
    preset_from_mapping,
)
from dyadic_gmm.errors import DegenerateScale
from dyadic_gmm.gmm import SolverConfig, fit
from dyadic_gmm.harness import (
    error_cdf_curve,
    fitted_link_probabilities,
    predict_newcomer,
    records_csv,
    run_preset,
    run_replication,
    slope_diagnostic,
    summarize,
    summary_json,
)
from dyadic_gmm.inference import transformed_error
from dyadic_gmm.model import ClusteredDesign, Logistic, degrees, make_rng, simulate_network
from dyadic_gmm.transform import dbmm

SHIPPED_PRESETS = {"phi_normality", "phi_normality_full", "little_variation", "clustering",
                 "beta_convex", "beta_concave", "exp_concave"}


def test_slope_diagnostic_examples():
    x = np.array([0.1, 0.5, 0.2, 0.9, 0.7])
    assert slope_diagnostic(x, x) == pytest.approx((1.0, 0.0, 1.0), abs=1e-14)
    s, i, _ = slope_diagnostic(x, 2 * x + 3)
    assert s == pytest.approx(2.0, abs=1e-13) and i == pytest.approx(3.0, abs=1e-13)
    order = np.argsort(x)
    rev = np.empty_like(x)
    rev[order] = x[order][::-1]
    assert slope_diagnostic(x, rev)[2] == pytest.approx(-1.0)
    with pytest.raises(DegenerateScale):
        slope_diagnostic(np.ones(5), x)
    with pytest.raises(ValueError):
        slope_diagnostic(x[:3], x[:3])


def test_all_presets_ship_as_config():
    assert SHIPPED_PRESETS <= set(builtin_presets())
    for name in SHIPPED_PRESETS:
        p = load_preset(name)
        assert p.name == name and p.B >= 1
    assert load_preset("clustering").eta_design == ClusteredDesign(
        -1, 1, (2.5, 2.4, 2.3, 2.7, 2.6, 3, 3.5, 2.4, 3.1, 2.8)
    )
    phi = load_preset("phi_normality")
    assert (phi.n, phi.B, phi.solver.max_iters) == (50, 96, 500)
    full = load_preset("phi_normality_full")
    assert (full.n, full.B) == (100, 192)


def test_config_round_trip_and_validation(tmp_path):
    text = format_config(dict(SCHEMA))
    assert parse_config(text) == SCHEMA
    with pytest.raises(ValueError):
        parse_config("bogus = 1\n")
    with pytest.raises(ValueError):
        parse_config("n = 4\nn = 5\n")
    with pytest.raises(ValueError):
        parse_config("just words\n")
    with pytest.raises(ValueError):
        preset_from_mapping({"methods": "probit"})
    path = tmp_path / "x.cfg"
    path.write_text("name = tiny\nn = 12\nB = 2\n")
    p = load_preset(path)
    assert (p.name, p.n, p.B) == ("tiny", 12, 2)


def test_preset_hash_tracks_settings():
    p = load_preset("phi_normality")
    assert p.digest == load_preset("phi_normality").digest
    assert p.with_overrides(B=3).digest != p.digest


@pytest.fixture(scope="module")
def tiny():
    return preset_from_mapping({
        "name": "tiny", "n": "20", "B": "2", "base_seed": "7", "eta_low": "0", "eta_high": "1",
        "methods": "semiparametric, logit", "transforms": "dbmm, std", "phi": "true",
        "max_iters": "200", "n_restarts": "0",
    })


def test_replication_seed_and_isolation(tiny):
    a = run_replication(tiny, 1)
    recs = run_preset(tiny)
    assert a.seed == 8
    # replication 1 does not depend on replication 0 having run
    assert a.values == recs[1].values


def test_run_is_bit_identical(tiny):
    one = run_preset(tiny, replications=[0])
    two = run_preset(tiny, replications=[0])
    assert records_csv(tiny, one) == records_csv(tiny, two)
    assert summary_json(tiny, one) == summary_json(tiny, two)


def test_workers_do_not_change_output(tiny):
    serial = run_preset(tiny)
    parallel = run_preset(tiny, workers=2)
    assert records_csv(tiny, serial) == records_csv(tiny, parallel)


def test_output_metadata_and_summary(tiny):
    recs = run_preset(tiny)
    text = records_csv(tiny, recs)
    head = text.splitlines()[:4]
    assert head[0] == "# version=v0.1.0" and head[3] == f"# preset_hash={tiny.digest}"
    doc = json.loads(summary_json(tiny, recs))
    assert doc["metadata"]["base_seed"] == "7"
    s = doc["summary"]
    assert set(s) >= {"semi_dbmm", "semi_std", "logit", "phi"}
    assert sorted(s["phi"]["histograms"]) == ["0.1", "0.2", "1.0"]


def test_failures_recorded_not_raised():
    p = preset_from_mapping({"name": "bad", "n": "8", "B": "1", "eta_low": "5", "eta_high": "6",
                             "methods": "semiparametric, logit", "max_iters": "10", "n_restarts": "0"})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rec = run_replication(p, 0)
    # every node links to every other: no anchors, no logit MLE
    assert rec.values["semi_dbmm_status"] == "degenerate_anchors"
    assert rec.values["logit_status"] in ("mle_nonexistent", "degenerate_anchors")
    summarize(p, [rec])


@pytest.fixture(scope="module")
def logistic_fit():
    eta0 = make_rng(31).uniform(-1, 3, 100)
    g = simulate_network(eta0, Logistic(), 31, warn=False)
    return eta0, g, fit(g, solver=SolverConfig(max_iters=500, n_restarts=0))


def test_error_cdf_curve_properties(logistic_fit):
    eta0, g, res = logistic_fit
    v = res.field.v
    grid = np.linspace(v.min() - 5, v.max(), 400)
    _, F = error_cdf_curve(res, grid)
    assert np.all(np.diff(F) >= 0)
    assert F[0] == pytest.approx(1e-6)
    # unsorted input keeps its order
    perm = make_rng(1).permutation(grid.size)
    _, Fp = error_cdf_curve(res, grid[perm])
    assert np.array_equal(Fp, F[perm])


def test_error_cdf_curve_recovers_transformed_logistic(logistic_fit):
    eta0, g, res = logistic_fit
    t0 = dbmm(eta0, degrees(g))
    err_t = transformed_error(eta0, t0, Logistic())
    lo, hi = np.quantile(res.field.v, [0.1, 0.9])
    grid = np.linspace(lo, hi, 200)
    _, F = error_cdf_curve(res, grid)
    assert np.max(np.abs(F - err_t.cdf(grid))) < 0.15


def test_predict_newcomer(logistic_fit):
    _, _, res = logistic_fit
    c = res.coefficients.values
    j = 17
    p = predict_newcomer(res, c[j])
    assert np.array_equal(p, fitted_link_probabilities(res, j))
    assert np.all((p >= 1e-6) & (p <= 1 - 1e-6))
    last = None
    with warnings.catch_warnings():
        # the sweep ends extrapolate for the extreme nodes
        warnings.simplefilter("ignore", RuntimeWarning)
        for x in np.linspace(0.0, 1.0, 25):
            cur = predict_newcomer(res, x)
            if last is not None:
                assert np.all(cur >= last)
            last = cur
    with pytest.warns(RuntimeWarning):
        predict_newcomer(res, 5.0)
