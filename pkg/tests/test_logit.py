import json
import math

import numpy as np
import pytest
from scipy import optimize
from scipy.special import expit
from scipy.stats import spearmanr

from dyadic_gmm.errors import MleNonexistent
from dyadic_gmm.logit import loglik, logit_fit
from dyadic_gmm.model import Logistic, Network, degrees, make_rng, simulate_network


def test_two_regular_toy():
    # complete graph on four nodes minus a perfect matching
    g = Network.from_edges(4, [(0, 2), (0, 3), (1, 2), (1, 3)])
    assert np.allclose(degrees(g), 2 / 3)
    root = optimize.brentq(lambda e: expit(2 * e) - 2 / 3, -5, 5, xtol=1e-15)
    fit = logit_fit(g)
    assert np.allclose(fit.eta.values, root, atol=1e-12)
    assert root == pytest.approx(math.log(2) / 2, abs=1e-14)
    assert round(root, 4) == 0.3466


def test_degree_matching_at_solution():
    eta = make_rng(1).uniform(-1, 1, 30)
    g = simulate_network(eta, Logistic(), 1)
    fit = logit_fit(g)
    e = fit.eta.values
    P = expit(e[:, None] + e[None, :])
    np.fill_diagonal(P, 0)
    assert np.max(np.abs(degrees(g) - P.sum(axis=1) / 29)) < 1e-8
    assert fit.converged and fit.loglik <= 0


def test_mle_nonexistent_guard():
    g = Network.from_edges(5, [(0, 1), (1, 2), (2, 3)])
    with pytest.raises(MleNonexistent):
        logit_fit(g)
    with pytest.raises(MleNonexistent):
        logit_fit(Network.complete(5))


def test_relabeling_equivariance():
    eta = make_rng(2).uniform(-1, 1, 20)
    g = simulate_network(eta, Logistic(), 2)
    perm = make_rng(3).permutation(20)
    A = g.adjacency[np.ix_(perm, perm)]
    a = logit_fit(g).eta.values
    b = logit_fit(Network(A)).eta.values
    assert np.allclose(b, a[perm], atol=1e-9)


def test_loglik_matches_direct_sum():
    eta = make_rng(4).uniform(-1, 1, 7)
    g = simulate_network(eta, Logistic(), 4)
    s = 0.0
    for i in range(7):
        for j in range(i + 1, 7):
            v = eta[i] + eta[j]
            s += g.adjacency[i, j] * v - math.log1p(math.exp(v))
    assert loglik(eta, g) == pytest.approx(s, abs=1e-12)


def test_json_marker():
    g = Network.from_edges(4, [(0, 2), (0, 3), (1, 2), (1, 3)])
    doc = json.loads(json.dumps(logit_fit(g).to_dict()))
    assert doc["method"] == "logit" and len(doc["coefficients"]) == 4


def test_well_specified_rank_recovery():
    good = []
    for seed in range(20):
        # an interior design: a node linked to everyone has no finite MLE
        eta = make_rng(seed).uniform(-1, 1, 100)
        g = simulate_network(eta, Logistic(), seed)
        try:
            est = logit_fit(g).eta.values
        except MleNonexistent:
            good.append(False)
            continue
        good.append(spearmanr(eta, est).statistic > 0.9)
    assert np.mean(good) >= 0.8
