import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyadic_gmm.errors import NonpositiveVariance, SingularBread
from dyadic_gmm.gmm import jacobian_from_field
from dyadic_gmm.inference import (
    PhiSample,
    asymptotic_variance,
    estimated_variance,
    exact_omega,
    histogram,
    histogram_csv,
    omega_hat,
    phi_index,
    phi_sample,
    phi_statistic,
    residual_matrix,
    sandwich_variance,
    transformed_error,
    two_stage_exclusion,
)
from dyadic_gmm.kernel import compute_field
from dyadic_gmm.model import Logistic, Network, degrees, make_rng, pair_index_values, simulate_network
from dyadic_gmm.transform import dbmm

import oracles


def _instance(n, seed, lo=0.0, hi=1.0):
    eta = make_rng(seed).uniform(lo, hi, n)
    return eta, simulate_network(eta, Logistic(), seed, warn=False)


@pytest.mark.parametrize("n", [5, 6, 7, 8])
def test_omega_hat_matches_double_loop(n):
    eta, g = _instance(n, n)
    fld = compute_field(eta, g)
    ref = oracles.omega(g.adjacency.tolist(), oracles.field(list(eta), g.adjacency.tolist()))
    om = omega_hat(eta, g, fld)
    assert np.max(np.abs(om - np.array(ref))) < 1e-15
    assert np.array_equal(om, om.T)


def test_omega_hat_zero_for_perfect_fit():
    g = Network.from_edges(5, [(0, 1), (2, 3), (1, 4)])
    E = residual_matrix(g, g.pair_vector().astype(float))
    assert np.all(E == 0)
    assert np.all(E @ E.T == 0)


def test_omega_requires_matching_field():
    eta, g = _instance(6, 1)
    fld = compute_field(eta, g)
    with pytest.raises(ValueError):
        omega_hat(eta + 0.1, g, fld)


def test_sandwich_identity_bread():
    rng = make_rng(3)
    X = rng.normal(size=(6, 6))
    om = X @ X.T
    v = sandwich_variance(-np.eye(6), om)
    assert np.allclose(v.V, om, atol=1e-12)
    assert np.all(sandwich_variance(-np.eye(6), np.zeros((6, 6))).V == 0)


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_sandwich_matches_dense_oracle(seed):
    rng = make_rng(seed)
    M = rng.normal(size=(6, 6)) + 4 * np.eye(6)
    X = rng.normal(size=(6, 6))
    om = X @ X.T
    v = sandwich_variance(M, om)
    ref = oracles.sandwich(M, om)
    assert np.max(np.abs(v.V - ref)) < 1e-10 * max(1.0, np.abs(ref).max())
    assert np.array_equal(v.V, v.V.T)
    assert np.all(np.diag(v.V) >= 0)


def test_singular_bread_raises():
    M = np.ones((5, 5))
    with pytest.raises(SingularBread):
        sandwich_variance(M, np.eye(5))


def test_estimated_variance_on_kernel_fit():
    eta, g = _instance(8, 2)
    fld = compute_field(eta, g)
    v = estimated_variance(eta, g, fld)
    M = np.array(oracles.jacobian(8, oracles.field(list(eta), g.adjacency.tolist())))
    Om = np.array(oracles.omega(g.adjacency.tolist(), oracles.field(list(eta), g.adjacency.tolist())))
    assert np.allclose(v.V, oracles.sandwich(M, Om), atol=1e-10, rtol=1e-9)
    assert np.allclose(jacobian_from_field(fld), M, atol=1e-12)


def test_exact_omega_structure():
    n = 6
    F = make_rng(4).uniform(0.1, 0.9, 15)
    om = exact_omega(F, n)
    assert np.array_equal(om, om.T)
    # node 0's pairs are the first n-1 in pair order
    assert om[0, 0] == pytest.approx(np.sum(F[:5] * (1 - F[:5])) / 5, abs=1e-15)
    assert om[0, 1] == pytest.approx(F[0] * (1 - F[0]) / 5, abs=1e-15)
    d = exact_omega(F, n, diagonal_only=True)
    assert np.array_equal(np.diag(d), np.diag(om)) and np.count_nonzero(d - np.diag(np.diag(d))) == 0


def test_exact_omega_is_covariance_of_moments():
    # Monte Carlo check of the moment covariance at the truth
    n = 6
    eta = make_rng(5).uniform(-1, 1, n)
    err = Logistic()
    F = err.cdf(pair_index_values(eta))
    rng = make_rng(6, 3)
    links = (rng.random((200_000, F.size)) < F).astype(float)
    from dyadic_gmm.model import pair_indices

    i, j = pair_indices(n)
    D = np.zeros((links.shape[0], n))
    for node in range(n):
        D[:, node] = links[:, (i == node) | (j == node)].sum(axis=1) / (n - 1)
    emp = np.cov(D, rowvar=False) * (n - 1)
    assert np.max(np.abs(emp - exact_omega(F, n))) < 3e-3


def test_asymptotic_variance_uses_exact_density():
    eta0, g = _instance(6, 7, -1.0, 3.0)
    t0 = dbmm(eta0, degrees(g))
    err_t = transformed_error(eta0, t0, Logistic())
    v = pair_index_values(t0)
    i, j = np.triu_indices(6, 1)
    M0 = np.zeros((6, 6))
    M0[i, j] = M0[j, i] = -err_t.pdf(v) / 5
    np.fill_diagonal(M0, M0.sum(axis=1))
    om0 = exact_omega(err_t.cdf(v), 6)
    V0 = asymptotic_variance(t0, err_t, g)
    assert np.allclose(V0.V, oracles.sandwich(M0, om0), atol=1e-10)
    # the transformed law reproduces the raw link probabilities
    assert np.allclose(err_t.cdf(v), Logistic().cdf(pair_index_values(eta0)), atol=1e-14)
    diag = asymptotic_variance(t0, err_t, g, omega="diagonal")
    assert diag.V.shape == (6, 6)
    with pytest.raises(ValueError):
        asymptotic_variance(t0, err_t, g, omega="other")


def test_phi_examples():
    V = np.eye(100) * 0.99
    x = np.zeros(100)
    y = np.zeros(100)
    assert phi_statistic(x, y, V, 3) == 0.0
    x[3] = 0.1
    assert phi_statistic(x, y, V, 3) == pytest.approx(math.sqrt(99) * 0.1 / math.sqrt(0.99), rel=1e-15)
    assert phi_statistic(x, y, V, 3) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(NonpositiveVariance):
        phi_statistic(x, y, np.zeros((100, 100)), 3)


@given(a=st.floats(-5, 5), b=st.floats(-5, 5), v=st.floats(0.01, 10))
@settings(max_examples=50, deadline=None)
def test_phi_antisymmetric(a, b, v):
    V = np.eye(5) * v
    x = np.full(5, a)
    y = np.full(5, b)
    assert phi_statistic(x, y, V, 2) == -phi_statistic(y, x, V, 2)


def test_phi_index_skips_anchors():
    assert phi_index((0, 5), 10) == 1
    assert phi_index((3, 1), 10) == 0
    assert phi_index((0, 1), 10) == 2


def test_two_stage_exclusion():
    D = np.array([0.1, 2.5, -3.0, 1.0, 0.5, -0.9])
    s1, s2 = two_stage_exclusion(D)
    assert s1.tolist() == [False, True, True, False, False, False]
    assert s2.tolist() == [False, True, True, True, False, True]
    ps = phi_sample([0.1, 7.0, -1.0, 0.2, 0.3, -6.0], D)
    assert isinstance(ps, PhiSample)
    assert ps.inliers.tolist() == [0.1, -1.0, 0.2, 0.3]
    assert ps.D_inliers.tolist() == [0.1, 0.5]


def test_histogram_examples():
    edges, counts, heights = histogram([0.3], 1.0)
    assert heights.tolist() == [1.0] and counts.tolist() == [1]
    vals = np.arange(100) * 0.1 + 0.05
    edges, counts, heights = histogram(vals, 1.0)
    assert np.allclose(heights, 0.1, atol=1e-15) and edges.tolist() == list(range(10))
    with pytest.raises(ValueError):
        histogram(vals, 0)


@given(
    vals=st.lists(st.floats(-20, 20), min_size=1, max_size=200),
    width=st.sampled_from([1.0, 0.2, 0.1, 0.37]),
)
@settings(max_examples=100, deadline=None)
def test_histogram_integrates_to_one(vals, width):
    edges, counts, heights = histogram(vals, width)
    assert abs(np.sum(heights * width) - 1) < 1e-12
    assert counts.sum() == len(vals)


def test_histogram_csv_layout():
    text = histogram_csv([0.05, 0.15, 0.16], 0.1)
    lines = text.splitlines()
    assert lines[0] == "left,right,count,height"
    assert len(lines) == 3
    assert lines[2].split(",")[2] == "2"
