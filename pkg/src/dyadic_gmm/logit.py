"""Fixed-effects logit (beta-model) MLE, the parametric comparator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import expit, log1p

from .errors import MleNonexistent, NotConverged
from .model import FixedEffectVector, Network, Tag, degrees, pair_index_values, pair_indices


def loglik(eta, g: Network) -> float:
    v = pair_index_values(eta)
    gv = g.pair_vector()
    # log(1 + e^v) without overflow
    return float(np.sum(gv * v - (np.maximum(v, 0) + log1p(np.exp(-np.abs(v))))))


def _grad_hess(eta, g: Network):
    n = g.n
    i, j = pair_indices(n)
    p = expit(pair_index_values(eta))
    k = degrees(g) * (n - 1)
    exp_deg = np.bincount(i, weights=p, minlength=n) + np.bincount(j, weights=p, minlength=n)
    w = p * (1 - p)
    H = np.zeros((n, n))
    H[i, j] = -w
    H[j, i] = -w
    H[np.diag_indices(n)] = H.sum(axis=1)
    return k - exp_deg, H


@dataclass
class LogitFit:
    eta: FixedEffectVector
    loglik: float
    converged: bool
    iterations: int
    gradient_norm: float
    method: str = "logit"

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "n": len(self.eta),
            "coefficients": self.eta.values.tolist(),
            "coefficients_tag": self.eta.tag.value,
            "loglik": self.loglik,
            "trace": {
                "iterations": self.iterations,
                "converged": self.converged,
                "gradient_norm": self.gradient_norm,
            },
        }


def logit_fit(g: Network, tol: float = 1e-10, max_iters: int = 200, strict: bool = True) -> LogitFit:
    """Newton's method with step halving on the beta-model log-likelihood.

    Refuses networks with an isolated or universally connected node, for
    which the MLE does not exist.
    """
    d = degrees(g)
    bad = np.flatnonzero((d <= 0) | (d >= 1))
    if bad.size:
        raise MleNonexistent(f"nodes {bad.tolist()} have degree 0 or 1; the logit MLE does not exist")
    n = g.n
    # start from the homogeneous solution
    dbar = float(d.mean())
    eta = np.full(n, 0.5 * math.log(dbar / (1 - dbar)))
    ll = loglik(eta, g)
    converged = False
    gnorm = math.inf
    it = 0
    for it in range(1, max_iters + 1):
        grad, H = _grad_hess(eta, g)
        gnorm = float(np.abs(grad).max()) / (n - 1)
        if gnorm < tol:
            converged = True
            it -= 1
            break
        step = linalg.solve(-H, grad, assume_a="pos")
        t = 1.0
        while True:
            cand = eta + t * step
            ll_c = loglik(cand, g)
            if ll_c >= ll or t < 1e-10:
                break
            t *= 0.5
        eta, ll = cand, ll_c
    else:
        grad, _ = _grad_hess(eta, g)
        gnorm = float(np.abs(grad).max()) / (n - 1)
        converged = gnorm < tol
    fit = LogitFit(
        eta=FixedEffectVector(eta, Tag.ESTIMATE_RAW),
        loglik=ll,
        converged=converged,
        iterations=it,
        gradient_norm=gnorm,
    )
    if strict and not converged:
        raise NotConverged(f"logit Newton stopped with gradient {gnorm:.3g}", fit)
    return fit
