"""L2-regularized logistic regression trained by stochastic dual coordinate ascent."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_EPS = 1e-15


@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float = 0.0
    duality_gaps: list[float] = field(default_factory=list)
    dual_values: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = float(self.bias)

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    def decision_function(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights + self.bias


def _entropy(a):
    a = np.clip(a, _EPS, 1.0 - _EPS)
    return -(a * np.log(a) + (1.0 - a) * np.log1p(-a))


def _solve_coordinate(a_old, margin, q):
    """Root of log((1-a)/a) - margin - (a - a_old) * q on (0, 1).

    The left side is strictly decreasing, so a bracketed Newton iteration
    converges from any start.
    """
    lo, hi = _EPS, 1.0 - _EPS
    a = min(max(a_old, 1e-3), 1.0 - 1e-3)
    for _ in range(60):
        f = math.log((1.0 - a) / a) - margin - (a - a_old) * q
        if abs(f) < 1e-12:
            break
        if f > 0:
            lo = a
        else:
            hi = a
        df = -1.0 / (a * (1.0 - a)) - q
        step = a - f / df
        a = step if lo < step < hi else 0.5 * (lo + hi)
    return a


def primal_objective(Xa, s, w, lam):
    z = s * (Xa @ w)
    return float(np.mean(np.logaddexp(0.0, -z)) + 0.5 * lam * w @ w)


def dual_objective(alpha, w, lam):
    return float(np.mean(_entropy(alpha)) - 0.5 * lam * w @ w)


def train_linear_sdca(X, y, regularization: float = 1e-4, epochs: int = 20,
                      seed: int = 0, tol: float = 0.0) -> LinearModel:
    """Fit logistic regression with SDCA.

    The bias is handled as an extra constant feature and is regularized with
    the weights. The per-epoch duality gap and dual objective are stored on
    the returned model; the dual never decreases, the gap need not be monotone.
    Training stops early once the gap drops below ``tol``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.shape[0] == 0:
        raise ValueError("cannot train on zero rows")
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    if regularization <= 0:
        raise ValueError("regularization must be positive")

    n = X.shape[0]
    Xa = np.hstack([X, np.ones((n, 1))])
    s = np.where(y > 0, 1.0, -1.0)
    sq_norm = np.einsum("ij,ij->i", Xa, Xa)
    lam_n = regularization * n

    alpha = np.zeros(n)
    w = np.zeros(Xa.shape[1])
    rng = np.random.default_rng(seed)
    gaps, duals = [], []
    for _ in range(epochs):
        for i in rng.permutation(n):
            xi = Xa[i]
            margin = s[i] * float(xi @ w)
            a_new = _solve_coordinate(alpha[i], margin, sq_norm[i] / lam_n)
            delta = a_new - alpha[i]
            if delta != 0.0:
                alpha[i] = a_new
                w += (delta * s[i] / lam_n) * xi
        duals.append(dual_objective(alpha, w, regularization))
        gaps.append(primal_objective(Xa, s, w, regularization) - duals[-1])
        if gaps[-1] < tol:
            break
    return LinearModel(w[:-1].copy(), float(w[-1]), gaps, duals)
