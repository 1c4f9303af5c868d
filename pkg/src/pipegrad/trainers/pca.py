"""PCA by power iteration with deflation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # k x d, orthonormal rows
    explained_variance: np.ndarray | None = None

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.components = np.atleast_2d(np.asarray(self.components, dtype=np.float64))
        if self.components.shape[1] != self.mean.shape[0]:
            raise ValueError(f"components are {self.components.shape}, mean has {self.mean.shape[0]} entries")

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def n_features(self) -> int:
        return self.components.shape[1]

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) @ self.components.T

    def inverse_transform(self, Z) -> np.ndarray:
        return np.asarray(Z) @ self.components + self.mean


def _power_iteration(C, v, max_iter, tol):
    lam = float(v @ C @ v)
    for _ in range(max_iter):
        w = C @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return v, 0.0
        w /= norm
        lam_new = float(w @ C @ w)
        converged = abs(lam_new - lam) <= tol * max(abs(lam_new), 1.0) and np.linalg.norm(w - v) < 1e-10
        v, lam = w, lam_new
        if converged:
            break
    return v, lam


def fit_pca(X, k: int, seed: int = 0, max_iter: int = 20000, tol: float = 1e-15) -> PcaModel:
    """Top-``k`` principal axes of the covariance of ``X``.

    Each axis is found by power iteration on the covariance deflated by the
    axes before it, then re-orthogonalized against them. Signs are fixed so
    the largest-magnitude entry of each axis is positive.
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if not 1 <= k <= min(n, d):
        raise ValueError(f"k must be in [1, {min(n, d)}], got {k}")
    mean = X.mean(axis=0)
    Xc = X - mean
    C = Xc.T @ Xc / n
    rng = np.random.default_rng(seed)
    comps, variances = [], []
    for _ in range(k):
        v = rng.standard_normal(d)
        for u in comps:
            v -= (v @ u) * u
        v /= np.linalg.norm(v)
        v, lam = _power_iteration(C, v, max_iter, tol)
        for u in comps:
            v -= (v @ u) * u
        norm = np.linalg.norm(v)
        if norm < 1e-12:
            # Deflated covariance is numerically zero: pick any unit vector orthogonal to the rest.
            basis = np.linalg.svd(np.array(comps) if comps else np.zeros((1, d)))[2]
            v = basis[len(comps)] if comps else basis[0]
            norm = np.linalg.norm(v)
        v /= norm
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        lam = float(v @ C @ v)
        comps.append(v)
        variances.append(lam)
        C = C - lam * np.outer(v, v)
    return PcaModel(mean, np.array(comps), np.array(variances))
