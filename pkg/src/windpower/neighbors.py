"""k-nearest-neighbour regression and epsilon-SVR with a Gaussian kernel.

Both models work on features standardized with training-set statistics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .pipeline import StandardizationStats, compute_stats

DEFAULT_K_GRID = tuple(range(1, 21))
SVR_TOL = 1e-3
GRAM_MAX_ROWS = 10_000
GRAM_FLOAT64_ROWS = 4000
_CHUNK_ELEMENTS = 4_000_000


def _rmse(a, b) -> float:
    return math.sqrt(float(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


# --------------------------------------------------------------------------
# kNN


def nearest_neighbors(stored: np.ndarray, query: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` stored rows closest to each query row.

    Rows are ordered by Euclidean distance, ties broken by stored index.
    """
    stored = _as_matrix(stored)
    query = _as_matrix(query)
    n = stored.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}]")
    chunk = max(1, _CHUNK_ELEMENTS // (n * stored.shape[1]))
    out = np.empty((query.shape[0], k), dtype=np.int64)
    for lo in range(0, query.shape[0], chunk):
        q = query[lo:lo + chunk]
        d = np.sum((q[:, None, :] - stored[None, :, :]) ** 2, axis=2)
        if k < n:
            part = np.argpartition(d, k - 1, axis=1)[:, :k]
        else:
            part = np.broadcast_to(np.arange(n), d.shape).copy()
        dpart = np.take_along_axis(d, part, axis=1)
        order = np.lexsort((part, dpart), axis=1)
        idx = np.take_along_axis(part, order, axis=1)
        if k < n:
            # argpartition may pick an arbitrary member of a tie at the k-th distance
            kth = np.take_along_axis(d, idx[:, -1:], axis=1)
            tied = np.flatnonzero(np.sum(d <= kth, axis=1) > k)
            for r in tied:
                idx[r] = np.lexsort((np.arange(n), d[r]))[:k]
        out[lo:lo + chunk] = idx
    return out


@dataclass(frozen=True)
class KnnModel:
    k: int
    rows: np.ndarray
    targets: np.ndarray
    stats: StandardizationStats

    def __post_init__(self):
        if not 1 <= self.k <= len(self.targets):
            raise ValueError(f"k must lie in [1, {len(self.targets)}]")

    def predict(self, X) -> np.ndarray:
        Z = self.stats.apply(_as_matrix(X))
        idx = nearest_neighbors(self.rows, Z, self.k)
        return self.targets[idx].mean(axis=1)

    def to_dict(self) -> dict:
        return {"version": 1, "kind": "knn", "k": self.k, "rows": self.rows.tolist(),
                "targets": self.targets.tolist(), "stats": self.stats.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "KnnModel":
        return cls(d["k"], np.array(d["rows"], dtype=float), np.array(d["targets"], dtype=float),
                   StandardizationStats.from_dict(d["stats"]))


def fit_knn(X, y, k: int, stats: StandardizationStats | None = None) -> KnnModel:
    X = _as_matrix(X)
    stats = stats or compute_stats(X)
    return KnnModel(int(k), stats.apply(X), np.asarray(y, dtype=float), stats)


def predict_knn(model: KnnModel, X) -> np.ndarray:
    return model.predict(X)


def select_k(X_train, y_train, X_val, y_val, k_grid=DEFAULT_K_GRID) -> int:
    """Grid value of ``k`` with the lowest validation RMSE (ties: smallest ``k``)."""
    grid = sorted(set(int(k) for k in k_grid))
    if not grid:
        raise ValueError("empty k grid")
    X_train = _as_matrix(X_train)
    y_train = np.asarray(y_train, dtype=float)
    if grid[-1] > len(y_train):
        raise ValueError("k grid exceeds the number of training rows")
    stats = compute_stats(X_train)
    idx = nearest_neighbors(stats.apply(X_train), stats.apply(_as_matrix(X_val)), grid[-1])
    csum = np.cumsum(y_train[idx], axis=1)
    best_k, best = grid[0], np.inf
    for k in grid:
        err = _rmse(csum[:, k - 1] / k, y_val)
        if err < best:
            best_k, best = k, err
    return best_k


# --------------------------------------------------------------------------
# epsilon-SVR


@nb.njit(cache=True, nogil=True)
def _kernel_row(X, i, gamma, out):
    n, p = X.shape
    for s in range(n):
        d2 = 0.0
        for c in range(p):
            t = X[s, c] - X[i, c]
            d2 += t * t
        out[s] = math.exp(-gamma * d2)


@nb.njit(cache=True, nogil=True)
def _smo(X, y, eps, cost, gamma, tol, max_iter, gram):
    """SMO on the 2n-variable epsilon-SVR dual (maximal violating pair).

    Variables ``t < n`` are alpha with sign +1, ``t >= n`` alpha* with sign
    -1. Minimizes ``0.5 a'Qa + p'a`` with ``Q_ts = z_t z_s K``,
    ``p = (eps - y, eps + y)``, ``z'a = 0`` and ``0 <= a <= cost``.
    """
    n = X.shape[0]
    use_gram = gram.shape[0] == n
    a = np.zeros(2 * n)
    G = np.empty(2 * n)
    for t in range(n):
        G[t] = eps - y[t]
        G[t + n] = eps + y[t]
    ki = np.empty(n)
    kj = np.empty(n)
    it = 0
    gap = np.inf
    while it < max_iter:
        m = -np.inf
        M = np.inf
        i = -1
        j = -1
        for t in range(2 * n):
            z = 1.0 if t < n else -1.0
            v = -z * G[t]
            up = (z > 0 and a[t] < cost) or (z < 0 and a[t] > 0)
            low = (z > 0 and a[t] > 0) or (z < 0 and a[t] < cost)
            if up and v > m:
                m = v
                i = t
            if low and v < M:
                M = v
                j = t
        gap = m - M
        if gap < tol:
            break
        it += 1
        ii = i % n
        jj = j % n
        if use_gram:
            for s in range(n):
                ki[s] = gram[ii, s]
                kj[s] = gram[jj, s]
        else:
            _kernel_row(X, ii, gamma, ki)
            _kernel_row(X, jj, gamma, kj)
        zi = 1.0 if i < n else -1.0
        zj = 1.0 if j < n else -1.0
        curv = ki[ii] + kj[jj] - 2.0 * ki[jj]
        if curv <= 1e-12:
            curv = 1e-12
        delta = gap / curv
        lim_i = cost - a[i] if zi > 0 else a[i]
        lim_j = a[j] if zj > 0 else cost - a[j]
        if delta > lim_i:
            delta = lim_i
        if delta > lim_j:
            delta = lim_j
        a[i] += zi * delta
        a[j] -= zj * delta
        # snap to the box to keep index-set membership exact
        for t in (i, j):
            if a[t] < 1e-14 * cost:
                a[t] = 0.0
            elif a[t] > cost * (1 - 1e-14):
                a[t] = cost
        for s in range(n):
            dk = delta * (ki[s] - kj[s])
            G[s] += dk
            G[s + n] -= dk
    # bias from free variables, else the midpoint of the feasible interval
    total = 0.0
    nfree = 0
    for t in range(2 * n):
        if 0.0 < a[t] < cost:
            z = 1.0 if t < n else -1.0
            total += -z * G[t]
            nfree += 1
    if nfree > 0:
        b = total / nfree
    else:
        b = 0.5 * (m + M) if np.isfinite(m) and np.isfinite(M) else 0.0
    beta = a[:n] - a[n:]
    return beta, b, it, gap


@dataclass(frozen=True)
class SvrModel:
    coefficients: np.ndarray
    bias: float
    epsilon: float
    cost: float
    gamma: float
    support_rows: np.ndarray
    stats: StandardizationStats
    converged: bool = True
    kkt_gap: float = 0.0
    iterations: int = 0

    def decision(self, Z) -> np.ndarray:
        """Prediction for already-standardized rows."""
        Z = _as_matrix(Z)
        out = np.full(Z.shape[0], self.bias)
        if self.coefficients.size == 0:
            return out
        chunk = max(1, _CHUNK_ELEMENTS // max(1, self.support_rows.shape[0]))
        sv_sq = np.sum(self.support_rows**2, axis=1)
        for lo in range(0, Z.shape[0], chunk):
            q = Z[lo:lo + chunk]
            d2 = np.sum(q**2, axis=1)[:, None] + sv_sq[None, :] - 2.0 * q @ self.support_rows.T
            out[lo:lo + chunk] += np.exp(-self.gamma * np.maximum(d2, 0.0)) @ self.coefficients
        return out

    def predict(self, X) -> np.ndarray:
        return self.decision(self.stats.apply(_as_matrix(X)))

    def to_dict(self) -> dict:
        return {
            "version": 1, "kind": "svr", "coefficients": self.coefficients.tolist(), "bias": self.bias,
            "epsilon": self.epsilon, "cost": self.cost, "gamma": self.gamma,
            "support_rows": self.support_rows.tolist(), "stats": self.stats.to_dict(),
            "converged": self.converged, "kkt_gap": self.kkt_gap, "iterations": self.iterations,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SvrModel":
        rows = np.array(d["support_rows"], dtype=float).reshape(len(d["coefficients"]), -1)
        return cls(np.array(d["coefficients"], dtype=float), d["bias"], d["epsilon"], d["cost"], d["gamma"], rows,
                   StandardizationStats.from_dict(d["stats"]), d["converged"], d["kkt_gap"], d["iterations"])


def rbf_kernel(U, V, gamma: float) -> np.ndarray:
    U, V = _as_matrix(U), _as_matrix(V)
    d2 = np.sum((U[:, None, :] - V[None, :, :]) ** 2, axis=2)
    return np.exp(-gamma * d2)


def _gram_float32(Z, gamma: float) -> np.ndarray:
    sq = np.sum(Z**2, axis=1)
    out = np.empty((Z.shape[0], Z.shape[0]), dtype=np.float32)
    step = 1000
    for lo in range(0, Z.shape[0], step):
        d2 = sq[lo:lo + step, None] + sq[None, :] - 2.0 * Z[lo:lo + step] @ Z.T
        out[lo:lo + step] = np.exp(-gamma * np.maximum(d2, 0.0))
    return out


def svr_dual_objective(beta, K, y, epsilon: float) -> float:
    """``0.5 b'Kb - y'b + eps |b|_1``, minimized by the SVR dual solution."""
    beta = np.asarray(beta, dtype=float)
    return float(0.5 * beta @ K @ beta - y @ beta + epsilon * np.abs(beta).sum())


def default_gamma(Z, max_rows: int = 1000) -> float:
    """``1 / median squared pairwise distance`` over an evenly spaced subsample."""
    Z = _as_matrix(Z)
    if Z.shape[0] > max_rows:
        Z = Z[np.linspace(0, Z.shape[0] - 1, max_rows).astype(int)]
    d2 = np.sum((Z[:, None, :] - Z[None, :, :]) ** 2, axis=2)
    med = float(np.median(d2[np.triu_indices(Z.shape[0], 1)]))
    return 1.0 / med if med > 0 else 1.0


def default_cost(y) -> float:
    y = np.asarray(y, dtype=float)
    c = float(np.max(np.abs(y - y.mean())))
    return c if c > 0 else 1.0


def fit_svr(X, y, epsilon: float, cost: float | None = None, gamma: float | None = None,
            stats: StandardizationStats | None = None, tol: float = SVR_TOL, max_iter: int | None = None) -> SvrModel:
    """Fit epsilon-SVR with kernel ``exp(-gamma |u - v|^2)`` on standardized rows.

    The Gram matrix is precomputed for up to ``GRAM_MAX_ROWS`` rows (stored
    in float32 above ``GRAM_FLOAT64_ROWS`` rows to bound memory); larger
    problems recompute the two kernel rows each iteration. A fit stopped by
    ``max_iter`` comes back with ``converged=False``.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < 2:
        raise ValueError("SVR needs at least 2 rows")
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    stats = stats or compute_stats(X)
    Z = np.ascontiguousarray(stats.apply(X))
    cost = default_cost(y) if cost is None else float(cost)
    gamma = default_gamma(Z) if gamma is None else float(gamma)
    if cost <= 0 or gamma <= 0:
        raise ValueError("cost and gamma must be positive")
    max_iter = max(100_000, 500 * n) if max_iter is None else int(max_iter)
    if n <= GRAM_FLOAT64_ROWS:
        gram = rbf_kernel(Z, Z, gamma)
    elif n <= GRAM_MAX_ROWS:
        gram = _gram_float32(Z, gamma)
    else:
        gram = np.empty((0, 0))
    beta, b, it, gap = _smo(Z, y, float(epsilon), cost, gamma, tol, max_iter, gram)
    sv = beta != 0.0
    return SvrModel(beta[sv], float(b), float(epsilon), cost, gamma, Z[sv], stats, bool(gap < tol), float(gap), int(it))


def calibrate_svr(X_train, y_train, X_val, y_val, epsilon_grid, cost: float | None = None,
                  gamma: float | None = None) -> SvrModel:
    """Refit for each epsilon and keep the model with the lowest validation RMSE."""
    grid = list(epsilon_grid)
    if not grid:
        raise ValueError("empty epsilon grid")
    X_train = _as_matrix(X_train)
    stats = compute_stats(X_train)
    Z = stats.apply(X_train)
    gamma = default_gamma(Z) if gamma is None else gamma
    cost = default_cost(y_train) if cost is None else cost
    best, best_err = None, np.inf
    for eps in grid:
        model = fit_svr(X_train, y_train, eps, cost, gamma, stats)
        err = _rmse(model.predict(X_val), y_val)
        if err < best_err:
            best, best_err = model, err
    return best
