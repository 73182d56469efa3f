"""Bagging and random forests of unpruned CART trees.

Every tree draws from its own PCG64 stream seeded by
``numpy.random.SeedSequence([master_seed, tree_index])``. SeedSequence hashes
its entropy words, so streams are independent and a forest is fully
determined by ``(data, parameters, master_seed)`` whatever the thread count.
Within one stream the bootstrap indices are drawn first; the per-node feature
subsets come next and are skipped entirely when ``mtry == p``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .tree import TREE_SCHEMA_VERSION, FeatureSubsetSampler, RegressionTree, TreeParams, grow_tree

DEFAULT_TREES = 500
DEFAULT_MIN_NODE_SIZE = 5


def default_mtry(p: int) -> int:
    """Breiman's regression default ``floor(p / 3)`` (at least 1)."""
    return max(1, p // 3)


def tree_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(master_seed), int(index)])))


@dataclass
class Forest:
    trees: list[RegressionTree]
    mtry: int
    bootstrap: bool
    master_seed: int
    n_features: int
    oob_indices: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def b(self) -> int:
        return len(self.trees)

    def tree_predictions(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        return np.stack([t.predict(X) for t in self.trees])

    def predict(self, X) -> np.ndarray:
        """Average of the per-tree predictions, summed in tree order."""
        X = np.ascontiguousarray(X, dtype=float)
        total = np.zeros(X.shape[0])
        for t in self.trees:
            total += t.predict(X)
        return total / len(self.trees)

    def oob_predict(self, X) -> np.ndarray:
        """Out-of-bag prediction for the training rows ``X`` (NaN if never out of bag)."""
        X = np.ascontiguousarray(X, dtype=float)
        total = np.zeros(X.shape[0])
        cnt = np.zeros(X.shape[0])
        for t, oob in zip(self.trees, self.oob_indices):
            if oob.size:
                total[oob] += t.predict(X[oob])
                cnt[oob] += 1
        with np.errstate(invalid="ignore", divide="ignore"):
            return total / cnt

    def to_dict(self) -> dict:
        return {
            "version": TREE_SCHEMA_VERSION,
            "kind": "forest",
            "b": self.b,
            "mtry": self.mtry,
            "bootstrap": self.bootstrap,
            "master_seed": self.master_seed,
            "n_features": self.n_features,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Forest":
        if d.get("version") != TREE_SCHEMA_VERSION:
            raise ValueError(f"unsupported forest schema version {d.get('version')!r}")
        trees = [RegressionTree.from_dict(t) for t in d["trees"]]
        return cls(trees, d["mtry"], d["bootstrap"], d["master_seed"], d["n_features"])


def predict_forest(forest: Forest, X) -> np.ndarray:
    return forest.predict(X)


def _map(fn, items, n_jobs):
    if n_jobs is None or n_jobs <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))


def _oob(n: int, idx: np.ndarray | None) -> np.ndarray:
    if idx is None:
        return np.empty(0, dtype=np.int64)
    inbag = np.zeros(n, dtype=bool)
    inbag[idx] = True
    return np.flatnonzero(~inbag)


def fit_forest(
    X,
    y,
    b: int = DEFAULT_TREES,
    mtry: int | None = None,
    bootstrap: bool = True,
    master_seed: int = 0,
    min_node_size: int = DEFAULT_MIN_NODE_SIZE,
    max_depth: int | None = None,
    n_jobs: int = 1,
) -> Forest:
    """Random forest of ``b`` unpruned trees (``mtry = p`` gives bagging).

    Each bootstrap resample is ``n`` draws with replacement.
    """
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.ascontiguousarray(y, dtype=float)
    n, p = X.shape
    mtry = default_mtry(p) if mtry is None else int(mtry)
    if b < 1:
        raise ValueError("b must be >= 1")
    if not 1 <= mtry <= p:
        raise ValueError(f"mtry must lie in [1, {p}], got {mtry}")
    params = TreeParams(min_node_size=min_node_size, max_depth=max_depth)

    def one(i):
        rng = tree_rng(master_seed, i)
        idx = rng.integers(0, n, size=n) if bootstrap else None
        sampler = FeatureSubsetSampler(mtry, rng) if mtry < p else None
        return grow_tree(X, y, params, sampler, idx), _oob(n, idx)

    out = _map(one, range(b), n_jobs)
    return Forest([t for t, _ in out], mtry, bootstrap, int(master_seed), p, [o for _, o in out])


def fit_bagging(
    X,
    y,
    b: int = DEFAULT_TREES,
    master_seed: int = 0,
    min_node_size: int = DEFAULT_MIN_NODE_SIZE,
    max_depth: int | None = None,
    n_jobs: int = 1,
) -> Forest:
    """CART-Bagging: full-feature trees on bootstrap resamples."""
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.ascontiguousarray(y, dtype=float)
    n, p = X.shape
    params = TreeParams(min_node_size=min_node_size, max_depth=max_depth)

    def one(i):
        idx = tree_rng(master_seed, i).integers(0, n, size=n)
        return grow_tree(X, y, params, sample_indices=idx), _oob(n, idx)

    out = _map(one, range(b), n_jobs)
    return Forest([t for t, _ in out], p, True, int(master_seed), p, [o for _, o in out])
