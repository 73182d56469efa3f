"""CART regression trees: deviance splits, growth and cost-complexity pruning.

Trees are stored as flat node arrays. Node 0 is the root, a node's children
always have larger indices than the node itself, and leaves carry
``feature == -1``. Rows with ``x[feature] < threshold`` go left.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numba as nb
import numpy as np

TREE_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class TreeParams:
    min_node_size: int = 1
    max_depth: int | None = None
    prune: bool = False
    cv_folds: int = 10

    def __post_init__(self):
        if self.min_node_size < 1:
            raise ValueError("min_node_size must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0 or None")

    @property
    def depth_cap(self) -> int:
        return -1 if self.max_depth is None else self.max_depth


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    deviance: float


# --------------------------------------------------------------------------
# numba kernels


@nb.njit(cache=True, nogil=True)
def _node_split(X, y, samples, start, end, features, min_node_size):
    """Best (feature, threshold) for ``samples[start:end]``.

    Returns ``(feature, threshold, reduction, parent_deviance)``; ``feature``
    is -1 when no split leaves ``min_node_size`` rows on both sides. Scores
    are computed on targets centered at the node mean, where the deviance
    reduction of a split equals ``SL**2/nL + SR**2/nR``.
    """
    n = end - start
    mean = 0.0
    for i in range(start, end):
        mean += y[samples[i]]
    mean /= n
    ss = 0.0
    for i in range(start, end):
        d = y[samples[i]] - mean
        ss += d * d
    best_f = -1
    best_thr = np.nan
    best = -np.inf
    if n < 2 or n < 2 * min_node_size:
        return best_f, best_thr, 0.0, ss
    tol = 1e-10 * ss
    xs = np.empty(n)
    ys = np.empty(n)
    for f in features:
        for i in range(n):
            xs[i] = X[samples[start + i], f]
        order = np.argsort(xs, kind="mergesort")
        for i in range(n):
            ys[i] = y[samples[start + order[i]]] - mean
        sl = 0.0
        for i in range(n - 1):
            sl += ys[i]
            nl = i + 1
            nr = n - nl
            if nl < min_node_size:
                continue
            if nr < min_node_size:
                break
            a = xs[order[i]]
            b = xs[order[i + 1]]
            if a == b:
                continue
            sr = -sl
            score = sl * sl / nl + sr * sr / nr
            if score > best + tol:
                best = score
                best_f = f
                thr = 0.5 * (a + b)
                if thr <= a:
                    thr = b
                best_thr = thr
    return best_f, best_thr, best, ss


@nb.njit(cache=True, nogil=True)
def _grow(X, y, samples, min_node_size, max_depth, mtry, rand):
    n = samples.size
    p = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.full(cap, np.nan)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, np.int64)
    deviance = np.zeros(cap)

    samples = samples.copy()
    tmp = np.empty(n, np.int64)
    perm = np.arange(p)
    all_features = np.arange(p)
    rpos = 0

    stack_node = np.empty(cap, np.int64)
    stack_start = np.empty(cap, np.int64)
    stack_end = np.empty(cap, np.int64)
    stack_depth = np.empty(cap, np.int64)
    top = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n
    stack_depth[0] = 0
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        m = end - start
        s = 0.0
        for i in range(start, end):
            s += y[samples[i]]
        value[node] = s / m
        count[node] = m

        if mtry < p and m >= 2 * min_node_size and m >= 2 and (max_depth < 0 or depth < max_depth):
            for k in range(p):
                perm[k] = k
            for k in range(mtry):
                r = rand[rpos % rand.size]
                rpos += 1
                jj = k + int(r * (p - k))
                if jj >= p:
                    jj = p - 1
                t = perm[k]
                perm[k] = perm[jj]
                perm[jj] = t
            feats = np.sort(perm[:mtry].copy())
        else:
            feats = all_features

        f, thr, reduction, ss = _node_split(X, y, samples, start, end, feats, min_node_size)
        deviance[node] = ss
        if max_depth >= 0 and depth >= max_depth:
            continue
        if f < 0 or not reduction > 1e-10 * ss or ss <= 0.0:
            continue

        nl = 0
        nr = 0
        for i in range(start, end):
            sidx = samples[i]
            if X[sidx, f] < thr:
                samples[start + nl] = sidx
                nl += 1
            else:
                tmp[nr] = sidx
                nr += 1
        for i in range(nr):
            samples[start + nl + i] = tmp[i]

        feature[node] = f
        threshold[node] = thr
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        # right pushed first so the left subtree is numbered first
        stack_node[top] = rnode
        stack_start[top] = start + nl
        stack_end[top] = end
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = lnode
        stack_start[top] = start
        stack_end[top] = start + nl
        stack_depth[top] = depth + 1
        top += 1
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], count[:n_nodes], deviance[:n_nodes])


@nb.njit(cache=True, nogil=True)
def _apply(X, feature, threshold, left, right, collapse, alpha):
    out = np.empty(X.shape[0], np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0 and not collapse[node] <= alpha:
            if X[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@nb.njit(cache=True)
def _prune_sequence(left, right, risk, tol):
    """Weakest-link pruning.

    Returns, per node, the penalty at which it collapses to a leaf (``inf``
    for original leaves) and the increasing sequence of distinct penalties.
    """
    n = left.size
    collapse = np.full(n, np.inf)
    active_leaf = left < 0
    subtree_risk = np.zeros(n)
    n_leaves = np.zeros(n, np.int64)
    alphas = [0.0]
    while not active_leaf[0]:
        g = np.full(n, np.inf)
        for node in range(n - 1, -1, -1):
            if active_leaf[node]:
                subtree_risk[node] = risk[node]
                n_leaves[node] = 1
            else:
                l = left[node]
                r = right[node]
                subtree_risk[node] = subtree_risk[l] + subtree_risk[r]
                n_leaves[node] = n_leaves[l] + n_leaves[r]
                g[node] = (risk[node] - subtree_risk[node]) / (n_leaves[node] - 1)
        gmin = np.inf
        for node in range(n):
            if not active_leaf[node] and g[node] < gmin:
                gmin = g[node]
        if gmin < alphas[-1]:
            gmin = alphas[-1]
        # collapse top-down so descendants of a collapsed node inherit its penalty
        for node in range(n):
            if not active_leaf[node] and g[node] <= gmin + tol:
                _collapse(node, left, right, active_leaf, collapse, gmin)
        if gmin > alphas[-1]:
            alphas.append(gmin)
    return collapse, np.array(alphas)


@nb.njit(cache=True)
def _collapse(node, left, right, active_leaf, collapse, alpha):
    stack = [node]
    while len(stack) > 0:
        k = stack.pop()
        if active_leaf[k]:
            continue
        active_leaf[k] = True
        if collapse[k] > alpha:
            collapse[k] = alpha
        stack.append(left[k])
        stack.append(right[k])


# --------------------------------------------------------------------------
# public API


class RegressionTree:
    """Fitted binary regression tree with piecewise-constant predictions."""

    def __init__(self, feature, threshold, left, right, value, count, deviance=None, params=None, n_features=None):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)
        self.count = np.asarray(count, dtype=np.int64)
        self.deviance = np.zeros(self.value.size) if deviance is None else np.asarray(deviance, dtype=float)
        self.params = params or TreeParams()
        self.n_features = n_features
        self._no_collapse = np.full(self.value.size, np.inf)

    @property
    def n_nodes(self) -> int:
        return self.value.size

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def depth(self) -> int:
        d = np.zeros(self.n_nodes, np.int64)
        for node in range(self.n_nodes):
            if self.feature[node] >= 0:
                d[self.left[node]] = d[self.right[node]] = d[node] + 1
        return int(d.max())

    def apply(self, X) -> np.ndarray:
        """Index of the leaf each row falls into."""
        X = np.ascontiguousarray(X, dtype=float)
        return _apply(X, self.feature, self.threshold, self.left, self.right, self._no_collapse, 0.0)

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        leaf = self.feature < 0
        return {
            "version": TREE_SCHEMA_VERSION,
            "kind": "tree",
            "n_features": self.n_features,
            "params": asdict(self.params),
            "nodes": {
                "feature": self.feature.tolist(),
                "threshold": [None if lf else float(t) for lf, t in zip(leaf, self.threshold)],
                "left": self.left.tolist(),
                "right": self.right.tolist(),
                "value": self.value.tolist(),
                "count": self.count.tolist(),
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        if d.get("version") != TREE_SCHEMA_VERSION:
            raise ValueError(f"unsupported tree schema version {d.get('version')!r}")
        nodes = d["nodes"]
        thr = [np.nan if t is None else t for t in nodes["threshold"]]
        return cls(nodes["feature"], thr, nodes["left"], nodes["right"], nodes["value"], nodes["count"],
                   params=TreeParams(**d["params"]), n_features=d.get("n_features"))


def _as_xy(X, y):
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.ascontiguousarray(y, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y have different row counts")
    return X, y


def best_split(X, y, candidate_features=None, min_node_size: int = 1) -> Split | None:
    """Deviance-minimizing split over the candidate features.

    Thresholds are midpoints between consecutive distinct sorted values.
    Ties go to the lowest feature index, then the smallest threshold.
    Returns ``None`` when no split leaves ``min_node_size`` rows per child.
    """
    X, y = _as_xy(X, y)
    if candidate_features is None:
        feats = np.arange(X.shape[1])
    else:
        feats = np.array(sorted(set(int(j) for j in candidate_features)), dtype=np.int64)
    samples = np.arange(X.shape[0])
    if X.shape[0] == 0:
        return None
    f, thr, reduction, ss = _node_split(X, y, samples, 0, X.shape[0], feats, min_node_size)
    if f < 0:
        return None
    mask = X[:, f] < thr
    dev = float(np.sum((y[mask] - y[mask].mean()) ** 2) + np.sum((y[~mask] - y[~mask].mean()) ** 2))
    return Split(int(f), float(thr), dev)


@dataclass(frozen=True)
class FeatureSubsetSampler:
    """Uniform draw of ``mtry`` candidate features at every node.

    Randomness comes from ``rng`` as a block of uniforms consumed in node
    order; with ``mtry == p`` nothing is drawn.
    """

    mtry: int
    rng: np.random.Generator

    def uniforms(self, n_samples: int, p: int) -> np.ndarray:
        if self.mtry >= p:
            return np.zeros(1)
        return self.rng.random(2 * n_samples * self.mtry + 1)


def grow_tree(X, y, params: TreeParams | None = None, sampler: FeatureSubsetSampler | None = None,
              sample_indices=None) -> RegressionTree:
    """Grow a CART tree by recursive deviance-minimizing splits.

    Growth stops at a node when no valid split exists, the best split does
    not reduce deviance, the depth cap is reached or the node holds fewer
    than ``2 * min_node_size`` rows. ``sample_indices`` (e.g. a bootstrap
    draw, repeats allowed) selects the training rows. Pruning is applied
    when ``params.prune`` is set.
    """
    params = params or TreeParams()
    X, y = _as_xy(X, y)
    if X.shape[0] == 0:
        raise ValueError("cannot grow a tree on empty data")
    p = X.shape[1]
    samples = np.arange(X.shape[0]) if sample_indices is None else np.asarray(sample_indices, dtype=np.int64)
    if sampler is None or sampler.mtry >= p:
        mtry, rand = p, np.zeros(1)
    else:
        if not 1 <= sampler.mtry:
            raise ValueError("mtry must be >= 1")
        mtry, rand = sampler.mtry, sampler.uniforms(samples.size, p)
    arrays = _grow(X, y, samples, params.min_node_size, params.depth_cap, mtry, rand)
    tree = RegressionTree(*arrays, params=params, n_features=p)
    if params.prune:
        tree = prune_tree(tree, X[samples], y[samples], params.cv_folds)
    return tree


def _node_risk(tree: RegressionTree, X, y):
    """Per-node count, mean and deviance of ``(X, y)`` routed through ``tree``.

    Nodes no row reaches keep the tree's stored value as their mean.
    """
    n = tree.n_nodes
    shift = float(y.mean())
    yc = y - shift
    sums = np.zeros(n)
    sq = np.zeros(n)
    cnt = np.zeros(n)
    leaves = tree.apply(X)
    np.add.at(cnt, leaves, 1.0)
    np.add.at(sums, leaves, yc)
    np.add.at(sq, leaves, yc * yc)
    for node in range(n - 1, -1, -1):
        if tree.feature[node] >= 0:
            l, r = tree.left[node], tree.right[node]
            cnt[node] = cnt[l] + cnt[r]
            sums[node] = sums[l] + sums[r]
            sq[node] = sq[l] + sq[r]
    reached = cnt > 0
    mean_c = np.where(reached, sums / np.maximum(cnt, 1.0), 0.0)
    risk = np.maximum(sq - cnt * mean_c * mean_c, 0.0)
    mean = np.where(reached, mean_c + shift, tree.value)
    return cnt, mean, risk


def cost_complexity_path(tree: RegressionTree, X, y):
    """Collapse penalty per node and the sequence of weakest-link penalties."""
    X, y = _as_xy(X, y)
    _, _, risk = _node_risk(tree, X, y)
    tol = 1e-12 * max(risk[0], 1e-300)
    return _prune_sequence(tree.left, tree.right, risk, tol)


def subtree(tree: RegressionTree, collapse: np.ndarray, alpha: float, values=None) -> RegressionTree:
    """The cost-complexity subtree for penalty ``alpha``, compacted."""
    values = tree.value if values is None else values
    keep = []
    remap = {}
    stack = [0]
    while stack:
        k = stack.pop()
        remap[k] = len(keep)
        keep.append(k)
        if tree.feature[k] >= 0 and not collapse[k] <= alpha:
            stack.extend((tree.right[k], tree.left[k]))
    m = len(keep)
    feature = np.full(m, -1, np.int64)
    threshold = np.full(m, np.nan)
    left = np.full(m, -1, np.int64)
    right = np.full(m, -1, np.int64)
    for new, old in enumerate(keep):
        if tree.feature[old] >= 0 and not collapse[old] <= alpha:
            feature[new] = tree.feature[old]
            threshold[new] = tree.threshold[old]
            left[new] = remap[tree.left[old]]
            right[new] = remap[tree.right[old]]
    keep = np.array(keep)
    return RegressionTree(feature, threshold, left, right, values[keep], tree.count[keep], tree.deviance[keep],
                          params=tree.params, n_features=tree.n_features)


def prune_tree(tree: RegressionTree, X, y, cv_folds: int = 10) -> RegressionTree:
    """Cost-complexity pruning with the penalty chosen by K-fold CV.

    The weakest-link sequence ``0 = a_0 < a_1 < ... < a_m`` is computed on
    ``(X, y)``. Each fold grows an unpruned tree with the same parameters on
    the other folds and scores the geometric midpoints ``sqrt(a_k a_{k+1})``
    (and ``inf``) on its held-out rows. The penalty with the smallest total
    squared error wins, ties going to the larger penalty. Folds are
    contiguous blocks of rows.
    """
    if cv_folds < 2:
        raise ValueError("cv_folds must be at least 2")
    X, y = _as_xy(X, y)
    n = X.shape[0]
    cnt, mean, risk = _node_risk(tree, X, y)
    tol = 1e-12 * max(risk[0], 1e-300)
    collapse, alphas = _prune_sequence(tree.left, tree.right, risk, tol)
    candidates = np.append(np.sqrt(alphas[:-1] * alphas[1:]), np.inf)

    fold_params = TreeParams(tree.params.min_node_size, tree.params.max_depth, False, cv_folds)
    cv_err = np.zeros(candidates.size)
    folds = np.array_split(np.arange(n), min(cv_folds, n))
    for idx in folds:
        if idx.size == 0:
            continue
        train = np.ones(n, dtype=bool)
        train[idx] = False
        if not train.any():
            continue
        ftree = grow_tree(X[train], y[train], fold_params)
        _, fmean, frisk = _node_risk(ftree, X[train], y[train])
        fcollapse, _ = _prune_sequence(ftree.left, ftree.right, frisk, 1e-12 * max(frisk[0], 1e-300))
        Xv = np.ascontiguousarray(X[idx])
        for k, a in enumerate(candidates):
            nodes = _apply(Xv, ftree.feature, ftree.threshold, ftree.left, ftree.right, fcollapse, a)
            cv_err[k] += float(np.sum((y[idx] - fmean[nodes]) ** 2))
    best = cv_err.min()
    ties = np.flatnonzero(cv_err <= best * (1 + 1e-12) + 1e-300)
    alpha = candidates[ties[-1]]
    return subtree(tree, collapse, alpha, values=mean)
