"""Extremely randomized regression trees.

Each node draws ``k_candidates`` features among those that are not constant
in the node, one uniform threshold per feature inside the node's range, and
keeps the candidate with the largest variance reduction. No bootstrap: every
tree sees the whole sample. The builder is a numba kernel working on an
index array that it partitions in place, depth first.

Thresholds are float32 and features are compared in float32, so a model
written to disk and read back predicts bit-for-bit identically.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numba
import numpy as np

log = logging.getLogger(__name__)

LEAF = -1


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    k_candidates: Optional[int] = None  # None = ceil(sqrt(F))
    min_leaf: int = 5
    max_depth: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.k_candidates is not None and self.k_candidates < 1:
            raise ValueError("k_candidates must be >= 1")

    def resolved(self, n_features: int) -> "ForestConfig":
        k = self.k_candidates or math.ceil(math.sqrt(n_features))
        return replace(self, k_candidates=min(k, n_features))


@dataclass
class Tree:
    """Flat node arrays; ``feature == -1`` marks a leaf. Node 0 is the root."""

    feature: np.ndarray    # int32
    threshold: np.ndarray  # float32, go left when x <= threshold
    left: np.ndarray       # int32
    right: np.ndarray      # int32
    value: np.ndarray      # float64 node mean
    count: np.ndarray      # int32 samples reaching the node

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature == LEAF))

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row of ``X`` (float32, standardised)."""
        X = np.ascontiguousarray(X, dtype=np.float32)
        return _apply(self.feature, self.threshold, self.left, self.right, X)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


@numba.njit(cache=True, inline="always")
def _splitmix(state):
    z = state + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True, inline="always")
def _uniform(key, counter):
    """Uniform double in [0, 1) from a (node key, draw counter) pair."""
    bits = _splitmix(key ^ _splitmix(np.uint64(counter)))
    return np.float64(bits >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True)
def _build(XT, y, k_candidates, min_leaf, max_depth, tree_key):
    F, n = XT.shape
    cap = 2 * n + 1
    feature = np.full(cap, LEAF, dtype=np.int32)
    threshold = np.zeros(cap, dtype=np.float32)
    left = np.zeros(cap, dtype=np.int32)
    right = np.zeros(cap, dtype=np.int32)
    value = np.zeros(cap, dtype=np.float64)
    count = np.zeros(cap, dtype=np.int32)

    order = np.arange(n)
    scratch = np.empty(n, dtype=np.int64)
    perm = np.empty(F, dtype=np.int64)
    st_node = np.empty(cap, dtype=np.int64)
    st_lo = np.empty(cap, dtype=np.int64)
    st_hi = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    top = 0
    st_node[0], st_lo[0], st_hi[0], st_depth[0] = 0, 0, n, 0
    top = 1
    used = 1

    while top > 0:
        top -= 1
        node, a, b, depth = st_node[top], st_lo[top], st_hi[top], st_depth[top]
        m = b - a
        total = 0.0
        ymin = np.inf
        ymax = -np.inf
        for i in range(a, b):
            v = y[order[i]]
            total += v
            ymin = min(ymin, v)
            ymax = max(ymax, v)
        count[node] = m
        # shifted mean: exact when all targets are equal
        shifted = 0.0
        for i in range(a, b):
            shifted += y[order[i]] - ymin
        value[node] = ymin + shifted / m
        if m < 2 * min_leaf or depth >= max_depth or not ymax > ymin:
            continue

        key = _splitmix(tree_key ^ _splitmix(np.uint64(node) + np.uint64(1)))
        draw = 0
        for f in range(F):
            perm[f] = f
        best_score = -1.0
        best_f = -1
        best_t = np.float32(0.0)
        found = 0
        for i in range(F):
            # Fisher-Yates step: visit features in random order until
            # k_candidates non-constant ones have been tried
            j = i + int(_uniform(key, draw) * (F - i))
            draw += 1
            perm[i], perm[j] = perm[j], perm[i]
            f = perm[i]
            row = XT[f]
            lo = np.inf
            hi = -np.inf
            for r in range(a, b):
                v = row[order[r]]
                lo = min(lo, v)
                hi = max(hi, v)
            if not hi > lo:
                continue
            found += 1
            lo32 = np.float32(lo)
            hi32 = np.float32(hi)
            t = lo + _uniform(key, draw) * (hi - lo)
            draw += 1
            t32 = np.float32(t)
            if t32 > t:
                t32 = np.nextafter(t32, np.float32(-np.inf))
            if t32 >= hi32:
                t32 = np.nextafter(hi32, np.float32(-np.inf))
            if t32 < lo32:
                t32 = lo32
            nl = 0
            sl = 0.0
            for r in range(a, b):
                s_idx = order[r]
                if row[s_idx] <= t32:
                    nl += 1
                    sl += y[s_idx]
            nr = m - nl
            if nl >= min_leaf and nr >= min_leaf:
                diff = sl / nl - (total - sl) / nr
                score = nl * nr / m * diff * diff
                if score > best_score:
                    best_score = score
                    best_f = f
                    best_t = t32
            if found == k_candidates:
                break
        if best_f < 0:
            continue

        # stable partition of order[a:b]
        row = XT[best_f]
        nl = 0
        for r in range(a, b):
            if row[order[r]] <= best_t:
                scratch[a + nl] = order[r]
                nl += 1
        k = a + nl
        for r in range(a, b):
            if not row[order[r]] <= best_t:
                scratch[k] = order[r]
                k += 1
        for r in range(a, b):
            order[r] = scratch[r]

        feature[node] = best_f
        threshold[node] = best_t
        left[node] = used
        right[node] = used + 1
        st_node[top], st_lo[top], st_hi[top], st_depth[top] = used + 1, a + nl, b, depth + 1
        top += 1
        st_node[top], st_lo[top], st_hi[top], st_depth[top] = used, a, a + nl, depth + 1
        top += 1
        used += 2

    return (feature[:used].copy(), threshold[:used].copy(), left[:used].copy(),
            right[:used].copy(), value[:used].copy(), count[:used].copy())


@numba.njit(cache=True)
def _apply(feature, threshold, left, right, X):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while feature[node] != LEAF:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


def tree_key(seed: int, index: int) -> np.uint64:
    """Per-tree RNG key derived from the forest seed and the tree index."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, index])
    return ss.generate_state(1, dtype=np.uint64)[0]


def build_tree(X: np.ndarray, y: np.ndarray, config: ForestConfig, key) -> Tree:
    """Grow one tree on float32 features ``X`` (n, F) and float64 targets ``y``.

    All random draws of a node are keyed on ``(key, node id)``, so the
    tree only depends on the data, the config and ``key``.
    """
    XT = np.ascontiguousarray(np.asarray(X, dtype=np.float32).T)
    y = np.ascontiguousarray(y, dtype=np.float64)
    return Tree(*_build(XT, y, int(config.k_candidates), int(config.min_leaf),
                        int(config.max_depth), np.uint64(key)))


@dataclass
class ForestModel:
    trees: list
    config: ForestConfig
    meta: dict = field(default_factory=dict)
    feature_mean: np.ndarray = None
    feature_std: np.ndarray = None

    @property
    def n_features(self) -> int:
        return self.feature_mean.shape[0]

    def transform(self, X) -> np.ndarray:
        """Standardise raw descriptors with the training statistics."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return ((X - self.feature_mean) / self.feature_std).astype(np.float32)

    def predict(self, X) -> np.ndarray:
        """Mean leaf value over trees, clamped at 0."""
        Xs = self.transform(X)
        votes = np.sort(np.stack([t.predict(Xs) for t in self.trees], axis=1), axis=1)
        # sorted, shifted average: independent of tree order, exact for equal votes
        base = votes[:, :1]
        mean = base[:, 0] + (votes - base).sum(axis=1) / votes.shape[1]
        return np.maximum(mean, 0.0)

    def apply(self, X) -> np.ndarray:
        """``(n, T)`` leaf ids: the leaf signature of each row."""
        Xs = self.transform(X)
        return np.stack([t.apply(Xs) for t in self.trees], axis=1)


def train_forest(X, y, config: ForestConfig = ForestConfig(), meta: Optional[dict] = None,
                 jobs: int = 1) -> ForestModel:
    """Fit a forest on raw descriptors ``X`` (n, F) and targets ``y``.

    Rows are put into a canonical order first, so the model does not depend on
    the order in which samples were supplied.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need a non-empty (n, F) sample matrix")
    if y.shape != (X.shape[0],):
        raise ValueError("y must have one target per row")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("features and targets must be finite")
    n, F = X.shape
    config = config.resolved(F)
    if n < 2 * config.min_leaf:
        raise ValueError(f"need at least {2 * config.min_leaf} samples, got {n}")

    # column statistics over sorted values do not depend on sample order
    cols = np.sort(X, axis=0)
    mean = cols.mean(axis=0)
    std = cols.std(axis=0)
    std[std == 0] = 1.0
    if np.all(X.max(axis=0) == X.min(axis=0)):
        log.warning("all features are constant; trees will be single leaves")

    model = ForestModel([], config, dict(meta or {}), mean, std)
    Xs = model.transform(X)
    canon = np.lexsort(np.column_stack([Xs, y]).T[::-1])
    Xs, y = np.ascontiguousarray(Xs[canon]), y[canon]

    def grow(i):
        return build_tree(Xs, y, config, tree_key(config.seed, i))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            model.trees = list(pool.map(grow, range(config.n_trees)))
    else:
        model.trees = [grow(i) for i in range(config.n_trees)]
    return model

