"""Randomised decision-tree ensembles (bootstrap/best-split or extra-trees style).

Trees are grown depth-first by a compiled builder using Gini impurity. Each tree
gets its own seed spawned from the ensemble seed, so the fitted ensemble does
not depend on how many worker threads built it. Each leaf keeps the class
counts of the training samples that reached it; prediction averages the leaf
class fractions over trees and takes the argmax, ties going to the lowest class.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit

_U30 = np.uint64(30)
_U27 = np.uint64(27)
_U31 = np.uint64(31)
_U11 = np.uint64(11)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, nogil=True)
def _next_u64(state):
    # splitmix64
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> _U30)) * _MIX1
    z = (z ^ (z >> _U27)) * _MIX2
    return z ^ (z >> _U31)


@njit(cache=True, nogil=True)
def _uniform(state):
    return float(_next_u64(state) >> _U11) * _INV53


@njit(cache=True, nogil=True)
def _build_tree(X, y, samples, n_classes, max_depth, max_features, min_leaf, random_split, seed):
    n_total = samples.shape[0]
    n_feat = X.shape[1]
    cap = 2 * n_total + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap, np.float64)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    leaf_class = np.zeros(cap, np.int64)
    # sparse per-leaf class counts: entries leaf_ptr[node]:leaf_end[node]
    leaf_ptr = np.zeros(cap, np.int64)
    leaf_end = np.zeros(cap, np.int64)
    ent_cls = np.empty(n_total, np.int64)
    ent_cnt = np.empty(n_total, np.int64)
    n_ent = 0

    state = np.zeros(1, np.uint64)
    state[0] = seed
    samples = samples.copy()
    vals = np.empty(n_total, np.float64)
    counts = np.zeros(n_classes, np.float64)
    cl = np.zeros(n_classes, np.float64)
    cr = np.zeros(n_classes, np.float64)
    perm = np.arange(n_feat)

    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    top = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n_total
    st_depth[0] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = st_node[top]
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        n = end - start

        counts[:] = 0.0
        for i in range(start, end):
            counts[y[samples[i]]] += 1.0
        best_c = 0
        for c in range(1, n_classes):
            if counts[c] > counts[best_c]:
                best_c = c
        leaf_class[node] = best_c
        leaf_ptr[node] = n_ent
        leaf_end[node] = n_ent
        if depth >= max_depth or n < 2 * min_leaf or counts[best_c] == n:
            for c in range(n_classes):
                if counts[c] > 0:
                    ent_cls[n_ent] = c
                    ent_cnt[n_ent] = int(counts[c])
                    n_ent += 1
            leaf_end[node] = n_ent
            continue

        total_sq = 0.0
        for c in range(n_classes):
            total_sq += counts[c] * counts[c]

        best_score = -1.0
        best_f = -1
        best_t = 0.0
        visited = 0
        i = 0
        while i < n_feat and visited < max_features:
            j = i + int(_uniform(state) * (n_feat - i))
            if j >= n_feat:
                j = n_feat - 1
            tmp = perm[i]
            perm[i] = perm[j]
            perm[j] = tmp
            f = perm[i]
            i += 1

            lo = np.inf
            hi = -np.inf
            for k in range(n):
                v = X[samples[start + k], f]
                vals[k] = v
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
            if hi <= lo:
                continue
            visited += 1

            if random_split:
                t = lo + _uniform(state) * (hi - lo)
                if t >= hi:
                    t = lo
                cl[:] = 0.0
                nl = 0
                for k in range(n):
                    if vals[k] <= t:
                        cl[y[samples[start + k]]] += 1.0
                        nl += 1
                nr = n - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                sql = 0.0
                sqr = 0.0
                for c in range(n_classes):
                    sql += cl[c] * cl[c]
                    r = counts[c] - cl[c]
                    sqr += r * r
                score = sql / nl + sqr / nr
                if score > best_score:
                    best_score = score
                    best_f = f
                    best_t = t
            else:
                order = np.argsort(vals[:n])
                cl[:] = 0.0
                for c in range(n_classes):
                    cr[c] = counts[c]
                sql = 0.0
                sqr = total_sq
                for p in range(n - 1):
                    c = y[samples[start + order[p]]]
                    sql += 2.0 * cl[c] + 1.0
                    cl[c] += 1.0
                    sqr -= 2.0 * cr[c] - 1.0
                    cr[c] -= 1.0
                    v = vals[order[p]]
                    vn = vals[order[p + 1]]
                    if vn <= v:
                        continue
                    nl = p + 1
                    nr = n - nl
                    if nl < min_leaf or nr < min_leaf:
                        continue
                    score = sql / nl + sqr / nr
                    if score > best_score:
                        best_score = score
                        best_f = f
                        t = v + (vn - v) / 2.0
                        if t >= vn:
                            t = v
                        best_t = t

        if best_f < 0:
            for c in range(n_classes):
                if counts[c] > 0:
                    ent_cls[n_ent] = c
                    ent_cnt[n_ent] = int(counts[c])
                    n_ent += 1
            leaf_end[node] = n_ent
            continue

        # partition samples[start:end] so that x <= t comes first
        a = start
        b = end - 1
        while a <= b:
            if X[samples[a], best_f] <= best_t:
                a += 1
            else:
                tmp = samples[a]
                samples[a] = samples[b]
                samples[b] = tmp
                b -= 1
        mid = a
        feature[node] = best_f
        threshold[node] = best_t
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        st_node[top] = rnode
        st_start[top] = mid
        st_end[top] = end
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = lnode
        st_start[top] = start
        st_end[top] = mid
        st_depth[top] = depth + 1
        top += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), leaf_class[:n_nodes].copy(), leaf_ptr[:n_nodes].copy(),
            leaf_end[:n_nodes].copy(), ent_cls[:n_ent].copy(), ent_cnt[:n_ent].copy())


@njit(cache=True, nogil=True)
def _apply_tree(X, feature, threshold, left, right, leaf_class, leaf_ptr, leaf_end, ent_cls, ent_cnt, proba):
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        a = leaf_ptr[node]
        b = leaf_end[node]
        total = 0.0
        for e in range(a, b):
            total += ent_cnt[e]
        for e in range(a, b):
            proba[i, ent_cls[e]] += ent_cnt[e] / total


_NODE_ARRAYS = ("feature", "threshold", "left", "right", "leaf_class", "leaf_ptr", "leaf_end")
_ENTRY_ARRAYS = ("entry_class", "entry_count")


@dataclass(frozen=True)
class EnsembleSpec:
    n_trees: int = 100
    max_depth: int = 16
    # "sqrt", "all", or an explicit count per split
    max_features: int | str = "sqrt"
    bootstrap: bool = True
    random_thresholds: bool = False
    min_samples_leaf: int = 1
    criterion: str = "gini"
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ValueError("n_trees, max_depth and min_samples_leaf must be >= 1")
        if self.criterion != "gini":
            raise ValueError("only the gini criterion is implemented")

    def features_per_split(self, n_features: int) -> int:
        if self.max_features == "sqrt":
            return max(1, int(math.sqrt(n_features)))
        if self.max_features in ("all", None):
            return n_features
        return max(1, min(int(self.max_features), n_features))


class TreeEnsemble:
    def __init__(self, spec: EnsembleSpec = EnsembleSpec()):
        self.spec = spec
        self.classes_ = None
        self.trees = []
        self.n_features = None

    def fit(self, X, y, n_jobs: int = 1) -> "TreeEnsemble":
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y)
        if len(X) == 0:
            raise ValueError("cannot fit on an empty training set")
        if not np.isfinite(X).all():
            raise ValueError("non-finite feature values")
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        y_enc = y_enc.astype(np.int64)
        self.n_features = X.shape[1]
        spec = self.spec
        n = len(X)
        mtry = spec.features_per_split(self.n_features)
        children = np.random.SeedSequence(spec.seed).spawn(spec.n_trees)

        def grow(child):
            rng = np.random.default_rng(child)
            if spec.bootstrap:
                samples = rng.integers(0, n, n).astype(np.int64)
            else:
                samples = np.arange(n, dtype=np.int64)
            tree_seed = np.uint64(rng.integers(0, 2**63, dtype=np.uint64))
            return _build_tree(X, y_enc, samples, len(self.classes_), spec.max_depth, mtry,
                               spec.min_samples_leaf, spec.random_thresholds, tree_seed)

        if n_jobs > 1:
            with ThreadPoolExecutor(n_jobs) as pool:
                self.trees = list(pool.map(grow, children))
        else:
            self.trees = [grow(c) for c in children]
        return self

    def predict_proba(self, X) -> np.ndarray:
        """Mean over trees of the leaf class fractions; trees are summed in a fixed order."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")
        proba = np.zeros((len(X), len(self.classes_)), dtype=np.float64)
        for tree in self.trees:
            _apply_tree(X, *tree, proba)
        return proba / len(self.trees)

    def predict(self, X) -> np.ndarray:
        # argmax returns the first maximum, i.e. the lowest class
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    # -- persistence ---------------------------------------------------------

    def to_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        sizes = np.array([len(t[0]) for t in self.trees], dtype=np.int64)
        out = {f"{prefix}sizes": sizes, f"{prefix}classes": np.asarray(self.classes_)}
        for k, name in enumerate(_NODE_ARRAYS):
            out[f"{prefix}{name}"] = np.concatenate([t[k] for t in self.trees])
        out[f"{prefix}entry_sizes"] = np.array([len(t[7]) for t in self.trees], dtype=np.int64)
        for k, name in enumerate(_ENTRY_ARRAYS, start=len(_NODE_ARRAYS)):
            out[f"{prefix}{name}"] = np.concatenate([t[k] for t in self.trees])
        out[f"{prefix}meta"] = np.array(json.dumps({"spec": asdict(self.spec),
                                                   "n_features": self.n_features}))
        return out

    @classmethod
    def from_arrays(cls, arrays, prefix: str) -> "TreeEnsemble":
        meta = json.loads(str(arrays[f"{prefix}meta"]))
        model = cls(EnsembleSpec(**meta["spec"]))
        model.n_features = meta["n_features"]
        model.classes_ = arrays[f"{prefix}classes"]
        cuts = np.concatenate([[0], np.cumsum(arrays[f"{prefix}sizes"])])
        ecuts = np.concatenate([[0], np.cumsum(arrays[f"{prefix}entry_sizes"])])
        nodes = [arrays[f"{prefix}{n}"] for n in _NODE_ARRAYS]
        entries = [arrays[f"{prefix}{n}"] for n in _ENTRY_ARRAYS]
        model.trees = [tuple(np.ascontiguousarray(p[a:b]) for p in nodes)
                       + tuple(np.ascontiguousarray(p[c:d]) for p in entries)
                       for a, b, c, d in zip(cuts, cuts[1:], ecuts, ecuts[1:])]
        return model
