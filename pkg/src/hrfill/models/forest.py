"""Random-forest regression built on CART trees with variance-reduction splits.

The per-tree grow loop and the leaf-descent prediction loop are compiled with
numba. All randomness inside a kernel comes from a splitmix64 stream seeded
per tree, so results are bit-identical regardless of thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..errors import DataError
from ..features import FEATURE_NAMES, FeatureMatrix
from .base import ForestState, ModelSpec, TrainedModel, Tree, feature_names_for

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64_MASK = (1 << 64) - 1


@njit(cache=True, inline="always")
def _next_u64(state):
    state = state + _GOLDEN
    z = state
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True, inline="always")
def _rand_below(state, k):
    state, z = _next_u64(state)
    return state, np.int64(z % np.uint64(k))


def tree_seed(seed: int, index: int) -> int:
    """Derive a per-tree 64-bit seed from the forest seed and tree index."""
    z = (seed + 0x9E3779B97F4A7C15 * (index + 1)) & _U64_MASK
    for _ in range(2):
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _U64_MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _U64_MASK
        z = z ^ (z >> 31)
    return z


@njit(cache=True, nogil=True)
def _grow_tree_kernel(X, y, seed, max_depth, min_leaf, mtry, bootstrap):
    n, p = X.shape
    state = np.uint64(seed)
    state, _ = _next_u64(state)

    inbag = np.zeros(n, np.int64)
    idx = np.empty(n, np.int64)
    if bootstrap:
        for i in range(n):
            state, j = _rand_below(state, n)
            idx[i] = j
            inbag[j] += 1
    else:
        for i in range(n):
            idx[i] = i
            inbag[i] = 1

    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap, np.float64)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap, np.float64)
    gain = np.zeros(cap, np.float64)
    n_node = np.zeros(cap, np.int64)

    stack = np.empty((cap, 4), np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    sp = 1
    n_nodes = 1

    vbuf = np.empty(n, np.float64)
    pbuf = np.empty(n, np.int64)
    pool = np.empty(p, np.int64)

    while sp > 0:
        sp -= 1
        node = stack[sp, 0]
        start = stack[sp, 1]
        end = stack[sp, 2]
        depth = stack[sp, 3]
        m = end - start

        s = 0.0
        ss = 0.0
        for t in range(start, end):
            yv = y[idx[t]]
            s += yv
            ss += yv * yv
        value[node] = s / m
        n_node[node] = m
        sse = ss - s * s / m
        if m < 2 * min_leaf or sse <= 1e-12 or (max_depth >= 0 and depth >= max_depth):
            continue

        for i in range(p):
            pool[i] = i
        k = mtry if mtry < p else p
        best_gain = 1e-12
        best_feat = -1
        best_thr = 0.0
        # Inspect mtry random candidates; if none admits a valid split (all
        # constant here, or min_leaf blocks every cut), keep drawing features
        # until one does or the pool runs out, so a splittable node never
        # degenerates into a mixed leaf just because of an unlucky draw.
        for fi in range(p):
            if fi >= k and best_feat >= 0:
                break
            state, off = _rand_below(state, p - fi)
            j = fi + off
            tmp = pool[fi]
            pool[fi] = pool[j]
            pool[j] = tmp
            f = pool[fi]
            for t in range(m):
                vbuf[t] = X[idx[start + t], f]
            order = np.argsort(vbuf[:m])
            cum = 0.0
            for i in range(m - 1):
                oi = order[i]
                cum += y[idx[start + oi]]
                if i + 1 < min_leaf:
                    continue
                if m - i - 1 < min_leaf:
                    break
                vi = vbuf[oi]
                vnext = vbuf[order[i + 1]]
                if vi >= vnext:
                    continue
                nl = i + 1
                nr = m - nl
                g = cum * cum / nl + (s - cum) * (s - cum) / nr - s * s / m
                if g > best_gain:
                    best_gain = g
                    best_feat = f
                    thr = 0.5 * (vi + vnext)
                    # Midpoint can round up to vnext for adjacent floats;
                    # fall back to the left value so the cut stays between.
                    best_thr = vi if thr >= vnext else thr

        if best_feat < 0:
            continue

        nl = 0
        for t in range(start, end):
            if X[idx[t], best_feat] <= best_thr:
                pbuf[nl] = idx[t]
                nl += 1
        nr = nl
        for t in range(start, end):
            if X[idx[t], best_feat] > best_thr:
                pbuf[nr] = idx[t]
                nr += 1
        for t in range(m):
            idx[start + t] = pbuf[t]

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feature[node] = best_feat
        threshold[node] = best_thr
        gain[node] = best_gain
        left[node] = lid
        right[node] = rid
        stack[sp, 0] = rid
        stack[sp, 1] = start + nl
        stack[sp, 2] = end
        stack[sp, 3] = depth + 1
        sp += 1
        stack[sp, 0] = lid
        stack[sp, 1] = start
        stack[sp, 2] = start + nl
        stack[sp, 3] = depth + 1
        sp += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        gain[:n_nodes].copy(),
        n_node[:n_nodes].copy(),
        inbag,
    )


@njit(cache=True, nogil=True)
def _predict_tree_kernel(feature, threshold, left, right, value, X):
    n = X.shape[0]
    out = np.empty(n, np.float64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


def _grow_one(args) -> Tree:
    X, y, seed, max_depth, min_leaf, mtry, bootstrap = args
    raw = _grow_tree_kernel(X, y, seed, max_depth, min_leaf, mtry, bootstrap)
    feature, threshold, left, right, value, gain, n_node, inbag = raw
    return Tree(
        feature=feature,
        threshold=threshold,
        left=left,
        right=right,
        value=value,
        gain=gain,
        n_node=n_node,
        oob_indices=np.flatnonzero(inbag == 0).astype(np.int64),
    )


def forest_fit(
    matrix: FeatureMatrix,
    n_trees: int = 100,
    max_depth: int | None = None,
    min_leaf: int = 5,
    seed: int = 0,
    spec: ModelSpec | None = None,
    bootstrap: bool = True,
    mtry: int | None = None,
    threads: int = 1,
) -> TrainedModel:
    """Grow a forest of CART regression trees on bootstrap resamples.

    Each tree draws a bootstrap sample of size n (with replacement), and each
    node considers a fresh random subset of ceil(p/3) features, splitting
    where the summed child squared error drops the most. When none of those
    candidates admits a valid split, the search keeps drawing from the
    remaining features until one does, so ceil(p/3) is a soft minimum rather
    than a hard cap. Rows left out of a tree's bootstrap form its out-of-bag
    set, kept for permutation importance.

    Args:
        matrix: training rows and targets.
        n_trees, max_depth, min_leaf, seed: forest hyperparameters; used only
            when spec is None, otherwise the spec's values win.
        spec: optional full spec to record on the model.
        bootstrap: draw bootstrap resamples; disable to train every tree on
            the full sample (leaves no out-of-bag rows).
        mtry: override the features-per-split count (mainly for tests).
        threads: trees grown in parallel; results do not depend on this.

    Returns:
        TrainedModel with a ForestState.
    """
    if spec is None:
        spec = ModelSpec(
            kind="forest", n_trees=n_trees, max_depth=max_depth, min_leaf=min_leaf, seed=seed
        )
    X = np.ascontiguousarray(matrix.X, dtype=np.float64)
    y = np.ascontiguousarray(matrix.y, dtype=np.float64)
    if len(X) < 2 * spec.min_leaf:
        raise DataError(
            f"forest needs at least {2 * spec.min_leaf} rows "
            f"(2 x min_leaf={spec.min_leaf}), got {len(X)}"
        )
    p = X.shape[1]
    mtry_eff = mtry if mtry is not None else max(1, math.ceil(p / 3))
    depth_arg = -1 if spec.max_depth is None else spec.max_depth
    jobs = [
        (X, y, np.uint64(tree_seed(spec.seed, t)), depth_arg, spec.min_leaf, mtry_eff, bootstrap)
        for t in range(spec.n_trees)
    ]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trees = list(pool.map(_grow_one, jobs))
    else:
        trees = [_grow_one(job) for job in jobs]
    state = ForestState(trees=trees, n_features=p)
    return TrainedModel(
        spec=spec,
        state=state,
        target_kind=matrix.target_kind,
        feature_names=feature_names_for(p),
    )


def predict_forest(state: ForestState, rows: np.ndarray) -> np.ndarray:
    """Mean of the per-tree leaf values for each row."""
    rows = np.ascontiguousarray(rows, dtype=np.float64)
    total = np.zeros(rows.shape[0], dtype=np.float64)
    for tree in state.trees:
        total += _predict_tree_kernel(
            tree.feature, tree.threshold, tree.left, tree.right, tree.value, rows
        )
    return total / len(state.trees)


def importance_split_gain(state: ForestState) -> np.ndarray:
    """Summed squared-error reduction per feature, normalized to sum to 1."""
    total = np.zeros(state.n_features)
    for tree in state.trees:
        internal = tree.feature >= 0
        np.add.at(total, tree.feature[internal], tree.gain[internal])
    grand = total.sum()
    if grand > 0:
        total /= grand
    return total


def importance_permutation_oob(
    state: ForestState, matrix: FeatureMatrix, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Out-of-bag permutation importance.

    For every tree with a nonempty out-of-bag set, each feature column of the
    OOB rows is shuffled in turn and the rise in that tree's OOB mean squared
    error is recorded. Scores are averaged over trees.

    Returns:
        (display, raw): raw mean MSE increases, and the same values with
        negatives clamped to zero for presentation.

    Raises:
        ValueError: no tree has out-of-bag rows (bootstrap was disabled).
    """
    X = np.ascontiguousarray(matrix.X, dtype=np.float64)
    y = matrix.y
    p = state.n_features
    inc = np.zeros(p)
    used = 0
    for t, tree in enumerate(state.trees):
        oob = tree.oob_indices
        if len(oob) == 0:
            continue
        used += 1
        Xo = np.ascontiguousarray(X[oob])
        yo = y[oob]
        base = _predict_tree_kernel(
            tree.feature, tree.threshold, tree.left, tree.right, tree.value, Xo
        )
        base_mse = float(np.mean((base - yo) ** 2))
        for f in range(p):
            rng = np.random.default_rng([seed, t, f])
            perm = rng.permutation(len(oob))
            Xp = Xo.copy()
            Xp[:, f] = Xo[perm, f]
            pred = _predict_tree_kernel(
                tree.feature, tree.threshold, tree.left, tree.right, tree.value, Xp
            )
            inc[f] += float(np.mean((pred - yo) ** 2)) - base_mse
    if used == 0:
        raise ValueError("no out-of-bag rows; permutation importance requires bootstrap sampling")
    raw = inc / used
    return np.maximum(raw, 0.0), raw


@dataclass
class ImportanceTable:
    """Both feature-importance views for one fitted forest."""

    feature_names: tuple[str, ...]
    split_gain: np.ndarray  # normalized, sums to 1 when any split exists
    permutation: np.ndarray  # mean OOB MSE increase, clamped at 0
    permutation_raw: np.ndarray  # unclamped values

    def ranked(self, column: str = "split_gain") -> list[tuple[str, float]]:
        scores = getattr(self, column)
        order = np.argsort(-scores, kind="stable")
        return [(self.feature_names[i], float(scores[i])) for i in order]


def build_importance_table(
    state: ForestState,
    matrix: FeatureMatrix,
    feature_names: tuple[str, ...] | None = None,
    seed: int = 0,
) -> ImportanceTable:
    names = tuple(feature_names) if feature_names is not None else FEATURE_NAMES
    if len(names) != state.n_features:
        raise ValueError(
            f"need {state.n_features} feature names, got {len(names)}"
        )
    display, raw = importance_permutation_oob(state, matrix, seed=seed)
    return ImportanceTable(
        feature_names=names,
        split_gain=importance_split_gain(state),
        permutation=display,
        permutation_raw=raw,
    )
