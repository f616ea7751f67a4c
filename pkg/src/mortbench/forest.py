"""Global autoregressive Random Forest on pooled lag windows.

CART regression trees grown to purity with variance-reduction splits,
bagged over bootstrap resamples of the pooled window set. Forecasting
is recursive: each one-step prediction is appended to the lag window
for the next step, so multi-step forecasts stay inside the convex hull
of the training targets (leaf values are target means).

Trees are stored as flat node arrays and grown by a numba kernel; the
per-tree bootstrap stream is derived from (seed, tree index) so results
do not depend on construction order or thread count.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .lifetables import TimeSeries
from .training import GlobalTrainingSet

__all__ = [
    "ForestConfig",
    "RegressionTree",
    "ForestModel",
    "train_forest",
    "forecast_forest",
    "save_forest",
    "load_forest",
]

_SAVE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    window: int = 16
    max_features: float = 1.0
    min_samples_leaf: int = 1
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be at least 1")
        if not 0.0 < self.max_features <= 1.0:
            raise ValueError("max_features must lie in (0, 1]")
        if self.window < 1:
            raise ValueError("window must be at least 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be at least 1")


@njit(cache=True)
def _grow_tree(X, y, min_samples_leaf, n_feat_try, feat_seed):
    """Grow one CART regression tree; returns packed node arrays.

    Nodes: feature[i] == -1 marks a leaf with prediction value[i];
    internal nodes route x[feature] <= threshold to left. Ties between
    equally good splits resolve to the lowest feature index, then the
    lowest threshold, because candidates are scanned in that order and
    only strict improvements are accepted.
    """
    n, d = X.shape
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)

    idx = np.arange(n)
    # explicit DFS stack of (node, lo, hi) ranges into idx
    stack_node = np.empty(cap, np.int64)
    stack_lo = np.empty(cap, np.int64)
    stack_hi = np.empty(cap, np.int64)

    xs = np.empty(n)
    ys = np.empty(n)
    scratch = np.empty(n, np.int64)
    feat_order = np.arange(d)
    use_subset = n_feat_try < d
    if use_subset:
        np.random.seed(feat_seed)

    n_nodes = 1
    sp = 0
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        lo = stack_lo[sp]
        hi = stack_hi[sp]
        m = hi - lo

        total = 0.0
        total_sq = 0.0
        for i in range(lo, hi):
            t = y[idx[i]]
            total += t
            total_sq += t * t
        mean = total / m
        value[node] = mean
        node_sse = total_sq - total * total / m

        if m < 2 or m < 2 * min_samples_leaf or node_sse <= 0.0:
            continue

        if use_subset:
            # Fisher-Yates prefix of length n_feat_try
            for i in range(n_feat_try):
                j = i + np.random.randint(0, d - i)
                tmp = feat_order[i]
                feat_order[i] = feat_order[j]
                feat_order[j] = tmp
            feat_order[:n_feat_try].sort()

        best_score = total * total / m
        best_feat = -1
        best_thr = 0.0
        for fi in range(n_feat_try):
            f = feat_order[fi]
            for i in range(m):
                xs[i] = X[idx[lo + i], f]
            order = np.argsort(xs[:m])
            for i in range(m):
                ys[i] = y[idx[lo + order[i]]]

            left_sum = 0.0
            for s in range(1, m):
                left_sum += ys[s - 1]
                lo_val = xs[order[s - 1]]
                hi_val = xs[order[s]]
                if lo_val == hi_val:
                    continue
                if s < min_samples_leaf or m - s < min_samples_leaf:
                    continue
                right_sum = total - left_sum
                score = left_sum * left_sum / s + right_sum * right_sum / (m - s)
                if score > best_score:
                    thr = 0.5 * (lo_val + hi_val)
                    if thr >= hi_val:
                        thr = lo_val  # midpoint rounded up between adjacent floats
                    best_score = score
                    best_feat = f
                    best_thr = thr

        if best_feat < 0:
            continue

        # partition idx[lo:hi]: <= threshold goes left
        n_left = 0
        n_right = 0
        for i in range(lo, hi):
            if X[idx[i], best_feat] <= best_thr:
                scratch[n_left] = idx[i]
                n_left += 1
        for i in range(lo, hi):
            if X[idx[i], best_feat] > best_thr:
                scratch[n_left + n_right] = idx[i]
                n_right += 1
        for i in range(m):
            idx[lo + i] = scratch[i]

        left_child = n_nodes
        right_child = n_nodes + 1
        n_nodes += 2
        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = left_child
        right[node] = right_child

        stack_node[sp] = left_child
        stack_lo[sp] = lo
        stack_hi[sp] = lo + n_left
        sp += 1
        stack_node[sp] = right_child
        stack_lo[sp] = lo + n_left
        stack_hi[sp] = hi
        sp += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
    )


@njit(cache=True)
def _predict_tree(feature, threshold, left, right, value, X, out):
    for r in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = value[node]


@dataclass(frozen=True)
class RegressionTree:
    """Flat node-array tree; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty(X.shape[0])
        _predict_tree(
            self.feature, self.threshold, self.left, self.right, self.value, X, out
        )
        return out

    @property
    def leaf_values(self) -> np.ndarray:
        return self.value[self.feature < 0]


@dataclass(frozen=True)
class ForestModel:
    config: ForestConfig
    trees: tuple[RegressionTree, ...]
    training_fingerprint: str

    def __post_init__(self) -> None:
        if len(self.trees) != self.config.n_trees:
            raise ValueError("tree count does not match config")

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Mean over trees of leaf means, for rows of lag windows."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        per_tree = np.empty((len(self.trees), X.shape[0]))
        for i, tree in enumerate(self.trees):
            per_tree[i] = tree.predict(X)
        return per_tree.mean(axis=0)


def train_forest(data: GlobalTrainingSet, config: ForestConfig) -> ForestModel:
    """Train the bagged ensemble on the pooled window set.

    Each tree draws its own bootstrap resample (same size, with
    replacement) from a generator seeded with (seed, tree index), over
    windows in canonical order, so training is reproducible bit for bit
    and independent of window insertion order.
    """
    if len(data) == 0:
        raise ValueError("cannot train on an empty training set")
    if data.window_length != config.window:
        raise ValueError(
            f"training windows have length {data.window_length}, "
            f"config expects {config.window}"
        )
    X, y = data.matrices()
    n, d = X.shape
    n_feat_try = max(1, int(config.max_features * d))

    trees = []
    for tree_index in range(config.n_trees):
        rng = np.random.default_rng([config.seed, tree_index])
        if config.bootstrap:
            sample = rng.integers(0, n, n)
            Xb, yb = X[sample], y[sample]
        else:
            Xb, yb = X, y
        feat_seed = int(rng.integers(0, 2**31 - 1))
        nodes = _grow_tree(Xb, yb, config.min_samples_leaf, n_feat_try, feat_seed)
        trees.append(RegressionTree(*nodes))

    return ForestModel(
        config=config,
        trees=tuple(trees),
        training_fingerprint=data.fingerprint(),
    )


def forecast_forest(model: ForestModel, series: TimeSeries | np.ndarray, horizon: int) -> np.ndarray:
    """Recursive multi-step forecast from the series' last lag window."""
    values = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=float)
    w = model.config.window
    if values.shape[0] < w:
        raise ValueError(
            f"series has {values.shape[0]} observations, window needs {w}"
        )
    window = values[-w:].astype(float).copy()
    out = np.empty(horizon)
    for step in range(horizon):
        pred = float(model.predict(window[None, :])[0])
        out[step] = pred
        window[:-1] = window[1:]
        window[-1] = pred
    return out


def save_forest(model: ForestModel, path: str | Path) -> None:
    """Persist as a versioned npz archive (round-trip exact)."""
    payload = {
        "format_version": np.int64(_SAVE_FORMAT_VERSION),
        "n_trees": np.int64(model.config.n_trees),
        "window": np.int64(model.config.window),
        "max_features": np.float64(model.config.max_features),
        "min_samples_leaf": np.int64(model.config.min_samples_leaf),
        "bootstrap": np.int64(model.config.bootstrap),
        "seed": np.int64(model.config.seed),
        "training_fingerprint": np.bytes_(model.training_fingerprint.encode()),
    }
    for i, tree in enumerate(model.trees):
        payload[f"t{i}_feature"] = tree.feature
        payload[f"t{i}_threshold"] = tree.threshold
        payload[f"t{i}_left"] = tree.left
        payload[f"t{i}_right"] = tree.right
        payload[f"t{i}_value"] = tree.value
    np.savez_compressed(path, **payload)


def load_forest(path: str | Path) -> ForestModel:
    with np.load(path) as archive:
        version = int(archive["format_version"])
        if version != _SAVE_FORMAT_VERSION:
            raise ValueError(f"unsupported forest format version {version}")
        config = ForestConfig(
            n_trees=int(archive["n_trees"]),
            window=int(archive["window"]),
            max_features=float(archive["max_features"]),
            min_samples_leaf=int(archive["min_samples_leaf"]),
            bootstrap=bool(int(archive["bootstrap"])),
            seed=int(archive["seed"]),
        )
        trees = tuple(
            RegressionTree(
                feature=archive[f"t{i}_feature"],
                threshold=archive[f"t{i}_threshold"],
                left=archive[f"t{i}_left"],
                right=archive[f"t{i}_right"],
                value=archive[f"t{i}_value"],
            )
            for i in range(config.n_trees)
        )
        fingerprint = bytes(archive["training_fingerprint"]).decode()
    return ForestModel(config=config, trees=trees, training_fingerprint=fingerprint)
