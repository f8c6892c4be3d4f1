"""Bagged regression trees used as the fine tuner.

Trees are greedy CART on squared error with midpoint thresholds. Rows with
``x[feature] <= threshold`` go left. Split ties go to the lowest feature index,
then the lowest threshold. Bagging draws one bootstrap sample per tree from
a stream seeded by (seed, tree index), so the first n trees of a larger
ensemble are exactly the n-tree ensemble with the same seed.
"""

from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .prep import FINE_TUNER_COLUMNS

N_FEATURES = len(FINE_TUNER_COLUMNS)
DEFAULT_SEARCH_SPACE = {
    "n_trees": (5, 10, 20),
    "max_depth": (4, 8, 16, None),
    "min_leaf_size": (1, 5, 20),
}
# Two candidate splits whose child SSE differs by less than this fraction of
# the parent SSE are treated as equal (then the tie rule decides).
_TIE_RTOL = 1e-9


@dataclass(frozen=True)
class RegressionTree:
    """Flat node arrays in pre-order; ``left == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    max_depth: Optional[int] = None
    min_leaf_size: int = 1

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.left[i] >= 0:
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def predict(self, rows: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        node = np.zeros(rows.shape[0], dtype=np.int64)
        r = np.arange(rows.shape[0])
        while True:
            internal = self.left[node] >= 0
            if not internal.any():
                break
            f = self.feature[node]
            go_left = rows[r, np.where(internal, f, 0)] <= self.threshold[node]
            node = np.where(internal, np.where(go_left, self.left[node], self.right[node]), node)
        return self.value[node]


def best_split(x: np.ndarray, y: np.ndarray, sorted_idx: np.ndarray, min_leaf_size: int = 1):
    """Best (feature, threshold, child_sse) over all midpoint splits, or None.

    Row f of ``sorted_idx`` (F, n) lists the node's rows ordered by feature f.
    Among splits within the tie tolerance of the best, the lowest feature
    index wins, then the lowest threshold.
    """
    n_feat, n = sorted_idx.shape
    if n < 2 * min_leaf_size:
        return None
    ys = y[sorted_idx[0]]
    total = ys.sum()
    sumsq = float(np.dot(ys, ys))
    parent_sse = sumsq - total * total / n
    tol = _TIE_RTOL * max(parent_sse, 0.0)
    xs = x[sorted_idx, np.arange(n_feat)[:, None]]
    csum = np.cumsum(y[sorted_idx], axis=1)[:, :-1]
    n_left = np.arange(1, n)
    gain = csum * csum / n_left + (total - csum) ** 2 / (n - n_left)
    valid = xs[:, :-1] < xs[:, 1:]
    valid[:, :min_leaf_size - 1] = False
    valid[:, n - min_leaf_size:] = False
    if not valid.any():
        return None
    sse = np.where(valid, sumsq - gain, np.inf)
    best_sse = sse.min()
    if best_sse >= parent_sse - tol:
        return None
    f, i = (int(v[0]) for v in np.nonzero(sse <= best_sse + tol))
    thr = 0.5 * (xs[f, i] + xs[f, i + 1])
    if not xs[f, i] <= thr < xs[f, i + 1]:
        thr = xs[f, i]
    return f, float(thr), float(sse[f, i])


def fit_tree(rows, targets, max_depth: Optional[int] = None, min_leaf_size: int = 1,
             rng: Optional[np.random.Generator] = None) -> RegressionTree:
    """Grow a CART regression tree (rng is accepted for API symmetry; no feature sampling)."""
    x = np.asarray(rows, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[0] != y.size:
        raise ValueError("fit_tree needs a non-empty 2-D feature table matching the targets")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite training data")
    if min_leaf_size < 1:
        raise ValueError("min_leaf_size must be >= 1")
    n, n_feat = x.shape
    feature, threshold, left, right, value = [], [], [], [], []
    goes_left = np.zeros(n, dtype=bool)

    def new_node() -> int:
        for lst in (feature, threshold, left, right, value):
            lst.append(0)
        return len(feature) - 1

    root_sorted = np.argsort(x, axis=0, kind="stable").T
    stack = [(new_node(), root_sorted, 0)]
    while stack:
        node, sorted_idx, depth = stack.pop()
        members = sorted_idx[0]
        ys = y[members]
        value[node] = float(ys.mean())
        left[node] = right[node] = -1
        feature[node], threshold[node] = 0, 0.0
        if (max_depth is not None and depth >= max_depth) or ys.min() == ys.max():
            continue
        split = best_split(x, y, sorted_idx, min_leaf_size)
        if split is None:
            continue
        f, thr, _ = split
        goes_left[members] = x[members, f] <= thr
        mask = goes_left[sorted_idx]
        left_sorted = sorted_idx[mask].reshape(n_feat, -1)
        right_sorted = sorted_idx[~mask].reshape(n_feat, -1)
        feature[node], threshold[node] = f, thr
        left[node] = new_node()
        right[node] = new_node()
        # Right pushed first so the left subtree is grown (and numbered) first.
        stack.append((right[node], right_sorted, depth + 1))
        stack.append((left[node], left_sorted, depth + 1))
    return _preorder(RegressionTree(
        np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64), np.array(value), max_depth, min_leaf_size,
    ))


def _preorder(tree: RegressionTree) -> RegressionTree:
    order, stack = [], [0]
    while stack:
        i = stack.pop()
        order.append(i)
        if tree.left[i] >= 0:
            stack.append(tree.right[i])
            stack.append(tree.left[i])
    order = np.array(order)
    if np.array_equal(order, np.arange(order.size)):
        return tree
    remap = np.empty_like(order)
    remap[order] = np.arange(order.size)
    left = np.where(tree.left[order] >= 0, remap[np.maximum(tree.left[order], 0)], -1)
    right = np.where(tree.right[order] >= 0, remap[np.maximum(tree.right[order], 0)], -1)
    return RegressionTree(tree.feature[order], tree.threshold[order], left, right, tree.value[order],
                          tree.max_depth, tree.min_leaf_size)


@dataclass(frozen=True)
class BdtModel:
    trees: tuple
    seed: int = 0
    feature_names: tuple = FINE_TUNER_COLUMNS

    def __post_init__(self) -> None:
        object.__setattr__(self, "trees", tuple(self.trees))
        if not self.trees:
            raise ValueError("ensemble needs at least one tree")

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def tree_predictions(self, rows: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        if rows.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {rows.shape[1]}")
        return np.stack([t.predict(rows) for t in self.trees])

    def predict_rows(self, rows: np.ndarray) -> np.ndarray:
        """Mean of the tree outputs, summed in tree order."""
        per_tree = self.tree_predictions(rows)
        total = per_tree[0].copy()
        for p in per_tree[1:]:
            total += p
        return total / len(self.trees)

    def prefix(self, n_trees: int) -> "BdtModel":
        return BdtModel(self.trees[:n_trees], self.seed, self.feature_names)


def predict(model: BdtModel, row) -> float:
    row = np.asarray(row, dtype=np.float64)
    if row.shape != (model.n_features,):
        raise ValueError(f"expected a {model.n_features}-feature row, got shape {row.shape}")
    if not np.all(np.isfinite(row)):
        raise ValueError("features must be finite")
    return float(model.predict_rows(row[None])[0])


def fit_bagged(rows, targets, n_trees: int = 10, max_depth: Optional[int] = None, min_leaf_size: int = 1,
               rng_seed: int = 0, bootstrap: bool = True, feature_names: Optional[Sequence[str]] = None) -> BdtModel:
    """Bootstrap-aggregated trees; each tree sees n rows drawn with replacement."""
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    x = np.asarray(rows, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("fit_bagged needs at least one row")
    names = tuple(feature_names) if feature_names is not None else (
        FINE_TUNER_COLUMNS if x.shape[1] == N_FEATURES else tuple(f"x{i}" for i in range(x.shape[1])))
    trees = []
    for t in range(n_trees):
        if bootstrap:
            idx = np.random.default_rng([rng_seed, t]).integers(0, x.shape[0], x.shape[0])
            trees.append(fit_tree(x[idx], y[idx], max_depth, min_leaf_size))
        else:
            trees.append(fit_tree(x, y, max_depth, min_leaf_size))
    return BdtModel(tuple(trees), rng_seed, names)


@dataclass
class TuneResult:
    best: tuple  # (n_trees, max_depth, min_leaf_size)
    table: list = field(default_factory=list)  # (n_trees, max_depth, min_leaf_size, cv_rmse)


def _depth_key(depth: Optional[int]) -> float:
    return math.inf if depth is None else depth


def kfold_indices(n: int, k: int, rng: np.random.Generator) -> list:
    """Shuffled split into k folds; the remainder goes to the earliest folds."""
    order = rng.permutation(n)
    sizes = [n // k + (1 if i < n % k else 0) for i in range(k)]
    return np.split(order, np.cumsum(sizes)[:-1])


def tune_hyperparams(train_rows, targets, k_folds: int = 5, search_space: Optional[dict] = None,
                     rng_seed: int = 0) -> TuneResult:
    """Exhaustive grid search minimising k-fold CV RMSE.

    Ties (within 1e-12 relative) go to the smaller ensemble, then the
    shallower depth, then the larger leaf size.
    """
    if k_folds < 2:
        raise ValueError("k_folds must be >= 2")
    space = dict(DEFAULT_SEARCH_SPACE if search_space is None else search_space)
    sizes = sorted(set(space.get("n_trees", ())))
    depths = list(space.get("max_depth", ()))
    leaves = list(space.get("min_leaf_size", ()))
    if not sizes or not depths or not leaves:
        raise ValueError("empty search space")
    x = np.asarray(train_rows, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if x.shape[0] < k_folds:
        raise ValueError("fewer rows than folds")
    folds = kfold_indices(x.shape[0], k_folds, np.random.default_rng([rng_seed, 7]))

    sq_err = {(n, d, m): 0.0 for n, d, m in itertools.product(sizes, depths, leaves)}
    for i, valid in enumerate(folds):
        train = np.concatenate([f for j, f in enumerate(folds) if j != i])
        for d, m in itertools.product(depths, leaves):
            model = fit_bagged(x[train], y[train], max(sizes), d, m, rng_seed)
            per_tree = model.tree_predictions(x[valid])
            running = np.cumsum(per_tree, axis=0)
            for n in sizes:
                pred = running[n - 1] / n
                sq_err[(n, d, m)] += float(np.sum((pred - y[valid]) ** 2))
    table = [(n, d, m, math.sqrt(e / x.shape[0])) for (n, d, m), e in sq_err.items()]
    best_rmse = min(r for *_, r in table)
    tied = [row for row in table if row[3] <= best_rmse * (1 + 1e-12)]
    tied.sort(key=lambda r: (r[0], _depth_key(r[1]), -r[2]))
    n, d, m, _ = tied[0]
    return TuneResult((n, d, m), sorted(table, key=lambda r: (r[0], _depth_key(r[1]), r[2])))


# --- model file ---------------------------------------------------------------
# b"BDT1", u16 version, u32 tree count, then per tree its nodes in pre-order:
# u8 feature index, f64 threshold (internal) or leaf value, u8 leaf flag.
# All little-endian.

BDT_MAGIC = b"BDT1"
BDT_VERSION = 1
_NODE = struct.Struct("<BdB")


def dumps(model: BdtModel) -> bytes:
    out = [BDT_MAGIC, struct.pack("<HI", BDT_VERSION, len(model.trees))]
    for tree in model.trees:
        for i in range(tree.n_nodes):
            if tree.left[i] < 0:
                out.append(_NODE.pack(0, float(tree.value[i]), 1))
            else:
                out.append(_NODE.pack(int(tree.feature[i]), float(tree.threshold[i]), 0))
    return b"".join(out)


def loads(data: bytes, feature_names: Sequence[str] = FINE_TUNER_COLUMNS) -> BdtModel:
    try:
        return _loads(data, feature_names)
    except struct.error as exc:
        raise ValueError(f"truncated BDT1 file: {exc}") from exc


def _loads(data: bytes, feature_names: Sequence[str]) -> BdtModel:
    if data[:4] != BDT_MAGIC:
        raise ValueError("not a BDT1 model file")
    version, count = struct.unpack_from("<HI", data, 4)
    if version != BDT_VERSION:
        raise ValueError(f"unsupported BDT version {version}")
    pos = 10
    trees = []
    for _ in range(count):
        feature, threshold, left, right, value = [], [], [], [], []
        stack = []  # (parent index, filled-left?) of internal nodes awaiting children
        while True:
            f, val, leaf = _NODE.unpack_from(data, pos)
            pos += _NODE.size
            i = len(feature)
            feature.append(0 if leaf else f)
            threshold.append(0.0 if leaf else val)
            value.append(val if leaf else 0.0)
            left.append(-1)
            right.append(-1)
            if stack:
                parent = stack[-1]
                if left[parent] < 0:
                    left[parent] = i
                else:
                    right[parent] = i
                    stack.pop()
            if not leaf:
                stack.append(i)
            if not stack:
                break
        trees.append(RegressionTree(np.array(feature, dtype=np.int64), np.array(threshold),
                                    np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                                    np.array(value)))
    if pos != len(data):
        raise ValueError("trailing bytes in BDT1 file")
    return BdtModel(tuple(trees), 0, tuple(feature_names))


def save(model: BdtModel, path: Union[str, Path]) -> None:
    Path(path).write_bytes(dumps(model))


def load(path: Union[str, Path]) -> BdtModel:
    return loads(Path(path).read_bytes())
