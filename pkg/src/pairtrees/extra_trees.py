"""Extremely randomized tree ensembles with binary scalar or vector outputs.

Trees are fully described by flat node arrays; a node with
``feature == -1`` is a leaf. Every node stores the positive-class frequency
of each output over the samples that reached it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import ValidationError

__all__ = [
    "ForestConfig",
    "Tree",
    "EnsembleModel",
    "ImportanceRanking",
    "default_k",
    "tree_rng",
    "fit_tree",
    "fit_ensemble",
    "predict_proba",
    "feature_importances",
    "gini_reduction",
    "trees_equal",
]

LEAF = _kernels.LEAF
_EMPTY = np.zeros((1, 0))


def default_k(p: int) -> int:
    """Square root of the feature count, rounded half up, at least 1."""
    return max(1, int(math.floor(math.sqrt(p) + 0.5)))


def tree_rng(seed_path: Sequence[int], tree_index: int) -> np.random.Generator:
    """Independent stream for one tree, hashed from ``(*seed_path, tree_index)``."""
    seq = np.random.SeedSequence([int(s) for s in seed_path] + [int(tree_index)])
    return np.random.Generator(np.random.PCG64(seq))


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    k_features: int | None = None
    n_min: int = 1
    bootstrap: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValidationError("n_trees must be >= 1")
        if self.k_features is not None and self.k_features < 1:
            raise ValidationError("k_features must be >= 1")
        if self.n_min < 1:
            raise ValidationError("n_min must be >= 1")

    def resolve_k(self, p: int) -> int:
        if self.k_features is None:
            return default_k(p)
        if self.k_features > p:
            raise ValidationError(f"k_features={self.k_features} exceeds {p} features")
        return self.k_features


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_node_samples: np.ndarray
    gain: np.ndarray
    stats: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature == LEAF

    @property
    def n_leaves(self) -> int:
        return int(self.is_leaf.sum())

    @property
    def n_outputs(self) -> int:
        return int(self.value.shape[1])

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        n = X.shape[0]
        zeros = np.zeros(n, np.int64)
        return _kernels.apply_tree(
            X, _EMPTY, np.arange(n), zeros, self.feature, self.threshold, self.left, self.right
        )

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def decision_path(self, x: np.ndarray) -> list[tuple[int, float, bool]]:
        """``(feature, threshold, went_left)`` tests from the root to x's leaf."""
        node, path = 0, []
        while self.feature[node] != LEAF:
            f, t = int(self.feature[node]), float(self.threshold[node])
            go_left = bool(x[f] < t)
            path.append((f, t, go_left))
            node = int(self.left[node] if go_left else self.right[node])
        return path


_TREE_ARRAYS = ("feature", "threshold", "left", "right", "value", "n_node_samples", "gain")


def trees_equal(a: Tree, b: Tree) -> bool:
    """Exact structural identity: same tests, thresholds and leaf values."""
    return all(np.array_equal(getattr(a, k), getattr(b, k)) for k in _TREE_ARRAYS)


def _tree_from_kernel(result) -> Tree:
    *arrays, stats = result
    return Tree(*arrays, stats=stats)


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    """A fitted forest. ``p_row`` splits the virtual feature space for
    pair models; plain models have ``p_row == p``."""

    trees: tuple[Tree, ...]
    k_features: int
    n_min: int
    bootstrap: bool
    seed_path: tuple[int, ...]
    n_outputs: int
    p: int
    p_row: int

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @cached_property
    def _packed(self):
        sizes = [t.n_nodes for t in self.trees]
        offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        def shift(arr, off):
            return np.where(arr == LEAF, LEAF, arr + off)
        return (
            np.concatenate([t.feature for t in self.trees]),
            np.concatenate([t.threshold for t in self.trees]),
            np.concatenate([shift(t.left, o) for t, o in zip(self.trees, offsets)]),
            np.concatenate([shift(t.right, o) for t, o in zip(self.trees, offsets)]),
            np.concatenate([t.value for t in self.trees]),
            offsets,
        )

    def predict_virtual(self, Xr, Xc, pr, pc) -> np.ndarray:
        """Mean tree output for samples addressed through two feature blocks."""
        feature, threshold, left, right, value, roots = self._packed
        return _kernels.predict_packed(
            np.ascontiguousarray(Xr, dtype=np.float64),
            np.ascontiguousarray(Xc, dtype=np.float64),
            np.asarray(pr, dtype=np.int64),
            np.asarray(pc, dtype=np.int64),
            feature, threshold, left, right, value, roots,
        )

    def predict_proba(self, X) -> np.ndarray:
        return predict_proba(self, X)

    # serialization ---------------------------------------------------------
    def meta(self) -> dict:
        return {
            "k_features": self.k_features,
            "n_min": self.n_min,
            "bootstrap": self.bootstrap,
            "seed_path": list(self.seed_path),
            "n_outputs": self.n_outputs,
            "p": self.p,
            "p_row": self.p_row,
            "n_trees": self.n_trees,
        }

    def to_arrays(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {
            prefix + name: np.concatenate([getattr(t, name) for t in self.trees])
            for name in _TREE_ARRAYS
        }
        out[prefix + "tree_sizes"] = np.array([t.n_nodes for t in self.trees], np.int64)
        return out

    @classmethod
    def from_arrays(cls, arrays, meta: dict, prefix: str = "") -> "EnsembleModel":
        sizes = np.asarray(arrays[prefix + "tree_sizes"])
        bounds = np.concatenate([[0], np.cumsum(sizes)])
        cols = {name: np.asarray(arrays[prefix + name]) for name in _TREE_ARRAYS}
        trees = tuple(
            Tree(*(cols[name][lo:hi].copy() for name in _TREE_ARRAYS))
            for lo, hi in zip(bounds[:-1], bounds[1:])
        )
        return cls(
            trees,
            int(meta["k_features"]),
            int(meta["n_min"]),
            bool(meta["bootstrap"]),
            tuple(int(s) for s in meta["seed_path"]),
            int(meta["n_outputs"]),
            int(meta["p"]),
            int(meta["p_row"]),
        )


def _check_xy(X, Y):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError("X must be a 2-d sample matrix")
    if X.shape[0] == 0:
        raise ValidationError("empty sample")
    Y = np.asarray(Y)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != X.shape[0]:
        raise ValidationError("X and Y have different numbers of samples")
    if not np.all((Y == 0) | (Y == 1)):
        raise ValidationError("labels must be 0 or 1")
    if not np.all(np.isfinite(X)):
        raise ValidationError("non-finite feature value")
    return X, np.ascontiguousarray(Y, dtype=np.uint8)


def fit_tree(X, Y, K: int, n_min: int, rng: np.random.Generator) -> Tree:
    """Grow one extremely randomized tree on the full sample."""
    X, Y = _check_xy(X, Y)
    n, p = X.shape
    if not 1 <= K <= p:
        raise ValidationError(f"K must lie in [1, {p}]")
    return _tree_from_kernel(
        _kernels.grow_sample_tree(
            X, _EMPTY, np.arange(n), np.zeros(n, np.int64), Y, int(K), int(n_min), rng
        )
    )


def fit_sample_ensemble(
    Xr, Xc, pr, pc, Y, config: ForestConfig, seed_path: Sequence[int]
) -> EnsembleModel:
    """Forest over samples whose features are virtual concatenations.

    Sample ``s`` reads ``Xr[pr[s]]`` followed by ``Xc[pc[s]]``. Bootstrap
    resamples the sample list with the tree's own stream before growing.
    """
    Xr = np.ascontiguousarray(Xr, dtype=np.float64)
    Xc = np.ascontiguousarray(Xc, dtype=np.float64)
    pr = np.asarray(pr, dtype=np.int64)
    pc = np.asarray(pc, dtype=np.int64)
    Y = np.ascontiguousarray(Y, dtype=np.uint8)
    if Y.ndim == 1:
        Y = Y[:, None]
    n = pr.shape[0]
    if n == 0:
        raise ValidationError("empty sample")
    p = Xr.shape[1] + Xc.shape[1]
    K = config.resolve_k(p)
    trees = []
    for t in range(config.n_trees):
        rng = tree_rng(seed_path, t)
        if config.bootstrap:
            idx = rng.integers(0, n, size=n)
            args = (pr[idx], pc[idx], Y[idx])
        else:
            args = (pr, pc, Y)
        trees.append(
            _tree_from_kernel(
                _kernels.grow_sample_tree(Xr, Xc, *args, K, config.n_min, rng)
            )
        )
    return EnsembleModel(
        tuple(trees), K, config.n_min, config.bootstrap, tuple(seed_path),
        int(Y.shape[1]), p, int(Xr.shape[1]),
    )


def fit_ensemble(
    X, Y, config: ForestConfig = ForestConfig(), seed_path: Sequence[int] | None = None
) -> EnsembleModel:
    """Fit ``config.n_trees`` independent trees.

    Parameters
    ----------
    X : array of shape (n, p)
    Y : array of shape (n,) or (n, n_outputs) with 0/1 entries
    config : ForestConfig
    seed_path : sequence of int, optional
        Prefix of the per-tree seed hash; defaults to ``(config.seed,)``.
        Tree ``t`` draws from ``tree_rng(seed_path, t)``, so adding trees
        never changes the earlier ones.
    """
    X, Y = _check_xy(X, Y)
    if seed_path is None:
        seed_path = (config.seed,)
    n = X.shape[0]
    return fit_sample_ensemble(
        X, _EMPTY, np.arange(n), np.zeros(n, np.int64), Y, config, seed_path
    )


def predict_proba(model: EnsembleModel, x) -> np.ndarray:
    """Mean over trees of the reached leaf frequencies.

    A single vector of length ``p`` gives a vector of length ``n_outputs``;
    a matrix gives one row per sample.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != model.p:
        raise ValidationError(f"expected {model.p} features, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("non-finite feature value")
    n = X.shape[0]
    out = model.predict_virtual(X, _EMPTY, np.arange(n), np.zeros(n, np.int64))
    return out[0] if single else out


@dataclass(frozen=True)
class ImportanceRanking:
    scores: np.ndarray
    names: tuple[str, ...] | None = None

    @property
    def order(self) -> np.ndarray:
        """Feature indices from most to least important (stable on ties)."""
        return np.argsort(-self.scores, kind="stable")

    def ranked(self) -> list[tuple[str, float]]:
        names = self.names or tuple(str(i) for i in range(len(self.scores)))
        return [(names[i], float(self.scores[i])) for i in self.order]


def feature_importances(model: EnsembleModel, names=None) -> ImportanceRanking:
    """Sample-weighted Gini reduction per feature, averaged over trees."""
    scores = np.zeros(model.p)
    for tree in model.trees:
        internal = ~tree.is_leaf
        weight = tree.n_node_samples[internal] / tree.n_node_samples[0]
        np.add.at(scores, tree.feature[internal], weight * tree.gain[internal])
    scores /= model.n_trees
    return ImportanceRanking(scores, None if names is None else tuple(names))


def gini_reduction(parent_labels, left_labels, right_labels) -> float:
    """Gini impurity of the parent minus the size-weighted child impurities.

    Label arrays are ``(n,)`` or ``(n, n_outputs)``; impurity is summed over
    outputs with ``2 q (1 - q)`` per output.
    """
    parent, left, right = (
        np.atleast_1d(np.asarray(a)) for a in (parent_labels, left_labels, right_labels)
    )
    parent, left, right = (a[:, None] if a.ndim == 1 else a for a in (parent, left, right))
    if len(left) == 0 or len(right) == 0:
        raise ValidationError("split has an empty child")
    if len(left) + len(right) != len(parent) or not np.array_equal(
        left.sum(axis=0) + right.sum(axis=0), parent.sum(axis=0)
    ):
        raise ValidationError("children do not partition the parent")
    return float(
        _kernels.gini_gain(
            len(parent), len(left),
            parent.sum(axis=0).astype(np.int64), left.sum(axis=0).astype(np.int64),
        )
    )
