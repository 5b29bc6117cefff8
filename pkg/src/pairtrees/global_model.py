"""Global approach: one forest over pairs with concatenated node features.

When the learning sample is a complete LS_r x LS_c submatrix the forest is
grown lazily on rectangles of the label matrix (no pair rows are ever
built); otherwise it is grown on the explicit list of labeled pairs, still
reading node features through index arrays instead of a materialized pair
matrix.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import ValidationError
from .extra_trees import (
    EnsembleModel,
    ForestConfig,
    fit_sample_ensemble,
    tree_rng,
    _tree_from_kernel,
)
from .graph_data import FeatureTable, PairSample

__all__ = [
    "TrainMode",
    "GlobalModel",
    "SplitTest",
    "RectangleNodeState",
    "fit_global",
    "predict_global",
    "lazy_split_search",
    "feature_rows",
]


class TrainMode(str, Enum):
    LAZY = "lazy"
    EXPLICIT = "explicit"


def feature_rows(table: FeatureTable, universe_ids: Sequence[str], idx) -> np.ndarray:
    """Feature-table rows of universe nodes ``idx``; unknown ids raise."""
    try:
        return table.rows_of([universe_ids[i] for i in idx])
    except ValidationError as exc:
        raise ValidationError(f"missing features: {exc}") from None


@dataclass(frozen=True, eq=False)
class GlobalModel:
    ensemble: EnsembleModel
    homogeneous: bool
    mode: TrainMode
    row_feature_names: tuple[str, ...]
    col_feature_names: tuple[str, ...]

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple("row:" + n for n in self.row_feature_names) + tuple(
            "col:" + n for n in self.col_feature_names
        )

    @property
    def n_ensembles(self) -> int:
        return 1

    def training_stats(self) -> dict:
        stats = np.array([t.stats for t in self.ensemble.trees if t.stats is not None])
        if stats.size == 0:
            return {}
        return {
            "split_evaluations": int(stats[:, 0].sum()),
            "label_reads": int(stats[:, 1].sum()),
            "peak_state_records": int(stats[:, 2].max()),
            "peak_stack": int(stats[:, 3].max()),
        }

    def check_tables(self, features_r: FeatureTable, features_c: FeatureTable) -> None:
        if (
            features_r.feature_names != self.row_feature_names
            or features_c.feature_names != self.col_feature_names
        ):
            raise ValidationError("feature tables do not match the model's features")

    def raw_proba(self, Xr, Xc, pr, pc) -> np.ndarray:
        return self.ensemble.predict_virtual(Xr, Xc, pr, pc)[:, 0]

    def predict(self, features_r, features_c, row_ids, col_ids) -> np.ndarray:
        return predict_global(self, features_r, features_c, row_ids, col_ids)


def fit_global(
    sample: PairSample,
    features_r: FeatureTable,
    features_c: FeatureTable | None = None,
    config: ForestConfig = ForestConfig(),
    mode: TrainMode | str | None = None,
    check: bool = False,
) -> GlobalModel:
    """Fit the global forest.

    ``mode=None`` picks lazy training for complete bipartite samples without
    bootstrap and explicit training otherwise. Homogeneous samples are
    mirrored (both pair orders) before training. ``check`` enables the full
    recount of rectangle counts after every split.
    """
    if len(sample) == 0:
        raise ValidationError("empty sample")
    if features_c is None:
        if not sample.homogeneous:
            raise ValidationError("bipartite samples need column features")
        features_c = features_r
    lazy_ok = (not sample.homogeneous) and (not config.bootstrap) and sample.is_complete()
    if mode is None:
        mode = TrainMode.LAZY if lazy_ok else TrainMode.EXPLICIT
    mode = TrainMode(mode)
    if mode is TrainMode.LAZY and not lazy_ok:
        raise ValidationError(
            "lazy training needs a complete bipartite submatrix without bootstrap"
        )
    Xr = np.ascontiguousarray(features_r.values)
    Xc = np.ascontiguousarray(features_c.values)
    ids_r, ids_c = sample.row_universe.ids, sample.col_universe.ids
    seed_path = (config.seed,)
    if mode is TrainMode.LAZY:
        adj = sample.adjacency()
        row_feat = features_r.rows_of(adj.row_ids)
        col_feat = features_c.rows_of(adj.col_ids)
        ensemble = fit_rect_ensemble(
            Xr, Xc, row_feat, col_feat, adj.labels, config, seed_path, check
        )
    else:
        rows, cols, labels = sample.mirrored()
        pr = feature_rows(features_r, ids_r, rows)
        pc = feature_rows(features_c, ids_c, cols)
        ensemble = fit_sample_ensemble(Xr, Xc, pr, pc, labels, config, seed_path)
    return GlobalModel(
        ensemble, sample.homogeneous, mode, features_r.feature_names, features_c.feature_names
    )


def fit_rect_ensemble(
    Xr, Xc, row_feat, col_feat, Y, config: ForestConfig, seed_path, check: bool = False
) -> EnsembleModel:
    """Lazily grown forest over every pair of the complete matrix ``Y``."""
    Y = np.ascontiguousarray(Y, dtype=np.uint8)
    row_feat = np.asarray(row_feat, dtype=np.int64)
    col_feat = np.asarray(col_feat, dtype=np.int64)
    if Y.shape != (len(row_feat), len(col_feat)) or Y.size == 0:
        raise ValidationError("label matrix does not match the row/column lists")
    p = Xr.shape[1] + Xc.shape[1]
    K = config.resolve_k(p)
    trees = tuple(
        _tree_from_kernel(
            _kernels.grow_rect_tree(
                Xr, Xc, row_feat, col_feat, Y, K, config.n_min, tree_rng(seed_path, t), check
            )
        )
        for t in range(config.n_trees)
    )
    return EnsembleModel(
        trees, K, config.n_min, False, tuple(seed_path), 1, p, int(Xr.shape[1])
    )


def predict_global(
    model: GlobalModel,
    features_r: FeatureTable,
    features_c: FeatureTable | None,
    row_ids: Sequence[str],
    col_ids: Sequence[str],
) -> np.ndarray:
    """Pair probabilities; homogeneous models average both pair orders."""
    if features_c is None:
        features_c = features_r
    model.check_tables(features_r, features_c)
    pr = features_r.rows_of(row_ids)
    pc = features_c.rows_of(col_ids)
    Xr, Xc = features_r.values, features_c.values
    forward = model.raw_proba(Xr, Xc, pr, pc)
    if not model.homogeneous:
        return forward
    # row and col tables coincide: swap the node roles
    backward = model.raw_proba(Xr, Xc, features_r.rows_of(col_ids), features_c.rows_of(row_ids))
    return (forward + backward) / 2.0


# single-node view of the lazy search ------------------------------------------


@dataclass(frozen=True)
class SplitTest:
    feature_index: int
    threshold: float
    gain: float

    def goes_left(self, x: np.ndarray) -> bool:
        return bool(x[self.feature_index] < self.threshold)


@dataclass(frozen=True, eq=False)
class RectangleNodeState:
    """Rows x cols of a complete label matrix with marginal positive counts."""

    rows: np.ndarray
    cols: np.ndarray
    row_counts: np.ndarray
    col_counts: np.ndarray

    @classmethod
    def from_matrix(cls, Y, rows=None, cols=None) -> "RectangleNodeState":
        Y = np.asarray(Y)
        rows = np.arange(Y.shape[0]) if rows is None else np.asarray(rows)
        cols = np.arange(Y.shape[1]) if cols is None else np.asarray(cols)
        sub = Y[np.ix_(rows, cols)].astype(np.int64)
        return cls(rows, cols, sub.sum(axis=1), sub.sum(axis=0))

    @property
    def total(self) -> int:
        return int(self.row_counts.sum())

    @property
    def n_pairs(self) -> int:
        return len(self.rows) * len(self.cols)

    def consistent_with(self, Y) -> bool:
        fresh = RectangleNodeState.from_matrix(Y, self.rows, self.cols)
        return (
            np.array_equal(fresh.row_counts, self.row_counts)
            and np.array_equal(fresh.col_counts, self.col_counts)
            and int(self.col_counts.sum()) == self.total
        )


def lazy_split_search(
    state: RectangleNodeState, Xr, Xc, Y, K: int, rng: np.random.Generator
):
    """Best of ``K`` random splits of a rectangle, scored from its counts.

    ``Xr``/``Xc`` are indexed by the state's row/col ids. Returns
    ``(SplitTest, left_state, right_state)`` or ``None`` when no virtual
    feature varies. Draws from ``rng`` in the same order as the compiled
    grower, so calling it on the root state reproduces a tree's root split.
    """
    Xr, Xc, Y = np.asarray(Xr, float), np.asarray(Xc, float), np.asarray(Y)
    p_r = Xr.shape[1]
    p = p_r + Xc.shape[1]
    n_r, n_c = len(state.rows), len(state.cols)
    n = n_r * n_c
    pool = list(range(p))
    m = p
    cands = []
    while len(cands) < K and m > 0:
        j = _kernels._draw_index(rng.random(), m)
        f = pool[j]
        pool[j], pool[m - 1] = pool[m - 1], f
        m -= 1
        if f < p_r:
            x, counts, other = Xr[state.rows, f], state.row_counts, n_c
        else:
            x, counts, other = Xc[state.cols, f - p_r], state.col_counts, n_r
        lo, hi = x.min(), x.max()
        if not lo < hi:
            continue
        t = _kernels._draw_threshold(lo, hi, rng.random())
        mask = x < t
        gain = _kernels.gini_gain(
            n,
            int(mask.sum()) * other,
            np.array([state.total], np.int64),
            np.array([counts[mask].sum()], np.int64),
        )
        cands.append((f, t, gain, mask))
    if not cands:
        return None
    scores = np.array([c[2] for c in cands])
    k = _kernels._select(scores, len(cands), rng.random())
    f, t, gain, mask = cands[k]
    if f < p_r:
        moved = Y[np.ix_(state.rows[~mask], state.cols)].astype(np.int64).sum(axis=0)
        kept = Y[np.ix_(state.rows[mask], state.cols)].astype(np.int64).sum(axis=0)
        left = RectangleNodeState(state.rows[mask], state.cols, state.row_counts[mask], state.col_counts - moved)
        right = RectangleNodeState(state.rows[~mask], state.cols, state.row_counts[~mask], state.col_counts - kept)
    else:
        moved = Y[np.ix_(state.rows, state.cols[~mask])].astype(np.int64).sum(axis=1)
        kept = Y[np.ix_(state.rows, state.cols[mask])].astype(np.int64).sum(axis=1)
        left = RectangleNodeState(state.rows, state.cols[mask], state.row_counts - moved, state.col_counts[mask])
        right = RectangleNodeState(state.rows, state.cols[~mask], state.row_counts - kept, state.col_counts[~mask])
    return SplitTest(int(f), float(t), float(gain)), left, right
