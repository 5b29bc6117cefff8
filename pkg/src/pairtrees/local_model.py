"""Local approach: per-node models (single output) or one multi-output model
per side, with a two-step procedure for pairs of two unseen nodes.

Naming follows the side a model *belongs to*: ``col_side`` holds the models
``f_{n_c}`` of the LS column nodes; they read row features and predict
whether a row node links to their column node. ``row_side`` mirrors this.
In homogeneous mode both names refer to the same set of node models.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import UnsupportedError, ValidationError
from .extra_trees import EnsembleModel, ForestConfig, fit_ensemble
from .graph_data import FeatureTable, PairSample

__all__ = [
    "Variant",
    "MergeRule",
    "merge",
    "Calibration",
    "calibrate_threshold",
    "SideModels",
    "SecondStepModel",
    "LocalModel",
    "fit_local",
    "fit_second_step",
    "predict_lsls",
    "predict_lsts",
    "predict_tsts",
]

# seed-path tags
_ROW, _COL, _NODE = 0, 1, 2
_FIRST, _SECOND = 0, 1


class Variant(str, Enum):
    SO = "so"
    MO = "mo"


class MergeRule(str, Enum):
    MEAN = "mean"
    MIN = "min"
    MAX = "max"
    PRODUCT = "product"


def merge(a, b, rule: MergeRule | str = MergeRule.MEAN):
    """Combine the two per-node probabilities of a pair."""
    rule = MergeRule(rule)
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if rule is MergeRule.MEAN:
        return (a + b) / 2.0
    if rule is MergeRule.MIN:
        return np.minimum(a, b)
    if rule is MergeRule.MAX:
        return np.maximum(a, b)
    return a * b


@dataclass(frozen=True)
class Calibration:
    threshold: float
    target: float
    proportion: float
    degenerate: bool = False

    def labels(self, scores) -> np.ndarray:
        return (np.asarray(scores) >= self.threshold).astype(np.uint8)


def calibrate_threshold(scores, target_proportion: float) -> Calibration:
    """Cut at the smallest score value whose upper tail is <= the target.

    Scores ``>= threshold`` are labeled positive. Ties are never split, so the
    achieved proportion is the largest one not exceeding the target; when
    even the top tie group exceeds it, that group is used. All-equal scores
    are flagged ``degenerate`` (every score becomes positive).
    """
    s = np.asarray(scores, dtype=float).ravel()
    if s.size == 0:
        raise ValidationError("cannot calibrate on empty scores")
    if not 0.0 < target_proportion < 1.0:
        raise ValidationError("target proportion must lie in (0, 1)")
    values, counts = np.unique(s, return_counts=True)
    # upper-tail fraction for each distinct value, descending
    values, counts = values[::-1], counts[::-1]
    tail = np.cumsum(counts) / s.size
    ok = np.flatnonzero(tail <= target_proportion)
    k = int(ok[-1]) if ok.size else 0
    return Calibration(
        float(values[k]), float(target_proportion), float(tail[k]), degenerate=values.size == 1
    )


@dataclass(frozen=True, eq=False)
class SideModels:
    """The models owned by the nodes of one side.

    Single-output: ``models[node]`` is a forest over the other side's
    features. Multi-output: one forest whose output ``j`` belongs to
    ``output_ids[j]``.
    """

    variant: Variant
    models: dict = field(default_factory=dict)
    ensemble: EnsembleModel | None = None
    output_ids: tuple[str, ...] = ()

    @property
    def owners(self) -> tuple[str, ...]:
        if self.variant is Variant.SO:
            return tuple(self.models)
        return self.output_ids

    @property
    def n_ensembles(self) -> int:
        if self.variant is Variant.SO:
            return len(self.models)
        return 0 if self.ensemble is None else 1

    def ensembles(self) -> list[tuple[str | None, EnsembleModel]]:
        if self.variant is Variant.SO:
            return list(self.models.items())
        return [] if self.ensemble is None else [(None, self.ensemble)]

    @property
    def _out_index(self) -> dict:
        if not hasattr(self, "_oi"):
            object.__setattr__(self, "_oi", {n: j for j, n in enumerate(self.output_ids)})
        return self._oi

    def __contains__(self, node) -> bool:
        if self.variant is Variant.SO:
            return node in self.models
        return node in self._out_index

    def score(self, owners: Sequence[str], X: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """Probability that owner ``owners[i]`` links to the node whose
        features are ``X[rows[i]]``."""
        owners = np.asarray(owners, dtype=object)
        rows = np.asarray(rows, dtype=np.int64)
        out = np.empty(len(rows))
        if len(rows) == 0:
            return out
        missing = [o for o in set(owners.tolist()) if o not in self]
        if missing:
            raise ValidationError(f"no local model for node {sorted(missing)[0]!r}")
        uniq, inv = np.unique(rows, return_inverse=True)
        if self.variant is Variant.MO:
            proba = self.ensemble.predict_proba(X[uniq])
            cols = np.array([self._out_index[o] for o in owners], dtype=np.int64)
            return proba[inv, cols]
        for owner in dict.fromkeys(owners.tolist()):
            sel = np.flatnonzero(owners == owner)
            out[sel] = self.models[owner].predict_proba(X[rows[sel]])[:, 0]
        return out

    def score_matrix(self, X: np.ndarray) -> np.ndarray:
        """Scores of every owner for every row of ``X``: shape (len(X), n_owners)."""
        if self.variant is Variant.MO:
            return self.ensemble.predict_proba(X)
        return np.column_stack([m.predict_proba(X)[:, 0] for m in self.models.values()])


@dataclass(frozen=True, eq=False)
class SecondStepModel:
    """Models of unseen (TS) nodes trained on thresholded first-step scores."""

    row_side: SideModels
    col_side: SideModels
    row_calibration: Calibration | None
    col_calibration: Calibration | None

    @property
    def n_ensembles(self) -> int:
        if self.row_side is self.col_side:
            return self.row_side.n_ensembles
        return self.row_side.n_ensembles + self.col_side.n_ensembles


@dataclass(frozen=True, eq=False)
class LocalModel:
    variant: Variant
    homogeneous: bool
    merge_rule: MergeRule
    col_side: SideModels
    row_side: SideModels
    ls_r_ids: tuple[str, ...]
    ls_c_ids: tuple[str, ...]
    target_proportion: float
    row_feature_names: tuple[str, ...]
    col_feature_names: tuple[str, ...]
    config: ForestConfig
    second: SecondStepModel | None = None

    @property
    def n_first_step(self) -> int:
        if self.homogeneous:
            return self.col_side.n_ensembles
        return self.col_side.n_ensembles + self.row_side.n_ensembles

    @property
    def n_ensembles(self) -> int:
        return self.n_first_step + (0 if self.second is None else self.second.n_ensembles)

    def check_tables(self, features_r: FeatureTable, features_c: FeatureTable) -> None:
        if (
            features_r.feature_names != self.row_feature_names
            or features_c.feature_names != self.col_feature_names
        ):
            raise ValidationError("feature tables do not match the model's features")

    def predict(self, features_r, features_c, row_ids, col_ids) -> np.ndarray:
        """Probabilities for any pairs, dispatched by family.

        Pairs of two LS nodes (including training pairs) use the merged
        two-model rule, pairs with one LS node use that node's model, pairs
        of two TS nodes need :attr:`second`.
        """
        if features_c is None:
            features_c = features_r
        self.check_tables(features_r, features_c)
        row_ids = np.asarray(list(row_ids), dtype=object)
        col_ids = np.asarray(list(col_ids), dtype=object)
        pr = features_r.rows_of(row_ids)
        pc = features_c.rows_of(col_ids)
        Xr, Xc = features_r.values, features_c.values
        ls_r, ls_c = set(self.ls_r_ids), set(self.ls_c_ids)
        r_ls = np.array([r in ls_r for r in row_ids], dtype=bool)
        c_ls = np.array([c in ls_c for c in col_ids], dtype=bool)
        out = np.empty(len(row_ids))

        # multi-output samples are complete, so LS x LS pairs are training pairs
        both = r_ls & c_ls
        if both.any():
            out[both] = merge(
                self.col_side.score(col_ids[both], Xr, pr[both]),
                self.row_side.score(row_ids[both], Xc, pc[both]),
                self.merge_rule,
            )
        # row node unseen, column node known: the column node's model
        sel = ~r_ls & c_ls
        out[sel] = self.col_side.score(col_ids[sel], Xr, pr[sel])
        sel = r_ls & ~c_ls
        out[sel] = self.row_side.score(row_ids[sel], Xc, pc[sel])
        sel = ~r_ls & ~c_ls
        if sel.any():
            if self.second is None:
                raise ValidationError("TSxTS pairs need a fitted second step")
            out[sel] = merge(
                self.second.row_side.score(row_ids[sel], Xc, pc[sel]),
                self.second.col_side.score(col_ids[sel], Xr, pr[sel]),
                self.merge_rule,
            )
        return out


def _first_step_sample(sample: PairSample, features_r, features_c):
    """Per side: LS node ids in universe order."""
    ids_r, ids_c = sample.row_universe.ids, sample.col_universe.ids
    return [ids_r[i] for i in sample.ls_rows()], [ids_c[j] for j in sample.ls_cols()]


def fit_local(
    sample: PairSample,
    features_r: FeatureTable,
    features_c: FeatureTable | None = None,
    config: ForestConfig = ForestConfig(),
    variant: Variant | str = Variant.SO,
    merge_rule: MergeRule | str = MergeRule.MEAN,
) -> LocalModel:
    """Fit the first-step local models.

    Single output: one forest per LS node of each side (homogeneous: one per
    LS node). Multi-output: one forest per side (homogeneous: one), which
    requires every LS_r x LS_c pair to be labeled.
    """
    variant, merge_rule = Variant(variant), MergeRule(merge_rule)
    if len(sample) == 0:
        raise ValidationError("empty sample")
    if features_c is None:
        if not sample.homogeneous:
            raise ValidationError("bipartite samples need column features")
        features_c = features_r
    ls_r_ids, ls_c_ids = _first_step_sample(sample, features_r, features_c)
    Xr, Xc = features_r.values, features_c.values
    ids_r, ids_c = sample.row_universe.ids, sample.col_universe.ids
    seed = config.seed

    if variant is Variant.MO:
        if not sample.is_complete():
            raise ValidationError("multi-output requires complete adjacency submatrix")
        adj = sample.adjacency()
        x_r = features_r.vectors(adj.row_ids)
        if sample.homogeneous:
            side = SideModels(
                variant,
                ensemble=fit_ensemble(x_r, adj.labels, config, (seed, _NODE, _FIRST)),
                output_ids=adj.col_ids,
            )
            col_side = row_side = side
        else:
            x_c = features_c.vectors(adj.col_ids)
            col_side = SideModels(
                variant,
                ensemble=fit_ensemble(x_r, adj.labels, config, (seed, _COL, _FIRST)),
                output_ids=adj.col_ids,
            )
            row_side = SideModels(
                variant,
                ensemble=fit_ensemble(x_c, adj.labels.T, config, (seed, _ROW, _FIRST)),
                output_ids=adj.row_ids,
            )
    else:
        rows, cols, labels = sample.mirrored()
        pr = features_r.rows_of([ids_r[i] for i in rows])
        pc = features_c.rows_of([ids_c[j] for j in cols])
        if sample.homogeneous:
            # LS(n) = {(m, y(n, m))}; mirrored pairs list n in the row slot
            models = {}
            for node in ls_r_ids:
                sel = rows == sample.row_universe.index(node)
                models[node] = fit_ensemble(
                    Xc[pc[sel]], labels[sel], config,
                    (seed, _NODE, _FIRST, sample.row_universe.index(node)),
                )
            col_side = row_side = SideModels(variant, models=models)
        else:
            col_models = {}
            for node in ls_c_ids:
                j = sample.col_universe.index(node)
                sel = cols == j
                col_models[node] = fit_ensemble(
                    Xr[pr[sel]], labels[sel], config, (seed, _COL, _FIRST, j)
                )
            row_models = {}
            for node in ls_r_ids:
                i = sample.row_universe.index(node)
                sel = rows == i
                row_models[node] = fit_ensemble(
                    Xc[pc[sel]], labels[sel], config, (seed, _ROW, _FIRST, i)
                )
            col_side = SideModels(variant, models=col_models)
            row_side = SideModels(variant, models=row_models)

    return LocalModel(
        variant,
        sample.homogeneous,
        merge_rule,
        col_side,
        row_side,
        tuple(ls_r_ids),
        tuple(ls_c_ids),
        sample.positive_fraction,
        features_r.feature_names,
        features_c.feature_names,
        config,
    )


def _second_side(
    first: SideModels,
    ts_ids: Sequence[str],
    ts_table: FeatureTable,
    ls_ids: Sequence[str],
    ls_table: FeatureTable,
    target: float,
    variant: Variant,
    config: ForestConfig,
    seed_tag: tuple,
    ts_universe_pos: Sequence[int],
):
    """Second-step models for the TS nodes of one side.

    ``first`` holds the LS models of the *other* side (they read this side's
    features); their scores on each TS node are thresholded into a label
    profile over the LS nodes, learned from the LS nodes' features.
    """
    if not ts_ids:
        return SideModels(variant), None
    if not ls_ids:
        raise ValidationError("second step needs LS nodes on the other side")
    scores = first.score_matrix(ts_table.vectors(ts_ids))  # (|TS|, |LS|)
    order = [first.owners.index(n) for n in ls_ids]
    scores = scores[:, order]
    calib = calibrate_threshold(scores, target)
    labels = calib.labels(scores)
    x_ls = ls_table.vectors(ls_ids)
    if variant is Variant.MO:
        ens = fit_ensemble(x_ls, labels.T, config, seed_tag)
        return SideModels(variant, ensemble=ens, output_ids=tuple(ts_ids)), calib
    models = {
        node: fit_ensemble(x_ls, labels[k], config, seed_tag + (int(pos),))
        for k, (node, pos) in enumerate(zip(ts_ids, ts_universe_pos))
    }
    return SideModels(variant, models=models), calib


def fit_second_step(
    model: LocalModel,
    features_r: FeatureTable,
    features_c: FeatureTable | None,
    ts_row_ids: Sequence[str] = (),
    ts_col_ids: Sequence[str] = (),
) -> LocalModel:
    """Return ``model`` with second-step models for the given TS nodes.

    The calibration threshold is set per side so that the proportion of
    positive first-step predictions matches the learning sample's positive
    fraction. Homogeneous models use ``ts_row_ids`` only.
    """
    if features_c is None:
        features_c = features_r
    model.check_tables(features_r, features_c)
    config, seed = model.config, model.config.seed
    target = model.target_proportion
    if not 0.0 < target < 1.0:
        raise ValidationError("learning sample needs both positive and negative pairs")
    ls_r, ls_c = set(model.ls_r_ids), set(model.ls_c_ids)
    ts_r = [n for n in ts_row_ids if n not in ls_r]
    if model.homogeneous:
        side, calib = _second_side(
            model.col_side, ts_r, features_r, model.ls_r_ids, features_r, target,
            model.variant, config, (seed, _NODE, _SECOND), features_r.rows_of(ts_r),
        )
        second = SecondStepModel(side, side, calib, calib)
    else:
        ts_c = [n for n in ts_col_ids if n not in ls_c]
        # TS row node t: scores f_{n_c}(x(t)) over LS_c, then learn over col features
        row_side, row_cal = _second_side(
            model.col_side, ts_r, features_r, model.ls_c_ids, features_c, target,
            model.variant, config, (seed, _ROW, _SECOND), features_r.rows_of(ts_r),
        )
        col_side, col_cal = _second_side(
            model.row_side, ts_c, features_c, model.ls_r_ids, features_r, target,
            model.variant, config, (seed, _COL, _SECOND), features_c.rows_of(ts_c),
        )
        second = SecondStepModel(row_side, col_side, row_cal, col_cal)
    return dataclasses.replace(model, second=second)


# single-family entry points ---------------------------------------------------


def predict_lsls(model: LocalModel, features_r, features_c, row_ids, col_ids) -> np.ndarray:
    """Unseen pairs of two LS nodes: merged scores of both node models."""
    if model.variant is Variant.MO:
        raise UnsupportedError("multi-output local models cannot predict LSxLS pairs")
    _require(model, row_ids, col_ids, True, True)
    return model.predict(features_r, features_c, row_ids, col_ids)


def predict_lsts(model: LocalModel, features_r, features_c, row_ids, col_ids) -> np.ndarray:
    """Pairs with exactly one LS node, scored by that node's model."""
    ls_r, ls_c = set(model.ls_r_ids), set(model.ls_c_ids)
    for r, c in zip(row_ids, col_ids):
        if (r in ls_r) == (c in ls_c):
            raise ValidationError(f"pair ({r}, {c}) does not have exactly one LS node")
    return model.predict(features_r, features_c, row_ids, col_ids)


def predict_tsts(model: LocalModel, features_r, features_c, row_ids, col_ids) -> np.ndarray:
    _require(model, row_ids, col_ids, False, False)
    return model.predict(features_r, features_c, row_ids, col_ids)


def _require(model, row_ids, col_ids, row_ls: bool, col_ls: bool) -> None:
    ls_r, ls_c = set(model.ls_r_ids), set(model.ls_c_ids)
    for r, c in zip(row_ids, col_ids):
        if (r in ls_r) != row_ls or (c in ls_c) != col_ls:
            raise ValidationError(f"pair ({r}, {c}) is not in the requested family")
