"""Feature rankings and leaf partitions (biclusters) of fitted models."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import UnsupportedError
from .extra_trees import LEAF, ImportanceRanking, Tree, feature_importances
from .global_model import GlobalModel
from .graph_data import FeatureTable, PairSample
from .local_model import LocalModel, Variant

__all__ = [
    "model_importances",
    "LeafRecord",
    "LeafPartitionExport",
    "leaf_rules",
    "export_partition",
    "write_partition",
    "write_ranking",
]


def model_importances(model) -> dict[str, ImportanceRanking]:
    """Rankings keyed by a file-safe name.

    Global: one ranking over row and column features. Local multi-output:
    one per side (homogeneous: one). Local single-output: one per
    first-step node model.
    """
    if isinstance(model, GlobalModel):
        return {"global": feature_importances(model.ensemble, model.feature_names)}
    if model.variant is Variant.MO:
        # col_side models read row features and vice versa
        if model.homogeneous:
            return {"features": feature_importances(model.col_side.ensemble, model.row_feature_names)}
        return {
            "row_features": feature_importances(model.col_side.ensemble, model.row_feature_names),
            "col_features": feature_importances(model.row_side.ensemble, model.col_feature_names),
        }
    if model.homogeneous:
        return {
            f"node_{n}": feature_importances(m, model.row_feature_names)
            for n, m in model.col_side.models.items()
        }
    out = {
        f"col_{n}": feature_importances(m, model.row_feature_names)
        for n, m in model.col_side.models.items()
    }
    out.update(
        {
            f"row_{n}": feature_importances(m, model.col_feature_names)
            for n, m in model.row_side.models.items()
        }
    )
    return out


def write_ranking(ranking: ImportanceRanking, path, header: str = "") -> None:
    with open(path, "w") as fh:
        fh.write(header)
        fh.write("rank\tfeature\timportance\n")
        for i, (name, score) in enumerate(ranking.ranked(), 1):
            fh.write(f"{i}\t{name}\t{score!r}\n")


@dataclass(frozen=True)
class LeafRecord:
    """One training cell of a partition.

    Global leaves hold explicit ``pairs``; multi-output blocks hold the
    ``rows`` x ``cols`` product. ``rule`` lists ``(feature, threshold,
    went_left)`` tests; left means ``value < threshold``.
    """

    tree: int
    leaf: int | tuple[int, int]
    rows: tuple[str, ...]
    cols: tuple[str, ...]
    pairs: tuple[tuple[str, str], ...]
    positive_frequency: float
    purity: float
    rule: tuple


@dataclass(frozen=True)
class LeafPartitionExport:
    kind: str
    records: tuple[LeafRecord, ...]
    feature_names: tuple[str, ...]
    note: str = ""


def leaf_rules(tree: Tree) -> dict[int, tuple]:
    """Rule path of every leaf, from the root down."""
    rules, stack = {}, [(0, ())]
    while stack:
        node, path = stack.pop()
        f = int(tree.feature[node])
        if f == LEAF:
            rules[node] = path
            continue
        t = float(tree.threshold[node])
        stack.append((int(tree.right[node]), path + ((f, t, False),)))
        stack.append((int(tree.left[node]), path + ((f, t, True),)))
    return rules


def _purity(labels: np.ndarray) -> tuple[float, float]:
    q = float(labels.mean())
    return q, max(q, 1.0 - q)


def export_partition(
    model,
    train: PairSample,
    features_r: FeatureTable,
    features_c: FeatureTable | None = None,
    trees: int | None = None,
) -> LeafPartitionExport:
    """Leaf cells of the first ``trees`` trees over the training pairs.

    Global trees partition the (mirrored, for homogeneous data) training
    pairs into arbitrary pair sets. Multi-output local models give a
    checkerboard: tree ``t`` of the row-feature model partitions the rows,
    tree ``t`` of the column-feature model the columns, and each block is
    one cell.
    """
    if features_c is None:
        features_c = features_r
    if isinstance(model, GlobalModel):
        return _global_partition(model, train, features_r, features_c, trees)
    if model.variant is Variant.SO:
        raise UnsupportedError("single-output local models have per-node partitions; use importances")
    return _mo_partition(model, train, features_r, features_c, trees)


def _global_partition(model, train, features_r, features_c, n_trees):
    ids_r, ids_c = train.row_universe.ids, train.col_universe.ids
    rows, cols, labels = train.mirrored()
    r_id = np.array([ids_r[i] for i in rows], dtype=object)
    c_id = np.array([ids_c[j] for j in cols], dtype=object)
    pr, pc = features_r.rows_of(r_id), features_c.rows_of(c_id)
    Xr, Xc = features_r.values, features_c.values
    records = []
    for t, tree in enumerate(model.ensemble.trees[:n_trees]):
        leaf_of = _kernels.apply_tree(
            Xr, Xc, pr, pc, tree.feature, tree.threshold, tree.left, tree.right
        )
        rules = leaf_rules(tree)
        for leaf in np.unique(leaf_of):
            sel = leaf_of == leaf
            q, purity = _purity(labels[sel])
            records.append(
                LeafRecord(
                    t, int(leaf),
                    tuple(dict.fromkeys(r_id[sel].tolist())),
                    tuple(dict.fromkeys(c_id[sel].tolist())),
                    tuple(zip(r_id[sel].tolist(), c_id[sel].tolist())),
                    q, purity, rules[int(leaf)],
                )
            )
    return LeafPartitionExport(
        "global", tuple(records), model.feature_names,
        "leaf pair sets are rectangles in feature space but need not be contiguous "
        "submatrices of the adjacency matrix under any single row/column ordering",
    )


def _mo_partition(model, train, features_r, features_c, n_trees):
    adj = train.adjacency()
    x_r, x_c = features_r.vectors(adj.row_ids), features_c.vectors(adj.col_ids)
    row_model = model.col_side.ensemble  # reads row features
    col_model = model.row_side.ensemble
    row_names, col_names = model.row_feature_names, model.col_feature_names
    names = tuple("row:" + n for n in row_names) + tuple("col:" + n for n in col_names)
    p_r = len(row_names)
    ids_r, ids_c = np.array(adj.row_ids, dtype=object), np.array(adj.col_ids, dtype=object)
    records = []
    for t, (tr, tc) in enumerate(list(zip(row_model.trees, col_model.trees))[:n_trees]):
        lr, lc = tr.apply(x_r), tc.apply(x_c)
        rules_r, rules_c = leaf_rules(tr), leaf_rules(tc)
        for a in np.unique(lr):
            for b in np.unique(lc):
                sr, sc = lr == a, lc == b
                block = adj.labels[np.ix_(sr, sc)]
                q, purity = _purity(block)
                rule = rules_r[int(a)] + tuple((f + p_r, th, left) for f, th, left in rules_c[int(b)])
                records.append(
                    LeafRecord(
                        t, (int(a), int(b)),
                        tuple(ids_r[sr].tolist()), tuple(ids_c[sc].tolist()), (),
                        q, purity, rule,
                    )
                )
    return LeafPartitionExport("local_mo", tuple(records), names)


def _rule_text(rule, names) -> str:
    return " & ".join(f"{names[f]}{'<' if left else '>='}{t!r}" for f, t, left in rule) or "true"


def write_partition(export: LeafPartitionExport, path, header: str = "") -> None:
    with open(path, "w") as fh:
        fh.write(header)
        if export.note:
            fh.write(f"# note: {export.note}\n")
        fh.write("tree\tleaf\tn_rows\tn_cols\tn_pairs\tpositive_frequency\tpurity\trule\trows\tcols\tpairs\n")
        for r in export.records:
            leaf = r.leaf if isinstance(r.leaf, int) else f"{r.leaf[0]}x{r.leaf[1]}"
            n_pairs = len(r.pairs) if r.pairs else len(r.rows) * len(r.cols)
            pairs = ",".join(f"{a}|{b}" for a, b in r.pairs)
            fh.write(
                f"{r.tree}\t{leaf}\t{len(r.rows)}\t{len(r.cols)}\t{n_pairs}\t"
                f"{r.positive_frequency!r}\t{r.purity!r}\t{_rule_text(r.rule, export.feature_names)}\t"
                f"{','.join(r.rows)}\t{','.join(r.cols)}\t{pairs}\n"
            )
