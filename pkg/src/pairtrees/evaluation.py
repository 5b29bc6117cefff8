"""Cross-validation on pairs and on nodes, family-wise scoring, ROC/PR
areas and degree baselines."""
from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator

import numpy as np
from sklearn.metrics import average_precision_score, precision_recall_curve, roc_auc_score, roc_curve

from .errors import UnsupportedError, ValidationError
from .extra_trees import ForestConfig
from .global_model import fit_global
from .graph_data import (
    FAMILIES,
    Family,
    FeatureTable,
    PairSample,
    degrees,
    family_from_code,
    partition_families,
)
from .local_model import MergeRule, fit_local, fit_second_step

__all__ = [
    "Scheme",
    "Method",
    "FoldPlan",
    "Split",
    "make_folds",
    "roc_auc",
    "pr_auc",
    "roc_points",
    "pr_points",
    "Curve",
    "degree_baseline_scores",
    "FamilyResult",
    "EvalReport",
    "run_experiment",
    "write_report",
]

WORKERS_ENV = "PAIRTREES_WORKERS"


class Scheme(str, Enum):
    PAIRS = "pairs"
    NODES = "nodes"


class Method(str, Enum):
    GLOBAL = "global"
    LOCAL_SO = "local_so"
    LOCAL_MO = "local_mo"


# folds ---------------------------------------------------------------------


@dataclass(frozen=True)
class Split:
    """One train/test split: pair indices into the full sample."""

    repeat: int
    fold: int
    train: np.ndarray
    test: np.ndarray


@dataclass(frozen=True, eq=False)
class FoldPlan:
    """Fold assignments for every repeat.

    ``PAIRS``: ``assignments[r]`` maps each sample pair to a fold.
    ``NODES``: ``assignments[r] = (row_fold, col_fold)`` over the universes,
    ``-1`` for nodes outside the sample; homogeneous plans share one array.
    ``grid`` crosses every row fold with every column fold instead of pairing
    fold ``i`` with fold ``i``.
    """

    scheme: Scheme
    k: int
    repeats: int
    seed: int
    assignments: tuple
    homogeneous: bool = False
    grid: bool = False

    def splits(self, sample: PairSample) -> Iterator[Split]:
        for rep, assign in enumerate(self.assignments):
            if self.scheme is Scheme.PAIRS:
                if len(assign) != len(sample):
                    raise ValidationError("fold plan does not match the sample")
                for i in range(self.k):
                    yield Split(rep, i, np.flatnonzero(assign != i), np.flatnonzero(assign == i))
                continue
            fr, fc = assign
            if len(fr) != sample.row_universe.size or len(fc) != sample.col_universe.size:
                raise ValidationError("fold plan does not match the sample")
            a, b = fr[sample.rows], fc[sample.cols]
            blocks = (
                [(i, j) for i in range(self.k) for j in range(self.k)]
                if self.grid and not self.homogeneous
                else [(i, i) for i in range(self.k)]
            )
            for n, (i, j) in enumerate(blocks):
                # homogeneous: fr is fc, so a pair is held out if either node is
                test = (a == i) | (b == j)
                yield Split(rep, n, np.flatnonzero(~test), np.flatnonzero(test))


def make_folds(
    scheme: Scheme | str,
    sample: PairSample,
    k: int = 10,
    repeats: int = 1,
    seed: int = 0,
    grid: bool = False,
) -> FoldPlan:
    """Deal pairs (``pairs``) or LS nodes (``nodes``) into ``k`` folds.

    Each repeat shuffles with its own stream derived from ``seed`` and deals
    round-robin, so fold sizes differ by at most one.
    """
    scheme = Scheme(scheme)
    if k < 2:
        raise ValidationError("k must be >= 2")
    if repeats < 1:
        raise ValidationError("repeats must be >= 1")
    assignments = []
    for rep in range(repeats):
        rng = np.random.default_rng(np.random.SeedSequence([seed, rep]))
        if scheme is Scheme.PAIRS:
            if len(sample) < k:
                raise ValidationError(f"fold would be empty: {len(sample)} pairs for k={k}")
            assignments.append(_deal(len(sample), k, rng))
            continue
        ls_r, ls_c = sample.ls_rows(), sample.ls_cols()
        if len(ls_r) < k or len(ls_c) < k:
            raise ValidationError(
                f"fold would be empty: {len(ls_r)} row / {len(ls_c)} col nodes for k={k}"
            )
        fr = np.full(sample.row_universe.size, -1, dtype=np.int64)
        fr[ls_r] = _deal(len(ls_r), k, rng)
        if sample.homogeneous:
            fc = fr
        else:
            fc = np.full(sample.col_universe.size, -1, dtype=np.int64)
            fc[ls_c] = _deal(len(ls_c), k, rng)
        for a in (fr, fc):
            a.setflags(write=False)
        assignments.append((fr, fc))
    return FoldPlan(scheme, k, repeats, seed, tuple(assignments), sample.homogeneous, grid)


def _deal(n: int, k: int, rng) -> np.ndarray:
    folds = np.empty(n, dtype=np.int64)
    folds[rng.permutation(n)] = np.arange(n) % k
    return folds


# metrics -------------------------------------------------------------------


def _check_scores(scores, labels):
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValidationError("scores and labels differ in length")
    if not np.isin(y, (0, 1)).all():
        raise ValidationError("labels must be 0/1")
    return s, y.astype(np.int64)


def roc_auc(scores, labels) -> float | None:
    """Probability that a random positive outranks a random negative (ties
    count one half); ``None`` for single-class input."""
    s, y = _check_scores(scores, labels)
    if y.min(initial=1) == y.max(initial=0):
        return None
    return float(roc_auc_score(y, s))


def pr_auc(scores, labels) -> float | None:
    """Average precision: sum of recall steps times precision, one step per
    distinct score; ``None`` without positives."""
    s, y = _check_scores(scores, labels)
    if y.sum() == 0:
        return None
    return float(average_precision_score(y, s))


@dataclass(frozen=True)
class Curve:
    kind: str
    x: np.ndarray
    y: np.ndarray
    area: float | None


def roc_points(scores, labels) -> Curve:
    """Tie-aware ROC curve (fpr, tpr) from (0, 0) to (1, 1)."""
    s, y = _check_scores(scores, labels)
    if y.min(initial=1) == y.max(initial=0):
        raise ValidationError("ROC needs both classes")
    fpr, tpr, _ = roc_curve(y, s, drop_intermediate=False)
    return Curve("roc", fpr, tpr, roc_auc(s, y))


def pr_points(scores, labels) -> Curve:
    """Precision-recall points (recall ascending), one per distinct score."""
    s, y = _check_scores(scores, labels)
    if y.sum() == 0:
        raise ValidationError("PR needs positives")
    precision, recall, _ = precision_recall_curve(y, s)
    # sklearn lists recall descending and appends (recall 0, precision 1)
    return Curve("pr", recall[::-1], precision[::-1], pr_auc(s, y))


# baselines -----------------------------------------------------------------


def degree_baseline_scores(train: PairSample, rows, cols) -> np.ndarray:
    """Degree scores of test pairs (universe indices).

    LSLS: sum of both degrees; one LS node: that node's degree; TSTS: a
    constant 0, i.e. random guessing under the tie convention.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    d_r, d_c = degrees(train)
    part = partition_families(train)
    r_ls, c_ls = part.ls_row_mask[rows], part.ls_col_mask[cols]
    return np.where(r_ls, d_r[rows], 0) + np.where(c_ls, d_c[cols], 0).astype(float)


# experiment ----------------------------------------------------------------


@dataclass
class FamilyResult:
    auroc: list = field(default_factory=list)
    aupr: list = field(default_factory=list)
    baseline_auroc: list = field(default_factory=list)
    baseline_aupr: list = field(default_factory=list)
    n_pairs: int = 0

    @property
    def present(self) -> bool:
        return self.n_pairs > 0

    def summary(self) -> dict:
        if not self.present:
            return {"status": "absent"}
        out = {"status": "present", "n_pairs": self.n_pairs}
        for name in ("auroc", "aupr", "baseline_auroc", "baseline_aupr"):
            vals = [v for v in getattr(self, name) if v is not None]
            out[name + "_mean"] = float(np.mean(vals)) if vals else None
            out[name + "_std"] = float(np.std(vals)) if vals else None
            out[name + "_n"] = len(vals)
        return out


@dataclass
class EvalReport:
    """Per-family fold metrics, baselines and every scored test pair.

    ``records`` columns: repeat, fold, row index, col index, family code,
    label, method score, baseline score.
    """

    method: Method
    scheme: Scheme
    homogeneous: bool
    families: dict
    records: dict
    row_ids: tuple
    col_ids: tuple
    calibrations: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def mean(self, family: Family | str, metric: str = "auroc") -> float | None:
        return self.families[Family(family)].summary().get(metric + "_mean")

    def family_status(self, family) -> str:
        return self.families[Family(family)].summary()["status"]

    def pooled(self, family, baseline: bool = False):
        sel = self.records["family"] == FAMILIES.index(Family(family))
        key = "baseline" if baseline else "score"
        return self.records[key][sel], self.records["label"][sel]

    def curves(self, family) -> dict:
        """Pooled ROC and PR curves of a family (empty if not computable)."""
        s, y = self.pooled(family)
        out = {}
        if len(y) and 0 < y.sum() < len(y):
            out["roc"] = roc_points(s, y)
        if len(y) and y.sum() > 0:
            out["pr"] = pr_points(s, y)
        return out

    def summary(self) -> dict:
        return {
            "method": self.method.value,
            "scheme": self.scheme.value,
            "homogeneous": self.homogeneous,
            "families": {f.value: self.families[f].summary() for f in FAMILIES},
            "calibration": self.calibrations,
            "config": self.config,
        }


def _fit_and_score(args):
    sample, features_r, features_c, method, config, merge_rule, split = args
    train = sample.subset(split.train)
    test_r, test_c = sample.rows[split.test], sample.cols[split.test]
    labels = sample.labels[split.test]
    part = partition_families(train)
    fam = part.family_codes(test_r, test_c)
    if (fam == 4).any():
        raise ValidationError("a test pair is also a training pair")
    ids_r = [sample.row_universe.ids[i] for i in test_r]
    ids_c = [sample.col_universe.ids[j] for j in test_c]
    calib = None
    if method is Method.GLOBAL:
        model = fit_global(train, features_r, features_c, config)
        scores = model.predict(features_r, features_c, ids_r, ids_c)
    else:
        variant = "so" if method is Method.LOCAL_SO else "mo"
        model = fit_local(train, features_r, features_c, config, variant, merge_rule)
        tsts = fam == FAMILIES.index(Family.TSTS)
        if tsts.any():
            ts_r = sorted(set(np.asarray(ids_r, dtype=object)[tsts].tolist()))
            ts_c = sorted(set(np.asarray(ids_c, dtype=object)[tsts].tolist()))
            if sample.homogeneous:
                ts_r = sorted(set(ts_r) | set(ts_c))
            model = fit_second_step(model, features_r, features_c, ts_r, ts_c)
            sec = model.second
            calib = {
                "repeat": split.repeat,
                "fold": split.fold,
                "row": None if sec.row_calibration is None else sec.row_calibration.__dict__,
                "col": None if sec.col_calibration is None else sec.col_calibration.__dict__,
            }
        scores = model.predict(features_r, features_c, ids_r, ids_c)
    base = degree_baseline_scores(train, test_r, test_c)
    return split, test_r, test_c, fam, labels, np.asarray(scores, float), base, calib


def run_experiment(
    sample: PairSample,
    features_r: FeatureTable,
    features_c: FeatureTable | None,
    method: Method | str,
    plan: FoldPlan,
    config: ForestConfig = ForestConfig(),
    merge_rule: MergeRule | str = MergeRule.MEAN,
    workers: int | None = None,
    config_echo: dict | None = None,
) -> EvalReport:
    """Fit and score every split of ``plan`` and aggregate per family.

    Metrics are computed per test fold and family; families without pairs
    are reported absent. ``workers`` (default from ``PAIRTREES_WORKERS``)
    runs splits in parallel processes; results do not depend on it.
    """
    method = Method(method)
    if features_c is None:
        features_c = features_r
    if method is Method.LOCAL_MO and plan.scheme is Scheme.PAIRS:
        raise UnsupportedError("multi-output local models cannot predict LSxLS pairs (pairs CV)")
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    if workers < 1:
        raise ValidationError("worker count must be >= 1")
    jobs = [
        (sample, features_r, features_c, method, config, MergeRule(merge_rule), s)
        for s in plan.splits(sample)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_fit_and_score, jobs))
    else:
        results = [_fit_and_score(j) for j in jobs]

    families = {f: FamilyResult() for f in FAMILIES}
    cols = {k: [] for k in ("repeat", "fold", "row", "col", "family", "label", "score", "baseline")}
    calibrations = []
    for split, test_r, test_c, fam, labels, scores, base, calib in results:
        if calib is not None:
            calibrations.append(calib)
        n = len(test_r)
        cols["repeat"].append(np.full(n, split.repeat))
        cols["fold"].append(np.full(n, split.fold))
        cols["row"].append(test_r)
        cols["col"].append(test_c)
        cols["family"].append(fam.astype(np.int64))
        cols["label"].append(labels.astype(np.int64))
        cols["score"].append(scores)
        cols["baseline"].append(base)
        for code, f in enumerate(FAMILIES):
            sel = fam == code
            if not sel.any():
                continue
            res = families[f]
            res.n_pairs += int(sel.sum())
            res.auroc.append(roc_auc(scores[sel], labels[sel]))
            res.aupr.append(pr_auc(scores[sel], labels[sel]))
            res.baseline_auroc.append(roc_auc(base[sel], labels[sel]))
            res.baseline_aupr.append(pr_auc(base[sel], labels[sel]))
    records = {
        k: (np.concatenate(v) if v else np.empty(0)) for k, v in cols.items()
    }
    return EvalReport(
        method,
        plan.scheme,
        sample.homogeneous,
        families,
        records,
        sample.row_universe.ids,
        sample.col_universe.ids,
        calibrations,
        dict(config_echo or {}),
    )


# report files --------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_report(report: EvalReport, outdir, config_hash: str) -> list[Path]:
    """Write summary.json, metrics.tsv, scores.tsv and curve TSVs.

    Every file starts with (or, for JSON, contains) the config hash. Output
    depends only on the report, so equal reports give identical bytes.
    """
    out = Path(outdir)
    (out / "curves").mkdir(parents=True, exist_ok=True)
    header = f"# config_hash={config_hash}\n"
    written = []

    summary = report.summary()
    summary = {"config_hash": config_hash, **summary}
    path = out / "summary.json"
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    written.append(path)

    path = out / "metrics.tsv"
    with open(path, "w") as fh:
        fh.write(header)
        for f in FAMILIES:
            res = report.families[f]
            for metric in ("auroc", "aupr"):
                fh.write(f"# family={f.value} metric={metric}\n")
                if not res.present:
                    fh.write("absent\n")
                    continue
                fh.write("split\tmethod\tbaseline\n")
                for i, (m, b) in enumerate(
                    zip(getattr(res, metric), getattr(res, "baseline_" + metric))
                ):
                    fh.write(f"{i}\t{_fmt(m)}\t{_fmt(b)}\n")
    written.append(path)

    path = out / "scores.tsv"
    rec = report.records
    with open(path, "w") as fh:
        fh.write(header)
        fh.write("repeat\tfold\trow_id\tcol_id\tfamily\tlabel\tscore\tbaseline\n")
        for i in range(len(rec["label"])):
            fh.write(
                f"{int(rec['repeat'][i])}\t{int(rec['fold'][i])}\t"
                f"{report.row_ids[int(rec['row'][i])]}\t{report.col_ids[int(rec['col'][i])]}\t"
                f"{family_from_code(rec['family'][i]).value}\t{int(rec['label'][i])}\t"
                f"{_fmt(rec['score'][i])}\t{_fmt(rec['baseline'][i])}\n"
            )
    written.append(path)

    for f in FAMILIES:
        for kind, curve in report.curves(f).items():
            path = out / "curves" / f"{f.value}_{kind}.tsv"
            xname, yname = ("fpr", "tpr") if kind == "roc" else ("recall", "precision")
            with open(path, "w") as fh:
                fh.write(header)
                fh.write(f"{xname}\t{yname}\n")
                for x, y in zip(curve.x, curve.y):
                    fh.write(f"{_fmt(x)}\t{_fmt(y)}\n")
            written.append(path)
    return written
