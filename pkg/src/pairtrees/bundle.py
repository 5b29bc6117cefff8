"""Model bundles: one ``.npz`` holding every tree array, JSON metadata, the
training pairs and the feature vectors of the training nodes."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .extra_trees import EnsembleModel, ForestConfig
from .global_model import GlobalModel, TrainMode
from .graph_data import FeatureTable, NodeUniverse, PairSample, Side
from .local_model import Calibration, LocalModel, MergeRule, SecondStepModel, SideModels, Variant

__all__ = ["ModelBundle", "save_bundle", "load_bundle"]

FORMAT = "pairtrees-bundle-1"


@dataclass(frozen=True, eq=False)
class ModelBundle:
    model: GlobalModel | LocalModel
    train: PairSample
    features_r: FeatureTable  # training row nodes only
    features_c: FeatureTable
    config: dict

    @property
    def kind(self) -> str:
        if isinstance(self.model, GlobalModel):
            return "global"
        return "local_" + self.model.variant.value


def _str_array(items) -> np.ndarray:
    return np.array(list(items), dtype=str) if len(items) else np.zeros(0, dtype="<U1")


def _side_meta(side: SideModels, prefix: str, arrays: dict) -> dict:
    meta = {"variant": side.variant.value, "owners": list(side.owners), "ensembles": []}
    for i, (_, ens) in enumerate(side.ensembles()):
        arrays.update(ens.to_arrays(f"{prefix}{i}/"))
        meta["ensembles"].append(ens.meta())
    return meta


def _side_from(meta: dict, prefix: str, arrays) -> SideModels:
    variant = Variant(meta["variant"])
    ensembles = [
        EnsembleModel.from_arrays(arrays, m, f"{prefix}{i}/") for i, m in enumerate(meta["ensembles"])
    ]
    if variant is Variant.MO:
        return SideModels(
            variant, ensemble=ensembles[0] if ensembles else None, output_ids=tuple(meta["owners"])
        )
    return SideModels(variant, models=dict(zip(meta["owners"], ensembles)))


def _ls_table(table: FeatureTable, ids, side: Side) -> FeatureTable:
    ids = tuple(ids)
    return FeatureTable(NodeUniverse(side, ids), table.vectors(ids), table.feature_names)


def save_bundle(
    path,
    model,
    train: PairSample,
    features_r: FeatureTable,
    features_c: FeatureTable | None = None,
    config: dict | None = None,
) -> Path:
    if features_c is None:
        features_c = features_r
    arrays: dict[str, np.ndarray] = {}
    ids_r, ids_c = train.row_universe.ids, train.col_universe.ids
    ls_r = [ids_r[i] for i in train.ls_rows()]
    ls_c = [ids_c[j] for j in train.ls_cols()]
    rows, cols = train.rows, train.cols
    arrays["train/row_ids"] = _str_array([ids_r[i] for i in rows])
    arrays["train/col_ids"] = _str_array([ids_c[j] for j in cols])
    arrays["train/labels"] = train.labels
    fr, fc = _ls_table(features_r, ls_r, Side.ROW), _ls_table(features_c, ls_c, Side.COL)
    arrays["feat_r/ids"], arrays["feat_r/values"] = _str_array(fr.ids), fr.values
    arrays["feat_c/ids"], arrays["feat_c/values"] = _str_array(fc.ids), fc.values
    meta = {
        "format": FORMAT,
        "homogeneous": train.homogeneous,
        "row_feature_names": list(features_r.feature_names),
        "col_feature_names": list(features_c.feature_names),
        "config": config or {},
    }
    if isinstance(model, GlobalModel):
        meta["kind"] = "global"
        meta["mode"] = model.mode.value
        arrays.update(model.ensemble.to_arrays("g/"))
        meta["ensemble"] = model.ensemble.meta()
    elif isinstance(model, LocalModel):
        meta["kind"] = "local"
        meta["variant"] = model.variant.value
        meta["merge"] = model.merge_rule.value
        meta["target_proportion"] = model.target_proportion
        meta["ls_r_ids"], meta["ls_c_ids"] = list(model.ls_r_ids), list(model.ls_c_ids)
        meta["forest"] = vars(model.config)
        meta["col_side"] = _side_meta(model.col_side, "l1c/", arrays)
        if not model.homogeneous:
            meta["row_side"] = _side_meta(model.row_side, "l1r/", arrays)
        sec = model.second
        if sec is not None:
            meta["second"] = {
                "row_side": _side_meta(sec.row_side, "l2r/", arrays),
                "col_side": None if model.homogeneous else _side_meta(sec.col_side, "l2c/", arrays),
                "row_calibration": None if sec.row_calibration is None else vars(sec.row_calibration),
                "col_calibration": None if sec.col_calibration is None else vars(sec.col_calibration),
            }
    else:
        raise ValidationError(f"cannot bundle {type(model).__name__}")
    arrays["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez_compressed(fh, **arrays)
    return path


def load_bundle(path) -> ModelBundle:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"model file not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as data:
            arrays = {k: data[k] for k in data.files}
        meta = json.loads(arrays["__meta__"].tobytes().decode())
    except (OSError, ValueError, KeyError) as exc:
        raise ValidationError(f"unreadable model file {path}: {exc}") from None
    if meta.get("format") != FORMAT:
        raise ValidationError(f"unreadable model file {path}: unknown format")
    homogeneous = bool(meta["homogeneous"])
    row_names = tuple(meta["row_feature_names"])
    col_names = tuple(meta["col_feature_names"])

    fr = FeatureTable(
        NodeUniverse(Side.ROW, tuple(arrays["feat_r/ids"].tolist())), arrays["feat_r/values"], row_names
    )
    if homogeneous:
        fc = fr
    else:
        fc = FeatureTable(
            NodeUniverse(Side.COL, tuple(arrays["feat_c/ids"].tolist())), arrays["feat_c/values"], col_names
        )
    triples = zip(
        arrays["train/row_ids"].tolist(), arrays["train/col_ids"].tolist(), arrays["train/labels"].tolist()
    )
    train = PairSample.from_triples(triples, fr.universe, fc.universe, homogeneous)

    if meta["kind"] == "global":
        ens = EnsembleModel.from_arrays(arrays, meta["ensemble"], "g/")
        model = GlobalModel(ens, homogeneous, TrainMode(meta["mode"]), row_names, col_names)
    else:
        col_side = _side_from(meta["col_side"], "l1c/", arrays)
        row_side = col_side if homogeneous else _side_from(meta["row_side"], "l1r/", arrays)
        second = None
        if "second" in meta:
            s = meta["second"]
            r2 = _side_from(s["row_side"], "l2r/", arrays)
            c2 = r2 if homogeneous else _side_from(s["col_side"], "l2c/", arrays)
            cal = [None if s[k] is None else Calibration(**s[k]) for k in ("row_calibration", "col_calibration")]
            second = SecondStepModel(r2, c2, *cal)
        model = LocalModel(
            Variant(meta["variant"]),
            homogeneous,
            MergeRule(meta["merge"]),
            col_side,
            row_side,
            tuple(meta["ls_r_ids"]),
            tuple(meta["ls_c_ids"]),
            float(meta["target_proportion"]),
            row_names,
            col_names,
            ForestConfig(**meta["forest"]),
            second,
        )
    return ModelBundle(model, train, fr, fc, meta["config"])
