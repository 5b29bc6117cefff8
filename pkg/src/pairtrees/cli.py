"""Command-line front end.

Exit codes: 0 success, 1 runtime failure, 2 invalid input.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .bundle import load_bundle, save_bundle
from .config import DEFAULTS_HELP, ExperimentConfig, load_config
from .errors import ValidationError
from .evaluation import WORKERS_ENV, make_folds, run_experiment, write_report
from .global_model import GlobalModel, fit_global
from .graph_data import (
    FamilyPartition,
    FeatureTable,
    NodeUniverse,
    PairSample,
    Side,
    load_feature_table,
    load_pair_sample,
    synth_block_network,
    synth_preferential_network,
    write_feature_table,
    write_pair_sample,
)
from .interpret import export_partition, model_importances, write_partition, write_ranking
from .local_model import LocalModel, fit_local, fit_second_step

__all__ = ["main", "build_parser"]


# data loading ----------------------------------------------------------------


def load_data(cfg: ExperimentConfig):
    """Feature tables and pair sample named by a config."""
    if not cfg.pairs or not cfg.row_features:
        raise ValidationError("config needs 'pairs' and 'row_features'")
    fr = load_feature_table(cfg.row_features, side=Side.ROW)
    if cfg.homogeneous:
        fc = fr
        sample = load_pair_sample(cfg.pairs, fr.universe, homogeneous=True)
    else:
        if not cfg.col_features:
            raise ValidationError("bipartite config needs 'col_features'")
        fc = load_feature_table(cfg.col_features, side=Side.COL)
        sample = load_pair_sample(cfg.pairs, fr.universe, fc.universe)
    return fr, fc, sample


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {k: getattr(args, k, None) for k in ExperimentConfig.__dataclass_fields__}
    if getattr(args, "out", None):
        overrides["output"] = args.out
    return cfg.updated(**overrides)


def _header(cfg_hash: str) -> str:
    return f"# config_hash={cfg_hash}\n"


# commands --------------------------------------------------------------------


def cmd_run(args) -> int:
    cfg = _config(args)
    fr, fc, sample = load_data(cfg)
    plan = make_folds(cfg.scheme, sample, cfg.folds, cfg.repeats, cfg.seed, cfg.grid)
    report = run_experiment(
        sample, fr, fc, cfg.eval_method, plan, cfg.forest(), cfg.merge,
        config_echo=cfg.to_dict(),
    )
    write_report(report, cfg.output, cfg.config_hash())
    (Path(cfg.output) / "config.txt").write_text(_header(cfg.config_hash()) + cfg.to_text())
    for fam, res in report.summary()["families"].items():
        if res["status"] == "absent":
            print(f"{fam}\tabsent")
        else:
            print(f"{fam}\tAUROC {_f(res['auroc_mean'])}\tAUPR {_f(res['aupr_mean'])}")
    return 0


def _f(v) -> str:
    return "NA" if v is None else f"{v:.4f}"


def fit_model(cfg: ExperimentConfig, fr, fc, sample):
    if cfg.method == "global":
        return fit_global(sample, fr, fc, cfg.forest())
    return fit_local(sample, fr, fc, cfg.forest(), cfg.variant, cfg.merge)


def cmd_fit(args) -> int:
    cfg = _config(args)
    fr, fc, sample = load_data(cfg)
    model = fit_model(cfg, fr, fc, sample)
    save_bundle(args.model, model, sample, fr, fc, cfg.to_dict())
    print(f"wrote {args.model} ({model.n_ensembles} ensembles)")
    return 0


def _merged_table(stored: FeatureTable, extra: FeatureTable | None, side: Side) -> FeatureTable:
    """Training-node features, extended (and overridden) by a user table."""
    if extra is None:
        return stored
    if extra.feature_names != stored.feature_names:
        raise ValidationError("feature table columns differ from the model's features")
    ids = list(extra.ids) + [n for n in stored.ids if n not in set(extra.ids)]
    values = np.vstack([extra.values, stored.vectors([n for n in stored.ids if n not in set(extra.ids)])])
    return FeatureTable(NodeUniverse(side, tuple(ids)), values, stored.feature_names)


def _read_pairs(path):
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"pair file not found: {path}")
    pairs = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        cells = line.split("\t")
        if len(cells) < 2:
            raise ValidationError(f"{path}:{lineno}: expected row_id<TAB>col_id")
        if lineno == 1 and cells[:2] == ["row_id", "col_id"]:
            continue
        pairs.append((cells[0], cells[1]))
    if not pairs:
        raise ValidationError(f"no pairs in {path}")
    return pairs


def cmd_predict(args) -> int:
    bundle = load_bundle(args.model)
    model = bundle.model
    homogeneous = bundle.train.homogeneous
    extra_r = load_feature_table(args.row_features, side=Side.ROW) if args.row_features else None
    extra_c = None
    if not homogeneous and args.col_features:
        extra_c = load_feature_table(args.col_features, side=Side.COL)
    fr = _merged_table(bundle.features_r, extra_r, Side.ROW)
    fc = fr if homogeneous else _merged_table(bundle.features_c, extra_c, Side.COL)
    pairs = _read_pairs(args.pairs)
    rows, cols = [p[0] for p in pairs], [p[1] for p in pairs]
    for ids, table in ((rows, fr), (cols, fc)):
        missing = [n for n in dict.fromkeys(ids) if n not in table.universe]
        if missing:
            raise ValidationError(f"no features for node {missing[0]!r}")
    part = FamilyPartition(
        fr.universe, fc.universe,
        np.isin(np.array(fr.ids, dtype=object), list(bundle.features_r.ids)),
        np.isin(np.array(fc.ids, dtype=object), list(bundle.features_c.ids)),
        homogeneous,
        frozenset(
            zip(fr.universe.indices([r for r, _, _ in bundle.train.triples()]).tolist(),
                fc.universe.indices([c for _, c, _ in bundle.train.triples()]).tolist())
        ),
    )
    fam = [part.family_of(r, c).value for r, c in pairs]
    if isinstance(model, LocalModel) and "TSTS" in fam and model.second is None:
        ts = [(r, c) for (r, c), f in zip(pairs, fam) if f == "TSTS"]
        ts_r = sorted({r for r, _ in ts} | ({c for _, c in ts} if homogeneous else set()))
        ts_c = sorted({c for _, c in ts})
        model = fit_second_step(model, fr, fc, ts_r, ts_c)
    proba = model.predict(fr, fc, rows, cols)
    cfg_hash = ExperimentConfig(**bundle.config).config_hash() if bundle.config else "none"
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        fh.write(_header(cfg_hash))
        fh.write("row_id\tcol_id\tfamily\tprobability\n")
        for (r, c), f, p in zip(pairs, fam, proba):
            fh.write(f"{r}\t{c}\t{f}\t{float(p)!r}\n")
    print(f"wrote {len(pairs)} predictions to {out}")
    return 0


def _bundle_hash(bundle) -> str:
    return ExperimentConfig(**bundle.config).config_hash() if bundle.config else "none"


def cmd_importance(args) -> int:
    bundle = load_bundle(args.model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rankings = model_importances(bundle.model)
    for key, ranking in rankings.items():
        write_ranking(ranking, out / f"importance_{key}.tsv", _header(_bundle_hash(bundle)))
    print(f"wrote {len(rankings)} ranking file(s) to {out}")
    return 0


def cmd_export_partition(args) -> int:
    bundle = load_bundle(args.model)
    export = export_partition(
        bundle.model, bundle.train, bundle.features_r, bundle.features_c, args.trees
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_partition(export, out, _header(_bundle_hash(bundle)))
    print(f"wrote {len(export.records)} cells to {out}")
    return 0


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "block":
        fr, fc, sample = synth_block_network(args.n_r, args.n_c, args.blocks, args.noise, args.seed)
        write_feature_table(fr, out / "row_features.tsv")
        write_feature_table(fc, out / "col_features.tsv")
        write_pair_sample(sample, out / "pairs.tsv")
        cfg = ExperimentConfig("pairs.tsv", "row_features.tsv", "col_features.tsv", seed=args.seed)
    else:
        sample = synth_preferential_network(args.n, args.m, args.seed)
        # the graph carries no node attributes: write uninformative features
        rng = np.random.default_rng(args.seed)
        names = tuple(f"noise{j}" for j in range(4))
        fr = FeatureTable(sample.row_universe, rng.standard_normal((args.n, 4)), names)
        write_feature_table(fr, out / "features.tsv")
        write_pair_sample(sample, out / "pairs.tsv")
        cfg = ExperimentConfig("pairs.tsv", "features.tsv", homogeneous=True, seed=args.seed)
    cfg = cfg.updated(output="results", folds=5, repeats=1)
    (out / "experiment.cfg").write_text(cfg.to_text())
    print(f"wrote synthetic {args.kind} network to {out}")
    return 0


# parser ----------------------------------------------------------------------


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    g = p.add_argument_group("config overrides")
    g.add_argument("--pairs")
    g.add_argument("--row-features", dest="row_features")
    g.add_argument("--col-features", dest="col_features")
    g.add_argument("--homogeneous", action="store_const", const=True, default=None)
    g.add_argument("--method", choices=["global", "local"])
    g.add_argument("--variant", choices=["so", "mo"])
    g.add_argument("--n-trees", dest="n_trees", type=int)
    g.add_argument("--k-features", dest="k_features", help="integer or 'auto'")
    g.add_argument("--n-min", dest="n_min", type=int)
    g.add_argument("--bootstrap", action="store_const", const=True, default=None)
    g.add_argument("--scheme", choices=["nodes", "pairs"])
    g.add_argument("--folds", type=int)
    g.add_argument("--repeats", type=int)
    g.add_argument("--grid", action="store_const", const=True, default=None,
                   help="cross every row fold with every column fold")
    g.add_argument("--seed", type=int)
    g.add_argument("--merge", choices=["mean", "min", "max", "product"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pairtrees",
        description="Supervised network inference with extremely randomized trees.",
        epilog=f"Config defaults:\n{DEFAULTS_HELP}\n\nWorker processes: ${WORKERS_ENV} (default 1).",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="cross-validated evaluation", epilog=DEFAULTS_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_config_args(p)
    p.add_argument("--out", help="output folder (config key 'output')")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fit", help="fit on all pairs and write a model bundle")
    _add_config_args(p)
    p.add_argument("--model", required=True, help="bundle path (.npz)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="score pairs with a model bundle")
    p.add_argument("--model", required=True)
    p.add_argument("--pairs", required=True, help="TSV of row_id, col_id")
    p.add_argument("--row-features", dest="row_features", help="features of new row nodes")
    p.add_argument("--col-features", dest="col_features", help="features of new column nodes")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("importance", help="write feature rankings")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="output folder")
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("export-partition", help="write leaf partitions of the training pairs")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trees", type=int, default=None, help="only the first N trees")
    p.set_defaults(func=cmd_export_partition)

    p = sub.add_parser("synth", help="generate a synthetic dataset and config")
    p.add_argument("kind", choices=["block", "preferential"])
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-r", dest="n_r", type=int, default=40)
    p.add_argument("--n-c", dest="n_c", type=int, default=40)
    p.add_argument("--blocks", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--m", type=int, default=3)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
