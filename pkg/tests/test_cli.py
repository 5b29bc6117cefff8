import numpy as np
import pytest

from pairtrees.cli import main


@pytest.fixture(scope="module")
def synth(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "block", "--out", str(root / "data"), "--n-r", "12", "--n-c", "10", "--blocks", "2"]) == 0
    return root


def _cfg(synth):
    return str(synth / "data" / "experiment.cfg")


def _rows(path):
    return [l.split("\t") for l in path.read_text().splitlines() if not l.startswith("#")]


def test_synth_outputs(synth):
    names = {p.name for p in (synth / "data").iterdir()}
    assert {"row_features.tsv", "col_features.tsv", "pairs.tsv", "experiment.cfg"} <= names


def test_synth_preferential(tmp_path):
    assert main(["synth", "preferential", "--out", str(tmp_path), "--n", "20", "--m", "2"]) == 0
    assert "homogeneous = true" in (tmp_path / "experiment.cfg").read_text()


def _snapshot(folder):
    return {p.relative_to(folder): p.read_bytes() for p in sorted(folder.rglob("*")) if p.is_file()}


def test_run_and_determinism(synth, capsys):
    out = synth / "r1"
    args = ["run", "--config", _cfg(synth), "--n-trees", "5", "--folds", "3", "--out", str(out)]
    assert main(args) == 0
    first = _snapshot(out)
    assert main(args) == 0
    assert _snapshot(out) == first
    text = (out / "summary.json").read_text()
    assert '"auroc_mean"' in text and '"aupr_mean"' in text
    assert "LSTS\tAUROC" in capsys.readouterr().out


def test_config_hash_in_every_file(synth):
    out = synth / "r1"
    for path in out.rglob("*.tsv"):
        assert path.read_text().startswith("# config_hash=")
    assert (out / "config.txt").read_text().startswith("# config_hash=")


def test_missing_feature_file(synth, tmp_path, capsys):
    code = main(["run", "--config", _cfg(synth), "--row-features", str(tmp_path / "gone.tsv"), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "gone.tsv" in capsys.readouterr().err


def test_bad_config_key(tmp_path, capsys):
    (tmp_path / "c.cfg").write_text("trees = 5\n")
    assert main(["run", "--config", str(tmp_path / "c.cfg")]) == 2
    assert "unknown config key" in capsys.readouterr().err


def test_fit_predict_perfect_fit(synth, tmp_path):
    model = tmp_path / "so.npz"
    assert main(["fit", "--config", _cfg(synth), "--method", "local", "--variant", "so", "--n-trees", "5", "--model", str(model)]) == 0
    pairs = synth / "data" / "pairs.tsv"
    out = tmp_path / "pred.tsv"
    assert main(["predict", "--model", str(model), "--pairs", str(pairs), "--out", str(out)]) == 0
    truth = {(r, c): float(y) for r, c, y in _rows(pairs)}
    pred = _rows(out)
    assert pred[0] == ["row_id", "col_id", "family", "probability"]
    assert len(pred) - 1 == len(truth)
    for r, c, fam, p in pred[1:]:
        assert fam == "TRAIN" and float(p) == truth[(r, c)]


def test_fit_predict_round_trip_matches_memory(synth, tmp_path):
    from pairtrees.cli import fit_model, load_data
    from pairtrees.config import load_config

    cfg = load_config(_cfg(synth)).updated(n_trees=4)
    fr, fc, sample = load_data(cfg)
    in_memory = fit_model(cfg, fr, fc, sample)
    model = tmp_path / "g.npz"
    assert main(["fit", "--config", _cfg(synth), "--n-trees", "4", "--model", str(model)]) == 0
    (tmp_path / "p.tsv").write_text("r0\tc0\nr5\tc9\n")
    assert main(["predict", "--model", str(model), "--pairs", str(tmp_path / "p.tsv"), "--out", str(tmp_path / "o.tsv")]) == 0
    got = [float(r[3]) for r in _rows(tmp_path / "o.tsv")[1:]]
    np.testing.assert_array_equal(got, in_memory.predict(fr, fc, ["r0", "r5"], ["c0", "c9"]))


def test_predict_tsts_with_new_nodes(synth, tmp_path):
    model = tmp_path / "g.npz"
    assert main(["fit", "--config", _cfg(synth), "--n-trees", "4", "--model", str(model)]) == 0
    (tmp_path / "new_r.tsv").write_text(
        "id\tblock0\tblock1\tnoise0\tnoise1\tnoise2\tnoise3\nq1\t1\t0\t0\t0\t0\t0\n"
    )
    (tmp_path / "new_c.tsv").write_text(
        "id\tblock0\tblock1\tnoise0\tnoise1\tnoise2\tnoise3\nk1\t1\t0\t0\t0\t0\t0\n"
    )
    (tmp_path / "p.tsv").write_text("q1\tk1\nq1\tc0\nr0\tk1\n")
    for kind in (["--method", "global"], ["--method", "local", "--variant", "so"], ["--method", "local", "--variant", "mo"]):
        assert main(["fit", "--config", _cfg(synth), "--n-trees", "4", "--model", str(model), *kind]) == 0
        code = main([
            "predict", "--model", str(model), "--pairs", str(tmp_path / "p.tsv"),
            "--row-features", str(tmp_path / "new_r.tsv"), "--col-features", str(tmp_path / "new_c.tsv"),
            "--out", str(tmp_path / "o.tsv"),
        ])
        assert code == 0
        rows = _rows(tmp_path / "o.tsv")[1:]
        assert [r[2] for r in rows] == ["TSTS", "TSLS", "LSTS"]
        assert all(0.0 <= float(r[3]) <= 1.0 for r in rows)


def test_predict_unknown_node(synth, tmp_path, capsys):
    model = tmp_path / "g.npz"
    assert main(["fit", "--config", _cfg(synth), "--n-trees", "2", "--model", str(model)]) == 0
    (tmp_path / "p.tsv").write_text("r0\tghost\n")
    out = tmp_path / "o.tsv"
    assert main(["predict", "--model", str(model), "--pairs", str(tmp_path / "p.tsv"), "--out", str(out)]) == 2
    assert not out.exists()
    assert "ghost" in capsys.readouterr().err


@pytest.mark.parametrize("kind, n_files", [(["--method", "global"], 1), (["--method", "local", "--variant", "mo"], 2), (["--method", "local", "--variant", "so"], 22)])
def test_importance_files(synth, tmp_path, kind, n_files):
    model = tmp_path / "m.npz"
    assert main(["fit", "--config", _cfg(synth), "--n-trees", "3", "--model", str(model), *kind]) == 0
    assert main(["importance", "--model", str(model), "--out", str(tmp_path / "imp")]) == 0
    files = sorted((tmp_path / "imp").glob("importance_*.tsv"))
    assert len(files) == n_files
    rows = _rows(files[0])
    scores = [float(r[2]) for r in rows[1:]]
    assert scores == sorted(scores, reverse=True)


def test_export_partition(synth, tmp_path):
    model = tmp_path / "m.npz"
    out = tmp_path / "part.tsv"
    assert main(["fit", "--config", _cfg(synth), "--n-trees", "2", "--model", str(model), "--method", "local", "--variant", "mo"]) == 0
    assert main(["export-partition", "--model", str(model), "--out", str(out)]) == 0
    rows = _rows(out)
    assert rows[0][:3] == ["tree", "leaf", "n_rows"]
    assert {r[0] for r in rows[1:]} == {"0", "1"}
    assert main(["fit", "--config", _cfg(synth), "--n-trees", "2", "--model", str(model), "--method", "local", "--variant", "so"]) == 0
    assert main(["export-partition", "--model", str(model), "--out", str(tmp_path / "x.tsv")]) == 2


def test_unreadable_model(tmp_path):
    (tmp_path / "m.npz").write_text("junk")
    assert main(["importance", "--model", str(tmp_path / "m.npz"), "--out", str(tmp_path)]) == 2


def test_help_lists_defaults(capsys):
    with pytest.raises(SystemExit):
        main(["run", "--help"])
    assert "n_trees = 100" in capsys.readouterr().out
