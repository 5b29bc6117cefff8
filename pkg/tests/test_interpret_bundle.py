import numpy as np
import pytest

from conftest import complete_sample, homogeneous_data, make_tables
from pairtrees.bundle import load_bundle, save_bundle
from pairtrees.errors import UnsupportedError, ValidationError
from pairtrees.extra_trees import ForestConfig, trees_equal
from pairtrees.global_model import fit_global
from pairtrees.graph_data import synth_block_network
from pairtrees.interpret import export_partition, leaf_rules, model_importances
from pairtrees.local_model import fit_local, fit_second_step

CFG = ForestConfig(n_trees=6, seed=2)


@pytest.fixture(scope="module")
def data():
    return synth_block_network(12, 10, 2, 0.0, 3)


def _all_pairs(fr, fc):
    return [r for r in fr.ids for _ in fc.ids], [c for _ in fr.ids for c in fc.ids]


class TestBundle:
    @pytest.mark.parametrize("kind", ["global", "so", "mo"])
    def test_round_trip_exact(self, data, tmp_path, kind):
        fr, fc, sample = data
        train = sample.subset((sample.rows < 9) & (sample.cols < 8))
        if kind == "global":
            model = fit_global(train, fr, fc, CFG)
        else:
            model = fit_local(train, fr, fc, CFG, kind)
            model = fit_second_step(model, fr, fc, ["r9", "r10", "r11"], ["c8", "c9"])
        save_bundle(tmp_path / "m.npz", model, train, fr, fc, {"seed": 2})
        bundle = load_bundle(tmp_path / "m.npz")
        assert bundle.train.pair_set() == train.pair_set()
        assert bundle.config == {"seed": 2}
        np.testing.assert_array_equal(bundle.features_r.vectors(["r3"]), fr.vectors(["r3"]))
        rows, cols = _all_pairs(fr, fc)
        np.testing.assert_array_equal(
            bundle.model.predict(fr, fc, rows, cols), model.predict(fr, fc, rows, cols)
        )
        assert bundle.model.n_ensembles == model.n_ensembles

    def test_homogeneous_round_trip(self, rng, tmp_path):
        feats, sample = homogeneous_data(12, 2, rng)
        train = sample.subset((sample.rows < 9) & (sample.cols < 9))
        model = fit_second_step(fit_local(train, feats, None, CFG, "so"), feats, None, ["n9", "n10"])
        save_bundle(tmp_path / "h.npz", model, train, feats)
        back = load_bundle(tmp_path / "h.npz").model
        ids = list(feats.ids)
        a = ids * len(ids)
        b = [x for x in ids for _ in ids]
        # n11 has no second-step model
        keep = [i for i in range(len(a)) if a[i] != b[i] and "n11" not in (a[i], b[i])]
        a, b = [a[i] for i in keep], [b[i] for i in keep]
        np.testing.assert_array_equal(back.predict(feats, None, a, b), model.predict(feats, None, a, b))

    def test_unreadable(self, tmp_path):
        (tmp_path / "bad.npz").write_bytes(b"not a zip")
        with pytest.raises(ValidationError, match="unreadable"):
            load_bundle(tmp_path / "bad.npz")
        with pytest.raises(ValidationError, match="not found"):
            load_bundle(tmp_path / "missing.npz")


class TestImportances:
    def test_counts(self, data):
        fr, fc, sample = data
        small = sample.subset((sample.rows < 4) & (sample.cols < 3))
        assert len(model_importances(fit_global(sample, fr, fc, CFG))) == 1
        assert set(model_importances(fit_local(sample, fr, fc, CFG, "mo"))) == {"row_features", "col_features"}
        assert len(model_importances(fit_local(small, fr, fc, CFG, "so"))) == 7

    def test_global_block_features_on_top(self):
        fr, fc, sample = synth_block_network(30, 30, 3, 0.0, 1)
        ranking = model_importances(fit_global(sample, fr, fc, ForestConfig(n_trees=30)))["global"]
        top = [name for name, _ in ranking.ranked()[:6]]
        assert all("block" in name for name in top)


class TestPartition:
    def test_global_leaves_partition_training_pairs(self, data):
        fr, fc, sample = data
        model = fit_global(sample, fr, fc, CFG)
        export = export_partition(model, sample, fr, fc, trees=3)
        assert "contiguous" in export.note
        names = export.feature_names
        for t in range(3):
            cells = [r for r in export.records if r.tree == t]
            pairs = [p for r in cells for p in r.pairs]
            assert len(pairs) == len(set(pairs)) == len(sample)
            tree = model.ensemble.trees[t]
            for cell in cells:
                r, c = cell.pairs[0]
                x = np.concatenate([fr.vectors([r])[0], fc.vectors([c])[0]])
                assert tree.decision_path(x) == list(cell.rule)
                assert cell.rule == leaf_rules(tree)[cell.leaf]
        assert len(names) == fr.p + fc.p

    def test_mo_checkerboard_and_purity(self, data):
        fr, fc, sample = data
        model = fit_local(sample, fr, fc, CFG, "mo")
        export = export_partition(model, sample, fr, fc)
        for t in range(CFG.n_trees):
            cells = [r for r in export.records if r.tree == t]
            covered = {(a, b) for cell in cells for a in cell.rows for b in cell.cols}
            assert len(covered) == sum(len(c.rows) * len(c.cols) for c in cells) == len(sample)
            n_row_leaves = len({c.leaf[0] for c in cells})
            n_col_leaves = len({c.leaf[1] for c in cells})
            assert len(cells) == n_row_leaves * n_col_leaves
        # noiseless block data: every block is pure
        assert all(cell.purity == 1.0 for cell in export.records)

    def test_mo_two_leaves_each_gives_four_blocks(self):
        fr, fc, sample = synth_block_network(6, 6, 2, 0.0, 0, n_noise_features=0, feature_sd=0.0)
        model = fit_local(sample, fr, fc, ForestConfig(n_trees=1, k_features=1), "mo")
        export = export_partition(model, sample, fr, fc)
        assert len(export.records) == 4
        assert sum(len(c.rows) * len(c.cols) for c in export.records) == 36

    def test_mo_rule_replay(self, data):
        fr, fc, sample = data
        model = fit_local(sample, fr, fc, CFG, "mo")
        export = export_partition(model, sample, fr, fc, trees=1)
        p_r = fr.p
        for cell in export.records:
            x = np.concatenate([fr.vectors([cell.rows[0]])[0], fc.vectors([cell.cols[0]])[0]])
            for f, t, left in cell.rule:
                assert (x[f] < t) == left

    def test_so_unsupported(self, data):
        fr, fc, sample = data
        with pytest.raises(UnsupportedError):
            export_partition(fit_local(sample, fr, fc, CFG, "so"), sample, fr, fc)
