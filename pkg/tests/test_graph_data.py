import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pairtrees.errors import ValidationError
from pairtrees.graph_data import (
    FAMILIES,
    Family,
    FeatureTable,
    NodeUniverse,
    PairSample,
    Side,
    degree,
    degrees,
    load_feature_table,
    load_pair_sample,
    partition_families,
    synth_block_network,
    synth_preferential_network,
    write_feature_table,
    write_pair_sample,
)


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


@pytest.fixture
def abc():
    u_r = NodeUniverse(Side.ROW, ("a", "b", "c"))
    u_c = NodeUniverse(Side.COL, ("x", "y"))
    return u_r, u_c


class TestNodeUniverse:
    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValidationError, match="duplicate"):
            NodeUniverse(Side.ROW, ("a", "a"))

    def test_index_and_size(self, abc):
        u_r, _ = abc
        assert u_r.size == len(u_r.ids) == 3
        assert u_r.index("b") == 1
        with pytest.raises(ValidationError, match="unknown node"):
            u_r.index("zz")


class TestLoadFeatureTable:
    def test_three_nodes_two_features(self, tmp_path):
        path = _write(tmp_path, "f.tsv", "id\tf1\tf2\ng1\t1\t2\ng2\t3\t4\n# comment\n\ng3\t5\t6\n")
        table = load_feature_table(path)
        assert table.p == 2 and table.universe.size == 3
        assert table.ids == ("g1", "g2", "g3")
        np.testing.assert_array_equal(table.vectors(["g2"]), [[3.0, 4.0]])

    def test_duplicate_id_reports_line(self, tmp_path):
        path = _write(tmp_path, "f.tsv", "id\tf1\ng1\t1\ng2\t2\ng1\t3\n")
        with pytest.raises(ValidationError, match="duplicate node id 'g1' at line 4"):
            load_feature_table(path)

    @pytest.mark.parametrize("cell", ["NaN", "inf", "-inf"])
    def test_non_finite(self, tmp_path, cell):
        path = _write(tmp_path, "f.tsv", f"id\tf1\ng1\t{cell}\n")
        with pytest.raises(ValidationError, match="non-finite value"):
            load_feature_table(path)

    def test_non_numeric_and_ragged(self, tmp_path):
        with pytest.raises(ValidationError, match="non-numeric.*line 2"):
            load_feature_table(_write(tmp_path, "a.tsv", "id\tf1\ng1\tabc\n"))
        with pytest.raises(ValidationError, match="ragged.*line 3"):
            load_feature_table(_write(tmp_path, "b.tsv", "id\tf1\ng1\t1\ng2\t1\t2\n"))

    def test_empty_and_missing(self, tmp_path):
        with pytest.raises(ValidationError, match="empty"):
            load_feature_table(_write(tmp_path, "e.tsv", ""))
        with pytest.raises(ValidationError, match="empty"):
            load_feature_table(_write(tmp_path, "h.tsv", "id\tf1\n"))
        with pytest.raises(ValidationError, match="not found"):
            load_feature_table(tmp_path / "nope.tsv")

    def test_universe_reordering(self, tmp_path):
        u = NodeUniverse(Side.ROW, ("b", "a"))
        table = load_feature_table(_write(tmp_path, "f.tsv", "id\tf\na\t1\nb\t2\n"), universe=u)
        np.testing.assert_array_equal(table.values[:, 0], [2.0, 1.0])

    def test_round_trip(self, tmp_path, rng):
        u = NodeUniverse(Side.ROW, ("p", "q", "s"))
        table = FeatureTable(u, rng.standard_normal((3, 2)), ("u", "v"))
        write_feature_table(table, tmp_path / "t.tsv")
        back = load_feature_table(tmp_path / "t.tsv")
        assert back.ids == table.ids and back.feature_names == table.feature_names
        np.testing.assert_array_equal(back.values, table.values)

    def test_values_read_only(self, rng):
        u = NodeUniverse(Side.ROW, ("p",))
        table = FeatureTable(u, [[1.0]], ("u",))
        with pytest.raises(ValueError):
            table.values[0, 0] = 2.0


class TestLoadPairSample:
    def test_two_triples(self, tmp_path, abc):
        u_r, u_c = abc
        sample = load_pair_sample(_write(tmp_path, "p.tsv", "a\tx\t1\nb\tx\t0\n"), u_r, u_c)
        assert sample.pair_set() == {("a", "x", 1), ("b", "x", 0)}

    def test_header_skipped(self, tmp_path, abc):
        u_r, u_c = abc
        sample = load_pair_sample(
            _write(tmp_path, "p.tsv", "row\tcol\tlabel\na\tx\t1\n"), u_r, u_c
        )
        assert len(sample) == 1

    def test_homogeneous_mirror_dedup(self, tmp_path):
        u = NodeUniverse(Side.ROW, ("a", "b"))
        sample = load_pair_sample(_write(tmp_path, "p.tsv", "a\tb\t1\nb\ta\t1\n"), u, homogeneous=True)
        assert len(sample) == 1

    def test_homogeneous_conflict(self, tmp_path):
        u = NodeUniverse(Side.ROW, ("a", "b"))
        with pytest.raises(ValidationError, match="conflicting"):
            load_pair_sample(_write(tmp_path, "p.tsv", "a\tb\t1\nb\ta\t0\n"), u, homogeneous=True)

    @pytest.mark.parametrize(
        "text, message",
        [
            ("a\tx\t2\n", "outside"),
            ("a\tzz\t1\n", "unknown node"),
            ("a\tx\t1\na\tx\t0\n", "conflicting"),
            ("a\tx\n", "3 columns"),
        ],
    )
    def test_errors(self, tmp_path, abc, text, message):
        u_r, u_c = abc
        with pytest.raises(ValidationError, match=message):
            load_pair_sample(_write(tmp_path, "p.tsv", text), u_r, u_c)

    def test_self_pair(self, tmp_path):
        u = NodeUniverse(Side.ROW, ("a", "b"))
        with pytest.raises(ValidationError, match="self-pair"):
            load_pair_sample(_write(tmp_path, "p.tsv", "a\ta\t1\n"), u, homogeneous=True)

    def test_round_trip(self, tmp_path, abc):
        u_r, u_c = abc
        sample = PairSample.from_triples([("a", "x", 1), ("c", "y", 0)], u_r, u_c)
        write_pair_sample(sample, tmp_path / "p.tsv")
        assert load_pair_sample(tmp_path / "p.tsv", u_r, u_c).pair_set() == sample.pair_set()


_triples = st.lists(
    st.tuples(st.sampled_from("abcde"), st.sampled_from("abcde"), st.integers(0, 1)),
    min_size=1,
    max_size=20,
)


@settings(max_examples=60, deadline=None)
@given(_triples)
def test_homogeneous_load_invariant_under_mirroring(triples):
    u = NodeUniverse(Side.ROW, tuple("abcde"))
    # drop self-pairs and resolve conflicts by first occurrence
    seen = {}
    for a, b, y in triples:
        if a != b:
            seen.setdefault(frozenset((a, b)), (a, b, y))
    if not seen:
        return
    clean = list(seen.values())
    mirrored = clean + [(b, a, y) for a, b, y in clean]
    one = PairSample.from_triples(clean, u, homogeneous=True)
    two = PairSample.from_triples(mirrored, u, homogeneous=True)
    assert one.pair_set() == two.pair_set()


class TestFamilies:
    def test_example(self, abc):
        u_r, u_c = abc
        part = partition_families(PairSample.from_triples([("a", "x", 1)], u_r, u_c))
        assert part.ls_r == {"a"} and part.ts_r == {"b", "c"}
        assert part.ls_c == {"x"} and part.ts_c == {"y"}
        assert part.family_of("b", "y") is Family.TSTS
        assert part.family_of("a", "y") is Family.LSTS
        assert part.family_of("b", "x") is Family.TSLS
        assert part.family_of("a", "x") is Family.TRAIN

    @settings(max_examples=50, deadline=None)
    @given(st.data())
    def test_partition_properties(self, data):
        n_r = data.draw(st.integers(1, 6))
        n_c = data.draw(st.integers(1, 6))
        u_r = NodeUniverse(Side.ROW, tuple(f"r{i}" for i in range(n_r)))
        u_c = NodeUniverse(Side.COL, tuple(f"c{j}" for j in range(n_c)))
        cells = data.draw(
            st.lists(st.tuples(st.integers(0, n_r - 1), st.integers(0, n_c - 1)), min_size=1, unique=True)
        )
        sample = PairSample.from_triples([(u_r.ids[i], u_c.ids[j], 1) for i, j in cells], u_r, u_c)
        part = partition_families(sample)
        assert part.ls_r | part.ts_r == set(u_r.ids) and not part.ls_r & part.ts_r
        assert part.ls_c | part.ts_c == set(u_c.ids) and not part.ls_c & part.ts_c
        rows, cols = np.meshgrid(np.arange(n_r), np.arange(n_c), indexing="ij")
        codes = part.family_codes(rows.ravel(), cols.ravel())
        train = {(i, j) for i, j in cells}
        for i, j, code in zip(rows.ravel(), cols.ravel(), codes):
            if (i, j) in train:
                assert code == 4
            else:
                expected = {(True, True): 0, (True, False): 1, (False, True): 2, (False, False): 3}
                assert code == expected[(u_r.ids[i] in part.ls_r, u_c.ids[j] in part.ls_c)]

    def test_homogeneous_merges_lsts_tsls(self):
        u = NodeUniverse(Side.ROW, ("a", "b", "c", "d"))
        part = partition_families(PairSample.from_triples([("a", "b", 1)], u, homogeneous=True))
        assert part.family_of("a", "c") is part.family_of("c", "a") is Family.LSTS
        assert part.family_of("c", "d") is Family.TSTS
        assert part.family_of("b", "a") is Family.TRAIN

    def test_empty_sample_rejected(self, abc):
        u_r, u_c = abc
        with pytest.raises(ValidationError):
            partition_families(PairSample(u_r, u_c, [], [], []))


class TestDegree:
    def test_examples(self, abc):
        u_r, u_c = abc
        sample = PairSample.from_triples([("a", "x", 1), ("a", "y", 1), ("b", "x", 0)], u_r, u_c)
        assert degree(sample, "a", Side.ROW) == 2
        assert degree(sample, "b", Side.ROW) == 0
        with pytest.raises(ValidationError, match="not in the learning sample"):
            degree(sample, "c", Side.ROW)

    def test_sum_equals_positives(self, rng):
        fr, fc, sample = synth_block_network(12, 9, 3, 0.2, 4)
        d_r, d_c = degrees(sample)
        assert d_r.sum() == d_c.sum() == sample.n_positive


class TestSynthetic:
    def test_block_noiseless(self):
        fr, fc, sample = synth_block_network(20, 20, 2, 0.0, 3)
        assert len(sample) == 400 and sample.is_complete()
        adj = sample.adjacency().labels
        truth = np.kron(np.eye(2), np.ones((10, 10)))
        np.testing.assert_array_equal(adj, truth)

    def test_block_noise_rate(self):
        _, _, clean = synth_block_network(60, 60, 3, 0.0, 8)
        _, _, noisy = synth_block_network(60, 60, 3, 0.1, 8)
        flips = np.mean(clean.labels != noisy.labels)
        # 3600 flips at p=0.1: sd = 0.005, allow 4 sd
        assert abs(flips - 0.1) < 0.02

    def test_block_determinism(self):
        a = synth_block_network(10, 8, 2, 0.1, 5)
        b = synth_block_network(10, 8, 2, 0.1, 5)
        np.testing.assert_array_equal(a[0].values, b[0].values)
        np.testing.assert_array_equal(a[1].values, b[1].values)
        assert a[2].pair_set() == b[2].pair_set()

    def test_block_errors(self):
        with pytest.raises(ValidationError):
            synth_block_network(3, 3, 4, 0.0, 0)
        with pytest.raises(ValidationError):
            synth_block_network(10, 10, 2, 0.5, 0)

    def test_preferential_edges(self):
        sample = synth_preferential_network(50, 2, 1)
        assert sample.n_positive == 96
        assert len(sample) == 50 * 49 // 2 and sample.is_complete()
        d, _ = degrees(sample)
        assert d.max() >= d.mean()
        again = synth_preferential_network(50, 2, 1)
        np.testing.assert_array_equal(sample.labels, again.labels)

    def test_preferential_errors(self):
        with pytest.raises(ValidationError):
            synth_preferential_network(3, 3, 0)


class TestAdjacency:
    def test_homogeneous_symmetric(self, rng):
        u = NodeUniverse(Side.ROW, ("a", "b", "c"))
        sample = PairSample.from_triples([("a", "b", 1), ("a", "c", 0), ("c", "b", 1)], u, homogeneous=True)
        adj = sample.adjacency().labels
        np.testing.assert_array_equal(adj, adj.T)
        assert adj.trace() == 0 and adj.sum() == 4

    def test_incomplete_rejected(self, abc):
        u_r, u_c = abc
        sample = PairSample.from_triples([("a", "x", 1), ("b", "y", 0)], u_r, u_c)
        assert not sample.is_complete()
        with pytest.raises(ValidationError):
            sample.adjacency()


def test_families_constant():
    assert [f.value for f in FAMILIES] == ["LSLS", "LSTS", "TSLS", "TSTS"]
