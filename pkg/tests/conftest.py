import numpy as np
import pytest

from pairtrees.graph_data import FeatureTable, NodeUniverse, PairSample, Side

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def record():
    """Record one acceptance line; the terminal summary prints them all."""

    def _record(name: str, ok: bool, detail: str = "") -> bool:
        _ACCEPTANCE.append((name, bool(ok), detail))
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
        return bool(ok)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


def make_tables(n_r, n_c, p_r, p_c, rng, integer=False):
    draw = (lambda shape: rng.integers(0, 3, shape).astype(float)) if integer else rng.standard_normal
    u_r = NodeUniverse(Side.ROW, tuple(f"r{i}" for i in range(n_r)))
    u_c = NodeUniverse(Side.COL, tuple(f"c{j}" for j in range(n_c)))
    fr = FeatureTable(u_r, draw((n_r, p_r)), tuple(f"a{i}" for i in range(p_r)))
    fc = FeatureTable(u_c, draw((n_c, p_c)), tuple(f"b{i}" for i in range(p_c)))
    return fr, fc


def complete_sample(fr, fc, Y):
    rows, cols = np.meshgrid(np.arange(Y.shape[0]), np.arange(Y.shape[1]), indexing="ij")
    return PairSample(fr.universe, fc.universe, rows.ravel(), cols.ravel(), np.asarray(Y).ravel())


def homogeneous_data(n, p, rng, density=0.3):
    u = NodeUniverse(Side.ROW, tuple(f"n{i}" for i in range(n)))
    feats = FeatureTable(u, rng.standard_normal((n, p)), tuple(f"f{i}" for i in range(p)))
    rows, cols = np.triu_indices(n, k=1)
    labels = (rng.random(len(rows)) < density).astype(np.uint8)
    return feats, PairSample(u, u, rows, cols, labels, homogeneous=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
