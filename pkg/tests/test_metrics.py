import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_pr_auc, brute_roc_auc
from pairtrees.errors import ValidationError
from pairtrees.evaluation import pr_auc, pr_points, roc_auc, roc_points


class TestExamples:
    def test_roc(self):
        assert roc_auc([0.9, 0.8, 0.3], [1, 0, 1]) == pytest.approx(0.5)
        assert roc_auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
        assert roc_auc([0.4] * 6, [1, 0, 1, 0, 0, 0]) == 0.5

    def test_pr(self):
        assert pr_auc([0.9, 0.8, 0.3], [1, 0, 1]) == pytest.approx(0.5 * 1.0 + 0.5 * 2 / 3)
        assert pr_auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0

    def test_undefined_is_absent(self):
        assert roc_auc([0.1, 0.2], [1, 1]) is None
        assert roc_auc([0.1, 0.2], [0, 0]) is None
        assert pr_auc([0.1, 0.2], [0, 0]) is None
        assert pr_auc([0.1, 0.2], [1, 1]) == 1.0

    def test_input_errors(self):
        with pytest.raises(ValidationError):
            roc_auc([0.1, 0.2], [1])
        with pytest.raises(ValidationError):
            pr_auc([0.1, 0.2], [1, 2])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 200), st.sampled_from([2, 5, 50, None]))
def test_against_brute_force(seed, n, levels):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, n)
    labels[0], labels[1] = 0, 1
    scores = rng.random(n) if levels is None else rng.integers(0, levels, n) / levels
    assert abs(roc_auc(scores, labels) - brute_roc_auc(scores, labels)) <= 1e-12
    assert abs(pr_auc(scores, labels) - brute_pr_auc(scores, labels)) <= 1e-12


class TestCurves:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(2, 100))
    def test_roc_shape(self, seed, n):
        rng = np.random.default_rng(seed)
        y = rng.integers(0, 2, n)
        y[:2] = [0, 1]
        s = np.round(rng.random(n), 1)
        c = roc_points(s, y)
        assert (c.x[0], c.y[0]) == (0.0, 0.0) and (c.x[-1], c.y[-1]) == (1.0, 1.0)
        assert np.all(np.diff(c.x) >= 0) and np.all(np.diff(c.y) >= 0)
        assert np.trapezoid(c.y, c.x) == pytest.approx(c.area, abs=1e-12)
        assert 0 <= c.area <= 1

    def test_pr_shape(self, rng):
        y = rng.integers(0, 2, 80)
        s = rng.random(80)
        c = pr_points(s, y)
        assert c.x[0] == 0.0 and c.x[-1] == 1.0
        assert np.all(np.diff(c.x) >= 0) and np.all((c.y >= 0) & (c.y <= 1))
        # step sum over the curve reproduces the area
        assert np.sum(np.diff(c.x) * c.y[1:]) == pytest.approx(c.area, abs=1e-12)

    def test_curve_errors(self):
        with pytest.raises(ValidationError):
            roc_points([0.1, 0.2], [1, 1])
        with pytest.raises(ValidationError):
            pr_points([0.1, 0.2], [0, 0])


def test_random_guess_levels():
    # one draw has AUROC sd ~0.013 here, so the tolerance is applied to a 20-draw mean
    n, aurocs, auprs = 10_000, [], []
    y = np.zeros(n, int)
    y[: n // 20] = 1
    for seed in range(20):
        s = np.random.default_rng(seed).random(n)
        aurocs.append(roc_auc(s, y))
        auprs.append(pr_auc(s, y))
    assert abs(np.mean(aurocs) - 0.5) <= 0.02
    assert abs(np.mean(auprs) - 0.05) <= 0.02
