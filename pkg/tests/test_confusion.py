import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scoreloss.confusion import (
    LabeledBatch,
    classical_cm,
    classical_cm_many,
    expected_cm,
    expected_cm_gradient,
)
from scoreloss.distributions import cdf, raised_cosine, sample, uniform

DISTS = [uniform(), raised_cosine(0.5, 0.1), raised_cosine(0.3, 0.3), raised_cosine(0.5, 0.2)]


@st.composite
def batches(draw, max_n=40):
    n = draw(st.integers(1, max_n))
    preds = draw(st.lists(st.floats(0, 1), min_size=n, max_size=n))
    labels = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    return LabeledBatch(preds, labels)


def loop_cm(preds, labels, tau):
    tn = fp = fn = tp = 0
    for p, y in zip(preds, labels):
        positive = p > tau
        if y == 1 and positive:
            tp += 1
        elif y == 1:
            fn += 1
        elif positive:
            fp += 1
        else:
            tn += 1
    return tn, fp, fn, tp


class TestLabeledBatch:
    def test_counts(self):
        b = LabeledBatch([0.1, 0.2, 0.9], [0, 1, 1])
        assert (b.n, b.n_pos, b.n_neg) == (3, 2, 1)

    @pytest.mark.parametrize(
        "preds,labels",
        [([], []), ([0.1, 0.2], [1]), ([1.5], [1]), ([0.3], [2]), ([float("nan")], [0])],
    )
    def test_invalid(self, preds, labels):
        with pytest.raises(ValueError):
            LabeledBatch(preds, labels)

    def test_immutable_arrays(self):
        b = LabeledBatch([0.1, 0.2], [0, 1])
        with pytest.raises(ValueError):
            b.predictions[0] = 0.5


class TestClassical:
    def test_separated_pair(self):
        cm = classical_cm(LabeledBatch([0.2, 0.8], [0, 1]), 0.5)
        assert (cm.tn, cm.fp, cm.fn, cm.tp) == (1, 0, 0, 1)

    def test_one_false_positive(self):
        cm = classical_cm(LabeledBatch([0.9, 0.9], [0, 1]), 0.5)
        assert (cm.tn, cm.fp, cm.fn, cm.tp) == (0, 1, 0, 1)

    def test_tie_goes_negative(self):
        cm = classical_cm(LabeledBatch([0.5, 0.5], [0, 1]), 0.5)
        assert (cm.tn, cm.fp, cm.fn, cm.tp) == (1, 0, 1, 0)

    def test_loop_oracle(self, rng):
        preds, labels = rng.random(20), rng.integers(0, 2, 20)
        cm = classical_cm(LabeledBatch(preds, labels), 0.3)
        assert (cm.tn, cm.fp, cm.fn, cm.tp) == loop_cm(preds, labels, 0.3)

    @pytest.mark.parametrize("tau", [0.0, 1.0, -0.1, 1.1])
    def test_tau_domain(self, tau):
        with pytest.raises(ValueError):
            classical_cm(LabeledBatch([0.5], [1]), tau)

    @given(batches(), st.lists(st.floats(0.001, 0.999), min_size=1, max_size=20))
    def test_many_matches_single(self, b, taus):
        many = classical_cm_many(b, taus)
        for row, t in zip(many, taus):
            assert tuple(row) == loop_cm(b.predictions, b.labels, t)

    @given(batches(), st.floats(0.001, 0.999))
    def test_row_sums(self, b, tau):
        cm = classical_cm(b, tau)
        assert cm.tn + cm.fp == b.n_neg
        assert cm.fn + cm.tp == b.n_pos
        assert cm.inf_norm() == max(b.n_neg, b.n_pos)


class TestExpected:
    def test_uniform_single(self):
        cm = expected_cm(LabeledBatch([0.3], [1]), uniform())
        assert cm.as_array() == pytest.approx([0.0, 0.0, 0.7, 0.3], abs=1e-15)

    def test_saturation_at_support_edges(self):
        cm = expected_cm(LabeledBatch([0.3, 0.7], [0, 1]), raised_cosine(0.5, 0.2))
        assert cm.tp == 1.0
        assert cm.tn == 1.0

    def test_explicit_sum_oracle(self, rng):
        preds, labels = rng.random(30), rng.integers(0, 2, 30)
        d = raised_cosine(0.4, 0.3)
        F = [cdf(d, float(p)) for p in preds]
        tn = sum((1 - y) * (1 - f) for y, f in zip(labels, F))
        tp = sum(y * f for y, f in zip(labels, F))
        cm = expected_cm(LabeledBatch(preds, labels), d)
        assert cm.tn == pytest.approx(tn, abs=1e-12)
        assert cm.tp == pytest.approx(tp, abs=1e-12)

    @pytest.mark.parametrize("dist", DISTS)
    def test_monte_carlo_identity(self, dist, rng):
        b = LabeledBatch(rng.random(25), rng.integers(0, 2, 25))
        cms = classical_cm_many(b, sample(dist, rng, 100_000))
        mean = cms.mean(axis=0)
        se = cms.std(axis=0, ddof=1) / np.sqrt(cms.shape[0])
        target = expected_cm(b, dist).as_array()
        assert np.all(np.abs(mean - target) <= 3 * se + 1e-12)

    @given(batches(max_n=200), st.sampled_from(DISTS))
    def test_row_sums_preserved(self, b, dist):
        cm = expected_cm(b, dist)
        assert abs(cm.tn + cm.fp - b.n_neg) < 1e-9
        assert abs(cm.fn + cm.tp - b.n_pos) < 1e-9

    def test_row_sums_large_batch(self, rng):
        b = LabeledBatch(rng.random(200_000), rng.integers(0, 2, 200_000))
        cm = expected_cm(b, raised_cosine(0.5, 0.3))
        assert abs(cm.tn + cm.fp - b.n_neg) < 1e-9
        assert abs(cm.fn + cm.tp - b.n_pos) < 1e-9

    @given(st.lists(st.sampled_from([0.0, 1.0]), min_size=1, max_size=20), st.data())
    def test_degenerate_certainty(self, preds, data):
        labels = data.draw(st.lists(st.integers(0, 1), min_size=len(preds), max_size=len(preds)))
        b = LabeledBatch(preds, labels)
        exp = expected_cm(b, raised_cosine(0.5, 0.2)).as_array()
        for tau in (0.2, 0.5, 0.9):
            assert np.array_equal(exp, classical_cm(b, tau).as_array())

    @given(batches(max_n=15), st.sampled_from(DISTS), st.data())
    def test_monotone_in_one_prediction(self, b, dist, data):
        i = data.draw(st.integers(0, b.n - 1))
        bump = data.draw(st.floats(0, 1))
        preds = b.predictions.copy()
        preds[i] = preds[i] + bump * (1 - preds[i])
        before, after = expected_cm(b, dist), expected_cm(b.with_predictions(preds), dist)
        if b.labels[i] == 1:
            assert after.tp >= before.tp
        else:
            assert after.fp >= before.fp


class TestGradient:
    def test_uniform_positive(self):
        g = expected_cm_gradient(LabeledBatch([0.3], [1]), uniform())
        assert g[0].tolist() == [0.0, 0.0, -1.0, 1.0]

    def test_raised_cosine_negative_peak(self):
        g = expected_cm_gradient(LabeledBatch([0.5], [0]), raised_cosine(0.5, 0.2))
        assert g[0] == pytest.approx([-5.0, 5.0, 0.0, 0.0])

    @pytest.mark.parametrize("dist", DISTS)
    def test_finite_differences(self, dist, rng):
        b = LabeledBatch(rng.uniform(0.05, 0.95, 12), rng.integers(0, 2, 12))
        g = expected_cm_gradient(b, dist)
        h = 1e-6
        for i in range(b.n):
            up, down = b.predictions.copy(), b.predictions.copy()
            up[i] += h
            down[i] -= h
            fd = (expected_cm(b.with_predictions(up), dist).as_array() - expected_cm(b.with_predictions(down), dist).as_array()) / (2 * h)
            scale = np.maximum(np.abs(g[i]), 1.0)
            assert np.all(np.abs(fd - g[i]) / scale < 1e-6)
