import math

import numpy as np
import pytest

from aphidcount.confidence import (
    ConfidenceModel,
    MalformedModelError,
    MissingFieldError,
    NonFiniteWeightError,
    SequenceFeatures,
    average_over_sets,
    extract_features,
    fit_model,
    load_model,
    minmax_normalize,
    predict_confidence,
    reference_model,
    reference_model_bytes,
    save_model,
)
from aphidcount.detection import BoundingBox, Detection
from aphidcount.imaging import GrayImage


def frame(confs, value=100):
    img = GrayImage(np.full((4, 4), value, np.uint8))
    return img, [Detection(BoundingBox(0, 0, 1, 1), c) for c in confs]


class TestFeatures:
    def test_empty_frame(self):
        f = extract_features([frame([])])
        assert f.c.tolist() == [0.0] and f.n_count.tolist() == [0.0] and f.g.tolist() == [0.0]
        assert f.r is None

    def test_order(self):
        f = extract_features([frame([0.9] * 3), frame([0.9] * 5)])
        assert f.n_count.tolist() == [3, 5]

    def test_mean_confidence(self):
        f = extract_features([frame([0.6, 0.8, 1.0])])
        assert f.c[0] == pytest.approx(0.8, abs=1e-15)

    def test_threshold_applies_to_both(self):
        f = extract_features([frame([0.1, 0.5, 0.9])], confidence_threshold=0.25)
        assert f.n_count[0] == 2 and f.c[0] == pytest.approx(0.7)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            SequenceFeatures([1, 2], [1], [1, 2])

    def test_label_range(self):
        with pytest.raises(ValueError):
            SequenceFeatures([1], [1], [1], r=[1.2])


class TestNormalize:
    def test_affine(self):
        assert minmax_normalize([2, 4, 6]).tolist() == [0, 0.5, 1]

    def test_constant(self):
        assert minmax_normalize([7, 7, 7]).tolist() == [0.5, 0.5, 0.5]

    def test_order_preserved(self):
        assert minmax_normalize([1, 0]).tolist() == [1, 0]

    def test_empty(self):
        with pytest.raises(ValueError):
            minmax_normalize([])

    def test_properties(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            v = rng.normal(0, 10 ** rng.uniform(-3, 3), rng.integers(2, 15))
            out = minmax_normalize(v)
            assert out.min() == 0.0 and out.max() == 1.0
            order = np.argsort(v, kind="stable")
            assert np.all(np.diff(out[order]) >= 0)


class TestAverage:
    def _set(self, c, r):
        return SequenceFeatures(c, c, c, r)

    def test_identity(self):
        s = self._set([0.1, 0.2], [0.3, 0.4])
        avg = average_over_sets([s])
        assert avg.c.tolist() == [0.1, 0.2] and avg.r.tolist() == [0.3, 0.4]

    def test_symmetry(self):
        avg = average_over_sets([self._set([0, 1], [0, 0]), self._set([1, 0], [0, 0])])
        assert avg.c.tolist() == [0.5, 0.5]

    def test_mean(self):
        avg = average_over_sets([self._set([0], [r]) for r in (0.6, 0.75, 0.9)])
        assert avg.r[0] == pytest.approx(0.75, abs=1e-15)

    def test_mismatched(self):
        with pytest.raises(ValueError):
            average_over_sets([self._set([0, 1], [0, 0]), self._set([0], [0])])

    def test_needs_labels(self):
        with pytest.raises(ValueError):
            average_over_sets([SequenceFeatures([0], [0], [0])])


def _generic_rows(rng, k=9):
    while True:
        rows = rng.random((k, 3))
        X = np.column_stack([np.ones(k), rows])
        if np.linalg.matrix_rank(X) == 4:
            return rows, X


class TestFit:
    def test_noiseless_recovery(self):
        rows, _ = _generic_rows(np.random.default_rng(1))
        y = 0.3 + 0.1 * rows[:, 0] - 0.2 * rows[:, 1] + 0.05 * rows[:, 2]
        m = fit_model(rows, y)
        np.testing.assert_allclose([m.w0, m.wC, m.wG, m.wN], [0.3, 0.1, -0.2, 0.05], atol=1e-9)
        assert np.abs(m.residuals).max() < 1e-12 and m.residuals.size == 9

    def test_intercept_only(self):
        rows, _ = _generic_rows(np.random.default_rng(2))
        m = fit_model(rows, np.full(9, 0.5))
        np.testing.assert_allclose(m.weights, [0.5, 0, 0, 0], atol=1e-12)

    def test_too_few_rows(self):
        with pytest.raises(ValueError):
            fit_model(np.zeros((3, 3)), np.zeros(3))

    def test_rank_deficient_is_minimum_norm(self):
        # C and G identical: only wC + wG is determined
        rng = np.random.default_rng(3)
        c = rng.random(10)
        rows = np.column_stack([c, c, rng.random(10)])
        y = 0.2 + 0.4 * c + 0.1 * rows[:, 2]
        m = fit_model(rows, y)
        assert m.wC == pytest.approx(0.2) and m.wG == pytest.approx(0.2)
        assert np.abs(m.residuals).max() < 1e-12

    def test_normal_equations(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            rows, X = _generic_rows(rng, 20)
            y = rng.random(20)
            m = fit_model(rows, y)
            assert np.abs(X.T @ m.residuals).max() <= 1e-8

    def test_against_normal_equation_solve(self):
        rng = np.random.default_rng(5)
        rows, X = _generic_rows(rng, 30)
        y = rng.random(30)
        oracle = np.linalg.solve(X.T @ X, X.T @ y)
        np.testing.assert_allclose(fit_model(rows, y).weights, oracle, atol=1e-10)


class TestPredict:
    def test_intercept_only(self):
        m = ConfidenceModel(0.5, 0, 0, 0)
        assert predict_confidence(m, 0.3, 0.9, 0.1) == 0.5

    def test_reference_all_ones(self):
        assert predict_confidence(reference_model(), 1, 1, 1) == pytest.approx(0.5398, abs=1e-9)

    def test_clamp(self):
        assert predict_confidence(ConfidenceModel(-0.2, 0, 0, 0), 0.5, 0.5, 0.5) == 0.0
        assert predict_confidence(ConfidenceModel(1.3, 0, 0, 0), 0.5, 0.5, 0.5) == 1.0

    def test_vectorised(self):
        out = predict_confidence(reference_model(), np.zeros(3), np.ones(3), np.zeros(3))
        np.testing.assert_allclose(out, 0.3756 + 0.3205)

    def test_affine_slope(self):
        m = ConfidenceModel(0.3, 0.2, 0.1, -0.05)
        h = 1e-3
        slope = (predict_confidence(m, 0.5 + h, 0.5, 0.5) - predict_confidence(m, 0.5, 0.5, 0.5)) / h
        assert slope == pytest.approx(0.2, abs=1e-12)


class TestModelFile:
    def test_reference_weights(self):
        m = reference_model()
        assert (m.w0, m.wC, m.wN, m.wG) == (0.3756, -0.0023, -0.1540, 0.3205)
        assert m.residuals.size == 9 and m.residuals[4] == -0.4799

    def test_reference_roundtrip_bytes(self):
        raw = reference_model_bytes()
        assert save_model(load_model(raw)) == raw

    def test_roundtrip_full_precision(self):
        rng = np.random.default_rng(0)
        m = ConfidenceModel(*rng.normal(size=4), residuals=rng.normal(size=7))
        blob = save_model(m)
        back = load_model(blob)
        assert back == m and save_model(back) == blob

    def test_missing_field(self):
        text = reference_model_bytes().decode().replace("wG = 0.3205\n", "")
        with pytest.raises(MissingFieldError):
            load_model(text)

    @pytest.mark.parametrize("bad", ["nan", "inf", "-inf"])
    def test_non_finite(self, bad):
        text = reference_model_bytes().decode().replace("w0 = 0.3756", f"w0 = {bad}")
        with pytest.raises(NonFiniteWeightError):
            load_model(text)

    @pytest.mark.parametrize(
        "old, new",
        [("w0 = 0.3756", "w0 0.3756"), ("w0 = 0.3756", "w0 = abc"), ("format_version = 1", "format_version = 2"),
         ("feature_order = C,G,N", "feature_order = C,N,G")],
    )
    def test_malformed(self, old, new):
        text = reference_model_bytes().decode().replace(old, new)
        with pytest.raises(MalformedModelError):
            load_model(text)

    def test_constructor_rejects_nan(self):
        with pytest.raises(NonFiniteWeightError):
            ConfidenceModel(math.nan, 0, 0, 0)

    def test_empty_residuals(self):
        m = ConfidenceModel(0.1, 0.2, 0.3, 0.4)
        assert load_model(save_model(m)) == m
