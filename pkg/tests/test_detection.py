import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aphidcount.detection import (
    AnnotationFormatError,
    BoundingBox,
    Detection,
    count_detections,
    format_detections,
    format_ground_truth,
    iou,
    mean_box_confidence,
    nms,
    parse_detections,
    parse_ground_truth,
    soft_nms,
)


def det(x0, y0, x1, y1, conf):
    return Detection(BoundingBox(x0, y0, x1, y1), conf)


coord = st.floats(-1000, 1000, allow_nan=False)
size = st.floats(0, 200, allow_nan=False)


@st.composite
def boxes(draw):
    x, y, w, h = draw(coord), draw(coord), draw(size), draw(size)
    return BoundingBox(x, y, x + w, y + h)


class TestBoundingBox:
    def test_rejects_inverted(self):
        with pytest.raises(ValueError):
            BoundingBox(5, 0, 1, 1)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            BoundingBox(0, 0, math.inf, 1)

    def test_confidence_range(self):
        with pytest.raises(ValueError):
            det(0, 0, 1, 1, 1.5)


class TestIoU:
    def test_identity(self):
        b = BoundingBox(0, 0, 10, 10)
        assert iou(b, b) == 1.0

    def test_disjoint(self):
        assert iou(BoundingBox(0, 0, 1, 1), BoundingBox(5, 5, 6, 6)) == 0.0

    def test_partial_overlap(self):
        # intersection 1, union 4 + 4 - 1
        assert iou(BoundingBox(0, 0, 2, 2), BoundingBox(1, 1, 3, 3)) == pytest.approx(1 / 7, abs=1e-15)

    def test_degenerate_pair(self):
        p = BoundingBox(3, 3, 3, 3)
        assert iou(p, p) == 0.0

    @given(boxes(), boxes())
    def test_symmetric(self, a, b):
        assert iou(a, b) == iou(b, a)
        assert 0.0 <= iou(a, b) <= 1.0

    @given(boxes())
    def test_self_overlap(self, a):
        if a.area > 0:
            assert iou(a, a) == pytest.approx(1.0, abs=1e-12)


class TestNMS:
    def test_empty(self):
        assert nms([], 0.5) == []

    def test_identical_boxes(self):
        out = nms([det(0, 0, 10, 10, 0.8), det(0, 0, 10, 10, 0.9)], 0.5)
        assert [d.confidence for d in out] == [0.9]

    def test_disjoint_kept(self):
        dets = [det(0, 0, 10, 10, 0.6), det(50, 50, 60, 60, 0.9)]
        out = nms(dets, 0.5)
        assert [d.confidence for d in out] == [0.9, 0.6]

    def test_tie_prefers_lower_index(self):
        a, b = det(0, 0, 10, 10, 0.7), det(0, 0, 10, 10.5, 0.7)
        assert nms([a, b], 0.5) == [a]
        assert nms([b, a], 0.5) == [b]


class TestSoftNMS:
    def test_gaussian_coincident(self):
        out = soft_nms([det(0, 0, 10, 10, 0.9), det(0, 0, 10, 10, 0.8)], "gaussian", sigma=0.5, score_threshold=0.001)
        assert [d.confidence for d in out] == pytest.approx([0.9, 0.8 * math.exp(-2.0)], abs=1e-12)
        assert out[1].confidence == pytest.approx(0.108268, abs=1e-6)

    def test_linear_full_overlap_discarded(self):
        out = soft_nms([det(0, 0, 10, 10, 0.9), det(0, 0, 10, 10, 0.8)], "linear", iou_threshold=0.3)
        assert [d.confidence for d in out] == [0.9]

    def test_linear_below_threshold_untouched(self):
        # iou 1/7 < 0.3 -> no decay
        out = soft_nms([det(0, 0, 2, 2, 0.9), det(1, 1, 3, 3, 0.8)], "linear", iou_threshold=0.3)
        assert [d.confidence for d in out] == [0.9, 0.8]

    @pytest.mark.parametrize("method", ["linear", "gaussian"])
    def test_disjoint_unchanged(self, method):
        out = soft_nms([det(0, 0, 1, 1, 0.5), det(5, 5, 6, 6, 0.7)], method)
        assert [d.confidence for d in out] == [0.7, 0.5]

    def test_bad_sigma(self):
        with pytest.raises(ValueError):
            soft_nms([], "gaussian", sigma=0.0)

    def test_bad_method(self):
        with pytest.raises(ValueError):
            soft_nms([], "cubic")

    def test_tiny_sigma_matches_hard_nms(self):
        dets = [det(0, 0, 10, 10, 0.9), det(0, 0, 10, 10, 0.8), det(40, 40, 50, 50, 0.6), det(40, 40, 50, 50, 0.7)]
        soft = soft_nms(dets, "gaussian", sigma=1e-6)
        hard = nms(dets, 0.5)
        assert {d.box for d in soft} == {d.box for d in hard}
        assert [d.confidence for d in soft] == [d.confidence for d in hard]

    @settings(max_examples=60)
    @given(st.lists(st.tuples(boxes(), st.floats(0, 1)), max_size=12), st.sampled_from(["linear", "gaussian"]))
    def test_scores_never_increase(self, items, method):
        dets = [Detection(b, c) for b, c in items]
        out = soft_nms(dets, method)
        originals = {}
        for d in dets:
            originals.setdefault(d.box, []).append(d.confidence)
        for d in out:
            assert d.box in originals
            assert d.confidence <= max(originals[d.box]) + 1e-15
        confs = [d.confidence for d in out]
        assert confs == sorted(confs, reverse=True)

    @given(st.lists(st.tuples(boxes(), st.floats(0, 1)), max_size=12), st.floats(0, 1))
    def test_nms_subset(self, items, thr):
        dets = [Detection(b, c) for b, c in items]
        out = nms(dets, thr)
        assert all(d in dets for d in out)
        confs = [d.confidence for d in out]
        assert confs == sorted(confs, reverse=True)


class TestAggregates:
    def test_mean_single(self):
        assert mean_box_confidence([det(0, 0, 1, 1, 0.5)]) == 0.5

    def test_mean_three(self):
        dets = [det(0, 0, 1, 1, c) for c in (0.6, 0.8, 1.0)]
        assert mean_box_confidence(dets) == pytest.approx(0.8, abs=1e-15)

    def test_mean_empty(self):
        assert mean_box_confidence([]) == 0.0

    def test_count(self):
        dets = [det(0, 0, 1, 1, c) for c in (0.3, 0.2, 0.9)]
        assert count_detections([], 0.25) == 0
        assert count_detections(dets, 0.25) == 2
        assert count_detections(dets, 0.0) == 3

    @given(st.lists(st.floats(0, 1), max_size=20), st.floats(0, 1), st.floats(0, 1))
    def test_count_monotone(self, confs, t1, t2):
        dets = [det(0, 0, 1, 1, c) for c in confs]
        lo, hi = sorted((t1, t2))
        assert count_detections(dets, hi) <= count_detections(dets, lo)


class TestTextFormat:
    def test_roundtrip(self):
        dets = [det(10, 20, 30, 60, 0.75), det(0, 0, 640, 480, 1.0)]
        text = format_detections(dets, 640, 480)
        assert text.splitlines()[0] == "0 0.031250 0.083333 0.031250 0.083333 0.750000"
        back = parse_detections(text, 640, 480)
        for a, b in zip(dets, back):
            assert b.confidence == a.confidence
            np.testing.assert_allclose(
                [b.box.xmin, b.box.ymin, b.box.xmax, b.box.ymax], [a.box.xmin, a.box.ymin, a.box.xmax, a.box.ymax], atol=1e-3
            )

    def test_ground_truth(self):
        boxes_ = parse_ground_truth(format_ground_truth([BoundingBox(1, 2, 3, 4)], 10, 10), 10, 10)
        assert boxes_[0].xmin == pytest.approx(1) and boxes_[0].ymax == pytest.approx(4)

    def test_comments_and_blank_lines(self):
        assert parse_detections("# header\n\n0 0.5 0.5 0.1 0.1 0.9\n", 100, 100)[0].confidence == 0.9

    @pytest.mark.parametrize(
        "text, line",
        [("0 0.5 0.5 0.1 0.1\n", 1), ("\n0 0.5 0.5 0.1 0.1 abc\n", 2), ("0 0.5 0.5 0.1 0.1 1.5\n", 1)],
    )
    def test_errors_carry_line(self, text, line):
        with pytest.raises(AnnotationFormatError) as info:
            parse_detections(text, 10, 10)
        assert info.value.line == line
