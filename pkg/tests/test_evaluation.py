"""IoU, greedy matching, and mAP tests with per-threshold enumeration oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_instance
from orgmorph.evaluation import (
    IOU_THRESHOLDS,
    average_precision_at,
    iou,
    match_instances,
    mean_average_precision,
)


def square(x0, y0, w, h, tile="t0", label=1):
    return make_instance(
        [(x, y) for x in range(x0, x0 + w) for y in range(y0, y0 + h)],
        tile_id=tile,
        local_label=label,
    )


class TestIou:
    def test_identical(self):
        a = square(0, 0, 4, 4)
        assert iou(a.pixels, a.pixels) == 1.0

    def test_disjoint(self):
        assert iou(square(0, 0, 4, 4).pixels, square(10, 10, 4, 4).pixels) == 0.0

    def test_half_strip_overlap(self):
        a = square(0, 0, 10, 10)
        b = square(5, 0, 10, 10)  # overlap 5x10 = 50, union 150
        assert iou(a.pixels, b.pixels) == pytest.approx(50 / 150, rel=1e-12)

    def test_both_empty(self):
        assert iou(frozenset(), frozenset()) == 0.0


class TestMatching:
    def test_exact_match(self):
        a = square(0, 0, 4, 4)
        (m,) = match_instances([a], [a], 0.5)
        assert (m.pred_id, m.gt_id, m.iou) == (a.global_id, a.global_id, 1.0)

    def test_greedy_prefers_higher_iou(self):
        pred = square(0, 0, 10, 8, label=1)  # 80 px
        gt_hi = square(0, 0, 10, 10, tile="g", label=1)  # IoU 80/100 = 0.8
        gt_lo = square(0, 6, 10, 10, tile="g", label=2)  # IoU 20/160 = 0.125
        matches = match_instances([pred], [gt_hi, gt_lo], 0.1)
        assert [(m.pred_id, m.gt_id) for m in matches] == [("t0:1", "g:1")]
        assert matches[0].iou == pytest.approx(0.8)

    def test_empty_pred(self):
        assert match_instances([], [square(0, 0, 3, 3)], 0.5) == []

    def test_one_to_one(self):
        pred = [square(0, 0, 6, 6, label=1), square(1, 0, 6, 6, label=2)]
        gt = [square(0, 0, 6, 6, tile="g", label=1)]
        matches = match_instances(pred, gt, 0.3)
        assert len(matches) == 1

    def test_threshold_excludes(self):
        a = square(0, 0, 10, 10)
        b = square(6, 0, 10, 10, tile="g")  # IoU 40/160 = 0.25
        assert match_instances([a], [b], 0.5) == []
        assert len(match_instances([a], [b], 0.25)) == 1


class TestAveragePrecision:
    def test_identical_sets(self):
        pred = [square(10 * i, 0, 5, 5, label=i + 1) for i in range(5)]
        gt = [square(10 * i, 0, 5, 5, tile="g", label=i + 1) for i in range(5)]
        for threshold in (0.5, 0.75, 0.95):
            assert average_precision_at(pred, gt, threshold).ap == 1.0

    def test_below_threshold(self):
        pred = [square(0, 0, 10, 6)]  # IoU vs gt 60/100 = 0.6
        gt = [square(0, 0, 10, 10, tile="g")]
        r = average_precision_at(pred, gt, 0.75)
        assert (r.true_positives, r.false_positives, r.false_negatives) == (0, 1, 1)
        assert r.ap == 0.0

    def test_one_of_two_matched(self):
        pred = [square(0, 0, 10, 9)]  # IoU 90/100 = 0.9
        gt = [square(0, 0, 10, 10, tile="g", label=1), square(40, 0, 10, 10, tile="g", label=2)]
        r = average_precision_at(pred, gt, 0.5)
        assert (r.true_positives, r.false_positives, r.false_negatives) == (1, 0, 1)
        assert r.ap == 0.5

    def test_empty_both(self):
        assert average_precision_at([], [], 0.5).ap == 1.0


class TestMeanAveragePrecision:
    def test_thresholds_are_the_coco_grid(self):
        assert IOU_THRESHOLDS == (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)

    def test_identical(self):
        x = [square(0, 0, 5, 5)]
        assert mean_average_precision(x, x) == 1.0

    def test_disjoint(self):
        assert mean_average_precision([square(0, 0, 5, 5)], [square(20, 20, 5, 5, tile="g")]) == 0.0

    def test_iou_point_six_pair(self):
        # pred: 10x10 (100 px); gt: pred minus its 5x5 corner plus a disjoint
        # 5x5 block (100 px) -> intersection 75, union 125, IoU = 0.6 exactly.
        # Passes thresholds 0.50/0.55/0.60 only -> mAP = 3/10.
        pred = [square(0, 0, 10, 10)]
        gt_pixels = [(x, y) for x in range(10) for y in range(10) if x < 5 or y < 5]
        gt_pixels += [(x, y) for x in range(20, 25) for y in range(5, 10)]
        gt = [make_instance(gt_pixels, tile_id="g")]
        assert iou(pred[0].pixels, gt[0].pixels) == 0.6
        assert mean_average_precision(pred, gt) == pytest.approx(0.3, abs=1e-12)

    def test_one_of_two_matched_overall(self):
        pred = [square(0, 0, 10, 9)]  # IoU 0.9 with gt 1
        gt = [square(0, 0, 10, 10, tile="g", label=1), square(40, 0, 10, 10, tile="g", label=2)]
        assert mean_average_precision(pred, gt) == pytest.approx(0.45, abs=1e-12)

    @given(seed=st.integers(0, 5000))
    @settings(max_examples=40, deadline=None)
    def test_ap_monotone_in_threshold(self, seed):
        rng = np.random.default_rng(seed)
        pred = [
            square(int(x), int(y), int(w) + 1, int(h) + 1, label=i + 1)
            for i, (x, y, w, h) in enumerate(rng.integers(0, 12, size=(5, 4)))
        ]
        gt = [
            square(int(x), int(y), int(w) + 1, int(h) + 1, tile="g", label=i + 1)
            for i, (x, y, w, h) in enumerate(rng.integers(0, 12, size=(5, 4)))
        ]
        aps = [average_precision_at(pred, gt, t).ap for t in IOU_THRESHOLDS]
        assert all(aps[i] >= aps[i + 1] for i in range(len(aps) - 1))

    @given(seed=st.integers(0, 5000))
    @settings(max_examples=20, deadline=None)
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        pred = [
            square(int(x), int(y), int(w) + 1, int(h) + 1, label=i + 1)
            for i, (x, y, w, h) in enumerate(rng.integers(0, 10, size=(4, 4)))
        ]
        gt = [
            square(int(x), int(y), int(w) + 1, int(h) + 1, tile="g", label=i + 1)
            for i, (x, y, w, h) in enumerate(rng.integers(0, 10, size=(4, 4)))
        ]
        base = mean_average_precision(pred, gt)
        perm = rng.permutation(len(pred)).tolist()
        assert mean_average_precision([pred[i] for i in perm], gt[::-1]) == base
