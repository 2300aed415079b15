"""Evaluation metric tests against independent naive enumerations."""

import math

import numpy as np
import pytest

from ambientsim import KeypointInstance, MaskPair, ap_summary, iou, oks, pck
from ambientsim.errors import (
    EmptyScoreList,
    NoVisibleKeypoints,
    RasterMismatch,
    ValidationError,
)

# --- naive reference implementations (plain loops, no shared code) ---

def naive_iou(pred, gt):
    inter = union = 0
    for p, g in zip(np.asarray(pred).ravel(), np.asarray(gt).ravel()):
        if p and g:
            inter += 1
        if p or g:
            union += 1
    return 1.0 if union == 0 else inter / union


def naive_ap(scores):
    thresholds = [(50 + 5 * i) / 100 for i in range(10)]
    ap_at = {}
    for a in thresholds:
        hits = sum(1 for s in scores if s >= a)
        ap_at[a] = hits / len(scores)
    return ap_at, sum(ap_at.values()) / 10


def naive_oks(pred, gt, vis, scale, falloff):
    num = den = 0.0
    for i in range(len(vis)):
        if vis[i] > 0:
            d2 = (pred[i][0] - gt[i][0]) ** 2 + (pred[i][1] - gt[i][1]) ** 2
            num += math.exp(-d2 / (2 * scale ** 2 * falloff[i] ** 2))
            den += 1
    return num / den


def naive_pck(instances, k, alpha):
    num = den = 0.0
    for pred, gt, vis, bbox in instances:
        v = vis[k]
        if v <= 0:
            continue
        diag = math.sqrt(bbox[0] ** 2 + bbox[1] ** 2)
        err = math.hypot(pred[k][0] - gt[k][0], pred[k][1] - gt[k][1])
        num += (1.0 if err <= alpha * diag else 0.0) * v
        den += v
    return 100.0 * num / den


class TestIou:
    def test_identical(self):
        m = np.array([[1, 0], [1, 1]], dtype=bool)
        assert iou(MaskPair(m, m)) == 1.0

    def test_disjoint(self):
        a = np.array([[1, 0], [0, 0]], dtype=bool)
        b = np.array([[0, 0], [0, 1]], dtype=bool)
        assert iou(MaskPair(a, b)) == 0.0

    def test_hand_counted_overlap(self):
        pred = np.array([[1, 0], [1, 0]], dtype=bool)  # left column
        gt = np.array([[1, 1], [0, 0]], dtype=bool)    # top row
        assert iou(MaskPair(pred, gt)) == pytest.approx(1 / 3)

    def test_empty_conventions(self):
        z = np.zeros((2, 2), dtype=bool)
        o = np.ones((2, 2), dtype=bool)
        assert iou(MaskPair(z, z)) == 1.0
        assert iou(MaskPair(z, o)) == 0.0

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a = rng.random((4, 5)) < 0.5
            b = rng.random((4, 5)) < 0.5
            assert iou(MaskPair(a, b)) == iou(MaskPair(b, a))

    def test_raster_mismatch(self):
        with pytest.raises(RasterMismatch):
            MaskPair(np.zeros((2, 2), bool), np.zeros((3, 2), bool))


class TestApSummary:
    def test_hand_enumeration(self):
        ap_at, mean_ap = ap_summary([0.9, 0.6, 0.4])
        assert ap_at[0.50] == pytest.approx(2 / 3)
        assert mean_ap == pytest.approx(0.4)

    def test_all_ones(self):
        ap_at, mean_ap = ap_summary([1.0, 1.0])
        assert all(v == 1.0 for v in ap_at.values())
        assert mean_ap == 1.0

    def test_all_zero(self):
        _, mean_ap = ap_summary([0.0, 0.0, 0.0])
        assert mean_ap == 0.0

    def test_nonincreasing_in_threshold(self):
        rng = np.random.default_rng(1)
        ap_at, _ = ap_summary(rng.random(50))
        values = [ap_at[a] for a in sorted(ap_at)]
        assert all(x >= y for x, y in zip(values, values[1:]))

    def test_boundary_scores_inclusive(self):
        ap_at, _ = ap_summary([0.60])
        assert ap_at[0.60] == 1.0
        assert ap_at[0.65] == 0.0

    def test_empty(self):
        with pytest.raises(EmptyScoreList):
            ap_summary([])

    def test_matches_naive_enumeration(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            scores = rng.random(int(rng.integers(1, 30)))
            ap_at, mean_ap = ap_summary(scores)
            naive_at, naive_mean = naive_ap(list(scores))
            for a in naive_at:
                assert abs(ap_at[a] - naive_at[a]) <= 1e-12
            assert abs(mean_ap - naive_mean) <= 1e-12


def make_instance(rng, k=5):
    pred = rng.uniform(0, 50, (k, 2))
    gt = rng.uniform(0, 50, (k, 2))
    vis = rng.integers(0, 3, k)
    if not np.any(vis > 0):
        vis[0] = 2
    scale = float(rng.uniform(0.5, 5.0))
    falloff = rng.uniform(0.05, 0.2, k)
    bbox = (float(rng.uniform(5, 60)), float(rng.uniform(5, 60)))
    return KeypointInstance(pred, gt, vis, scale, falloff, bbox)


class TestOks:
    def test_exact_prediction(self):
        pts = np.array([[1.0, 2.0], [3.0, 4.0]])
        inst = KeypointInstance(pts, pts, np.array([2, 1]), 1.0,
                                np.array([0.1, 0.1]), (10, 10))
        assert oks(inst) == 1.0

    def test_half_score_at_analytic_distance(self):
        # exp(-d^2/2) = 0.5 at d = sqrt(2 ln 2)
        d = math.sqrt(2 * math.log(2))
        inst = KeypointInstance(np.array([[d, 0.0]]), np.array([[0.0, 0.0]]),
                                np.array([1]), 1.0, np.array([1.0]), (1, 1))
        assert oks(inst) == pytest.approx(0.5, abs=1e-9)

    def test_no_visible_keypoints(self):
        pts = np.zeros((3, 2))
        inst = KeypointInstance(pts, pts, np.zeros(3, dtype=int), 1.0,
                                None, (1, 1))
        with pytest.raises(NoVisibleKeypoints):
            oks(inst)

    def test_scale_covariance(self):
        rng = np.random.default_rng(3)
        inst = make_instance(rng)
        factor = 3.7
        scaled = KeypointInstance(inst.gt_points + factor *
                                  (inst.pred_points - inst.gt_points),
                                  inst.gt_points, inst.visibility,
                                  inst.scale * factor, inst.falloff,
                                  inst.bbox_hw)
        assert oks(scaled) == pytest.approx(oks(inst), rel=1e-12)

    def test_matches_naive(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            inst = make_instance(rng)
            ref = naive_oks(inst.pred_points, inst.gt_points,
                            inst.visibility, inst.scale, inst.falloff)
            assert abs(oks(inst) - ref) <= 1e-12

    def test_default_falloff_lengths(self):
        pts = np.zeros((17, 2))
        inst = KeypointInstance(pts, pts, np.ones(17, dtype=int), 1.0,
                                None, (1, 1))
        assert len(inst.falloff) == 17 and inst.falloff[0] == 0.026
        inst5 = KeypointInstance(np.zeros((5, 2)), np.zeros((5, 2)),
                                 np.ones(5, dtype=int), 1.0, None, (1, 1))
        assert np.all(inst5.falloff == 0.1)


class TestPck:
    def test_bbox_diagonal_fixture(self):
        # bbox 30x40 -> diagonal 50; alpha 0.1 -> 5 px threshold; 3 px error
        inst = KeypointInstance(np.array([[3.0, 0.0]]), np.array([[0.0, 0.0]]),
                                np.array([1]), 1.0, None, (30.0, 40.0))
        assert pck([inst], 0, 0.1) == 100.0

    def test_boundary_inclusive(self):
        inst = KeypointInstance(np.array([[5.0, 0.0]]), np.array([[0.0, 0.0]]),
                                np.array([1]), 1.0, None, (30.0, 40.0))
        assert pck([inst], 0, 0.1) == 100.0
        just_out = KeypointInstance(np.array([[5.0000001, 0.0]]),
                                    np.array([[0.0, 0.0]]), np.array([1]),
                                    1.0, None, (30.0, 40.0))
        assert pck([just_out], 0, 0.1) == 0.0

    def test_invisible_excluded(self):
        good = KeypointInstance(np.array([[0.0, 0.0]]), np.array([[0.0, 0.0]]),
                                np.array([1]), 1.0, None, (30.0, 40.0))
        hidden = KeypointInstance(np.array([[99.0, 99.0]]),
                                  np.array([[0.0, 0.0]]), np.array([0]),
                                  1.0, None, (30.0, 40.0))
        assert pck([good, hidden], 0, 0.1) == 100.0

    def test_no_visible(self):
        hidden = KeypointInstance(np.array([[0.0, 0.0]]), np.array([[0.0, 0.0]]),
                                  np.array([0]), 1.0, None, (30.0, 40.0))
        with pytest.raises(NoVisibleKeypoints):
            pck([hidden], 0, 0.1)

    def test_nondecreasing_in_alpha(self):
        rng = np.random.default_rng(5)
        instances = [make_instance(rng) for _ in range(30)]
        values = [pck(instances, 0, a) for a in (0.01, 0.02, 0.05, 0.1, 0.5)]
        assert all(x <= y for x, y in zip(values, values[1:]))

    def test_matches_naive(self):
        rng = np.random.default_rng(6)
        instances = [make_instance(rng) for _ in range(50)]
        raw = [(i.pred_points, i.gt_points, i.visibility, i.bbox_hw)
               for i in instances]
        for k in range(5):
            for alpha in (0.01, 0.05, 0.2):
                if all(i.visibility[k] <= 0 for i in instances):
                    continue
                assert abs(pck(instances, k, alpha)
                           - naive_pck(raw, k, alpha)) <= 1e-12


def test_visibility_validation():
    with pytest.raises(ValidationError):
        KeypointInstance(np.zeros((1, 2)), np.zeros((1, 2)), np.array([3]),
                         1.0, None, (1, 1))
