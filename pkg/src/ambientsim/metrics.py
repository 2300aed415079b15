"""Evaluation numerics: IoU, threshold-fraction AP/AR summaries, OKS, and
PCK normalized by the ground-truth bounding-box diagonal.

AP here is the per-instance threshold fraction Prob(score >= alpha), not the
COCO precision-recall integral, and AR is computed by the same rule on
recall-interpreted scores (the source defines AR only as "averaged at the
same thresholds" for pre-associated single predictions).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyScoreList,
    NoVisibleKeypoints,
    RasterMismatch,
    ValidationError,
)

# Default per-keypoint falloff constants for 17-keypoint (COCO-style) skeletons.
COCO_FALLOFF = np.array([
    0.026, 0.025, 0.025, 0.035, 0.035, 0.079, 0.079, 0.072, 0.072,
    0.062, 0.062, 0.107, 0.107, 0.087, 0.087, 0.089, 0.089,
])

AP_THRESHOLDS = tuple((50 + 5 * i) / 100.0 for i in range(10))  # 0.50 .. 0.95


@dataclass(frozen=True)
class MaskPair:
    """Predicted and ground-truth binary pixel sets on a common raster."""

    pred: np.ndarray
    gt: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pred, dtype=bool)
        g = np.asarray(self.gt, dtype=bool)
        if p.shape != g.shape:
            raise RasterMismatch(f"pred {p.shape} vs gt {g.shape}")
        object.__setattr__(self, "pred", p)
        object.__setattr__(self, "gt", g)


@dataclass(frozen=True)
class KeypointInstance:
    """One person instance: predicted/ground-truth keypoints with visibility,
    object scale, per-keypoint falloff, and the ground-truth bbox (h, w)."""

    pred_points: np.ndarray
    gt_points: np.ndarray
    visibility: np.ndarray
    scale: float
    falloff: np.ndarray | None = None
    bbox_hw: tuple = (0.0, 0.0)

    def __post_init__(self):
        pp = np.asarray(self.pred_points, dtype=float).reshape(-1, 2)
        gp = np.asarray(self.gt_points, dtype=float).reshape(-1, 2)
        vis = np.asarray(self.visibility, dtype=int).ravel()
        k = len(vis)
        if len(pp) != k or len(gp) != k:
            raise ValidationError("pred_points", "keypoint arrays must share length")
        if not np.all(np.isin(vis, (0, 1, 2))):
            raise ValidationError("visibility", "flags must be 0, 1 or 2")
        fall = self.falloff
        if fall is None:
            fall = COCO_FALLOFF.copy() if k == 17 else np.full(k, 0.1)
        else:
            fall = np.asarray(fall, dtype=float).ravel()
            if len(fall) != k:
                raise ValidationError("falloff", "must match keypoint count")
        if np.any(vis > 0) and not self.scale > 0:
            raise ValidationError("scale", "must be > 0 with visible keypoints")
        object.__setattr__(self, "pred_points", pp)
        object.__setattr__(self, "gt_points", gp)
        object.__setattr__(self, "visibility", vis)
        object.__setattr__(self, "falloff", fall)
        object.__setattr__(self, "bbox_hw",
                           (float(self.bbox_hw[0]), float(self.bbox_hw[1])))

    @property
    def n_keypoints(self):
        return len(self.visibility)


def iou(mask_pair):
    """Intersection over union of the pixel sets.

    Both masks empty counts as 1 (perfect agreement); exactly one empty is 0.
    """
    inter = int(np.count_nonzero(mask_pair.pred & mask_pair.gt))
    union = int(np.count_nonzero(mask_pair.pred | mask_pair.gt))
    if union == 0:
        return 1.0
    return inter / union


def ap_summary(scores):
    """Threshold-fraction AP: AP@alpha = fraction of scores >= alpha, averaged
    over alpha in {0.50, 0.55, ..., 0.95}.

    Returns (ap_at, mean_ap) where ap_at maps each threshold to its value.
    """
    scores = np.asarray(scores, dtype=float).ravel()
    if len(scores) == 0:
        raise EmptyScoreList("no scores")
    if np.any(scores < 0) or np.any(scores > 1):
        raise ValidationError("scores", "scores must lie in [0, 1]")
    ap_at = {a: float(np.count_nonzero(scores >= a)) / len(scores)
             for a in AP_THRESHOLDS}
    return ap_at, float(sum(ap_at.values()) / len(AP_THRESHOLDS))


def oks(instance):
    """Object keypoint similarity: visibility-gated Gaussian score of the
    localization error, normalized by object scale and per-keypoint falloff."""
    vis = instance.visibility > 0
    if not vis.any():
        raise NoVisibleKeypoints("OKS undefined with no visible keypoints")
    d2 = np.sum((instance.pred_points - instance.gt_points) ** 2, axis=1)
    k2 = instance.falloff ** 2
    terms = np.exp(-d2[vis] / (2.0 * instance.scale ** 2 * k2[vis]))
    return float(terms.sum() / np.count_nonzero(vis))


def pck(instances, keypoint_index, alpha):
    """Percentage of correct keypoints for keypoint k at tolerance alpha.

    A prediction is correct when its error is within alpha times the
    ground-truth bbox diagonal (inclusive). Visibility values weight both the
    numerator and the denominator, exactly as printed.
    """
    num = 0.0
    den = 0.0
    for inst in instances:
        v = float(inst.visibility[keypoint_index])
        if v <= 0:
            continue
        h, w = inst.bbox_hw
        diag = math.sqrt(h * h + w * w)
        err = float(np.linalg.norm(inst.pred_points[keypoint_index]
                                   - inst.gt_points[keypoint_index]))
        num += (err <= alpha * diag) * v
        den += v
    if den == 0:
        raise NoVisibleKeypoints(f"keypoint {keypoint_index} never visible")
    return 100.0 * num / den
