"""Learning-side numerics verifiable without training: patch split/merge,
decoder shape algebra, and the mask / keypoint / grouping losses with
analytic gradients (checked against finite differences in the tests).

The transformer encoder/decoder themselves are out of scope; only the
architecture constants needed to reason about shapes are recorded here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimMismatch,
    EmptyPersonList,
    IndivisibleDims,
    LengthMismatch,
    NonBinaryTarget,
    PatchSizeIndivisible,
    ValidationError,
)

# Architecture constants of the reference model (documentation only).
EMBED_DIM = 256
ENCODER_LAYERS = 2
MASK_OUT_CHANNELS = 1
KEYPOINT_OUT_CHANNELS = 26

BCE_CLAMP = 1e-7  # probability clamp; the loss is singular at exactly 0 or 1


@dataclass(frozen=True)
class PatchSequence:
    """Patch-major view of a frame stack: row n holds the full temporal
    trajectory of spatial block n (frames concatenated in order, each block
    flattened row-major). Blocks scan the block grid row-major."""

    rows: np.ndarray
    patch_size: int
    frames: int
    blocks_h: int
    blocks_w: int

    @property
    def patch_count(self):
        return len(self.rows)


def split_patches(x, patch_size):
    """Split a (F, H, W) stack into N = H*W/P^2 spatio-temporal patch rows."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 3:
        raise DimMismatch(f"expected (F, H, W), got shape {x.shape}")
    f, h, w = x.shape
    p = int(patch_size)
    if p < 1 or h % p or w % p:
        raise PatchSizeIndivisible(f"P={p} does not divide H={h}, W={w}")
    bh, bw = h // p, w // p
    rows = (x.reshape(f, bh, p, bw, p)
             .transpose(1, 3, 0, 2, 4)
             .reshape(bh * bw, f * p * p))
    return PatchSequence(rows, p, f, bh, bw)


def merge_patches(seq):
    """Exact inverse of split_patches: rebuild the (F, H, W) stack."""
    p, f, bh, bw = seq.patch_size, seq.frames, seq.blocks_h, seq.blocks_w
    if seq.rows.shape != (bh * bw, f * p * p):
        raise DimMismatch(f"rows shape {seq.rows.shape} inconsistent with metadata")
    return (seq.rows.reshape(bh, bw, f, p, p)
               .transpose(2, 0, 3, 1, 4)
               .reshape(f, bh * p, bw * p))


def decoder_shape(i, channels, height, width, patch_size):
    """Feature-map dims after i deconvolution layers: each doubles the spatial
    resolution and halves the channels, starting from (C, H/P, W/P)."""
    if i not in (1, 2):
        raise ValidationError("i", "deconvolution stage index must be 1 or 2")
    if channels % (2 ** i):
        raise IndivisibleDims(f"channels {channels} not divisible by {2 ** i}")
    if height % patch_size or width % patch_size:
        raise IndivisibleDims(
            f"patch size {patch_size} does not divide {height}x{width}")
    return (channels // (2 ** i),
            (2 ** i) * height // patch_size,
            (2 ** i) * width // patch_size)


@dataclass(frozen=True)
class LossParams:
    """Weights and stabilizers for the three losses.

    keypoint_weights=None means all-ones (resolved against K at use).
    """

    alpha1: float = 0.5
    alpha2: float = 0.5
    epsilon: float = 1e-6
    keypoint_weights: np.ndarray | None = None
    lambda1: float = 1.0
    lambda2: float = 1.0
    delta: float = 1.0

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "lambda1", "lambda2"):
            if getattr(self, name) < 0:
                raise ValidationError(name, "must be >= 0")
        if not self.epsilon > 0:
            raise ValidationError("epsilon", "must be > 0")
        if self.delta < 0:
            raise ValidationError("delta", "must be >= 0")
        if self.keypoint_weights is not None:
            w = np.asarray(self.keypoint_weights, dtype=float)
            if np.any(w < 0):
                raise ValidationError("keypoint_weights", "must be >= 0")
            object.__setattr__(self, "keypoint_weights", w)

    def weights_for(self, k):
        if self.keypoint_weights is None:
            return np.ones(k)
        if len(self.keypoint_weights) != k:
            raise DimMismatch(
                f"{len(self.keypoint_weights)} keypoint weights for K={k}")
        return self.keypoint_weights


def _check_mask_inputs(x, y):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if len(x) != len(y):
        raise LengthMismatch(f"{len(x)} predictions vs {len(y)} targets")
    if not np.all((y == 0) | (y == 1)):
        raise NonBinaryTarget("targets must be exactly 0 or 1")
    return np.clip(x, BCE_CLAMP, 1.0 - BCE_CLAMP), y


def mask_loss(x, y, params, normalize=False):
    """Summed binary cross-entropy plus Dice, as printed.

    The BCE term is a sum over pixels (not a mean); normalize=True divides it
    by the pixel count for scale-stable comparisons across raster sizes.
    """
    x, y = _check_mask_inputs(x, y)
    bce = -np.sum(y * np.log(x) + (1.0 - y) * np.log(1.0 - x))
    if normalize:
        bce /= len(x)
    num = 2.0 * np.sum(x * y) + params.epsilon
    den = np.sum(x * x) + np.sum(y * y) + params.epsilon
    return float(params.alpha1 * bce + params.alpha2 * (1.0 - num / den))


def mask_loss_grad(x, y, params, normalize=False):
    """d(mask_loss)/dx, valid away from the probability clamp."""
    x, y = _check_mask_inputs(x, y)
    g_bce = -(y / x - (1.0 - y) / (1.0 - x))
    if normalize:
        g_bce /= len(x)
    num = 2.0 * np.sum(x * y) + params.epsilon
    den = np.sum(x * x) + np.sum(y * y) + params.epsilon
    g_dice = -(2.0 * y * den - num * 2.0 * x) / den ** 2
    return params.alpha1 * g_bce + params.alpha2 * g_dice


def _check_heatmaps(pred, target):
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape or pred.ndim < 2:
        raise DimMismatch(f"pred {pred.shape} vs target {target.shape}")
    if np.any(target < 0) or np.any(target > 1):
        raise ValidationError("target", "heatmap values must lie in [0, 1]")
    return pred, target


def keypoint_loss(pred, target, params):
    """Two-level weighted MSE over K keypoint heatmaps:
    (1/K) * sum_k w_k * mean((Y_k + 1) * (Yhat_k - Y_k)^2)."""
    pred, target = _check_heatmaps(pred, target)
    k = pred.shape[0]
    w = params.weights_for(k)
    per = np.array([np.mean((target[i] + 1.0) * (pred[i] - target[i]) ** 2)
                    for i in range(k)])
    return float(np.sum(w * per) / k)


def keypoint_loss_grad(pred, target, params):
    """d(keypoint_loss)/d(pred), same shape as pred."""
    pred, target = _check_heatmaps(pred, target)
    k = pred.shape[0]
    w = params.weights_for(k)
    n_pix = pred[0].size
    grad = np.empty_like(pred)
    for i in range(k):
        grad[i] = w[i] * 2.0 * (target[i] + 1.0) * (pred[i] - target[i]) / (k * n_pix)
    return grad


@dataclass(frozen=True)
class PersonTags:
    """Associative-embedding tags: one array of visible-keypoint tag values
    per person (scalar 1-D embeddings)."""

    persons: tuple

    def __post_init__(self):
        ps = tuple(np.asarray(p, dtype=float).ravel() for p in self.persons)
        if len(ps) == 0:
            raise EmptyPersonList("no persons")
        if any(len(p) < 1 for p in ps):
            raise ValidationError("persons", "every person needs >= 1 tag")
        object.__setattr__(self, "persons", ps)


def grouping_loss(tags, params):
    """Associative-embedding loss: intra-person tag variance pulled to the
    person mean, inter-person means pushed apart by a hinge margin.

    The pairwise sum runs over ordered pairs, as printed, so each unordered
    pair is counted twice and normalized by |P|(|P|-1).
    """
    if not isinstance(tags, PersonTags):
        tags = PersonTags(tuple(tags))
    persons = tags.persons
    n = len(persons)
    means = np.array([p.mean() for p in persons])
    pull = np.mean([np.mean((p - m) ** 2) for p, m in zip(persons, means)])
    push = 0.0
    if n >= 2:
        diff = np.abs(means[:, None] - means[None, :])
        hinge = np.maximum(0.0, params.delta - diff)
        np.fill_diagonal(hinge, 0.0)
        push = hinge.sum() / (n * (n - 1))
    return float(params.lambda1 * pull + params.lambda2 * push)


def grouping_loss_grad(tags, params):
    """d(grouping_loss)/d(tag) per person, valid away from the hinge kink.

    Returns a list of arrays matching the per-person tag shapes.
    """
    if not isinstance(tags, PersonTags):
        tags = PersonTags(tuple(tags))
    persons = tags.persons
    n = len(persons)
    means = np.array([p.mean() for p in persons])
    grads = [params.lambda1 * 2.0 * (p - m) / (n * len(p))
             for p, m in zip(persons, means)]
    if n >= 2:
        signed = means[:, None] - means[None, :]
        active = (np.abs(signed) < params.delta)
        np.fill_diagonal(active, False)
        # each ordered pair contributes -sign(mean_i - mean_j) to d/d(mean_i),
        # and both (i, j) and (j, i) involve mean_i
        per_mean = -2.0 * np.sum(np.sign(signed) * active, axis=1)
        per_mean *= params.lambda2 / (n * (n - 1))
        for i, p in enumerate(persons):
            grads[i] = grads[i] + per_mean[i] / len(p)
    return grads
