"""Patch algebra and loss function tests (gradients vs finite differences)."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ambientsim import (
    LossParams,
    PersonTags,
    decoder_shape,
    grouping_loss,
    grouping_loss_grad,
    keypoint_loss,
    keypoint_loss_grad,
    mask_loss,
    mask_loss_grad,
    merge_patches,
    split_patches,
)
from ambientsim.dnn_numerics import (
    EMBED_DIM,
    ENCODER_LAYERS,
    KEYPOINT_OUT_CHANNELS,
    MASK_OUT_CHANNELS,
)
from ambientsim.errors import (
    DimMismatch,
    EmptyPersonList,
    IndivisibleDims,
    LengthMismatch,
    NonBinaryTarget,
    PatchSizeIndivisible,
    ValidationError,
)


def central_difference(f, x, step=1e-6):
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    flat = grad.ravel()
    xf = x.ravel()
    for i in range(x.size):
        orig = xf[i]
        xf[i] = orig + step
        hi = f(x)
        xf[i] = orig - step
        lo = f(x)
        xf[i] = orig
        flat[i] = (hi - lo) / (2 * step)
    return grad


class TestSplitPatches:
    def test_reference_configuration(self):
        x = np.arange(21 * 100 * 100, dtype=float).reshape(21, 100, 100)
        seq = split_patches(x, 10)
        assert seq.rows.shape == (100, 2100)
        assert seq.patch_count == 100

    def test_whole_frame_patch(self):
        x = np.arange(9, dtype=float).reshape(1, 3, 3)
        seq = split_patches(x, 3)
        assert seq.rows.shape == (1, 9)
        assert np.array_equal(seq.rows[0], x.ravel())

    def test_element_accounting(self):
        # Every input element appears exactly once across all rows.
        rng = np.random.default_rng(0)
        x = rng.standard_normal((2, 4, 4))
        seq = split_patches(x, 2)
        assert np.array_equal(np.sort(seq.rows.ravel()), np.sort(x.ravel()))

    def test_row_layout_against_loop_reference(self):
        # Independent loop-based construction of the same layout.
        rng = np.random.default_rng(1)
        f, h, w, p = 3, 4, 6, 2
        x = rng.standard_normal((f, h, w))
        seq = split_patches(x, p)
        n = 0
        for bh in range(h // p):
            for bw in range(w // p):
                row = []
                for fi in range(f):
                    row.extend(x[fi, bh * p:(bh + 1) * p,
                                 bw * p:(bw + 1) * p].ravel())
                assert np.array_equal(seq.rows[n], np.array(row))
                n += 1

    def test_indivisible(self):
        with pytest.raises(PatchSizeIndivisible):
            split_patches(np.zeros((1, 5, 4)), 2)

    @given(st.integers(1, 4), st.integers(1, 3), st.integers(1, 3),
           st.integers(1, 3))
    @settings(max_examples=30, deadline=None)
    def test_split_merge_bijection(self, f, bh, bw, p):
        rng = np.random.default_rng(f * 27 + bh * 9 + bw * 3 + p)
        x = rng.standard_normal((f, bh * p, bw * p))
        assert np.array_equal(merge_patches(split_patches(x, p)), x)


class TestDecoderShape:
    def test_stage_two(self):
        assert decoder_shape(2, 256, 100, 100, 10) == (64, 40, 40)

    def test_stage_one(self):
        assert decoder_shape(1, 256, 100, 100, 10) == (128, 20, 20)

    def test_projection_constants(self):
        assert MASK_OUT_CHANNELS == 1
        assert KEYPOINT_OUT_CHANNELS == 26
        assert EMBED_DIM == 256
        assert ENCODER_LAYERS == 2

    def test_indivisible_dims(self):
        with pytest.raises(IndivisibleDims):
            decoder_shape(2, 254, 100, 100, 10)
        with pytest.raises(IndivisibleDims):
            decoder_shape(1, 256, 101, 100, 10)
        with pytest.raises(ValidationError):
            decoder_shape(3, 256, 100, 100, 10)


class TestMaskLoss:
    def test_perfect_prediction_near_zero(self):
        p = LossParams(alpha1=0.5, alpha2=0.5, epsilon=1e-6)
        assert mask_loss(np.array([1.0]), np.array([1.0]), p) <= 1e-6

    def test_hand_computed_value(self):
        # N=1, y=1, x=0.5: 0.5*ln(2) + 0.5*(1 - 1/1.25) = 0.446574
        p = LossParams(alpha1=0.5, alpha2=0.5, epsilon=1e-12)
        val = mask_loss(np.array([0.5]), np.array([1.0]), p)
        assert val == pytest.approx(0.446574, abs=1e-6)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        p = LossParams(alpha1=0.7, alpha2=0.4, epsilon=1e-6)
        for _ in range(5):
            x = rng.uniform(0.1, 0.9, 16)
            y = (rng.random(16) < 0.5).astype(float)
            analytic = mask_loss_grad(x, y, p)
            numeric = central_difference(lambda v: mask_loss(v, y, p), x)
            denom = np.maximum(np.abs(numeric), 1e-8)
            assert np.max(np.abs(analytic - numeric) / denom) < 1e-6

    def test_normalized_variant_scales_bce(self):
        p = LossParams(alpha1=1.0, alpha2=0.0)
        x = np.array([0.3, 0.6, 0.8, 0.9])
        y = np.array([0.0, 1.0, 1.0, 0.0])
        assert mask_loss(x, y, p, normalize=True) \
            == pytest.approx(mask_loss(x, y, p) / 4)

    def test_errors(self):
        p = LossParams()
        with pytest.raises(LengthMismatch):
            mask_loss(np.ones(3), np.ones(2), p)
        with pytest.raises(NonBinaryTarget):
            mask_loss(np.array([0.5]), np.array([0.5]), p)


class TestKeypointLoss:
    def test_zero_at_equality(self):
        rng = np.random.default_rng(3)
        maps = rng.uniform(0, 1, (4, 5, 5))
        assert keypoint_loss(maps, maps, LossParams()) == 0.0

    def test_hand_computed_value(self):
        # K=1, 1x1 maps, Y=1, Yhat=0: (1+1)*(0-1)^2 = 2
        val = keypoint_loss(np.zeros((1, 1, 1)), np.ones((1, 1, 1)),
                            LossParams())
        assert val == pytest.approx(2.0)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        p = LossParams(keypoint_weights=np.array([0.5, 2.0, 1.0]))
        target = rng.uniform(0, 1, (3, 4, 4))
        pred = rng.standard_normal((3, 4, 4))
        analytic = keypoint_loss_grad(pred, target, p)
        numeric = central_difference(
            lambda v: keypoint_loss(v, target, p), pred)
        denom = np.maximum(np.abs(numeric), 1e-8)
        assert np.max(np.abs(analytic - numeric) / denom) < 1e-6

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            keypoint_loss(np.zeros((2, 3, 3)), np.zeros((2, 3, 4)), LossParams())


class TestGroupingLoss:
    def test_single_person_pull_only(self):
        p = LossParams(lambda1=1.0, lambda2=1.0, delta=1.0)
        val = grouping_loss([np.array([1.0, 3.0])], p)
        assert val == pytest.approx(1.0)

    def test_separated_means_zero_loss(self):
        p = LossParams(lambda1=1.0, lambda2=1.0, delta=0.5)
        val = grouping_loss([np.array([2.0, 2.0]), np.array([4.0])], p)
        assert val == pytest.approx(0.0)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        p = LossParams(lambda1=0.8, lambda2=1.3, delta=1.0)
        for _ in range(5):
            sizes = rng.integers(1, 5, size=3)
            tags = [rng.standard_normal(s) * 2 for s in sizes]
            means = np.array([t.mean() for t in tags])
            gaps = np.abs(means[:, None] - means[None, :])
            np.fill_diagonal(gaps, np.inf)
            if np.min(np.abs(gaps - p.delta)) < 1e-3:
                continue  # stay away from the hinge kink
            analytic = grouping_loss_grad(tags, p)
            flat = np.concatenate(tags)
            bounds = np.cumsum([0] + [len(t) for t in tags])

            def unflatten(v):
                return [v[bounds[i]:bounds[i + 1]] for i in range(len(tags))]

            numeric = central_difference(
                lambda v: grouping_loss(unflatten(v), p), flat)
            analytic_flat = np.concatenate(analytic)
            denom = np.maximum(np.abs(numeric), 1e-8)
            assert np.max(np.abs(analytic_flat - numeric) / denom) < 1e-6

    def test_permutation_invariance(self):
        p = LossParams(lambda1=1.0, lambda2=1.0, delta=2.0)
        tags = [np.array([0.5, 1.5]), np.array([3.0]), np.array([4.0, 4.5, 5.0])]
        base = grouping_loss(tags, p)
        assert grouping_loss(tags[::-1], p) == pytest.approx(base)
        shuffled = [t[::-1].copy() for t in tags]
        assert grouping_loss(shuffled, p) == pytest.approx(base)

    def test_empty_person_list(self):
        with pytest.raises(EmptyPersonList):
            grouping_loss([], LossParams())
        with pytest.raises(ValidationError):
            PersonTags((np.array([]),))


@given(st.integers(0, 2 ** 31 - 1))
@settings(max_examples=40, deadline=None)
def test_all_losses_nonnegative(seed):
    rng = np.random.default_rng(seed)
    p = LossParams(alpha1=rng.uniform(0, 2), alpha2=rng.uniform(0, 2),
                   lambda1=rng.uniform(0, 2), lambda2=rng.uniform(0, 2),
                   delta=rng.uniform(0, 2))
    n = int(rng.integers(1, 20))
    x = rng.uniform(0.01, 0.99, n)
    y = (rng.random(n) < 0.5).astype(float)
    assert mask_loss(x, y, p) >= -1e-12
    maps = rng.uniform(0, 1, (2, 3, 3))
    pred = rng.standard_normal((2, 3, 3))
    assert keypoint_loss(pred, maps, p) >= -1e-12
    tags = [rng.standard_normal(int(rng.integers(1, 4)))
            for _ in range(int(rng.integers(1, 4)))]
    assert grouping_loss(tags, p) >= -1e-12


def test_losses_zero_at_optimum():
    p = LossParams(epsilon=1e-9)
    y = np.array([1.0, 0.0, 1.0])
    assert mask_loss(y, y, p) < 1e-6
    maps = np.random.default_rng(6).uniform(0, 1, (2, 4, 4))
    assert keypoint_loss(maps, maps, p) == 0.0
    tags = [np.array([1.0, 1.0]), np.array([5.0])]  # zero variance, gap > delta
    assert grouping_loss(tags, p) == 0.0
