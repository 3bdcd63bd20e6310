"""Entropy math, resampling, aggregation, thresholding, window merging."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attentropy.entropy import (
    LayerAggregation,
    aggregate_layers,
    average_heads,
    binarize,
    entropy_grid,
    merge_windows,
    resample_bilinear,
    row_entropy,
    sigmoid,
    stack_entropy_maps,
    strip_class_token,
    to_score,
    window_offsets,
)
from attentropy.vit import AttentionStack


def entropy_direct(row):
    """Independent direct-summation oracle: plain Python floats and math.log."""
    total = 0.0
    for p in row:
        if p > 0.0:
            total -= p * math.log(p)
    return total


def random_stochastic(rng, t):
    row = rng.random(t) + 1e-12
    return row / row.sum()


# --- row_entropy -----------------------------------------------------------


def test_entropy_uniform_row():
    assert row_entropy(np.full(4, 0.25)) == pytest.approx(math.log(4), abs=1e-12)


def test_entropy_one_hot_exact_zero():
    assert row_entropy(np.array([0.0, 1.0, 0.0])) == 0.0


def test_entropy_half_half():
    assert row_entropy(np.array([0.5, 0.5, 0.0, 0.0])) == pytest.approx(
        math.log(2), abs=1e-12
    )


def test_entropy_matches_direct_summation():
    rng = np.random.default_rng(0)
    for t in (2, 3, 17, 256):
        row = random_stochastic(rng, t)
        assert row_entropy(row) == pytest.approx(entropy_direct(row), abs=1e-12)


def test_entropy_rejects_negative():
    with pytest.raises(ValueError, match="negative"):
        row_entropy(np.array([0.5, 0.6, -0.1]))


def test_entropy_2d_batch():
    rows = np.array([[1.0, 0.0], [0.5, 0.5]])
    np.testing.assert_allclose(row_entropy(rows), [0.0, math.log(2)], atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(t=st.integers(2, 64), seed=st.integers(0, 2**31))
def test_entropy_in_range(t, seed):
    row = random_stochastic(np.random.default_rng(seed), t)
    e = row_entropy(row)
    assert -1e-15 <= e <= math.log(t) + 1e-12


@settings(max_examples=100, deadline=None)
@given(t=st.integers(2, 32), seed=st.integers(0, 2**31))
def test_entropy_permutation_invariant(t, seed):
    rng = np.random.default_rng(seed)
    row = random_stochastic(rng, t)
    assert row_entropy(row) == pytest.approx(
        row_entropy(rng.permutation(row)), abs=1e-12
    )


# --- average_heads / strip_class_token -------------------------------------


def test_average_heads_mean():
    a = np.array([[[1.0, 0.0]], [[0.0, 1.0]]])
    np.testing.assert_array_equal(average_heads(a), [[0.5, 0.5]])


def test_average_heads_single_head_identity():
    a = np.array([[[0.3, 0.7]]])
    np.testing.assert_array_equal(average_heads(a), a[0])


def test_average_heads_preserves_stochastic():
    rng = np.random.default_rng(1)
    a = np.stack([[random_stochastic(rng, 5) for _ in range(4)] for _ in range(3)])
    out = average_heads(a)
    np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-12)


def test_average_heads_rejects_empty():
    with pytest.raises(ValueError):
        average_heads(np.zeros((0, 2, 2)))


def test_strip_no_class_mass_unchanged():
    a = np.array([[1.0, 0.0, 0.0], [0.0, 0.6, 0.4], [0.0, 0.2, 0.8]])
    np.testing.assert_array_equal(
        strip_class_token(a), np.array([[0.6, 0.4], [0.2, 0.8]])
    )


def test_strip_renormalizes():
    a = np.array([[1.0, 0.0, 0.0], [0.5, 0.25, 0.25], [0.5, 0.25, 0.25]])
    np.testing.assert_allclose(
        strip_class_token(a, renormalize=True)[0], [0.5, 0.5], atol=1e-15
    )


def test_strip_without_renormalize():
    a = np.array([[1.0, 0.0, 0.0], [0.5, 0.25, 0.25], [0.5, 0.25, 0.25]])
    np.testing.assert_allclose(
        strip_class_token(a, renormalize=False)[0], [0.25, 0.25], atol=1e-15
    )


def test_strip_dead_row_becomes_uniform():
    a = np.array([[0.5, 0.25, 0.25], [1.0, 0.0, 0.0], [0.0, 0.5, 0.5]])
    np.testing.assert_array_equal(strip_class_token(a)[0], [0.5, 0.5])


def test_strip_rejects_tiny():
    with pytest.raises(ValueError):
        strip_class_token(np.array([[1.0]]))


# --- entropy_grid / stack pipeline -----------------------------------------


def test_entropy_grid_row_major():
    np.testing.assert_array_equal(
        entropy_grid(np.array([1.0, 2.0, 3.0, 4.0]), 2, 2), [[1, 2], [3, 4]]
    )


def test_entropy_grid_rejects_mismatch():
    with pytest.raises(ValueError):
        entropy_grid(np.arange(5, dtype=float), 2, 2)


def test_entropy_grid_48():
    e = entropy_grid(np.zeros(48 * 48), 48, 48)
    assert e.shape == (48, 48)


def test_stack_maps_uniform_attention_ln_t():
    t = 9
    stack = AttentionStack(layers=[np.full((2, t, t), 1.0 / t)], grid_n=3)
    (emap,) = stack_entropy_maps(stack)
    np.testing.assert_allclose(emap, math.log(t), atol=1e-9)


def test_stack_maps_class_token_stripped():
    # uniform over 10 tokens; strip + renorm leaves uniform over 9 spatial
    t = 10
    stack = AttentionStack(
        layers=[np.full((1, t, t), 1.0 / t)], grid_n=3, has_class_token=True
    )
    (emap,) = stack_entropy_maps(stack)
    assert emap.shape == (3, 3)
    np.testing.assert_allclose(emap, math.log(9), atol=1e-9)


def test_stack_maps_reduced_rows():
    # 4 reduced rows attending over 16 tokens: 2x2 entropy grid
    stack = AttentionStack(layers=[np.full((1, 4, 16), 1 / 16)], grid_n=4, reduction_r=4)
    (emap,) = stack_entropy_maps(stack)
    assert emap.shape == (2, 2)
    np.testing.assert_allclose(emap, math.log(16), atol=1e-9)


def test_stack_maps_rejects_non_square_grid():
    stack = AttentionStack(layers=[np.full((1, 2, 8), 1 / 8)], grid_n=2, reduction_r=4)
    with pytest.raises(ValueError, match="square"):
        stack_entropy_maps(stack)


# --- resample_bilinear -----------------------------------------------------


def bilinear_oracle(src, out_w, out_h):
    """Per-output-pixel weight computation with plain Python floats."""
    in_h, in_w = len(src), len(src[0])
    out = np.zeros((out_h, out_w))
    for oy in range(out_h):
        for ox in range(out_w):
            sy = min(max((oy + 0.5) * in_h / out_h - 0.5, 0.0), in_h - 1.0)
            sx = min(max((ox + 0.5) * in_w / out_w - 0.5, 0.0), in_w - 1.0)
            y0, x0 = int(math.floor(sy)), int(math.floor(sx))
            y1, x1 = min(y0 + 1, in_h - 1), min(x0 + 1, in_w - 1)
            fy, fx = sy - y0, sx - x0
            out[oy, ox] = (
                src[y0][x0] * (1 - fy) * (1 - fx)
                + src[y0][x1] * (1 - fy) * fx
                + src[y1][x0] * fy * (1 - fx)
                + src[y1][x1] * fy * fx
            )
    return out


def test_resample_identity_bit_equal():
    rng = np.random.default_rng(3)
    m = rng.normal(size=(5, 7))
    np.testing.assert_array_equal(resample_bilinear(m, 7, 5), m)


def test_resample_1x1_constant():
    np.testing.assert_array_equal(
        resample_bilinear(np.array([[2.5]]), 4, 3), np.full((3, 4), 2.5)
    )


def test_resample_2x2_to_2x4_weights():
    out = resample_bilinear(np.array([[0.0, 1.0], [0.0, 1.0]]), 4, 2)
    np.testing.assert_array_equal(out, [[0.0, 0.25, 0.75, 1.0]] * 2)


def test_resample_matches_pixel_oracle():
    rng = np.random.default_rng(9)
    for in_shape, out_wh in [((2, 2), (4, 2)), ((3, 5), (7, 4)), ((4, 4), (3, 9))]:
        src = rng.normal(size=in_shape)
        ours = resample_bilinear(src, *out_wh)
        np.testing.assert_allclose(
            ours, bilinear_oracle(src.tolist(), *out_wh), atol=1e-12, rtol=0
        )


def test_resample_hits_aligned_centers():
    # odd integer upscale factor: input sample i lands at output i*k + k//2
    rng = np.random.default_rng(4)
    src = rng.normal(size=(4, 4))
    out = resample_bilinear(src, 12, 12)
    np.testing.assert_array_equal(out[1::3, 1::3], src)


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 2**31),
    out_w=st.integers(1, 20),
    out_h=st.integers(1, 20),
)
def test_resample_convexity(seed, out_w, out_h):
    rng = np.random.default_rng(seed)
    src = rng.normal(size=(rng.integers(1, 6), rng.integers(1, 6)))
    out = resample_bilinear(src, out_w, out_h)
    assert out.min() >= src.min() - 1e-12 and out.max() <= src.max() + 1e-12


def test_resample_rejects_zero_dims():
    with pytest.raises(ValueError):
        resample_bilinear(np.ones((2, 2)), 0, 3)


# --- aggregation -----------------------------------------------------------


def test_aggregate_single_layer_subset():
    maps = [np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[9.0, 9.0], [9.0, 9.0]])]
    agg = LayerAggregation(mode="uniform_subset", subset=[0])
    np.testing.assert_array_equal(aggregate_layers(maps, agg, 2, 2), maps[0])


def test_aggregate_two_constants():
    maps = [np.full((2, 2), 1.0), np.full((2, 2), 3.0)]
    agg = LayerAggregation(mode="uniform_subset", subset=[0, 1])
    np.testing.assert_array_equal(aggregate_layers(maps, agg, 2, 2), np.full((2, 2), 2.0))


def test_aggregate_weighted_zero_map():
    agg = LayerAggregation(mode="weighted", weights=np.array([1.0]), bias=0.0)
    np.testing.assert_array_equal(
        aggregate_layers([np.zeros((2, 2))], agg, 2, 2), np.full((2, 2), 0.5)
    )


def test_aggregate_resamples_to_common_shape():
    maps = [np.array([[2.0]]), np.full((4, 4), 4.0)]
    agg = LayerAggregation(mode="uniform_subset", subset=[0, 1])
    np.testing.assert_array_equal(aggregate_layers(maps, agg, 4, 4), np.full((4, 4), 3.0))


def test_aggregate_empty_subset_rejected():
    with pytest.raises(ValueError):
        LayerAggregation(mode="uniform_subset", subset=[])


def test_aggregate_weight_length_mismatch():
    agg = LayerAggregation(mode="weighted", weights=np.array([1.0, 2.0]), bias=0.0)
    with pytest.raises(ValueError, match="weights for"):
        aggregate_layers([np.zeros((2, 2))], agg, 2, 2)


def test_aggregate_constant_shift_commutes():
    rng = np.random.default_rng(12)
    maps = [np.round(rng.normal(size=(3, 3)) * 8) / 8 for _ in range(3)]
    agg = LayerAggregation(mode="uniform_subset", subset=[0, 1, 2])
    base = aggregate_layers(maps, agg, 6, 6)
    shifted = aggregate_layers([m + 1.0 for m in maps], agg, 6, 6)
    np.testing.assert_allclose(shifted, base + 1.0, atol=1e-12, rtol=0)


def test_aggregation_json_round_trip():
    for agg in (
        LayerAggregation(mode="uniform_subset", subset=[0, 2]),
        LayerAggregation(mode="weighted", weights=np.array([0.5, -1.5]), bias=2.0),
    ):
        back = LayerAggregation.from_json(agg.to_json())
        assert back.mode == agg.mode
        if agg.mode == "uniform_subset":
            assert back.subset == agg.subset
        else:
            np.testing.assert_array_equal(back.weights, agg.weights)
            assert back.bias == agg.bias


def test_sigmoid_extremes():
    assert sigmoid(np.array([0.0]))[0] == 0.5
    assert sigmoid(np.array([800.0]))[0] == 1.0
    assert sigmoid(np.array([-800.0]))[0] == pytest.approx(0.0, abs=1e-300)


# --- to_score / binarize ---------------------------------------------------


def test_to_score_constant_negated():
    scores = to_score(np.full((2, 2), 1.5), 4, 4)
    np.testing.assert_array_equal(scores, np.full((4, 4), -1.5))


def test_to_score_weighted_unnegated():
    scores = to_score(np.full((2, 2), 0.7), 2, 2, weighted_mode=True)
    np.testing.assert_array_equal(scores, np.full((2, 2), 0.7))


def test_to_score_order_reversal_at_centers():
    emap = np.array([[0.2, 1.0], [1.0, 1.0]])
    scores = to_score(emap, 6, 6)  # odd factor 3: centers at 1, 4
    assert scores[1, 1] > scores[1, 4]
    assert scores[1, 1] == -0.2


def test_binarize_extreme_thresholds():
    s = np.array([[0.2, 0.8]])
    np.testing.assert_array_equal(binarize(s, -1e300), [[1, 1]])
    np.testing.assert_array_equal(binarize(s, 1e300), [[0, 0]])


def test_binarize_threshold_inclusive():
    np.testing.assert_array_equal(binarize(np.array([[0.2, 0.5, 0.8]]), 0.5), [[0, 1, 1]])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), t1=st.floats(-2, 2), t2=st.floats(-2, 2))
def test_binarize_monotone_in_threshold(seed, t1, t2):
    lo, hi = min(t1, t2), max(t1, t2)
    s = np.random.default_rng(seed).normal(size=(4, 4))
    # raising the threshold never turns a 0-pixel into a 1
    assert not np.any(binarize(s, hi) > binarize(s, lo))


def test_binarize_rejects_nan_threshold():
    with pytest.raises(ValueError):
        binarize(np.zeros((1, 1)), float("nan"))


# --- sliding windows -------------------------------------------------------


def test_window_offsets_edge_aligned():
    assert window_offsets(10, 4, 4, 3) == [(0, 0), (3, 0), (6, 0)]
    assert window_offsets(11, 4, 4, 3) == [(0, 0), (3, 0), (6, 0), (7, 0)]


def test_window_offsets_single():
    assert window_offsets(8, 8, 8, 4) == [(0, 0)]


def test_window_offsets_rejects_small_frame():
    with pytest.raises(ValueError):
        window_offsets(6, 6, 8, 4)


def test_merge_single_window_identity():
    s = np.arange(12, dtype=float).reshape(3, 4)
    np.testing.assert_array_equal(merge_windows([(s, 0, 0)], 4, 3), s)


def test_merge_identical_overlap():
    s = np.full((2, 2), 5.0)
    np.testing.assert_array_equal(
        merge_windows([(s, 0, 0), (s, 0, 0)], 2, 2), s
    )


def test_merge_half_overlap_mean():
    a, b = np.zeros((2, 4)), np.ones((2, 4))
    out = merge_windows([(a, 0, 0), (b, 2, 0)], 6, 2)
    np.testing.assert_array_equal(out[:, :2], 0.0)
    np.testing.assert_array_equal(out[:, 2:4], 0.5)
    np.testing.assert_array_equal(out[:, 4:], 1.0)


def test_merge_rejects_uncovered():
    with pytest.raises(ValueError, match="uncovered"):
        merge_windows([(np.ones((2, 2)), 0, 0)], 4, 2)


def test_merge_rejects_out_of_bounds():
    with pytest.raises(ValueError, match="leaves the frame"):
        merge_windows([(np.ones((2, 2)), 3, 0)], 4, 2)
