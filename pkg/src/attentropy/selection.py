"""Automatic attention-layer selection and learned layer weighting.

A model's useful layers are found without any labeled data: a synthetic
circle-on-texture test pattern is pushed through the encoder, per-layer
entropy is averaged separately over object and background patches, and a
layer is kept when background entropy exceeds object entropy by at least
20%. An empty selection falls back to using all layers.

As an alternative to the uniform subset, a logistic regression over
per-layer entropies (one weight per layer plus a bias) can be fit on
labeled frames by full-batch gradient descent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .entropy import LayerAggregation, sigmoid, stack_entropy_maps
from .tensor_io import MASK_OBJECT
from .vit import AttentionStack, VitWeights, vit_forward

SELECT_RATIO = 1.2


@dataclass
class TestPattern:
    image: np.ndarray  # (H, W) uint8
    object_mask: np.ndarray  # (H, W) uint8, 1 inside the circle


@dataclass
class LayerStats:
    """Mean entropy over object and background patch cells, per layer."""

    obj_means: np.ndarray
    bg_means: np.ndarray


def gen_test_pattern(
    width: int,
    height: int,
    circle_cx: float,
    circle_cy: float,
    radius: float,
    seed: int,
) -> TestPattern:
    """Circle on a textured background, a stand-in for a generic object.

    Background: 16-px checkerboard of mid grays plus seeded uniform noise.
    Circle: fine 4-px vertical stripes at high contrast. The mask marks
    the filled circle. Deterministic for a fixed seed.
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")
    if (
        circle_cx - radius < 0
        or circle_cy - radius < 0
        or circle_cx + radius > width - 1
        or circle_cy + radius > height - 1
    ):
        raise ValueError(
            f"circle (cx={circle_cx}, cy={circle_cy}, r={radius}) "
            f"leaves the {width}x{height} image"
        )
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:height, 0:width]
    checker = ((xs // 16 + ys // 16) % 2).astype(np.float64)
    background = 96.0 + 64.0 * checker + rng.uniform(-40.0, 40.0, size=(height, width))
    stripes = np.where((xs // 4) % 2 == 0, 30.0, 225.0)
    inside = (xs - circle_cx) ** 2 + (ys - circle_cy) ** 2 <= radius**2
    image = np.clip(np.where(inside, stripes, background), 0, 255).astype(np.uint8)
    return TestPattern(image=image, object_mask=inside.astype(np.uint8))


def downsample_mask(mask: np.ndarray, grid_w: int, grid_h: int) -> np.ndarray:
    """Majority-vote a pixel mask onto a patch grid; ties go to background."""
    m = np.asarray(mask)
    h, w = m.shape
    if h % grid_h != 0 or w % grid_w != 0:
        raise ValueError(f"mask {w}x{h} does not tile a {grid_w}x{grid_h} grid")
    bh, bw = h // grid_h, w // grid_w
    frac = (
        (m == MASK_OBJECT)
        .reshape(grid_h, bh, grid_w, bw)
        .mean(axis=(1, 3))
    )
    return (frac > 0.5).astype(np.uint8)


def region_stats(entropy_maps: list[np.ndarray], mask: np.ndarray) -> LayerStats:
    """Object and background mean entropy per layer.

    The pixel mask is majority-voted down to each layer's own grid, so
    layers at different resolutions are handled uniformly.
    """
    obj_means, bg_means = [], []
    for idx, emap in enumerate(entropy_maps):
        gh, gw = emap.shape
        cells = downsample_mask(mask, gw, gh).astype(bool)
        if not cells.any() or cells.all():
            raise ValueError(
                f"layer {idx}: mask leaves an empty region on the {gw}x{gh} grid"
            )
        obj_means.append(float(emap[cells].mean()))
        bg_means.append(float(emap[~cells].mean()))
    return LayerStats(
        obj_means=np.asarray(obj_means), bg_means=np.asarray(bg_means)
    )


def select_layers(stats: LayerStats, ratio: float = SELECT_RATIO) -> list[int]:
    """Layers whose background entropy is at least `ratio` times the object's."""
    if not ratio > 1:
        raise ValueError("ratio must exceed 1")
    return [
        l
        for l, (obj, bg) in enumerate(zip(stats.obj_means, stats.bg_means))
        if bg >= ratio * obj
    ]


def selection_report(
    stats: LayerStats, selected: list[int], fallback_used: bool, ratio: float
) -> dict:
    """JSON-ready report of the per-layer decision."""
    per_layer = []
    for l, (obj, bg) in enumerate(zip(stats.obj_means, stats.bg_means)):
        per_layer.append(
            {
                "layer": l,
                "obj_mean": obj,
                "bg_mean": bg,
                "ratio": bg / obj if obj > 0 else None,
                "selected": l in selected,
            }
        )
    n = len(stats.obj_means)
    return {
        "per_layer": per_layer,
        "selection": list(range(n)) if fallback_used else selected,
        "fallback_used": fallback_used,
        "threshold_ratio": ratio,
    }


def auto_select(
    stack: AttentionStack,
    object_mask: np.ndarray,
    ratio: float = SELECT_RATIO,
    renormalize: bool = True,
) -> tuple[LayerAggregation, dict]:
    """Pick the layer subset for a stack given the object mask of its input.

    Returns the aggregation plus the selection report; an empty selection
    falls back to all layers with `fallback_used` set.
    """
    maps = stack_entropy_maps(stack, renormalize=renormalize)
    stats = region_stats(maps, object_mask)
    selected = select_layers(stats, ratio)
    fallback = not selected
    report = selection_report(stats, selected, fallback, ratio)
    agg = LayerAggregation(mode="uniform_subset", subset=report["selection"])
    return agg, report


def auto_select_model(
    weights: VitWeights,
    ratio: float = SELECT_RATIO,
    seed: int = 0,
    renormalize: bool = True,
) -> tuple[LayerAggregation, dict]:
    """Run the whole selection procedure for a model from scratch.

    Generates a test pattern sized to the model input (centered circle,
    radius a quarter of the image side but at least one patch), runs the
    forward pass, and applies the 20% rule.
    """
    config = weights.config
    side = config.image_side
    radius = max(config.patch_size, side // 4)
    pattern = gen_test_pattern(side, side, side / 2, side / 2, radius, seed)
    stack = vit_forward(pattern.image, weights)
    return auto_select(stack, pattern.object_mask, ratio, renormalize)


def logistic_loss(
    a: np.ndarray, b: float, samples: np.ndarray, labels: np.ndarray, l2: float
) -> float:
    """Mean cross-entropy of sigma(samples @ a + b) plus l2 * ||a||^2."""
    z = samples @ a + b
    ce = np.mean(np.logaddexp(0.0, z) - labels * z)
    return float(ce + l2 * np.dot(a, a))


def logistic_gradient(
    a: np.ndarray, b: float, samples: np.ndarray, labels: np.ndarray, l2: float
) -> tuple[np.ndarray, float]:
    """Analytic gradient of `logistic_loss` in (a, b)."""
    residual = sigmoid(samples @ a + b) - labels
    grad_a = samples.T @ residual / samples.shape[0] + 2.0 * l2 * a
    grad_b = float(residual.mean())
    return grad_a, grad_b


def fit_layer_weights(
    samples: np.ndarray,
    labels: np.ndarray,
    epochs: int = 500,
    lr: float = 0.1,
    l2: float = 1e-4,
) -> tuple[np.ndarray, float, list[float]]:
    """Full-batch gradient descent from a = 0, b = 0.

    `samples` is (n, L) per-cell layer entropies, `labels` is {0, 1}.
    Returns (a, b, per-epoch loss trace); deterministic, no randomness.
    """
    x = np.asarray(samples, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if x.ndim != 2 or x.shape[0] != y.size:
        raise ValueError(f"samples {x.shape} do not match {y.size} labels")
    if not np.isfinite(x).all():
        raise ValueError("non-finite feature values")
    if not ((y == 0) | (y == 1)).all():
        raise ValueError("labels must be 0 or 1")
    if y.min() == y.max():
        raise ValueError("need at least one sample of each class")
    a = np.zeros(x.shape[1], dtype=np.float64)
    b = 0.0
    losses = []
    for _ in range(epochs):
        grad_a, grad_b = logistic_gradient(a, b, x, y, l2)
        a = a - lr * grad_a
        b = b - lr * grad_b
        losses.append(logistic_loss(a, b, x, y, l2))
    return a, b, losses
