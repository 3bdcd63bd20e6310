"""Spatial attention entropy: the measurement at the heart of the toolkit.

Per layer, attention is averaged over heads, the class token row/column is
optionally stripped, and each row's Shannon entropy (in nats, with
0 ln 0 := 0) is laid out on the patch grid. Layer maps are resampled to a
common resolution and combined, either as a plain mean over a chosen layer
subset or as a logistic-weighted mixture. Negating the combined map and
upsampling it to image resolution yields a per-pixel objectness score;
thresholding that gives a binary segmentation.

Arrays in, arrays out: entropy maps and score maps are plain 2-D float64
ndarrays, masks are uint8 arrays of {0, 1}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .vit import AttentionStack


def average_heads(attn: np.ndarray) -> np.ndarray:
    """Mean over the head axis of an (m, R, T) attention tensor."""
    a = np.asarray(attn, dtype=np.float64)
    if a.ndim != 3:
        raise ValueError(f"expected (m, R, T), got shape {a.shape}")
    if a.shape[0] == 0:
        raise ValueError("no heads to average")
    return a.mean(axis=0)


def strip_class_token(abar: np.ndarray, renormalize: bool = True) -> np.ndarray:
    """Drop row and column 0 of a (T, T) head-averaged attention matrix.

    With renormalize, each surviving row is rescaled to sum 1; rows left
    with zero mass become uniform.
    """
    a = np.asarray(abar, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected square (T, T), got shape {a.shape}")
    if a.shape[0] < 2:
        raise ValueError("need T >= 2 to strip the class token")
    out = a[1:, 1:].copy()
    if renormalize:
        sums = out.sum(axis=1, keepdims=True)
        dead = sums[:, 0] == 0.0
        out = np.divide(out, sums, out=np.zeros_like(out), where=sums != 0)
        out[dead] = 1.0 / out.shape[1]
    return out


def row_entropy(rows: np.ndarray) -> np.ndarray:
    """Shannon entropy of each row in nats, 0 ln 0 := 0."""
    p = np.asarray(rows, dtype=np.float64)
    if np.min(p) < 0:
        raise ValueError("negative entries have no entropy")
    terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=-1)


def entropy_grid(entropies: np.ndarray, grid_w: int, grid_h: int) -> np.ndarray:
    """Row-major reshape of an R-vector of entropies into (grid_h, grid_w)."""
    e = np.asarray(entropies, dtype=np.float64).reshape(-1)
    if e.size != grid_w * grid_h:
        raise ValueError(f"{e.size} entropies do not fill a {grid_w}x{grid_h} grid")
    return e.reshape(grid_h, grid_w)


def stack_entropy_maps(
    stack: AttentionStack, renormalize: bool = True
) -> list[np.ndarray]:
    """Per-layer entropy grids for a whole attention stack.

    Reduced-row stacks keep their reduced grid: entropy is taken per
    surviving row over all T columns and reshaped to the reduced square
    grid. Non-square reduced grids are rejected.
    """
    maps = []
    for attn in stack.layers:
        abar = average_heads(attn)
        if stack.has_class_token:
            abar = strip_class_token(abar, renormalize=renormalize)
        rows = abar.shape[0]
        side = round(np.sqrt(rows))
        if side * side != rows:
            raise ValueError(f"{rows} attention rows do not form a square grid")
        maps.append(entropy_grid(row_entropy(abar), side, side))
    return maps


def resample_bilinear(values: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resize of a 2-D map with half-pixel center alignment.

    Output pixel centers map to source coordinates
    (i + 0.5) * in/out - 0.5, clamped to the source extent, so an
    identity resize returns the input bit-exactly.
    """
    src = np.asarray(values, dtype=np.float64)
    if src.ndim != 2 or src.shape[0] < 1 or src.shape[1] < 1:
        raise ValueError(f"expected nonempty 2-D map, got shape {src.shape}")
    if out_w < 1 or out_h < 1:
        raise ValueError("output dims must be >= 1")
    in_h, in_w = src.shape

    def axis_coords(n_out, n_in):
        pos = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1.0)
        lo = np.floor(pos).astype(np.intp)
        lo = np.minimum(lo, n_in - 1)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    y0, y1, wy = axis_coords(out_h, in_h)
    x0, x1, wx = axis_coords(out_w, in_w)
    top = src[np.ix_(y0, x0)] * (1 - wx) + src[np.ix_(y0, x1)] * wx
    bot = src[np.ix_(y1, x0)] * (1 - wx) + src[np.ix_(y1, x1)] * wx
    return top * (1 - wy[:, None]) + bot * wy[:, None]


@dataclass
class LayerAggregation:
    """How per-layer entropy maps combine.

    mode "uniform_subset": plain mean over the layer indices in `subset`
    (0-based). mode "weighted": elementwise logistic(sum_l a_l E_l + b)
    with one weight per layer.
    """

    mode: str = "uniform_subset"
    subset: list[int] = field(default_factory=list)
    weights: np.ndarray | None = None
    bias: float = 0.0

    def __post_init__(self):
        if self.mode not in ("uniform_subset", "weighted"):
            raise ValueError(f"unknown aggregation mode {self.mode!r}")
        if self.mode == "uniform_subset" and not self.subset:
            raise ValueError("uniform_subset needs a nonempty layer subset")
        if self.mode == "weighted" and self.weights is None:
            raise ValueError("weighted mode needs per-layer weights")

    def to_json(self) -> dict:
        if self.mode == "uniform_subset":
            return {"mode": self.mode, "subset": [int(l) for l in self.subset]}
        return {
            "mode": self.mode,
            "weights": [float(w) for w in np.asarray(self.weights).reshape(-1)],
            "bias": float(self.bias),
        }

    @classmethod
    def from_json(cls, data: dict) -> "LayerAggregation":
        if data["mode"] == "uniform_subset":
            return cls(mode="uniform_subset", subset=list(data["subset"]))
        return cls(
            mode="weighted",
            weights=np.asarray(data["weights"], dtype=np.float64),
            bias=float(data["bias"]),
        )


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def aggregate_layers(
    maps: list[np.ndarray],
    agg: LayerAggregation,
    common_w: int,
    common_h: int,
) -> np.ndarray:
    """Resample every layer map to (common_h, common_w), then combine."""
    resized = [resample_bilinear(m, common_w, common_h) for m in maps]
    if agg.mode == "uniform_subset":
        for l in agg.subset:
            if not 0 <= l < len(maps):
                raise ValueError(f"layer index {l} outside 0..{len(maps) - 1}")
        return np.mean([resized[l] for l in agg.subset], axis=0)
    a = np.asarray(agg.weights, dtype=np.float64).reshape(-1)
    if a.size != len(maps):
        raise ValueError(f"{a.size} weights for {len(maps)} layers")
    mix = np.tensordot(a, np.stack(resized), axes=1) + agg.bias
    return sigmoid(mix)


def to_score(
    emap: np.ndarray, img_w: int, img_h: int, weighted_mode: bool = False
) -> np.ndarray:
    """Per-pixel objectness score from a combined entropy map.

    Uniform aggregation negates the entropy (objects are the low-entropy
    regions) before upsampling; weighted aggregation passes the logistic
    output through unnegated, since the regression already oriented it.
    """
    src = np.asarray(emap, dtype=np.float64)
    if not weighted_mode:
        src = -src
    return resample_bilinear(src, img_w, img_h)


def binarize(scores: np.ndarray, threshold: float) -> np.ndarray:
    """Pixel mask: 1 where score >= threshold, else 0."""
    if not np.isfinite(threshold):
        raise ValueError("threshold must be finite")
    return (np.asarray(scores, dtype=np.float64) >= threshold).astype(np.uint8)


def window_offsets(
    full_w: int, full_h: int, window: int, stride: int
) -> list[tuple[int, int]]:
    """Top-left offsets of a sliding window covering a full frame.

    Offsets advance by `stride`; the final offset per axis is clamped so
    the last window ends flush with the frame edge.
    """
    if window < 1 or stride < 1:
        raise ValueError("window and stride must be >= 1")
    if full_w < window or full_h < window:
        raise ValueError(f"frame {full_w}x{full_h} smaller than window {window}")

    def axis(full):
        stops = list(range(0, full - window + 1, stride))
        if stops[-1] != full - window:
            stops.append(full - window)
        return stops

    return [(x, y) for y in axis(full_h) for x in axis(full_w)]


def merge_windows(
    windows: list[tuple[np.ndarray, int, int]], full_w: int, full_h: int
) -> np.ndarray:
    """Average overlapping window score maps into one full-frame map.

    Each entry is (scores, x_offset, y_offset). Every output pixel must
    be covered at least once.
    """
    total = np.zeros((full_h, full_w), dtype=np.float64)
    count = np.zeros((full_h, full_w), dtype=np.int64)
    for scores, x, y in windows:
        s = np.asarray(scores, dtype=np.float64)
        h, w = s.shape
        if x < 0 or y < 0 or x + w > full_w or y + h > full_h:
            raise ValueError(f"window {w}x{h} at ({x}, {y}) leaves the frame")
        total[y : y + h, x : x + w] += s
        count[y : y + h, x : x + w] += 1
    if np.min(count) == 0:
        raise ValueError("windows leave uncovered pixels")
    return total / count
