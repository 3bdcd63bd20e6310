"""Minimal ViT-style encoder forward pass at desk scale.

The point of this model is not accuracy but honesty: it produces genuine
multi-layer, multi-head attention tensors from seeded random weights, so
the entropy pipeline downstream can be exercised end to end without any
pretrained checkpoint.

Block structure, per layer:

    A_i  = row_softmax(Z W_Q_i (Z W_K_i)^T / sqrt(d))      per head i
    SA   = concat_i(A_i Z W_V_i)
    MSA  = SA + SA W_O
    Z'   = MSA + MLP(MSA),  MLP(x) = relu(x W1 + b1) W2 + b2

There is deliberately no layer norm and the first skip adds SA itself,
not Z. Head dim is d = C / m, MLP hidden width is 4C, activation relu.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tensor_io import load_tensor, save_tensor

ROW_SUM_TOL = 1e-6


@dataclass(frozen=True)
class VitConfig:
    """Model geometry. `channels` must be divisible by `heads`."""

    grid_n: int
    channels: int
    heads: int
    layers: int
    patch_size: int = 16
    use_class_token: bool = False

    def __post_init__(self):
        if self.grid_n < 1 or self.layers < 1 or self.heads < 1:
            raise ValueError("grid_n, layers and heads must all be >= 1")
        if self.patch_size < 1:
            raise ValueError("patch_size must be >= 1")
        if self.channels % self.heads != 0:
            raise ValueError(
                f"C not divisible by m: channels={self.channels} heads={self.heads}"
            )

    @property
    def head_dim(self) -> int:
        return self.channels // self.heads

    @property
    def tokens(self) -> int:
        return self.grid_n * self.grid_n + (1 if self.use_class_token else 0)

    @property
    def image_side(self) -> int:
        return self.grid_n * self.patch_size

    def to_json(self) -> dict:
        return {
            "patch_size": self.patch_size,
            "grid_n": self.grid_n,
            "channels": self.channels,
            "heads": self.heads,
            "layers": self.layers,
            "use_class_token": self.use_class_token,
        }

    @classmethod
    def from_json(cls, data: dict) -> "VitConfig":
        return cls(
            grid_n=data["grid_n"],
            channels=data["channels"],
            heads=data["heads"],
            layers=data["layers"],
            patch_size=data.get("patch_size", 16),
            use_class_token=data.get("use_class_token", False),
        )


@dataclass
class LayerWeights:
    w_q: np.ndarray  # (m, C, d)
    w_k: np.ndarray  # (m, C, d)
    w_v: np.ndarray  # (m, C, d)
    w_o: np.ndarray  # (m*d, C)
    mlp_w1: np.ndarray  # (C, 4C)
    mlp_b1: np.ndarray  # (4C,)
    mlp_w2: np.ndarray  # (4C, C)
    mlp_b2: np.ndarray  # (C,)


@dataclass
class VitWeights:
    config: VitConfig
    patch_embed: np.ndarray  # (patch_size**2, C)
    pos_embed: np.ndarray  # (T, C)
    blocks: list[LayerWeights]


@dataclass
class AttentionStack:
    """Per-layer attention tensors of shape (m, R, T), rows stochastic.

    R equals T for a full attention matrix, or a reduced row count when
    the key/value sequence was shortened by an integer factor
    `reduction_r`. The class token, when present, sits at index 0 and is
    excluded from the reduction accounting.
    """

    layers: list[np.ndarray] = field(default_factory=list)
    grid_n: int = 0
    has_class_token: bool = False
    reduction_r: int = 1

    def __post_init__(self):
        if self.reduction_r < 1:
            raise ValueError("reduction_r must be >= 1")
        for idx, a in enumerate(self.layers):
            if a.ndim != 3:
                raise ValueError(f"layer {idx}: expected (m, R, T), got {a.shape}")
            m, r, t = a.shape
            if m < 1:
                raise ValueError(f"layer {idx}: zero heads")
            spatial_r = r - 1 if self.has_class_token else r
            spatial_t = t - 1 if self.has_class_token else t
            if spatial_r * self.reduction_r != spatial_t:
                raise ValueError(
                    f"layer {idx}: rows {r} x reduction {self.reduction_r} "
                    f"inconsistent with {t} tokens"
                )
            if np.min(a) < 0:
                raise ValueError(f"layer {idx}: negative attention value")
            sums = a.sum(axis=-1)
            if np.max(np.abs(sums - 1.0)) > ROW_SUM_TOL:
                raise ValueError(f"layer {idx}: attention rows do not sum to 1")

    def __len__(self) -> int:
        return len(self.layers)


def init_model(config: VitConfig, seed: int) -> VitWeights:
    """Deterministic seeded weights, zero-mean normal at scale 1/sqrt(C).

    Weights are drawn in float64 and stored float32 so that a save/load
    round trip through NPY reproduces the in-memory model bit-exactly.
    """
    rng = np.random.default_rng(seed)
    c, m, d = config.channels, config.heads, config.head_dim
    hidden = 4 * c
    scale = 1.0 / np.sqrt(c)

    def draw(*shape):
        return rng.normal(0.0, scale, size=shape).astype(np.float32)

    patch_embed = draw(config.patch_size**2, c)
    pos_embed = draw(config.tokens, c)
    blocks = []
    for _ in range(config.layers):
        blocks.append(
            LayerWeights(
                w_q=draw(m, c, d),
                w_k=draw(m, c, d),
                w_v=draw(m, c, d),
                w_o=draw(m * d, c),
                mlp_w1=draw(c, hidden),
                mlp_b1=np.zeros(hidden, dtype=np.float32),
                mlp_w2=draw(hidden, c),
                mlp_b2=np.zeros(c, dtype=np.float32),
            )
        )
    return VitWeights(config=config, patch_embed=patch_embed, pos_embed=pos_embed, blocks=blocks)


def patchify(image: np.ndarray, config: VitConfig) -> np.ndarray:
    """Cut an (H, W) uint8 image into flattened patch rows scaled to [0, 1].

    Row j holds patch j in row-major patch order; a zero class-token row
    is prepended when the config enables it.
    """
    n, p = config.grid_n, config.patch_size
    img = np.asarray(image)
    if img.shape != (n * p, n * p):
        raise ValueError(
            f"image shape {img.shape} does not match grid {n} x patch {p}"
        )
    patches = (
        img.astype(np.float64)
        .reshape(n, p, n, p)
        .transpose(0, 2, 1, 3)
        .reshape(n * n, p * p)
        / 255.0
    )
    if config.use_class_token:
        patches = np.vstack([np.zeros((1, p * p)), patches])
    return patches


def _row_softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def attention_forward(
    z: np.ndarray, block: LayerWeights, config: VitConfig
) -> tuple[np.ndarray, np.ndarray]:
    """One multi-head attention: returns (A of shape (m, T, T), SA of (T, m*d))."""
    z = np.asarray(z, dtype=np.float64)
    t = z.shape[0]
    if z.shape[1] != config.channels:
        raise ValueError(f"Z has {z.shape[1]} channels, config says {config.channels}")
    d = config.head_dim
    q = np.einsum("tc,mcd->mtd", z, block.w_q.astype(np.float64))
    k = np.einsum("tc,mcd->mtd", z, block.w_k.astype(np.float64))
    v = np.einsum("tc,mcd->mtd", z, block.w_v.astype(np.float64))
    scores = np.einsum("mtd,msd->mts", q, k) / np.sqrt(d)
    attn = _row_softmax(scores)
    sa = np.einsum("mts,msd->mtd", attn, v)
    sa_concat = sa.transpose(1, 0, 2).reshape(t, config.heads * d)
    return attn, sa_concat


def msa_block(
    z: np.ndarray, block: LayerWeights, config: VitConfig
) -> tuple[np.ndarray, np.ndarray]:
    """One full transformer block; returns (Z_next, A)."""
    attn, sa_concat = attention_forward(z, block, config)
    msa = sa_concat + sa_concat @ block.w_o.astype(np.float64)
    hidden = np.maximum(
        0.0, msa @ block.mlp_w1.astype(np.float64) + block.mlp_b1.astype(np.float64)
    )
    mlp = hidden @ block.mlp_w2.astype(np.float64) + block.mlp_b2.astype(np.float64)
    return msa + mlp, attn


def vit_forward(image: np.ndarray, weights: VitWeights) -> AttentionStack:
    """Full forward pass over an image; collects every layer's attention."""
    config = weights.config
    z = patchify(image, config) @ weights.patch_embed.astype(
        np.float64
    ) + weights.pos_embed.astype(np.float64)
    attn_layers = []
    for block in weights.blocks:
        z, attn = msa_block(z, block, config)
        attn_layers.append(attn)
    return AttentionStack(
        layers=attn_layers,
        grid_n=config.grid_n,
        has_class_token=config.use_class_token,
        reduction_r=1,
    )


_LAYER_ARRAYS = ("w_q", "w_k", "w_v", "w_o", "mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2")


def save_model(weights: VitWeights, model_dir: str | Path) -> None:
    """Persist weights as a directory of NPY tensors with a JSON manifest."""
    out = Path(model_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config": weights.config.to_json(),
        "patch_embed": "patch_embed.npy",
        "pos_embed": "pos_embed.npy",
        "layers": [],
    }
    save_tensor(weights.patch_embed, out / "patch_embed.npy")
    save_tensor(weights.pos_embed, out / "pos_embed.npy")
    for idx, block in enumerate(weights.blocks):
        entry = {}
        for name in _LAYER_ARRAYS:
            fname = f"layer{idx:02d}_{name}.npy"
            save_tensor(getattr(block, name), out / fname)
            entry[name] = fname
        manifest["layers"].append(entry)
    (out / "config.json").write_text(
        json.dumps(weights.config.to_json(), indent=2, sort_keys=True) + "\n"
    )
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )


def load_model(model_dir: str | Path) -> VitWeights:
    """Load a model directory written by `save_model`."""
    src = Path(model_dir)
    manifest = json.loads((src / "manifest.json").read_text())
    config = VitConfig.from_json(manifest["config"])
    blocks = []
    for entry in manifest["layers"]:
        blocks.append(
            LayerWeights(**{name: load_tensor(src / entry[name]) for name in _LAYER_ARRAYS})
        )
    if len(blocks) != config.layers:
        raise ValueError(
            f"manifest lists {len(blocks)} layers, config says {config.layers}"
        )
    return VitWeights(
        config=config,
        patch_embed=load_tensor(src / manifest["patch_embed"]),
        pos_embed=load_tensor(src / manifest["pos_embed"]),
        blocks=blocks,
    )
