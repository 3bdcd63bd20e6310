"""Attention-entropy toolkit: segment unseen objects from ViT attention.

The pipeline: a toy transformer forward pass yields per-layer attention,
each attention row's Shannon entropy is laid out on the patch grid,
informative layers are picked automatically (or weighted by logistic
regression), and the negated, upsampled entropy becomes a per-pixel
objectness score with a full evaluation protocol on top.
"""

from .entropy import (
    LayerAggregation,
    aggregate_layers,
    average_heads,
    binarize,
    merge_windows,
    resample_bilinear,
    row_entropy,
    stack_entropy_maps,
    strip_class_token,
    to_score,
)
from .evaluation import (
    MetricsReport,
    PRCurve,
    average_precision,
    connected_components,
    evaluate,
    fpr_at_tpr,
    pr_curve,
    segment_metrics,
)
from .selection import (
    auto_select,
    auto_select_model,
    fit_layer_weights,
    gen_test_pattern,
    region_stats,
    select_layers,
)
from .tensor_io import load_gray, load_mask, load_tensor, save_gray, save_mask, save_tensor
from .vit import (
    AttentionStack,
    VitConfig,
    VitWeights,
    attention_forward,
    init_model,
    load_model,
    msa_block,
    patchify,
    save_model,
    vit_forward,
)

__version__ = "0.1.0"
