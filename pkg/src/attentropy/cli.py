"""Command-line driver for the whole pipeline.

Subcommands: init-model, gen-testpattern, extract, select-layers,
fit-weights, segment, evaluate, export-viz, validate-viz. Every command
is deterministic under a fixed --seed: reruns produce byte-identical
artifacts. Exit codes: 0 success, 1 runtime/I-O error, 2 usage or
config error. Set ATTENTROPY_LOG=debug for verbose logging on stderr.

A JSON file passed via --config supplies values for options omitted on
the command line (keys are the option names with dashes as underscores).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import entropy as ent
from .evaluation import DEFAULT_THRESHOLDS, evaluate
from .selection import (
    SELECT_RATIO,
    auto_select_model,
    downsample_mask,
    fit_layer_weights,
    gen_test_pattern,
)
from .tensor_io import (
    MASK_IGNORE,
    MASK_OBJECT,
    NpyFormatError,
    PgmFormatError,
    load_gray,
    load_mask,
    load_tensor,
    save_gray,
    save_mask,
    save_tensor,
)
from .vit import VitConfig, init_model, load_model, save_model, vit_forward

log = logging.getLogger("attentropy")


def _write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _resolve(args, name: str, default):
    """CLI value if given, else --config file value, else the default."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    return args.cfg.get(name, default)


def extract_entropy_maps(
    image: np.ndarray,
    weights,
    stride: int | None = None,
    renormalize: bool = True,
) -> list[np.ndarray]:
    """Full-frame per-layer entropy grids in patch cells.

    Frames larger than the model input are covered by sliding windows
    (stride defaults to half a window, must be a patch multiple) whose
    grids are averaged cell-wise where they overlap.
    """
    config = weights.config
    p = config.patch_size
    h, w = image.shape
    if h % p or w % p:
        raise ValueError(f"image {w}x{h} is not a multiple of patch size {p}")
    window = config.image_side
    if stride is None:
        stride = max(p, window // 2)
    if stride % p:
        raise ValueError(f"stride {stride} must be a multiple of patch size {p}")
    offsets = ent.window_offsets(w, h, window, stride)
    log.debug("extracting %d windows of %d px, stride %d", len(offsets), window, stride)
    per_layer = [[] for _ in range(config.layers)]
    for x, y in offsets:
        stack = vit_forward(image[y : y + window, x : x + window], weights)
        for l, m in enumerate(ent.stack_entropy_maps(stack, renormalize)):
            per_layer[l].append((m, x // p, y // p))
    return [ent.merge_windows(ws, w // p, h // p) for ws in per_layer]


def _head_averaged_attention(stack, renormalize: bool) -> list[np.ndarray]:
    """Per-layer (T', T') patch-to-patch attention, class token stripped."""
    out = []
    for attn in stack.layers:
        abar = ent.average_heads(attn)
        if stack.has_class_token:
            abar = ent.strip_class_token(abar, renormalize=renormalize)
        out.append(abar)
    return out


def _load_aggregation(path: Path, n_layers: int) -> ent.LayerAggregation:
    """Accept a selection report, a fit-weights file, or a bare aggregation."""
    data = json.loads(path.read_text())
    if "mode" in data:
        return ent.LayerAggregation.from_json(data)
    if "aggregation" in data:
        return ent.LayerAggregation.from_json(data["aggregation"])
    if "selection" in data:
        return ent.LayerAggregation(mode="uniform_subset", subset=list(data["selection"]))
    raise ValueError(f"{path} holds no recognizable aggregation")


# --- subcommands -----------------------------------------------------------


def cmd_init_model(args) -> int:
    config = VitConfig(
        grid_n=args.grid,
        channels=args.channels,
        heads=args.heads,
        layers=args.layers,
        patch_size=args.patch,
        use_class_token=args.class_token,
    )
    seed = int(_resolve(args, "seed", 0))
    save_model(init_model(config, seed), args.out)
    print(f"model ({config.layers} layers, grid {config.grid_n}) written to {args.out}")
    return 0


def cmd_gen_testpattern(args) -> int:
    w, h = args.width, args.height
    cx = args.cx if args.cx is not None else w / 2
    cy = args.cy if args.cy is not None else h / 2
    radius = args.radius if args.radius is not None else min(w, h) // 4
    seed = int(_resolve(args, "seed", 0))
    pattern = gen_test_pattern(w, h, cx, cy, radius, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_gray(pattern.image, out / "image.pgm")
    save_mask(pattern.object_mask, out / "mask.pgm")
    print(f"test pattern {w}x{h} (circle r={radius}) written to {out}")
    return 0


def cmd_extract(args) -> int:
    weights = load_model(args.model)
    image = load_gray(args.image)
    maps = extract_entropy_maps(image, weights, args.stride, args.renormalize)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for l, emap in enumerate(maps):
        save_tensor(emap, out / f"layer{l:02d}_entropy.npy")
    config = weights.config
    h, w = image.shape
    if args.dump_attention:
        if (h, w) != (config.image_side, config.image_side):
            raise ValueError("attention dumps need a single-window image")
        stack = vit_forward(image, weights)
        for l, abar in enumerate(_head_averaged_attention(stack, args.renormalize)):
            save_tensor(abar, out / f"layer{l:02d}_attention.npy")
    meta = {
        "layers": config.layers,
        "grid_w": w // config.patch_size,
        "grid_h": h // config.patch_size,
        "patch_size": config.patch_size,
        "window": config.image_side,
        "stride": args.stride or max(config.patch_size, config.image_side // 2),
        "renormalize": args.renormalize,
        "attention_dumped": bool(args.dump_attention),
        "image": Path(args.image).name,
    }
    _write_json(meta, out / "meta.json")
    print(f"{config.layers} entropy maps ({meta['grid_w']}x{meta['grid_h']}) in {out}")
    return 0


def cmd_select_layers(args) -> int:
    weights = load_model(args.model)
    seed = int(_resolve(args, "seed", 0))
    _, report = auto_select_model(
        weights, ratio=args.ratio, seed=seed, renormalize=args.renormalize
    )
    _write_json(report, Path(args.out))
    for row in report["per_layer"]:
        ratio = "n/a" if row["ratio"] is None else f"{row['ratio']:.3f}"
        mark = "*" if row["selected"] else " "
        print(
            f"layer {row['layer']:2d}{mark} obj {row['obj_mean']:.4f} "
            f"bg {row['bg_mean']:.4f} ratio {ratio}"
        )
    suffix = " (fallback: all layers)" if report["fallback_used"] else ""
    print(f"selection: {report['selection']}{suffix}")
    return 0


def _frame_dataset(entropy_dir: Path, mask_path: Path) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell (features, labels) for one extracted frame.

    Cells that are majority-ignore in the pixel mask are dropped.
    """
    meta = json.loads((entropy_dir / "meta.json").read_text())
    gw, gh = meta["grid_w"], meta["grid_h"]
    maps = [
        load_tensor(entropy_dir / f"layer{l:02d}_entropy.npy")
        for l in range(meta["layers"])
    ]
    mask = load_mask(mask_path)
    labels = downsample_mask(mask, gw, gh).astype(np.float64).reshape(-1)
    h, w = mask.shape
    ignore_frac = (
        (mask == MASK_IGNORE)
        .reshape(gh, h // gh, gw, w // gw)
        .mean(axis=(1, 3))
        .reshape(-1)
    )
    keep = ignore_frac <= 0.5
    features = np.stack([m.astype(np.float64).reshape(-1) for m in maps], axis=1)
    return features[keep], labels[keep]


def cmd_fit_weights(args) -> int:
    xs, ys = [], []
    for entropy_dir, mask_path in args.frame:
        x, y = _frame_dataset(Path(entropy_dir), Path(mask_path))
        xs.append(x)
        ys.append(y)
    a, b, losses = fit_layer_weights(
        np.concatenate(xs), np.concatenate(ys), args.epochs, args.lr, args.l2
    )
    out = {
        "aggregation": {
            "mode": "weighted",
            "weights": [float(v) for v in a],
            "bias": float(b),
        },
        "epochs": args.epochs,
        "lr": args.lr,
        "l2": args.l2,
        "frames": len(args.frame),
        "final_loss": losses[-1] if losses else None,
    }
    _write_json(out, Path(args.out))
    final = f"{losses[-1]:.6f}" if losses else "n/a"
    print(f"weights for {a.size} layers written to {args.out} (final loss {final})")
    return 0


def cmd_segment(args) -> int:
    weights = load_model(args.model)
    image = load_gray(args.image)
    maps = extract_entropy_maps(image, weights, args.stride, args.renormalize)
    if args.agg is not None:
        agg = _load_aggregation(Path(args.agg), len(maps))
    elif args.layers is not None:
        subset = [int(v) for v in args.layers.split(",") if v.strip()]
        agg = ent.LayerAggregation(mode="uniform_subset", subset=subset)
    else:
        agg = ent.LayerAggregation(
            mode="uniform_subset", subset=list(range(len(maps)))
        )
    gh, gw = maps[0].shape
    e_bar = ent.aggregate_layers(maps, agg, gw, gh)
    h, w = image.shape
    scores = ent.to_score(e_bar, w, h, weighted_mode=agg.mode == "weighted")
    mask = ent.binarize(scores, args.threshold)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_tensor(scores, out / "scores.npy")
    save_mask(mask, out / "mask.pgm")
    _write_json(
        {
            "aggregation": agg.to_json(),
            "threshold": args.threshold,
            "image": Path(args.image).name,
        },
        out / "segment.json",
    )
    print(f"segmented {int(mask.sum())}/{mask.size} object pixels into {out}")
    return 0


def cmd_evaluate(args) -> int:
    scores_dir, gt_dir = Path(args.scores), Path(args.gt)
    score_files = sorted(scores_dir.glob("*.npy"))
    if not score_files:
        raise ValueError(f"no score tensors in {scores_dir}")
    gt_stems = {p.stem for p in gt_dir.glob("*.pgm")}
    stems = [p.stem for p in score_files]
    if set(stems) != gt_stems:
        raise ValueError(
            f"score/gt stems differ: {sorted(set(stems) ^ gt_stems)}"
        )
    frames = []
    for path in score_files:
        scores = load_tensor(path).astype(np.float64)
        gt = load_mask(gt_dir / f"{path.stem}.pgm")
        if not args.no_normalize:
            lo, hi = scores.min(), scores.max()
            scores = (scores - lo) / (hi - lo) if hi > lo else np.full_like(scores, 0.5)
        frames.append((scores, gt))
    report = evaluate(frames, tuple(args.thresholds))
    payload = report.to_json()
    if args.out:
        _write_json(payload, Path(args.out))
    else:
        print(json.dumps(payload, indent=2, sort_keys=True))
    print(
        f"ap {report.ap:.4f}  fpr95 {report.fpr95:.4f}  f1_bar {report.f1_bar:.4f} "
        f"({report.frames} frames)",
        file=sys.stderr,
    )
    return 0


VIZ_CLIP = (0.0, 0.005)


def cmd_export_viz(args) -> int:
    weights = load_model(args.model)
    image = load_gray(args.image)
    side = weights.config.image_side
    if image.shape != (side, side):
        raise ValueError(f"viz export needs a single {side}x{side} window")
    stack = vit_forward(image, weights)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    layers = []
    for l, abar in enumerate(_head_averaged_attention(stack, args.renormalize)):
        att_name = f"layer{l:02d}_attention.f32"
        entro_name = f"layer{l:02d}_entropy.f32"
        (out / att_name).write_bytes(abar.astype("<f4").tobytes())
        (out / entro_name).write_bytes(
            ent.row_entropy(abar).astype("<f4").tobytes()
        )
        layers.append({"attention": att_name, "entropy": entro_name})
    save_gray(image, out / "image.pgm")
    manifest = {
        "grid_n": weights.config.grid_n,
        "tokens": weights.config.grid_n**2,
        "clip": list(VIZ_CLIP),
        "image": "image.pgm",
        "layers": layers,
    }
    _write_json(manifest, out / "manifest.json")
    print(f"viz bundle with {len(layers)} layers written to {out}")
    return 0


def cmd_validate_viz(args) -> int:
    bundle = Path(args.bundle)
    problems = []
    try:
        manifest = json.loads((bundle / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"unreadable manifest: {exc}", file=sys.stderr)
        return 1
    for key in ("grid_n", "tokens", "clip", "image", "layers"):
        if key not in manifest:
            problems.append(f"manifest missing key {key!r}")
    if not problems:
        tokens = manifest["tokens"]
        if tokens != manifest["grid_n"] ** 2:
            problems.append("tokens do not equal grid_n squared")
        clip = manifest["clip"]
        if len(clip) != 2 or not clip[0] < clip[1]:
            problems.append(f"bad clip range {clip}")
        try:
            load_gray(bundle / manifest["image"])
        except (OSError, PgmFormatError) as exc:
            problems.append(f"image: {exc}")
        for l, entry in enumerate(manifest["layers"]):
            for key, count in (("attention", tokens * tokens), ("entropy", tokens)):
                path = bundle / entry[key]
                if not path.is_file():
                    problems.append(f"layer {l}: missing {entry[key]}")
                    continue
                size = path.stat().st_size
                if size != 4 * count:
                    problems.append(
                        f"layer {l}: {entry[key]} holds {size} bytes, want {4 * count}"
                    )
                    continue
                data = np.frombuffer(path.read_bytes(), dtype="<f4")
                if not np.isfinite(data).all():
                    problems.append(f"layer {l}: non-finite values in {entry[key]}")
                elif key == "attention":
                    sums = data.reshape(tokens, tokens).sum(axis=1)
                    if np.abs(sums - 1.0).max() > 1e-4:
                        problems.append(f"layer {l}: attention rows do not sum to 1")
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        return 1
    print(f"bundle OK: {len(manifest['layers'])} layers, grid {manifest['grid_n']}")
    return 0


# --- parser ----------------------------------------------------------------


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
    sub.add_argument("--config", type=Path, default=None, help="JSON option defaults")
    sub.add_argument("--threads", type=int, default=None, help="accepted, informational")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="attentropy",
        description="Segment unseen objects via attention entropy of a toy ViT.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-model", help="create seeded model weights")
    p.add_argument("--grid", type=int, required=True, help="patches per side")
    p.add_argument("--channels", type=int, required=True)
    p.add_argument("--heads", type=int, required=True)
    p.add_argument("--layers", type=int, required=True)
    p.add_argument("--patch", type=int, default=16)
    p.add_argument("--class-token", action="store_true")
    p.add_argument("-o", "--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_init_model)

    p = sub.add_parser("gen-testpattern", help="synthetic circle-on-texture image")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--cx", type=float, default=None)
    p.add_argument("--cy", type=float, default=None)
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("-o", "--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_gen_testpattern)

    p = sub.add_parser("extract", help="entropy maps (and attention) for an image")
    p.add_argument("--image", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--stride", type=int, default=None, help="window stride in px")
    p.add_argument("--no-renormalize", dest="renormalize", action="store_false")
    p.add_argument("--dump-attention", action="store_true")
    p.add_argument("-o", "--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("select-layers", help="automatic layer subset via test pattern")
    p.add_argument("--model", required=True)
    p.add_argument("--ratio", type=float, default=SELECT_RATIO)
    p.add_argument("--no-renormalize", dest="renormalize", action="store_false")
    p.add_argument("-o", "--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_select_layers)

    p = sub.add_parser("fit-weights", help="logistic layer weighting from frames")
    p.add_argument(
        "--frame",
        nargs=2,
        action="append",
        required=True,
        metavar=("ENTROPY_DIR", "MASK"),
    )
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("-o", "--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_fit_weights)

    p = sub.add_parser("segment", help="score map + binary mask for an image")
    p.add_argument("--image", required=True)
    p.add_argument("--model", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--agg", default=None, help="selection or weights JSON")
    group.add_argument("--layers", default=None, help="comma-separated subset")
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--no-renormalize", dest="renormalize", action="store_false")
    p.add_argument("-o", "--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("evaluate", help="metrics report for score/gt pairs")
    p.add_argument("--scores", required=True, help="dir of *.npy score maps")
    p.add_argument("--gt", required=True, help="dir of matching *.pgm masks")
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument(
        "--thresholds",
        type=float,
        nargs="+",
        default=list(DEFAULT_THRESHOLDS),
    )
    p.add_argument("-o", "--out", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-viz", help="browser bundle of attention + entropy")
    p.add_argument("--image", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--no-renormalize", dest="renormalize", action="store_false")
    p.add_argument("-o", "--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_export_viz)

    p = sub.add_parser("validate-viz", help="check an exported bundle")
    p.add_argument("bundle")
    _add_common(p)
    p.set_defaults(func=cmd_validate_viz)

    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("ATTENTROPY_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    args = build_parser().parse_args(argv)
    args.cfg = {}
    if getattr(args, "config", None) is not None:
        args.cfg = json.loads(Path(args.config).read_text())
    try:
        return args.func(args)
    except (NpyFormatError, PgmFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
