#!/usr/bin/env python3
"""End-to-end demo on synthetic data.

Creates a small random model, renders the circle-on-texture pattern,
runs extraction, layer selection, weight fitting, segmentation and
evaluation, then exports a browser visualization bundle. Everything
lands under --out (default: demo_output/).

Usage:
    python3 scripts/run_demo.py [--out DIR] [--seed N]
"""

import argparse
import json
import shutil
import sys
from pathlib import Path

from attentropy.cli import main as cli


def run(args):
    print("$ attentropy " + " ".join(args))
    rc = cli(args)
    if rc != 0:
        sys.exit(f"command failed with exit code {rc}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("demo_output"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--grid", type=int, default=8, help="patches per side")
    ap.add_argument("--channels", type=int, default=16)
    ap.add_argument("--heads", type=int, default=4)
    ap.add_argument("--layers", type=int, default=4)
    opts = ap.parse_args()

    out = opts.out
    out.mkdir(parents=True, exist_ok=True)
    seed = str(opts.seed)
    side = opts.grid * 16  # default patch size

    print("== 1. model ==")
    run(
        [
            "init-model",
            "--grid", str(opts.grid),
            "--channels", str(opts.channels),
            "--heads", str(opts.heads),
            "--layers", str(opts.layers),
            "--seed", seed,
            "-o", str(out / "model"),
        ]
    )

    print("== 2. test pattern ==")
    run(
        [
            "gen-testpattern",
            "--width", str(side),
            "--height", str(side),
            "--seed", seed,
            "-o", str(out / "pattern"),
        ]
    )

    print("== 3. entropy extraction ==")
    run(
        [
            "extract",
            "--image", str(out / "pattern" / "image.pgm"),
            "--model", str(out / "model"),
            "-o", str(out / "entropy"),
        ]
    )

    print("== 4. layer selection ==")
    run(
        [
            "select-layers",
            "--model", str(out / "model"),
            "--seed", seed,
            "-o", str(out / "selection.json"),
        ]
    )

    print("== 5. logistic layer weighting ==")
    run(
        [
            "fit-weights",
            "--frame", str(out / "entropy"), str(out / "pattern" / "mask.pgm"),
            "--seed", seed,
            "-o", str(out / "weights.json"),
        ]
    )

    print("== 6. segmentation ==")
    run(
        [
            "segment",
            "--image", str(out / "pattern" / "image.pgm"),
            "--model", str(out / "model"),
            "--agg", str(out / "weights.json"),
            "--threshold", "0.5",
            "-o", str(out / "segmentation"),
        ]
    )

    print("== 7. evaluation against the pattern mask ==")
    gt_dir = out / "gt"
    gt_dir.mkdir(exist_ok=True)
    shutil.copy(out / "pattern" / "mask.pgm", gt_dir / "scores.pgm")
    run(
        [
            "evaluate",
            "--scores", str(out / "segmentation"),
            "--gt", str(gt_dir),
            "-o", str(out / "report.json"),
        ]
    )
    report = json.loads((out / "report.json").read_text())
    print(
        f"   AP={report['ap']:.4f}  FPR@95TPR={report['fpr95']:.4f}  "
        f"F1={report['f1_bar']:.4f}"
    )

    print("== 8. visualization bundle ==")
    run(
        [
            "export-viz",
            "--image", str(out / "pattern" / "image.pgm"),
            "--model", str(out / "model"),
            "-o", str(out / "viz"),
        ]
    )
    run(["validate-viz", str(out / "viz")])

    print(f"\ndone, artifacts in {out}/")
    print("serve the bundle to the browser viewer with:")
    print(f"  python3 -m http.server -d {out / 'viz'}")


if __name__ == "__main__":
    main()
