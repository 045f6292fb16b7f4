#!/usr/bin/env python3
"""Generate a synthetic RGB-depth dataset plus noisy predictions, then evaluate.

Useful for exercising the full evaluate pipeline without the challenge data:
ground truth is random 16-bit depth with a controllable fraction of invalid
(zero) pixels, predictions are the ground truth perturbed by multiplicative
log-normal noise.
"""

import argparse
import json
from pathlib import Path

import numpy as np

from depthbench import cli
from depthbench.dataset import DepthMap, RgbImage, save_depth_png, save_rgb_png


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("synthetic-dataset"))
    parser.add_argument("--images", type=int, default=10)
    parser.add_argument("--width", type=int, default=640)
    parser.add_argument("--height", type=int, default=480)
    parser.add_argument("--invalid-fraction", type=float, default=0.03)
    parser.add_argument("--noise-sigma", type=float, default=0.08,
                        help="sigma of the log-normal multiplicative prediction noise")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    root = args.out
    pred_dir = root / "predictions"
    pred_dir.mkdir(parents=True, exist_ok=True)

    lines = []
    for i in range(args.images):
        shape = (args.height, args.width)
        rgb = RgbImage(rng.integers(0, 256, (*shape, 3), dtype=np.uint8))
        raw = rng.integers(200, 50_000, shape).astype(np.uint16)
        raw[rng.random(shape) < args.invalid_fraction] = 0
        save_rgb_png(root / f"rgb{i:03d}.png", rgb)
        save_depth_png(root / f"depth{i:03d}.png", DepthMap(values=raw))

        noise = np.exp(rng.normal(0.0, args.noise_sigma, shape))
        noisy = np.clip(np.round(raw.astype(np.float64) * noise), 0, 65535).astype(np.uint16)
        noisy[raw == 0] = 0
        save_depth_png(pred_dir / f"depth{i:03d}.png", DepthMap(values=noisy))
        lines.append(
            json.dumps({"rgb": f"rgb{i:03d}.png", "depth": f"depth{i:03d}.png", "split": "val"})
        )

    manifest = root / "manifest.jsonl"
    manifest.write_text("\n".join(lines) + "\n")
    print(f"wrote {args.images} pairs under {root}/")

    report = root / "report.json"
    code = cli.main(
        ["evaluate", "--manifest", str(manifest), "--predictions", str(pred_dir),
         "--out", str(report)]
    )
    if code == 0:
        print(f"report: {report}")
    return code


if __name__ == "__main__":
    raise SystemExit(main())
