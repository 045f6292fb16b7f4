#!/usr/bin/env python3
"""Benchmark the reference net end to end through the runner wire protocol.

Spawns ``depthbench runner`` as a child process (so model build time is
excluded, exactly as for any external submission) and times VGA inferences
under the standard warmup/repetition protocol.
"""

import argparse
import sys

import numpy as np

from depthbench import bench
from depthbench.dataset import RgbImage


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0, help="weight seed for the runner")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--warmup", type=int, default=bench.DEFAULT_WARMUP)
    parser.add_argument("--runs", type=int, default=bench.DEFAULT_RUNS)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    image = RgbImage(rng.integers(0, 256, (480, 640, 3), dtype=np.uint8))
    command = [
        sys.executable, "-m", "depthbench.cli", "runner",
        "--seed", str(args.seed), "--threads", str(args.threads),
    ]
    print(f"runner: {' '.join(command)}", file=sys.stderr)
    runner = bench.spawn_runner(command)
    try:
        report = bench.time_model(runner, image, warmup=args.warmup, runs=args.runs)
    finally:
        runner.close()
    print(report.to_json())
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
