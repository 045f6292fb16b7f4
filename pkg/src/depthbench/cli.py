"""depthbench command-line interface.

Subcommands: evaluate, score, bench, infer, net-info, check-gradients,
lint-dataset, runner. Exit codes: 0 success, 1 validation failure, 2 usage
error.
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import bench, gradcheck, leaderboard, metrics, micronet
from .dataset import (
    DEFAULT_UNIT_SCALE,
    DepthMap,
    load_depth_png,
    load_manifest,
    load_rgb_png,
    save_depth_png,
    to_metric_depth,
    validate_pair,
)


def _resolve(base: Path, path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() else base / p


def _write_depth_png(path, field, unit_scale: float = DEFAULT_UNIT_SCALE) -> None:
    raw = np.clip(np.round(field.depth_m / unit_scale), 0, 65535).astype(np.uint16)
    save_depth_png(path, DepthMap(values=raw, unit_scale=unit_scale))


def _cmd_evaluate(args) -> int:
    manifest = load_manifest(args.manifest)
    base = Path(args.manifest).parent
    pred_dir = Path(args.predictions)
    per_image = []
    reports = []
    for entry in manifest.entries:
        gt_path = _resolve(base, entry.depth_path)
        pred_path = pred_dir / (Path(entry.depth_path).stem + ".png")
        gt = to_metric_depth(load_depth_png(gt_path, entry.unit_scale))
        pred = to_metric_depth(load_depth_png(pred_path, entry.unit_scale))
        report = metrics.evaluate_image(pred, gt)
        reports.append(report)
        per_image.append({"name": Path(entry.depth_path).stem, **asdict(report)})
    overall = metrics.aggregate(reports)
    payload = {"images": per_image, "aggregate": asdict(overall)}
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2))
    print(
        f"{len(reports)} images: rmse={overall.rmse:.4f} si_rmse={overall.si_rmse:.4f} "
        f"log10={overall.log10:.4f} rel={overall.rel:.4f} valid_pixels={overall.valid_pixels}"
    )
    return 0


def _load_submissions(path) -> list[leaderboard.SubmissionRecord]:
    payload = json.loads(Path(path).read_text())
    if not isinstance(payload, list):
        raise ValueError(f"{path}: expected a JSON list of submission records")
    records = []
    for index, obj in enumerate(payload):
        try:
            records.append(
                leaderboard.SubmissionRecord(
                    team=obj["team"],
                    si_rmse=float(obj["si_rmse"]),
                    rmse=float(obj.get("rmse", 0.0)),
                    log10=float(obj.get("log10", 0.0)),
                    rel=float(obj.get("rel", 0.0)),
                    runtime_s=float(obj["runtime_s"]),
                    model_size_mb=float(obj.get("model_size_mb", 0.0)),
                    published_score=(
                        float(obj["final_score"]) if obj.get("final_score") is not None else None
                    ),
                )
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"{path}: record {index} is malformed ({exc})") from exc
    return records


def _cmd_score(args) -> int:
    records = _load_submissions(args.results)
    config = leaderboard.ScoringConfig()
    if args.fit_c:
        with_scores = [r for r in records if r.published_score is not None]
        fitted, spread = leaderboard.fit_normalization_constant(with_scores)
        print(f"fitted C = {fitted:.6e} (max per-row deviation {spread:.2%})")
        for record, implied, ratio in leaderboard.flag_inconsistent_rows(with_scores):
            print(
                f"inconsistent row: {record.team} implies C = {implied:.6e} "
                f"({ratio:.2f}x off the fit)"
            )
        config = leaderboard.ScoringConfig(normalization=fitted)
    ranked = leaderboard.rank(records, config)
    rendered = leaderboard.render_report(ranked, args.format)
    if args.out:
        Path(args.out).write_bytes(rendered)
    else:
        sys.stdout.write(rendered.decode())
    return 0


def _cmd_bench(args) -> int:
    image = load_rgb_png(args.input)
    runner = bench.spawn_runner(shlex.split(args.runner), workdir=args.workdir)
    try:
        report = bench.time_model(runner, image, warmup=args.warmup, runs=args.runs)
    finally:
        runner.close()
    print(report.to_json())
    return 0


def _cmd_infer(args) -> int:
    net, weights = micronet.build_reference_net(args.seed)
    image = load_rgb_png(args.input)
    field = micronet.forward(net, weights, image, threads=args.threads)
    _write_depth_png(args.output, field)
    return 0


def _cmd_net_info(args) -> int:
    net, weights = micronet.build_reference_net(args.seed)
    stats = micronet.param_stats(net, weights)
    payload = {
        "parameter_count": stats.parameter_count,
        "fp32_size_bytes": stats.fp32_size_bytes,
        "fp32_size_mb": stats.fp32_size_mb,
        "total_macs": stats.total_macs,
        "per_layer": [asdict(layer) for layer in stats.per_layer],
    }
    print(json.dumps(payload, indent=2))
    return 0


def _cmd_check_gradients(args) -> int:
    results = gradcheck.run_suite(trials=args.trials, seed=args.seed)
    print(gradcheck.format_table(results))
    return 0 if all(r.passed for r in results) else 1


def _cmd_lint_dataset(args) -> int:
    manifest = load_manifest(args.manifest)
    base = Path(args.manifest).parent
    failures = 0
    for entry in manifest.entries:
        name = Path(entry.rgb_path).name
        try:
            rgb = load_rgb_png(_resolve(base, entry.rgb_path))
            depth = load_depth_png(_resolve(base, entry.depth_path), entry.unit_scale)
        except (OSError, ValueError) as exc:
            print(f"{name}: ERROR {exc}")
            failures += 1
            continue
        report = validate_pair(rgb, depth)
        for finding in report.errors:
            print(f"{name}: ERROR {finding}")
        for finding in report.warnings:
            print(f"{name}: warning {finding}")
        print(f"{name}: invalid_fraction={report.invalid_fraction:.4f}")
        failures += len(report.errors)
    print(f"checked {len(manifest.entries)} pairs, {failures} errors")
    return 1 if failures else 0


def _cmd_runner(args) -> int:
    net, weights = micronet.build_reference_net(args.seed)
    sys.stdout.write(bench.HANDSHAKE + "\n")
    sys.stdout.flush()
    for line in sys.stdin:
        parts = line.split()
        if not parts:
            continue
        if parts[0] != "INFER" or len(parts) != 3:
            sys.stdout.write("ERR expected: INFER <input_png> <output_png>\n")
            sys.stdout.flush()
            continue
        try:
            image = load_rgb_png(parts[1])
            field = micronet.forward(net, weights, image, threads=args.threads)
            _write_depth_png(parts[2], field)
            sys.stdout.write("OK\n")
        except Exception as exc:  # protocol demands a reply, whatever happened
            sys.stdout.write(f"ERR {exc}\n")
        sys.stdout.flush()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="depthbench",
        description="Depth-estimation benchmark: metrics, scoring, losses, latency.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="run the fidelity metrics over prediction PNGs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--predictions", required=True, help="directory of PNGs named after GT stems")
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("score", help="score and rank submission records")
    p.add_argument("--results", required=True, help="JSON list of submission records")
    p.add_argument("--fit-c", action="store_true", help="fit C from rows with published scores")
    p.add_argument("--format", choices=("text", "csv", "json"), default="text")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("bench", help="time an external runner over the wire protocol")
    p.add_argument("--runner", required=True, help="runner command line")
    p.add_argument("--input", required=True, help="RGB PNG fed to every inference")
    p.add_argument("--warmup", type=int, default=bench.DEFAULT_WARMUP)
    p.add_argument("--runs", type=int, default=bench.DEFAULT_RUNS)
    p.add_argument("--workdir")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("infer", help="run the reference net on one image")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("net-info", help="print reference-net parameter/MAC stats as JSON")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_net_info)

    p = sub.add_parser("check-gradients", help="finite-difference check of every loss gradient")
    p.add_argument("--trials", type=int, default=gradcheck.DEFAULT_TRIALS)
    p.add_argument("--seed", type=int, default=2021)
    p.set_defaults(func=_cmd_check_gradients)

    p = sub.add_parser("lint-dataset", help="validate RGB/depth pairs listed in a manifest")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=_cmd_lint_dataset)

    p = sub.add_parser("runner", help="serve the reference net over the runner wire protocol")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_runner)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
