"""``sageicp run | eval | bench``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from sageicp import kernels
from sageicp.config import ConfigError, RunConfig, load_config
from sageicp.evaluation import (
    DEFAULT_STEP, AlignmentError, errors_csv, report_table, segment_errors, summarize,
)
from sageicp.geometry import poses_to_array
from sageicp.io import (
    FrameMismatchError, KittiSequence, MalformedLabelError, MalformedScanError,
    MissingFrameError, TrajectoryParseError, camera_to_lidar, read_trajectory, read_velo_to_cam,
    write_trajectory,
)
from sageicp.pipeline import Odometry
from sageicp.streaming import SimulatedLatencyLabelProvider, run_streaming

log = logging.getLogger("sageicp")

TABLE_STAGES = (("RDI", ("rdi",)), ("Downsampling", ("prepare", "downsampling")),
                ("Optimization", ("optimization",)), ("Update", ("update",)))
REALTIME_HZ = 10.0


class UsageError(Exception):
    pass


def _parse_disable(value: str) -> list[str]:
    names = [v.strip().lower() for v in value.split(",") if v.strip()]
    bad = [n for n in names if n not in ("rdi", "ss", "saa", "avm")]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown module {bad[0]!r} (choose from rdi, ss, saa, avm)")
    return names


def _build_config(args) -> RunConfig:
    cfg = load_config(args.config)
    changes = {}
    if args.disable:
        changes["ablation"] = cfg.ablation.disabled(*args.disable)
    if args.deskew is not None:
        changes["deskew"] = args.deskew == "on"
    if args.vertical_correction is not None:
        changes["vertical_correction_deg"] = args.vertical_correction
    return cfg.replace(**changes) if changes else cfg


def stage_stats(diags) -> dict[str, dict[str, float]]:
    """Per-stage wall-time statistics in ms, using the four registration categories."""
    out = {}
    totals = np.zeros(len(diags))
    for name, keys in TABLE_STAGES:
        vals = np.array([sum(d.timings_ms[k] for k in keys) for d in diags])
        totals += vals
        out[name] = _stats(vals)
    out["Total"] = _stats(totals)
    return out


def _stats(vals: np.ndarray) -> dict[str, float]:
    if len(vals) == 0:
        return {"mean": float("nan"), "p50": float("nan"), "p90": float("nan")}
    return {
        "mean": float(np.mean(vals)),
        "p50": float(np.percentile(vals, 50)),
        "p90": float(np.percentile(vals, 90)),
    }


def format_stats(stats) -> str:
    lines = [f"{'stage':<14}{'mean_ms':>10}{'p50_ms':>10}{'p90_ms':>10}"]
    for name, s in stats.items():
        lines.append(f"{name:<14}{s['mean']:10.2f}{s['p50']:10.2f}{s['p90']:10.2f}")
    return "\n".join(lines) + "\n"


def _odometry_run(seq: KittiSequence, cfg: RunConfig, args, max_frames=None):
    n = len(seq) if max_frames is None else min(len(seq), max_frames)
    odom = Odometry(cfg, baseline=args.baseline)
    frames = (seq.load(i)[:2] for i in range(n))
    if args.mode == "stream":
        provider = SimulatedLatencyLabelProvider(args.label_latency_ms)
        report = run_streaming(frames, odom, provider, args.publish_period_ms)
        for msg in report.messages:
            log.warning(msg)
        return odom, report.diagnostics, report
    diags = []
    for i in range(n):
        pts, labs, _ = seq.load(i)
        _, d = odom.process_scan(pts, labs, i)
        diags.append(d)
    return odom, diags, None


def _open_sequence(args) -> KittiSequence:
    return KittiSequence(args.dataset, args.sequence, args.labels, require_labels=not args.baseline)


def cmd_run(args) -> int:
    cfg = _build_config(args)
    seq = _open_sequence(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    odom, diags, report = _odometry_run(seq, cfg, args, args.max_frames)
    poses = odom.poses
    (out / "poses_kitti.txt").write_text(write_trajectory(poses, "kitti"), encoding="utf-8")
    (out / "poses_tum.txt").write_text(write_trajectory(poses, "tum"), encoding="utf-8")
    with open(out / "diagnostics.jsonl", "w", encoding="utf-8") as fh:
        for d in diags:
            fh.write(d.to_json() + "\n")
    stats = stage_stats(diags)
    summary = {"frames": len(poses), "backend": kernels.BACKEND_NAME, "stages_ms": stats}
    if report is not None:
        summary["streaming"] = {
            "output_period_ms": report.output_period_ms,
            "steady_delay_ms": report.steady_delay_ms,
            "delay_spread_ms": report.delay_spread_ms,
            "throughput_ok": report.throughput_ok,
            "max_backlog": report.max_backlog,
        }
    (out / "timing.json").write_text(json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")
    (out / "timing.txt").write_text(format_stats(stats), encoding="utf-8")
    print(f"processed {len(poses)} frames -> {out}")
    if args.gt:
        gt = _read_gt(args)[: len(poses)]
        return _evaluate(gt, poses_to_array(poses), out / "errors.csv", args.step)
    return 0


def _evaluate(gt, est, csv_path: Path | None, step: int) -> int:
    errors = segment_errors(gt, est, step=step)
    summary = summarize(errors)
    if csv_path is not None:
        csv_path.write_text(errors_csv(errors), encoding="utf-8")
    if summary.empty:
        print("no segments: trajectory shorter than 100 m")
        return 0
    print(report_table(errors), end="")
    print(f"RTE % / RRE deg per 100m: {summary}")
    return 0


def _read_gt(args) -> np.ndarray:
    gt = read_trajectory(args.gt)
    if args.calib:
        gt = camera_to_lidar(gt, read_velo_to_cam(args.calib))
    return gt


def cmd_eval(args) -> int:
    gt = _read_gt(args)
    est = read_trajectory(args.est)
    if len(gt) != len(est):
        raise AlignmentError(
            f"frame count mismatch: {args.gt} has {len(gt)} poses, {args.est} has {len(est)}"
        )
    csv_path = Path(args.csv) if args.csv else Path(args.est).with_suffix(".errors.csv")
    return _evaluate(gt, est, csv_path, args.step)


def _synthetic_frames(n_points: int, n_frames: int):
    from sageicp.synthetic import street_sequence

    return street_sequence(n_frames=n_frames, n_points=n_points, seed=0).frames


def cmd_bench(args) -> int:
    if args.repetitions < 1:
        raise UsageError("--repetitions must be at least 1")
    cfg = _build_config(args)
    if args.dataset:
        seq = _open_sequence(args)
        n = min(len(seq), args.frames)
        frames = [seq.load(i)[:2] for i in range(n)]
    else:
        frames = _synthetic_frames(args.synthetic_points, args.frames)
    all_diags = []
    trajectories = []
    for _ in range(args.repetitions):
        odom = Odometry(cfg, baseline=args.baseline)
        t0 = time.perf_counter()
        for i, (pts, labs) in enumerate(frames):
            _, d = odom.process_scan(pts, labs, i)
            all_diags.append(d)
        wall = time.perf_counter() - t0
        trajectories.append(poses_to_array(odom.poses))
    stats = stage_stats(all_diags)
    hz = 1000.0 / stats["Total"]["mean"]
    deterministic = all(np.array_equal(trajectories[0], t) for t in trajectories[1:])
    print(f"backend: {kernels.BACKEND_NAME}; frames: {len(frames)}; repetitions: {args.repetitions}; "
          f"points/frame: {int(np.mean([len(f[0]) for f in frames]))}")
    print(format_stats(stats), end="")
    print(f"registration rate: {hz:.2f} Hz (last repetition wall {wall:.2f} s)")
    print(f"identical poses across repetitions: {deterministic}")
    if hz >= REALTIME_HZ:
        print(f"sustains >= {REALTIME_HZ:g} Hz: yes")
    else:
        print(f"WARNING: registration below {REALTIME_HZ:g} Hz on this host")
    if args.json:
        Path(args.json).write_text(json.dumps(
            {"stages_ms": stats, "hz": hz, "deterministic": deterministic,
             "backend": kernels.BACKEND_NAME}, indent=2), encoding="utf-8")
    return 0


def _add_run_options(p: argparse.ArgumentParser, dataset_required: bool) -> None:
    p.add_argument("--dataset", required=dataset_required, help="KITTI odometry root or sequence directory")
    p.add_argument("--sequence", help="sequence id, e.g. 00")
    p.add_argument("--labels", help="label root or label directory (default: <seq>/labels)")
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--disable", type=_parse_disable, default=[], help="comma list of rdi,ss,saa,avm")
    p.add_argument("--deskew", choices=("on", "off"))
    p.add_argument("--vertical-correction", type=float, metavar="DEG")
    p.add_argument("--baseline", action="store_true", help="label-free geometric baseline")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sageicp", description="Semantic-assisted LiDAR odometry")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run odometry over a sequence")
    _add_run_options(run, dataset_required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--mode", choices=("batch", "stream"), default="batch")
    run.add_argument("--label-latency-ms", type=float, default=200.0)
    run.add_argument("--publish-period-ms", type=float, default=100.0)
    run.add_argument("--gt", help="ground-truth poses; evaluates after the run")
    run.add_argument("--calib", help="calib.txt whose Tr maps camera-frame ground truth to the LiDAR")
    run.add_argument("--step", type=int, default=DEFAULT_STEP, help="evaluation start-frame stride")
    run.add_argument("--max-frames", type=int)
    run.set_defaults(func=cmd_run)

    ev = sub.add_parser("eval", help="KITTI relative errors of a trajectory")
    ev.add_argument("--gt", required=True)
    ev.add_argument("--est", required=True)
    ev.add_argument("--calib", help="calib.txt whose Tr maps camera-frame ground truth to the LiDAR")
    ev.add_argument("--csv", help="per-segment CSV path (default: <est>.errors.csv)")
    ev.add_argument("--step", type=int, default=DEFAULT_STEP)
    ev.set_defaults(func=cmd_eval)

    bench = sub.add_parser("bench", help="per-stage timing")
    _add_run_options(bench, dataset_required=False)
    bench.add_argument("--repetitions", type=int, default=1)
    bench.add_argument("--frames", type=int, default=10)
    bench.add_argument("--synthetic-points", type=int, default=120_000)
    bench.add_argument("--json", help="write the report as JSON")
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"sageicp: error: {exc}", file=sys.stderr)
        return 2
    except (MissingFrameError, FrameMismatchError, MalformedScanError, MalformedLabelError,
            TrajectoryParseError, AlignmentError, ConfigError, FileNotFoundError) as exc:
        print(f"sageicp: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
