"""Command-line entry point: ``forecast-eval {evaluate,baseline,synth,breakdown}``.

Exit status: 0 on success, 1 when the report carries metric-undefined
warnings, 2 on invalid input.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from .baselines import backcast_assemble, constant_position, constant_velocity, forward_integrate
from .core import ConfigError, EvalConfig, validate_config
from .fileio import (
    SchemaError,
    dump_dets,
    dump_gt,
    dump_pred,
    dump_report,
    file_digest,
    load_dets,
    load_gt,
    load_pred,
    write_json,
    write_pr_csv,
)
from .metrics import evaluate, format_report
from .synth import BreakdownConfig, format_breakdown, run_breakdown_experiment, simulate_world

log = logging.getLogger("forecast_eval")

EXIT_OK, EXIT_WARN, EXIT_INPUT = 0, 1, 2


def _load_breakdown_config(path) -> BreakdownConfig:
    if path is None:
        return BreakdownConfig()
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None
    try:
        return BreakdownConfig.from_dict(doc)
    except (TypeError, KeyError) as e:
        raise SchemaError(f"{path}: {e}") from None


def cmd_evaluate(args) -> int:
    gt = load_gt(args.gt)
    preds = load_pred(args.pred, gt.timeline.horizon_steps, set(gt.scenes))
    cfg = validate_config(
        EvalConfig.for_profile(
            args.profile,
            timeline=gt.timeline,
            k=args.k,
            nuscenes_clip=args.nuscenes_clip,
            rank_by_forecast_score=args.rank_by_forecast_score,
        )
    )
    report = evaluate(
        gt.scenes, preds, cfg, workers=args.workers,
        digests={"gt": file_digest(args.gt), "pred": file_digest(args.pred)},
    )
    print(format_report(report))
    if args.out:
        dump_report(args.out, report)
    if args.pr_csv:
        write_pr_csv(report, args.pr_csv)
    return EXIT_WARN if report.warnings else EXIT_OK


def cmd_baseline(args) -> int:
    gt = load_gt(args.gt)
    tl = gt.timeline
    dets = load_dets(args.dets, tl.horizon_steps)
    unknown = [s for s in dets if s not in gt.scenes]
    if unknown:
        raise SchemaError(f"{args.dets}: scenes not in ground truth: {unknown[:5]}")
    out = {}
    for sid, sc in dets.items():
        if args.method == "const-pos":
            out[sid] = constant_position(sc.detections, tl, rerank_stationary=args.rerank_stationary)
        elif args.method == "const-vel":
            out[sid] = constant_velocity(sc.detections, tl)
        elif args.method == "forward":
            if sc.step_velocities is None:
                raise SchemaError(f"{args.dets}: scene {sid!r}: forward method needs step_velocities on every detection")
            out[sid] = forward_integrate(sc.detections, sc.step_velocities, tl)
        else:
            res = backcast_assemble(sc.detections, sc.future, tl, max_radius=args.max_radius)
            if res.discarded:
                log.warning("scene %s: %d future detections discarded", sid, res.discarded)
            out[sid] = res.forecasts
    dump_pred(args.out, out)
    return EXIT_OK


def cmd_synth(args) -> int:
    bc = _load_breakdown_config(args.config)
    tl = bc.eval.timeline
    world = simulate_world(bc.n_scenes, bc.population, bc.noise, tl, args.seed, workers=args.workers)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_gt(out / "gt.json", tl, world.gt_scenes)
    dump_dets(out / "dets.json", world.detections)
    print(f"wrote {len(world.gt_scenes)} scenes to {out}")
    return EXIT_OK


def cmd_breakdown(args) -> int:
    bc = _load_breakdown_config(args.config)
    rows = run_breakdown_experiment(bc, args.seed, workers=args.workers)
    print(format_breakdown(rows))
    if args.out:
        write_json(args.out, {"seed": args.seed, "config": bc.to_dict(), "rows": rows})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="forecast-eval", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("evaluate", help="score a prediction file against ground truth")
    e.add_argument("--gt", required=True)
    e.add_argument("--pred", required=True)
    e.add_argument("--profile", choices=["car", "pedestrian"], default="car")
    e.add_argument("--k", type=int, default=1)
    e.add_argument("--nuscenes-clip", action="store_true")
    e.add_argument("--rank-by-forecast-score", action="store_true")
    e.add_argument("--out", help="write the JSON report here")
    e.add_argument("--pr-csv", help="directory for per-curve recall,precision CSV files")
    e.add_argument("--workers", type=int, default=1)
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("baseline", help="turn detector outputs into a prediction file")
    b.add_argument("--gt", required=True, help="ground truth file (supplies the timeline)")
    b.add_argument("--dets", required=True)
    b.add_argument("--method", choices=["const-pos", "const-vel", "forward", "backcast"], required=True)
    b.add_argument("--rerank-stationary", action="store_true", help="const-pos only: rank stationary detections first")
    b.add_argument("--max-radius", type=float, default=math.inf, help="backcast only: anchor gate in meters")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_baseline)

    s = sub.add_parser("synth", help="generate a synthetic ground truth and detection file")
    s.add_argument("--config")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_synth)

    k = sub.add_parser("breakdown", help="constant position vs constant velocity metric comparison")
    k.add_argument("--config")
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--workers", type=int, default=1)
    k.add_argument("--out")
    k.set_defaults(func=cmd_breakdown)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (SchemaError, ConfigError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
