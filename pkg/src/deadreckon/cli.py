"""Command-line entry point: simulate, run, eval, detect.

Every command takes an optional JSON config plus repeatable dotted-key
overrides (--set estimator.matching.alpha=0.7); the full key list with
defaults is in the top-level --help epilog. All commands are deterministic
given files, config, and seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import evaluation, simulator
from .config import default_config, flatten_config, load_config
from .estimator import Estimator, detect_patterns, analyze_trace, load_poses_csv, save_poses_csv
from .landmarks import load_landmark_db
from .trace import load_trace


def _config_epilog() -> str:
    lines = ["config keys (JSON paths, overridable with --set KEY=VALUE):"]
    for key, value in flatten_config(default_config()).items():
        lines.append(f"  {key} = {value!r}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deadreckon",
        description="Dead-reckoning localization toolkit: simulate traces, "
                    "estimate poses, evaluate accuracy, inspect patterns.",
        epilog=_config_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None, help="JSON config file")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override one config key (repeatable)")

    p_sim = sub.add_parser("simulate", help="generate trace, landmark DB, and truth files")
    p_sim.add_argument("scenario", type=Path, help="scenario JSON file")
    p_sim.add_argument("--out", type=Path, required=True, help="output directory")
    common(p_sim)

    p_run = sub.add_parser("run", help="estimate poses from a trace")
    p_run.add_argument("--trace", type=Path, required=True, help="trace JSONL file")
    p_run.add_argument("--db", type=Path, default=None, help="landmark DB JSON (optional)")
    p_run.add_argument("--out", type=Path, required=True, help="pose CSV output path")
    common(p_run)

    p_eval = sub.add_parser("eval", help="score estimated poses against truth")
    p_eval.add_argument("--poses", type=Path, required=True, help="pose CSV file")
    p_eval.add_argument("--truth", type=Path, required=True, help="truth CSV file")
    p_eval.add_argument("--out", type=Path, required=True, help="report output directory")
    common(p_eval)

    p_det = sub.add_parser("detect", help="run landmark pattern detection only")
    p_det.add_argument("--trace", type=Path, required=True, help="trace JSONL file")
    p_det.add_argument("--out", type=Path, required=True, help="pattern CSV output path")
    common(p_det)

    return parser


def _parse_overrides(pairs: list[str]) -> dict[str, str]:
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"--set expects KEY=VALUE, got {pair!r}")
        key, _, value = pair.partition("=")
        overrides[key.strip()] = value.strip()
    return overrides


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, _parse_overrides(args.overrides))
    scenario = simulator.load_scenario(args.scenario)
    paths = simulator.emit(scenario, cfg.noise, args.out)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def cmd_run(args) -> int:
    cfg = load_config(args.config, _parse_overrides(args.overrides))
    trace = load_trace(args.trace)
    db = load_landmark_db(args.db) if args.db else None
    poses = Estimator(cfg.estimator, landmark_db=db).run(trace)
    save_poses_csv(poses, args.out)
    print(f"poses: {args.out} ({len(poses)} slots)")
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config, _parse_overrides(args.overrides))
    poses = load_poses_csv(args.poses)
    truth = simulator.load_truth_csv(args.truth)
    report = evaluation.build_report(poses, truth, slot_s=cfg.estimator.slot_s)
    evaluation.write_report(report, args.out)
    print(json.dumps(report.summary(), indent=2, sort_keys=True))
    return 0


def cmd_detect(args) -> int:
    cfg = load_config(args.config, _parse_overrides(args.overrides))
    trace = load_trace(args.trace)
    series = analyze_trace(trace, cfg.estimator)
    patterns = detect_patterns(series, cfg.estimator)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", encoding="utf-8") as fh:
        feature_cols = ",".join(f"f{i:02d}" for i in range(16))
        fh.write(f"kind,t_start,t_end,heading_delta_deg,{feature_cols}\n")
        for p in patterns:
            delta = "" if p.heading_delta is None else repr(float(p.heading_delta))
            features = ",".join(repr(float(v)) for v in p.features)
            fh.write(f"{p.kind.value},{p.t_start!r},{p.t_end!r},{delta},{features}\n")
    print(f"patterns: {args.out} ({len(patterns)} detected)")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "run": cmd_run,
    "eval": cmd_eval,
    "detect": cmd_detect,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # single exit point: message on stderr, code 1
        print(f"deadreckon {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
