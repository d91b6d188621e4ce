"""Command-line entry point: ``run``, ``mc`` and ``game-space``."""
from __future__ import annotations

import argparse
import json
import os
import sys

from .config import ScenarioConfig, load, parse_grid
from .errors import ConfigError, RunError
from .harness import McAbort, emit_game_space, run_mc, run_single, write_clouds, write_decisions, write_rows

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORT = 3


def _config(path) -> ScenarioConfig:
    return load(path) if path else ScenarioConfig()


def _seed(text) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _cmd_run(args) -> int:
    cfg = _config(args.config)
    rec = run_single(cfg, args.law, args.switch_time, args.seed, perfect_information=args.perfect_information,
                     keep_trajectory=True, dump_clouds=args.dump_cloud)
    out = args.out
    if out:
        os.makedirs(out, exist_ok=True)
        rec.trajectory.to_csv(os.path.join(out, "trajectory.csv"))
        if args.dump_decisions:
            write_decisions(os.path.join(out, "decisions.csv"), rec)
        if args.dump_cloud:
            write_clouds(os.path.join(out, "clouds"), rec)
    elif args.dump_decisions or args.dump_cloud:
        raise ConfigError("--dump-decisions and --dump-cloud need --out")
    c = rec.counters
    print(json.dumps({
        "law": rec.law, "switch_time": rec.switch_time, "seed": rec.seed, "miss": rec.miss,
        "miss_flagged": rec.miss_flagged, "fast_path_attempts": c.attempts, "fast_path_successes": c.successes,
        "wall_time": rec.wall_time,
    }, indent=2))
    return EXIT_OK


def _cmd_mc(args) -> int:
    cfg = _config(args.config)
    grid = parse_grid(args.switch_grid) if args.switch_grid else cfg.switch_grid
    runs = args.runs if args.runs is not None else cfg.runs_per_point
    seed = args.seed if args.seed is not None else cfg.seed
    workers = args.workers if args.workers is not None else cfg.workers
    laws = [s for s in args.laws.split(",") if s.strip()]

    def progress(n, total):
        if args.progress:
            print(f"\r{n}/{total}", end="" if n < total else "\n", file=sys.stderr, flush=True)

    summary = run_mc(cfg, laws, grid, runs, seed, workers=workers, progress=progress)
    summary.write(args.out)
    for law in summary.laws:
        p, f = summary.pooled[law], summary.fast_path[law]
        line = f"{law:7s} n={p['n']} p50={p['p50']:.3f} m p95={p['p95']:.3f} m"
        if f["attempts"]:
            line += f" fast-path {f['fraction']:.1%}"
        print(line)
    return EXIT_OK


def _cmd_game_space(args) -> int:
    cfg = _config(args.config)
    rows = emit_game_space(cfg, args.t_go_max, args.points)
    write_rows(args.out or sys.stdout, ("t_go", "z_star_upper", "z_star_lower"), rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eadgl", description="Estimation-aware DGL1 interception simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one closed-loop engagement")
    p.add_argument("--config")
    p.add_argument("--law", required=True, choices=["dgl1", "eadgl1", "iets"])
    p.add_argument("--switch-time", type=float, required=True)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--dump-cloud", action="store_true")
    p.add_argument("--dump-decisions", action="store_true")
    p.add_argument("--perfect-information", action="store_true", help="guide on the true state")
    p.add_argument("--out", help="directory for trajectory and debug CSVs")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("mc", help="Monte Carlo sweep over switch times")
    p.add_argument("--config")
    p.add_argument("--laws", default="dgl1,eadgl1,iets")
    p.add_argument("--switch-grid", help="comma list or start:stop:step")
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=_seed)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--progress", action="store_true")
    p.set_defaults(func=_cmd_mc)

    p = sub.add_parser("game-space", help="singular-region boundary table")
    p.add_argument("--config")
    p.add_argument("--t-go-max", type=float, required=True)
    p.add_argument("--points", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_game_space)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except McAbort as exc:
        print(f"error: {exc}", file=sys.stderr)
        for f in exc.failures[:10]:
            print(f"  {f}", file=sys.stderr)
        return EXIT_ABORT
    except RunError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
