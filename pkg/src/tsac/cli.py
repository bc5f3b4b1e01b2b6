"""Command-line entry point: ``tsac {run,ablate,compare,evaluate}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .harness import EXIT_CONFIG, EXIT_OK, ConfigError, ExperimentConfig
from .policies import CorrectionFnKind
from .trainer import TSACTrainer


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML or JSON experiment config")
    p.add_argument("--suite", help="built-in suite name (mtpoint4, mtpoint10) or suite file")
    p.add_argument("--algo", choices=["tsac", "mtsac"])
    p.add_argument("--correction-fn", choices=[k.value for k in CorrectionFnKind])
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int, help="total training iterations")
    p.add_argument("--out", help="output directory")
    p.add_argument("--deterministic", action="store_true", default=None,
                   help="single-threaded numerics and no wall-clock fields in metrics")


def _resolve(args) -> ExperimentConfig:
    cfg = harness.load_config(args.config) if args.config else ExperimentConfig()
    changes = {
        "suite": args.suite, "algo": args.algo, "correction_fn": args.correction_fn, "seed": args.seed,
        "total_iterations": args.iterations, "out_dir": args.out, "deterministic": args.deterministic,
    }
    try:
        return cfg.replace(**{k: v for k, v in changes.items() if v is not None})
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_run(args) -> int:
    return harness.run(_resolve(args), resume=args.resume)


def cmd_ablate(args) -> int:
    rows = harness.ablation_sweep(_resolve(args))
    for r in rows:
        print(f"{r['variant']:>14}  final {r['final_success']:.3f}  best {r['best_success']:.3f}  {r['status']}")
    return EXIT_OK if all(r["status"] == "ok" for r in rows) else 2


def cmd_compare(args) -> int:
    if args.entrant:
        entrants = {}
        for spec in args.entrant:
            label, _, dirs = spec.partition("=")
            entrants[label] = [d for d in dirs.split(",") if d]
    else:
        entrants = harness.group_runs(args.runs)
    checkpoints = [int(c) for c in args.checkpoints.split(",")]
    result = harness.compare(entrants, checkpoints, args.window)
    for path in result["missing"]:
        print(f"missing metrics: {path}", file=sys.stderr)
    print(f"{'entrant':<24}{'env_steps':>10}{'mean':>9}{'stderr':>9}{'n':>4}")
    for r in result["rows"]:
        if r["absent"]:
            print(f"{r['entrant']:<24}{r['env_steps']:>10}{'absent':>9}{'':>9}{0:>4}")
        else:
            print(f"{r['entrant']:<24}{r['env_steps']:>10}{r['mean']:>9.3f}{r['stderr']:>9.3f}{r['n']:>4}")
    if args.json:
        Path(args.json).write_text(json.dumps(result, indent=2) + "\n")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    trainer = TSACTrainer.load(args.checkpoint)
    res = trainer.evaluate(args.episodes)
    print(json.dumps(res, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsac", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train one configuration")
    _add_run_flags(p)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="run all four correction functions")
    _add_run_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("compare", help="mean/stderr table across runs")
    p.add_argument("runs", nargs="*", help="run directories, grouped by recorded algo")
    p.add_argument("--entrant", action="append", help="LABEL=dir1,dir2 (overrides grouping)")
    p.add_argument("--checkpoints", required=True, help="comma-separated env-step checkpoints")
    p.add_argument("--window", type=int, default=10, help="smoothing window (evaluation points)")
    p.add_argument("--json", help="also write the table as JSON")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint deterministically")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=10, help="episodes per task")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
