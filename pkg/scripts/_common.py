"""Helpers shared by the experiment scripts."""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from tsac import harness

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def parser(description: str, default_config: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--config", default=str(CONFIGS / default_config))
    p.add_argument("--seeds", default="0,1,2,3", help="comma-separated seeds")
    p.add_argument("--iterations", type=int, help="override total_iterations")
    p.add_argument("--out", help="override out_dir")
    return p


def base_config(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config)
    changes = {}
    if args.iterations is not None:
        changes["total_iterations"] = args.iterations
    if args.out:
        changes["out_dir"] = args.out
    return cfg.replace(**changes)


def seeds(args) -> list[int]:
    return [int(s) for s in args.seeds.split(",") if s]


def print_table(result: dict) -> None:
    print(f"{'entrant':<20}{'env_steps':>10}{'mean':>8}{'stderr':>8}{'n':>4}")
    for r in result["rows"]:
        mean = "absent" if r["absent"] else f"{r['mean']:.3f}"
        se = "" if r["absent"] else f"{r['stderr']:.3f}"
        print(f"{r['entrant']:<20}{r['env_steps']:>10}{mean:>8}{se:>8}{r['n']:>4}")


def save(path: Path, result: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(result, indent=2) + "\n")
