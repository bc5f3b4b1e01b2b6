"""Experiment runner: strict configs, seeded runs, metric files, ablation sweeps and comparisons.

Metric files are JSON lines. The first line is ``{"record": "config", ...}``
holding the fully resolved experiment config; every later line is either a
``"metrics"`` record (one per evaluation) or a terminal ``"error"`` record.
"""

from __future__ import annotations

import contextlib
import csv
import dataclasses
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import TrainingDivergence
from .envs import ConfigurationError, get_suite
from .policies import CorrectionFnKind
from .trainer import MetricRecord, TrainerConfig, TSACTrainer

log = logging.getLogger(__name__)

METRICS_FILE = "metrics.jsonl"
CHECKPOINT_FILE = "checkpoint.npz"
EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    suite: str = "mtpoint4"
    seed: int = 0
    total_iterations: int = 100
    eval_interval: int = 5
    eval_episodes: int = 10
    deterministic: bool = False
    out_dir: str = "runs/default"
    smoothing_window: int = 10
    trainer: TrainerConfig = field(default_factory=TrainerConfig)

    @property
    def algo(self) -> str:
        return self.trainer.algo

    @property
    def correction_fn(self) -> str:
        return self.trainer.correction_fn

    def to_dict(self, with_location: bool = True) -> dict:
        d = dataclasses.asdict(self)
        d["trainer"]["hidden_sizes"] = list(d["trainer"]["hidden_sizes"])
        if not with_location:
            del d["out_dir"]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d or {})
        top = {f.name for f in dataclasses.fields(cls)}
        tr_keys = {f.name for f in dataclasses.fields(TrainerConfig)}
        tr = dict(d.pop("trainer", None) or {})
        bad = sorted(set(d) - top) + sorted(f"trainer.{k}" for k in set(tr) - tr_keys)
        if bad:
            raise ConfigError(f"unknown config keys: {bad}")
        try:
            return cls(**d, trainer=TrainerConfig(**tr))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def replace(self, **changes) -> "ExperimentConfig":
        tr_changes = {k: changes.pop(k) for k in list(changes) if k in {f.name for f in dataclasses.fields(TrainerConfig)}}
        trainer = dataclasses.replace(self.trainer, **tr_changes) if tr_changes else self.trainer
        return dataclasses.replace(self, trainer=trainer, **changes)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        import yaml

        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    return ExperimentConfig.from_dict(data)


# ---------------------------------------------------------------------------
# metrics files


def write_record(fh, record: dict) -> None:
    fh.write(json.dumps(record, sort_keys=True) + "\n")
    fh.flush()


def read_metrics(path) -> tuple[dict, list[MetricRecord]]:
    """Return ``(config_dict, records)`` from a metrics file or run directory."""
    path = Path(path)
    if path.is_dir():
        path = path / METRICS_FILE
    config, records = {}, []
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            kind = rec.get("record")
            if kind == "config":
                config = rec["config"]
            elif kind == "metrics":
                records.append(MetricRecord.from_dict(rec))
    return config, records


def smooth(values, window: int) -> np.ndarray:
    """Trailing moving average; the first points average over what exists so far."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = [float(v) for v in values]
    # fsum per window keeps constant runs exactly constant (no cumulative-sum drift)
    return np.array([math.fsum(x[max(0, i - window + 1): i + 1]) / min(i + 1, window) for i in range(len(x))])


# ---------------------------------------------------------------------------
# running


@contextlib.contextmanager
def _single_thread(enabled: bool):
    if not enabled:
        yield
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        yield
        return
    with threadpool_limits(1):
        yield


def run(config: ExperimentConfig, resume: str | Path | None = None) -> int:
    """Train per ``config``, streaming metrics to ``out_dir``; returns a process exit code."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if config.algo == "mtsac" and config.correction_fn != TrainerConfig.correction_fn:
        warnings.warn("algo=mtsac ignores correction_fn", stacklevel=2)
    try:
        suite = get_suite(config.suite)
    except ConfigurationError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG

    with _single_thread(config.deterministic), open(out / METRICS_FILE, "w") as fh:
        # out_dir is left out so that runs differing only in location produce identical files
        write_record(fh, {"record": "config", "config": config.to_dict(with_location=False)})
        if resume is not None:
            trainer = TSACTrainer.load(resume)
            initial = False
        else:
            trainer = TSACTrainer(suite, config.trainer, config.seed)
            initial = True
        remaining = max(0, config.total_iterations - trainer.iteration)
        stream = trainer.train(remaining, config.eval_interval, config.eval_episodes,
                               record_time=not config.deterministic, initial_record=initial)
        last = None
        try:
            for rec in stream:
                last = rec.iteration
                write_record(fh, {"record": "metrics", **rec.to_dict()})
                log.info("iter %d steps %d success %.3f lambda %.4f", rec.iteration, rec.env_steps,
                         rec.mean_success, rec.lam)
        except (TrainingDivergence, FloatingPointError) as exc:
            write_record(fh, {"record": "error", "iteration": trainer.iteration, "message": str(exc)})
            trainer.save(out / "checkpoint_diverged.npz")
            log.error("training diverged at iteration %d: %s", trainer.iteration, exc)
            return EXIT_DIVERGED
        if remaining and last != trainer.iteration:
            rec = trainer.metric_record(config.eval_episodes, None)
            write_record(fh, {"record": "metrics", **rec.to_dict()})
    trainer.save(out / CHECKPOINT_FILE)
    return EXIT_OK


def summarize_run(records: list[MetricRecord], window: int) -> dict:
    if not records:
        return {"final_success": math.nan, "best_success": math.nan, "env_steps": 0}
    s = smooth([r.mean_success for r in records], window)
    return {"final_success": float(s[-1]), "best_success": float(s.max()), "env_steps": records[-1].env_steps}


def ablation_sweep(base: ExperimentConfig) -> list[dict]:
    """One TSAC run per correction function under ``base.out_dir/<variant>`` plus a summary table."""
    root = Path(base.out_dir)
    rows = []
    for kind in CorrectionFnKind:
        cfg = base.replace(algo="tsac", correction_fn=kind.value, out_dir=str(root / kind.value))
        row = {"variant": kind.value, "seed": cfg.seed}
        try:
            code = run(cfg)
            _, records = read_metrics(cfg.out_dir)
            row.update(summarize_run(records, base.smoothing_window))
            row["status"] = "ok" if code == EXIT_OK else f"exit {code}"
        except Exception as exc:  # a failed variant must not stop the sweep
            log.exception("variant %s failed", kind.value)
            row.update(final_success=math.nan, best_success=math.nan, env_steps=0, status=f"error: {exc}")
        rows.append(row)
    root.mkdir(parents=True, exist_ok=True)
    (root / "summary.json").write_text(json.dumps(rows, indent=2) + "\n")
    _write_csv(root / "summary.csv", rows)
    return rows


def _write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def entrant_label(config: dict) -> str:
    tr = config.get("trainer", {})
    algo = tr.get("algo", "tsac")
    return algo if algo == "mtsac" else f"{algo}-{tr.get('correction_fn', 'sp_dominated')}"


def compare(entrants: dict[str, list], checkpoints: list[int], window: int = 10) -> dict:
    """Mean and standard error of smoothed success per entrant at each requested env-step checkpoint.

    A checkpoint past a run's last record is absent for that run; nothing is extrapolated.
    """
    rows, missing = [], []
    for label, paths in entrants.items():
        series = []
        for p in paths:
            p = Path(p)
            f = p / METRICS_FILE if p.is_dir() else p
            if not f.exists():
                missing.append(str(p))
                continue
            _, records = read_metrics(f)
            if records:
                steps = np.array([r.env_steps for r in records])
                series.append((steps, smooth([r.mean_success for r in records], window)))
        for ck in checkpoints:
            vals = []
            for steps, s in series:
                if ck > steps[-1] or ck < steps[0]:
                    continue
                vals.append(float(s[np.searchsorted(steps, ck, side="right") - 1]))
            n = len(vals)
            if n == 0:
                rows.append({"entrant": label, "env_steps": ck, "mean": None, "stderr": None, "n": 0, "absent": True})
                continue
            se = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
            rows.append({"entrant": label, "env_steps": ck, "mean": math.fsum(vals) / n, "stderr": se,
                         "n": n, "absent": False})
    return {"rows": rows, "missing": missing}


def group_runs(run_dirs) -> dict[str, list]:
    """Group run directories by the entrant label recorded in their metrics files."""
    groups: dict[str, list] = {}
    for d in run_dirs:
        f = Path(d) / METRICS_FILE
        label = entrant_label(read_metrics(f)[0]) if f.exists() else str(d)
        groups.setdefault(label, []).append(d)
    return groups


def multi_seed(base: ExperimentConfig, seeds, tag: str | None = None) -> list[Path]:
    """Run ``base`` once per seed into ``out_dir/<tag>/seed<k>``; returns the run dirs."""
    tag = tag or entrant_label(base.to_dict())
    dirs = []
    for s in seeds:
        d = Path(base.out_dir) / tag / f"seed{s}"
        code = run(base.replace(seed=int(s), out_dir=str(d)))
        if code != EXIT_OK:
            log.warning("run %s exited with %d", d, code)
        dirs.append(d)
    return dirs
