"""Multi-task 2-D point-control suites.

Each task drives a point ``s`` in the plane with ``s' = s + gain * a * dt``.
Tasks differ by goal, by the sign of ``gain`` (so the same action means
opposite things in different tasks) and by their start box. Every step
emits a dense shaped reward and a goal-indicator sparse reward.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

DT = 0.1
EPSILON = 0.1
HORIZON = 100
DENSE_SHAPINGS = ("neg_distance", "bounded")


class ConfigurationError(ValueError):
    pass


class SimulationError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TaskSpec:
    task_id: int
    goal: tuple[float, float]
    epsilon: float = EPSILON
    action_gain: tuple[float, float] = (1.0, 1.0)
    init_low: tuple[float, float] = (-0.1, -0.1)
    init_high: tuple[float, float] = (0.1, 0.1)
    delta_reward: float = 1.0
    dense_shaping: str = "neg_distance"
    dense_scale: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigurationError(f"task {self.task_id}: epsilon must be > 0")
        if not self.delta_reward > 0:
            raise ConfigurationError(f"task {self.task_id}: delta_reward must be > 0")
        if self.dense_shaping not in DENSE_SHAPINGS:
            raise ConfigurationError(f"task {self.task_id}: unknown dense_shaping {self.dense_shaping!r}")
        if len(self.goal) != 2 or len(self.action_gain) != 2:
            raise ConfigurationError(f"task {self.task_id}: goal and action_gain must be 2-vectors")
        lo, hi = np.asarray(self.init_low), np.asarray(self.init_high)
        if lo.shape != (2,) or hi.shape != (2,) or np.any(hi < lo):
            raise ConfigurationError(f"task {self.task_id}: bad init region {self.init_low}..{self.init_high}")

    @property
    def init_center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.init_low) + np.asarray(self.init_high))


@dataclass(frozen=True)
class CmdpSuite:
    name: str
    tasks: tuple[TaskSpec, ...]
    state_dim: int = 2
    action_dim: int = 2
    action_bound: float = 1.0
    gamma: float = 0.99
    horizon: int = HORIZON
    dt: float = DT
    terminate_on_success: bool = False

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ConfigurationError("gamma must lie in (0, 1)")
        if self.horizon < 1:
            raise ConfigurationError("horizon must be >= 1")
        if self.action_bound <= 0:
            raise ConfigurationError("action_bound must be positive")
        for k, t in enumerate(self.tasks):
            if t.task_id != k:
                raise ConfigurationError(f"task ids must be 0..N-1 in order, got {t.task_id} at {k}")

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    @property
    def obs_dim(self) -> int:
        return self.state_dim + self.n_tasks

    def observe(self, task_ids, states) -> np.ndarray:
        """State with a one-hot task id appended."""
        states = np.atleast_2d(states)
        task_ids = np.atleast_1d(task_ids)
        onehot = np.zeros((len(task_ids), self.n_tasks))
        onehot[np.arange(len(task_ids)), task_ids] = 1.0
        return np.concatenate([states, onehot], axis=1)


@dataclass
class Transition:
    task_id: int
    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    r_dense: float
    r_sparse: float
    done: bool
    success: bool = False


@dataclass
class TransitionBatch:
    """Column-stored transitions; ``obs`` rows already carry the task one-hot.

    ``done`` marks an episode boundary (lanes reset after it); ``terminal``
    marks a true MDP termination and is what cuts bootstrapping.
    """

    task_id: np.ndarray
    obs: np.ndarray
    action: np.ndarray
    next_obs: np.ndarray
    r_dense: np.ndarray
    r_sparse: np.ndarray
    done: np.ndarray
    terminal: np.ndarray
    success: np.ndarray
    extras: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.task_id)

    @classmethod
    def concatenate(cls, parts: list["TransitionBatch"]) -> "TransitionBatch":
        keys = ("task_id", "obs", "action", "next_obs", "r_dense", "r_sparse", "done", "terminal", "success")
        cols = {k: np.concatenate([getattr(p, k) for p in parts]) for k in keys}
        extra_keys = set(parts[0].extras) if parts else set()
        cols["extras"] = {k: np.concatenate([p.extras[k] for p in parts]) for k in extra_keys}
        return cls(**cols)


# ---------------------------------------------------------------------------
# single-task primitives


def sample_task(suite: CmdpSuite, rng: np.random.Generator) -> TaskSpec:
    if not suite.tasks:
        raise ConfigurationError("cannot sample from an empty suite")
    return suite.tasks[int(rng.integers(suite.n_tasks))]


def reset(task: TaskSpec, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(task.init_low, task.init_high)


def sparse_reward(s, task: TaskSpec) -> float:
    """``delta_reward`` inside the closed epsilon-ball around the goal, else 0."""
    dist = math.hypot(s[0] - task.goal[0], s[1] - task.goal[1])
    return task.delta_reward if dist <= task.epsilon else 0.0


def dense_reward(s_next, task: TaskSpec) -> float:
    dist = math.hypot(s_next[0] - task.goal[0], s_next[1] - task.goal[1])
    if task.dense_shaping == "bounded":
        return -task.dense_scale * math.tanh(dist)
    return -task.dense_scale * dist


def step(task: TaskSpec, s, a, dt: float = DT, t: int = 0, horizon: int = HORIZON) -> Transition:
    """Advance one step from ``s`` at episode time ``t``; pure in its inputs."""
    s = np.asarray(s, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(a))):
        raise SimulationError(f"task {task.task_id}: non-finite state {s} or action {a}")
    s_next = s + np.asarray(task.action_gain) * a * dt
    r_sparse = sparse_reward(s_next, task)
    return Transition(
        task_id=task.task_id,
        s=s,
        a=a,
        s_next=s_next,
        r_dense=dense_reward(s_next, task),
        r_sparse=r_sparse,
        done=t + 1 >= horizon,
        success=r_sparse > 0,
    )


# ---------------------------------------------------------------------------
# vectorized lanes


class _TaskArrays:
    def __init__(self, suite: CmdpSuite, task_ids: np.ndarray):
        ts = [suite.tasks[i] for i in task_ids]
        self.goal = np.array([t.goal for t in ts], dtype=np.float64)
        self.gain = np.array([t.action_gain for t in ts], dtype=np.float64)
        self.eps = np.array([t.epsilon for t in ts])
        self.delta = np.array([t.delta_reward for t in ts])
        self.scale = np.array([t.dense_scale for t in ts])
        self.bounded = np.array([t.dense_shaping == "bounded" for t in ts])
        self.low = np.array([t.init_low for t in ts], dtype=np.float64)
        self.high = np.array([t.init_high for t in ts], dtype=np.float64)

    def rewards(self, s_next: np.ndarray):
        dist = np.sqrt(((s_next - self.goal) ** 2).sum(axis=1))
        dense = -self.scale * np.where(self.bounded, np.tanh(dist), dist)
        sparse = np.where(dist <= self.eps, self.delta, 0.0)
        return dense, sparse


class VectorEnv:
    """One lane per entry of ``task_ids`` (default: one lane per task).

    Each lane owns its own RNG stream, spawned from ``seed`` by lane index,
    so results do not depend on the order lanes are stepped in.
    """

    def __init__(self, suite: CmdpSuite, seed, task_ids=None):
        self.suite = suite
        self.task_ids = np.arange(suite.n_tasks) if task_ids is None else np.asarray(task_ids, dtype=np.int64)
        self.n = len(self.task_ids)
        self._arr = _TaskArrays(suite, self.task_ids)
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        self.lane_rngs = [np.random.default_rng(child) for child in ss.spawn(self.n)]
        self.states = np.zeros((self.n, suite.state_dim))
        self.t = np.zeros(self.n, dtype=np.int64)
        self.success = np.zeros(self.n, dtype=bool)
        self.ep_dense = np.zeros(self.n)
        self.ep_sparse = np.zeros(self.n)
        self.finished: list[dict] = []
        for i in range(self.n):
            self._reset_lane(i)

    def _reset_lane(self, i: int) -> None:
        self.states[i] = self.lane_rngs[i].uniform(self._arr.low[i], self._arr.high[i])
        self.t[i] = 0
        self.success[i] = False
        self.ep_dense[i] = 0.0
        self.ep_sparse[i] = 0.0

    def observations(self) -> np.ndarray:
        return self.suite.observe(self.task_ids, self.states)

    def step(self, actions: np.ndarray) -> TransitionBatch:
        actions = np.asarray(actions, dtype=np.float64).reshape(self.n, self.suite.action_dim)
        bad = ~np.all(np.isfinite(actions), axis=1)
        if bad.any():
            lane = int(np.flatnonzero(bad)[0])
            raise SimulationError(f"lane {lane} (task {self.task_ids[lane]}) got non-finite action {actions[lane]}")
        obs = self.observations()
        s_next = self.states + self._arr.gain * actions * self.suite.dt
        dense, sparse = self._arr.rewards(s_next)
        hit = sparse > 0
        self.success |= hit
        self.t += 1
        terminal = hit & self.suite.terminate_on_success
        done = (self.t >= self.suite.horizon) | terminal
        self.ep_dense += dense
        self.ep_sparse += sparse
        self.states = s_next
        batch = TransitionBatch(
            task_id=self.task_ids.copy(),
            obs=obs,
            action=actions.copy(),
            next_obs=self.observations(),
            r_dense=dense,
            r_sparse=sparse,
            done=done,
            terminal=terminal,
            success=self.success.copy(),
        )
        for i in np.flatnonzero(done):
            self.finished.append({
                "lane": int(i),
                "task_id": int(self.task_ids[i]),
                "success": bool(self.success[i]),
                "dense_return": float(self.ep_dense[i]),
                "sparse_return": float(self.ep_sparse[i]),
            })
            self._reset_lane(int(i))
        return batch

    def rollout(self, policy: Callable[[np.ndarray], np.ndarray], steps: int) -> TransitionBatch:
        return TransitionBatch.concatenate([self.step(policy(self.observations())) for _ in range(steps)])

    # checkpoint support
    def get_state(self) -> dict:
        return {
            "states": self.states.copy(),
            "t": self.t.copy(),
            "success": self.success.copy(),
            "ep_dense": self.ep_dense.copy(),
            "ep_sparse": self.ep_sparse.copy(),
            "rng": [r.bit_generator.state for r in self.lane_rngs],
        }

    def set_state(self, state: dict) -> None:
        self.states = np.array(state["states"], dtype=np.float64)
        self.t = np.array(state["t"], dtype=np.int64)
        self.success = np.array(state["success"], dtype=bool)
        self.ep_dense = np.array(state["ep_dense"], dtype=np.float64)
        self.ep_sparse = np.array(state["ep_sparse"], dtype=np.float64)
        for r, st in zip(self.lane_rngs, state["rng"]):
            r.bit_generator.state = st


def vector_rollout(suite: CmdpSuite, policy, rollout_steps: int, rng: np.random.Generator) -> TransitionBatch:
    """Fresh one-lane-per-task rollout of ``rollout_steps`` synchronous steps."""
    env = VectorEnv(suite, np.random.SeedSequence(int(rng.integers(2**63))))
    return env.rollout(policy, rollout_steps)


def evaluate_policy(suite: CmdpSuite, policy, episodes_per_task: int, seed) -> dict:
    """Run ``episodes_per_task`` full episodes per task with all lanes in lockstep.

    Success means the episode entered the goal region at least once.
    """
    task_ids = np.repeat(np.arange(suite.n_tasks), episodes_per_task)
    env = VectorEnv(suite, seed, task_ids=task_ids)
    first: dict[int, dict] = {}
    while len(first) < env.n:
        env.step(policy(env.observations()))
        for ep in env.finished:
            first.setdefault(ep["lane"], ep)
        env.finished.clear()
    done = [first[i] for i in range(env.n)]
    success = np.array([e["success"] for e in done], dtype=np.float64)
    dense = np.array([e["dense_return"] for e in done])
    sparse = np.array([e["sparse_return"] for e in done])
    per_task = [float(success[task_ids == i].mean()) for i in range(suite.n_tasks)]
    n = len(success)
    stderr = float(success.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return {
        "mean_success": float(success.mean()),
        "success_stderr": stderr,
        "per_task_success": per_task,
        "mean_dense_return": float(dense.mean()),
        "mean_sparse_return": float(sparse.mean()),
    }


# ---------------------------------------------------------------------------
# built-in suites and config loading

_SIGNS = ((1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0))


def _ring_suite(name: str, n: int, radius: float = 1.0, **kw) -> CmdpSuite:
    tasks = []
    for k in range(n):
        ang = 2.0 * math.pi * k / n
        goal = (round(radius * math.cos(ang), 12), round(radius * math.sin(ang), 12))
        tasks.append(TaskSpec(task_id=k, goal=goal, action_gain=_SIGNS[k % 4]))
    return CmdpSuite(name=name, tasks=tuple(tasks), **kw)


def mtpoint4(**kw) -> CmdpSuite:
    return _ring_suite("mtpoint4", 4, **kw)


def mtpoint10(**kw) -> CmdpSuite:
    return _ring_suite("mtpoint10", 10, **kw)


BUILTIN_SUITES = {"mtpoint4": mtpoint4, "mtpoint10": mtpoint10}

_SUITE_KEYS = {"name", "tasks", "action_bound", "gamma", "horizon", "dt", "terminate_on_success"}
_TASK_KEYS = {"goal", "epsilon", "action_gain", "init_low", "init_high", "delta_reward", "dense_shaping", "dense_scale"}


def suite_from_dict(d: dict) -> CmdpSuite:
    unknown = sorted(set(d) - _SUITE_KEYS)
    if unknown:
        raise ConfigurationError(f"unknown suite keys: {unknown}")
    if "tasks" not in d or not d["tasks"]:
        raise ConfigurationError("suite needs a non-empty 'tasks' list")
    tasks = []
    for k, td in enumerate(d["tasks"]):
        bad = sorted(set(td) - _TASK_KEYS)
        if bad:
            raise ConfigurationError(f"unknown keys in task {k}: {bad}")
        if "goal" not in td:
            raise ConfigurationError(f"task {k} has no goal")
        kw = {key: tuple(float(v) for v in val) if isinstance(val, (list, tuple)) else val
              for key, val in td.items()}
        tasks.append(TaskSpec(task_id=k, **kw))
    rest = {k: v for k, v in d.items() if k not in ("tasks", "name")}
    return CmdpSuite(name=d.get("name", "custom"), tasks=tuple(tasks), **rest)


def load_suite(path) -> CmdpSuite:
    path = Path(path)
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        import yaml

        return suite_from_dict(yaml.safe_load(text))
    return suite_from_dict(json.loads(text))


def get_suite(name_or_path: str) -> CmdpSuite:
    if name_or_path in BUILTIN_SUITES:
        return BUILTIN_SUITES[name_or_path]()
    if Path(name_or_path).exists():
        return load_suite(name_or_path)
    raise ConfigurationError(f"unknown suite {name_or_path!r}; built-ins are {sorted(BUILTIN_SUITES)}")


def suite_to_dict(suite: CmdpSuite) -> dict:
    """Inverse of :func:`suite_from_dict` (same schema as suite config files)."""
    tasks = [{k: list(v) if isinstance(v, tuple) else v
              for k, v in dataclasses.asdict(t).items() if k != "task_id"} for t in suite.tasks]
    return {
        "name": suite.name,
        "tasks": tasks,
        "action_bound": suite.action_bound,
        "gamma": suite.gamma,
        "horizon": suite.horizon,
        "dt": suite.dt,
        "terminate_on_success": suite.terminate_on_success,
    }
