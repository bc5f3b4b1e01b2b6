"""Shared policy + correction policy training loop, and the plain multi-task SAC baseline.

One training iteration collects ``rollout_steps`` synchronous steps from one
lane per task, stores them, then runs ``updates_per_iteration`` rounds of
critic / multiplier / shared-policy / correction-policy / temperature
updates. With ``algo="mtsac"`` the correction policy, the sparse critic and
the multiplier are built but never touched, and the executed action is the
shared policy's own output.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, ContractError, Tensor, TrainingDivergence
from .critics import Critics, fit_critics, hinge_distance
from .envs import CmdpSuite, TransitionBatch, VectorEnv, evaluate_policy, suite_from_dict, suite_to_dict
from .policies import CorrectionFnKind, GaussianPolicy, acp_sample, compose_act, correct, sp_sample

CHECKPOINT_VERSION = 1
ALGOS = ("tsac", "mtsac")


@dataclass
class TrainerConfig:
    algo: str = "tsac"
    correction_fn: str = "sp_dominated"
    hidden_sizes: tuple = (128, 128)
    activation: str = "relu"
    optimizer: str = "adam"  # "sgd" for the plain-gradient variant
    lr: float = 3e-4
    batch_size: int = 256
    replay_capacity: int = 1_000_000
    rollout_steps: int = 100
    updates_per_iteration: int = 0  # 0 means one update per rollout step
    learning_starts: int = 1000
    tau: float = 0.005
    twin_critics: bool = True
    actor_q_reduce: str = "min"
    lambda_init: float = 0.0
    lr_lambda: float = 3e-4
    budget_c: float = -0.05
    lambda_source: str = "rollout"  # or "replay"
    alpha_init: float = 0.1
    lr_alpha: float = 1e-3
    alpha_optimizer: str = "adam"  # or "sgd"
    disentangled_alpha: bool = True
    target_entropy_sp: float | None = None
    target_entropy_acp: float | None = None
    log_std_min: float = -10.0
    log_std_max: float = 2.0

    def __post_init__(self):
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        errors = []
        if self.algo not in ALGOS:
            errors.append(f"algo must be one of {ALGOS}")
        try:
            CorrectionFnKind(self.correction_fn)
        except ValueError:
            errors.append(f"unknown correction_fn {self.correction_fn!r}")
        if self.lambda_source not in ("rollout", "replay"):
            errors.append("lambda_source must be 'rollout' or 'replay'")
        if self.actor_q_reduce not in ("min", "first"):
            errors.append("actor_q_reduce must be 'min' or 'first'")
        if self.optimizer not in ("adam", "sgd") or self.alpha_optimizer not in ("adam", "sgd"):
            errors.append("optimizers must be 'adam' or 'sgd'")
        if self.batch_size < 1 or self.rollout_steps < 1 or self.replay_capacity < 1:
            errors.append("batch_size, rollout_steps and replay_capacity must be positive")
        if not 0.0 <= self.tau <= 1.0:
            errors.append("tau must lie in [0, 1]")
        if self.lambda_init < 0 or self.lr_lambda < 0 or self.alpha_init <= 0:
            errors.append("lambda_init, lr_lambda must be >= 0 and alpha_init > 0")
        if errors:
            raise ValueError("; ".join(errors))

    @property
    def n_updates(self) -> int:
        return self.updates_per_iteration or self.rollout_steps


# ---------------------------------------------------------------------------


class ReplayBuffer:
    """FIFO ring buffer of transitions with uniform sampling."""

    _FIELDS = ("task_id", "obs", "action", "next_obs", "r_dense", "r_sparse", "terminal")

    def __init__(self, capacity: int, obs_dim: int, action_dim: int):
        self.capacity = capacity
        self.cursor = 0
        self.size = 0
        self.task_id = np.zeros(capacity, dtype=np.int64)
        self.obs = np.zeros((capacity, obs_dim))
        self.action = np.zeros((capacity, action_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.r_dense = np.zeros(capacity)
        self.r_sparse = np.zeros(capacity)
        self.terminal = np.zeros(capacity, dtype=bool)

    def __len__(self) -> int:
        return self.size

    def add(self, batch: TransitionBatch) -> None:
        n = len(batch)
        if n > self.capacity:
            batch = _slice(batch, np.arange(n - self.capacity, n))
            n = self.capacity
        idx = (self.cursor + np.arange(n)) % self.capacity
        for name in self._FIELDS:
            getattr(self, name)[idx] = getattr(batch, name)
        self.cursor = int((self.cursor + n) % self.capacity)
        self.size = min(self.size + n, self.capacity)

    def sample(self, rng: np.random.Generator, n: int) -> TransitionBatch:
        if self.size == 0:
            raise ContractError("cannot sample from an empty replay buffer")
        return self.take(rng.integers(0, self.size, size=n))

    def take(self, idx: np.ndarray) -> TransitionBatch:
        n = len(idx)
        return TransitionBatch(
            task_id=self.task_id[idx], obs=self.obs[idx], action=self.action[idx], next_obs=self.next_obs[idx],
            r_dense=self.r_dense[idx], r_sparse=self.r_sparse[idx], done=np.zeros(n, dtype=bool),
            terminal=self.terminal[idx], success=np.zeros(n, dtype=bool),
        )

    def arrays(self) -> dict:
        return {name: getattr(self, name)[: self.size].copy() for name in self._FIELDS}

    def load_arrays(self, arrays: dict, cursor: int) -> None:
        size = len(arrays["task_id"])
        for name in self._FIELDS:
            getattr(self, name)[:size] = arrays[name]
        self.size = size
        self.cursor = cursor


def _slice(batch: TransitionBatch, idx) -> TransitionBatch:
    cols = {f.name: getattr(batch, f.name)[idx] for f in dataclasses.fields(batch) if f.name != "extras"}
    return TransitionBatch(**cols, extras={k: v[idx] for k, v in batch.extras.items()})


@dataclass
class LagrangeState:
    lam: float = 0.0
    c: float = -0.05
    lr: float = 3e-4

    def budget(self, gamma: float) -> float:
        """Whole-horizon budget ``c / (1 - gamma)``."""
        return self.c / (1.0 - gamma)

    def slack(self, sparse_rewards) -> float:
        r = np.asarray(sparse_rewards, dtype=np.float64)
        if r.size == 0:
            raise ContractError("multiplier update needs a non-empty reward batch")
        return float(r.mean()) + self.c

    def update(self, sparse_rewards) -> float:
        """Projected descent step ``lam <- max(0, lam - lr * slack)``; returns the slack."""
        s = self.slack(sparse_rewards)
        self.lam = max(0.0, self.lam - self.lr * s)
        return s


class EntropyState:
    """Log-temperatures for the two policies, one per task when disentangled."""

    def __init__(self, n: int, alpha_init: float, target_sp: float, target_acp: float, lr: float, mode: str):
        self.log_alpha_sp = ad.parameter(np.full(n, np.log(alpha_init)))
        self.log_alpha_acp = ad.parameter(np.full(n, np.log(alpha_init)))
        self.target_sp = target_sp
        self.target_acp = target_acp
        self.opt_sp = Adam([self.log_alpha_sp], lr=lr, mode=mode)
        self.opt_acp = Adam([self.log_alpha_acp], lr=lr, mode=mode)

    @property
    def alpha_sp(self) -> np.ndarray:
        return np.exp(self.log_alpha_sp.data)

    @property
    def alpha_acp(self) -> np.ndarray:
        return np.exp(self.log_alpha_acp.data)


def alpha_loss(log_alpha: Tensor, logp: np.ndarray, rows: np.ndarray, target_entropy: float) -> Tensor:
    """``-mean(alpha[row] * (logp + target))``; ``logp`` is a constant here."""
    alpha = ad.getitem(ad.exp(log_alpha), rows)
    return ad.mul(ad.mean(ad.mul(alpha, np.asarray(logp) + target_entropy)), -1.0)


@dataclass
class MetricRecord:
    iteration: int
    env_steps: int
    mean_success: float
    per_task_success: list
    mean_dense_return: float
    mean_sparse_return: float
    lam: float
    alpha_sp: float
    alpha_acp: float
    wall_time: float | None
    success_stderr: float = 0.0
    grad_steps: int = 0

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricRecord":
        d = dict(d)
        d.pop("record", None)
        d["lam"] = d.pop("lambda")
        return cls(**d)


# ---------------------------------------------------------------------------


class TSACTrainer:
    def __init__(self, suite: CmdpSuite, config: TrainerConfig | None = None, seed: int = 0):
        self.suite = suite
        self.config = cfg = config or TrainerConfig()
        self.seed = int(seed)
        self.kind = CorrectionFnKind(cfg.correction_fn)
        self.bound = suite.action_bound
        init_ss, train_ss, env_ss = np.random.SeedSequence(self.seed).spawn(3)
        init_rng = np.random.default_rng(init_ss)
        self.rng = np.random.default_rng(train_ss)

        od, adim = suite.obs_dim, suite.action_dim
        bounds = (cfg.log_std_min, cfg.log_std_max)
        self.sp = GaussianPolicy(od, adim, cfg.hidden_sizes, cfg.activation, self.bound, bounds, rng=init_rng)
        self.acp = GaussianPolicy(od + adim, adim, cfg.hidden_sizes, cfg.activation, self.bound, bounds, rng=init_rng)
        self.critics = Critics(od, adim, cfg.hidden_sizes, cfg.activation, cfg.twin_critics, cfg.tau, rng=init_rng)

        self.sp_opt = Adam(self.sp.parameters(), lr=cfg.lr, mode=cfg.optimizer)
        self.acp_opt = Adam(self.acp.parameters(), lr=cfg.lr, mode=cfg.optimizer)
        critic_params = self.critics.parameters() if self.is_tsac else self.critics.parameters("dense")
        self.critic_opt = Adam(critic_params, lr=cfg.lr, mode=cfg.optimizer)

        self.lagrange = LagrangeState(cfg.lambda_init, cfg.budget_c, cfg.lr_lambda)
        n_alpha = suite.n_tasks if cfg.disentangled_alpha else 1
        default_target = -float(adim)
        self.entropy = EntropyState(
            n_alpha, cfg.alpha_init,
            default_target if cfg.target_entropy_sp is None else cfg.target_entropy_sp,
            default_target if cfg.target_entropy_acp is None else cfg.target_entropy_acp,
            cfg.lr_alpha, cfg.alpha_optimizer,
        )
        self.replay = ReplayBuffer(cfg.replay_capacity, od, adim)
        self.env = VectorEnv(suite, env_ss)
        self.iteration = 0
        self.env_steps = 0
        self.grad_steps = 0
        self.last_rollout: TransitionBatch | None = None
        self.last_losses: dict = {}

    @property
    def is_tsac(self) -> bool:
        return self.config.algo == "tsac"

    def _alpha_rows(self, task_id: np.ndarray) -> np.ndarray:
        return task_id if self.config.disentangled_alpha else np.zeros_like(task_id)

    # -- acting -----------------------------------------------------------

    def act(self, obs: np.ndarray, deterministic: bool = False, rng=None) -> dict:
        return compose_act(self.sp, self.acp if self.is_tsac else None, self.kind, obs,
                           self.rng if rng is None else rng, deterministic)

    def collect_rollout(self) -> TransitionBatch:
        parts = []
        for _ in range(self.config.rollout_steps):
            out = self.act(self.env.observations())
            b = self.env.step(out["a"])
            b.extras = {"a_hat": out["a_hat"], "delta_a": out["delta_a"]}
            parts.append(b)
        batch = TransitionBatch.concatenate(parts)
        self.replay.add(batch)
        self.env_steps += len(batch)
        self.last_rollout = batch
        return batch

    # -- losses (pure in params given the noise) ---------------------------

    def sp_loss(self, obs, task_id, noise_sp, noise_acp, delta=None) -> tuple[Tensor, np.ndarray]:
        """Negative dense value of the composed action plus the SP entropy term.

        The correction is drawn from the current correction policy and held
        constant, so only the shared policy receives gradient. Passing
        ``delta`` pins the correction explicitly (finite-difference checks
        need that, since a perturbed proposal would otherwise redraw it).
        """
        a_hat, logp = sp_sample(self.sp, obs, noise=noise_sp)
        if self.is_tsac:
            if delta is None:
                delta = self.sp_correction(obs, a_hat.data, noise_acp)
            a = correct(self.kind, a_hat, ad.stop_gradient(delta), self.bound)
        else:
            a = ad.clip(a_hat, -self.bound, self.bound)
        q = self.critics.q_eval(obs, a, "dense", reduce=self.config.actor_q_reduce)
        alpha = self.entropy.alpha_sp[self._alpha_rows(task_id)]
        loss = ad.sub(ad.mean(ad.mul(logp, alpha)), ad.mean(q))
        return loss, logp.data

    def sp_correction(self, obs, a_hat: np.ndarray, noise_acp) -> np.ndarray:
        with ad.no_grad():
            return acp_sample(self.acp, obs, a_hat, noise=noise_acp)[0].data

    def acp_loss(self, obs, task_id, noise_sp, noise_acp) -> tuple[Tensor, np.ndarray]:
        """Hinge distance minus multiplier-weighted sparse value plus the ACP entropy term."""
        with ad.no_grad():
            a_hat = sp_sample(self.sp, obs, noise=noise_sp)[0].data
        delta, logp = acp_sample(self.acp, obs, a_hat, noise=noise_acp)
        a = correct(self.kind, ad.Tensor(a_hat), delta, self.bound)
        reduce = self.config.actor_q_reduce
        dist = hinge_distance(self.critics, obs, a_hat, a, reduce)
        q_s = self.critics.q_eval(obs, a, "sparse", reduce=reduce)
        alpha = self.entropy.alpha_acp[self._alpha_rows(task_id)]
        inner = ad.sub(dist, ad.mul(q_s, self.lagrange.lam))
        loss = ad.add(ad.mean(inner), ad.mean(ad.mul(logp, alpha)))
        return loss, logp.data

    def _noise(self, n: int) -> np.ndarray:
        return self.rng.standard_normal((n, self.suite.action_dim))

    # -- updates ------------------------------------------------------------

    def update_critics(self, mb: TransitionBatch) -> float:
        nxt = self.act(mb.next_obs)
        loss = fit_critics(self.critics, self.critic_opt, mb, nxt["a"], self.suite.gamma, sparse=self.is_tsac)
        self.last_losses["critic"] = loss
        return loss

    def update_lambda(self, batch: TransitionBatch) -> float:
        if not self.is_tsac:
            return 0.0
        return self.lagrange.update(batch.r_sparse)

    def update_sp(self, mb: TransitionBatch, noise_sp=None, noise_acp=None) -> np.ndarray:
        n = len(mb)
        noise_sp = self._noise(n) if noise_sp is None else noise_sp
        noise_acp = self._noise(n) if noise_acp is None else noise_acp
        self.sp_opt.zero_grad()
        with ad.frozen(self.critics.parameters()):
            loss, logp = self.sp_loss(mb.obs, mb.task_id, noise_sp, noise_acp)
            _check_finite("sp", loss)
            ad.backward(loss)
        self.sp_opt.step()
        self.last_losses["sp"] = loss.item()
        return logp

    def update_acp(self, mb: TransitionBatch, noise_sp=None, noise_acp=None) -> np.ndarray | None:
        if not self.is_tsac:
            return None
        n = len(mb)
        noise_sp = self._noise(n) if noise_sp is None else noise_sp
        noise_acp = self._noise(n) if noise_acp is None else noise_acp
        self.acp_opt.zero_grad()
        with ad.frozen(self.critics.parameters()):
            loss, logp = self.acp_loss(mb.obs, mb.task_id, noise_sp, noise_acp)
            _check_finite("acp", loss)
            ad.backward(loss)
        self.acp_opt.step()
        self.last_losses["acp"] = loss.item()
        return logp

    def update_entropy(self, mb: TransitionBatch, logp_sp=None, logp_acp=None) -> None:
        """Temperature step per policy; fresh log-probs are drawn when not supplied."""
        rows = self._alpha_rows(mb.task_id)
        if logp_sp is None or (self.is_tsac and logp_acp is None):
            out = self.act(mb.obs)
            logp_sp = out["logp_sp"] if logp_sp is None else logp_sp
            logp_acp = out["logp_acp"] if logp_acp is None else logp_acp
        ent = self.entropy
        ent.opt_sp.zero_grad()
        ad.backward(alpha_loss(ent.log_alpha_sp, logp_sp, rows, ent.target_sp))
        ent.opt_sp.step()
        if self.is_tsac:
            ent.opt_acp.zero_grad()
            ad.backward(alpha_loss(ent.log_alpha_acp, logp_acp, rows, ent.target_acp))
            ent.opt_acp.step()

    def gradient_step(self) -> None:
        cfg = self.config
        mb = self.replay.sample(self.rng, cfg.batch_size)
        self.update_critics(mb)
        if cfg.lambda_source == "rollout":
            self.update_lambda(self.last_rollout)
        else:
            self.update_lambda(mb)
        logp_sp = self.update_sp(mb)
        logp_acp = self.update_acp(mb)
        self.update_entropy(mb, logp_sp, logp_acp)
        self.grad_steps += 1

    def train_iteration(self) -> None:
        self.collect_rollout()
        if len(self.replay) >= max(self.config.learning_starts, self.config.batch_size):
            for _ in range(self.config.n_updates):
                self.gradient_step()
        self.iteration += 1

    # -- evaluation / metrics ------------------------------------------------

    def evaluate(self, episodes_per_task: int = 10, seed=None) -> dict:
        """Deterministic (mean-action) rollouts of the composed policy on every task."""
        if seed is None:
            seed = np.random.SeedSequence([self.seed, self.iteration, 0xE7A1])

        def policy(obs):
            return self.act(obs, deterministic=True)["a"]

        return evaluate_policy(self.suite, policy, episodes_per_task, seed)

    def metric_record(self, episodes_per_task: int, wall_time: float | None) -> MetricRecord:
        ev = self.evaluate(episodes_per_task)
        return MetricRecord(
            iteration=self.iteration,
            env_steps=self.env_steps,
            mean_success=ev["mean_success"],
            per_task_success=ev["per_task_success"],
            mean_dense_return=ev["mean_dense_return"],
            mean_sparse_return=ev["mean_sparse_return"],
            lam=float(self.lagrange.lam),
            alpha_sp=float(self.entropy.alpha_sp.mean()),
            alpha_acp=float(self.entropy.alpha_acp.mean()),
            wall_time=wall_time,
            success_stderr=ev["success_stderr"],
            grad_steps=self.grad_steps,
        )

    def train(self, iterations: int, eval_interval: int = 1, eval_episodes: int = 10,
              record_time: bool = True, initial_record: bool = True) -> Iterator[MetricRecord]:
        """Run ``iterations`` more training iterations, yielding a record every ``eval_interval``."""
        start = time.perf_counter()

        def clock():
            return time.perf_counter() - start if record_time else None

        if initial_record:
            yield self.metric_record(eval_episodes, clock())
        for _ in range(iterations):
            frozen_state = None if self.is_tsac else self._frozen_snapshot()
            self.train_iteration()
            if frozen_state is not None:
                self._assert_untouched(frozen_state)
            if eval_interval and self.iteration % eval_interval == 0:
                yield self.metric_record(eval_episodes, clock())

    def _frozen_snapshot(self):
        return (self.lagrange.lam, [p.data.copy() for p in self.acp.parameters() + self.critics.parameters("sparse")])

    def _assert_untouched(self, snap) -> None:
        lam, arrays = snap
        params = self.acp.parameters() + self.critics.parameters("sparse")
        if lam != self.lagrange.lam or any(not np.array_equal(a, p.data) for a, p in zip(arrays, params)):
            raise AssertionError("mtsac mode modified the correction policy, sparse critic or multiplier")

    # -- checkpointing ---------------------------------------------------------

    def _named_params(self) -> dict[str, Tensor]:
        named = {}
        for k, p in enumerate(self.sp.parameters()):
            named[f"sp/{k}"] = p
        for k, p in enumerate(self.acp.parameters()):
            named[f"acp/{k}"] = p
        for which in self.critics.online:
            for twin, (net, tgt) in enumerate(zip(self.critics.online[which], self.critics.target[which])):
                for k, (p, q) in enumerate(zip(net.parameters(), tgt.parameters())):
                    named[f"critic/{which}/{twin}/{k}"] = p
                    named[f"target/{which}/{twin}/{k}"] = q
        named["log_alpha_sp"] = self.entropy.log_alpha_sp
        named["log_alpha_acp"] = self.entropy.log_alpha_acp
        return named

    def _optimizers(self) -> dict[str, Adam]:
        return {"sp": self.sp_opt, "acp": self.acp_opt, "critic": self.critic_opt,
                "alpha_sp": self.entropy.opt_sp, "alpha_acp": self.entropy.opt_acp}

    def save(self, path) -> None:
        arrays = {f"param/{k}": p.data for k, p in self._named_params().items()}
        opt_steps = {}
        for name, opt in self._optimizers().items():
            opt_steps[name] = opt.t
            for k, (m, v) in enumerate(zip(opt.m, opt.v)):
                arrays[f"opt/{name}/m/{k}"] = m
                arrays[f"opt/{name}/v/{k}"] = v
        for k, v in self.replay.arrays().items():
            arrays[f"replay/{k}"] = v
        env_state = self.env.get_state()
        for k in ("states", "t", "success", "ep_dense", "ep_sparse"):
            arrays[f"env/{k}"] = env_state[k]
        if self.last_rollout is not None:
            for k in ("r_sparse",):
                arrays[f"last_rollout/{k}"] = getattr(self.last_rollout, k)
        meta = {
            "version": CHECKPOINT_VERSION,
            "seed": self.seed,
            "config": dataclasses.asdict(self.config),
            "suite": suite_to_dict(self.suite),
            "iteration": self.iteration,
            "env_steps": self.env_steps,
            "grad_steps": self.grad_steps,
            "lambda": self.lagrange.lam,
            "opt_steps": opt_steps,
            "replay_cursor": self.replay.cursor,
            "rng": self.rng.bit_generator.state,
            "env_rng": env_state["rng"],
        }
        arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path) -> "TSACTrainer":
        with np.load(path) as z:
            arrays = {k: z[k] for k in z.files}
        meta = json.loads(arrays.pop("meta").tobytes().decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        config = TrainerConfig(**meta["config"])
        trainer = cls(suite_from_dict(meta["suite"]), config, meta["seed"])
        for k, p in trainer._named_params().items():
            p.data[...] = arrays[f"param/{k}"]
        for name, opt in trainer._optimizers().items():
            opt.t = meta["opt_steps"][name]
            for k in range(len(opt.m)):
                opt.m[k][...] = arrays[f"opt/{name}/m/{k}"]
                opt.v[k][...] = arrays[f"opt/{name}/v/{k}"]
        trainer.replay.load_arrays({k: arrays[f"replay/{k}"] for k in ReplayBuffer._FIELDS}, meta["replay_cursor"])
        env_state = {k: arrays[f"env/{k}"] for k in ("states", "t", "success", "ep_dense", "ep_sparse")}
        env_state["rng"] = meta["env_rng"]
        trainer.env.set_state(env_state)
        if "last_rollout/r_sparse" in arrays:
            n = len(arrays["last_rollout/r_sparse"])
            trainer.last_rollout = TransitionBatch(
                task_id=np.zeros(n, dtype=np.int64), obs=np.zeros((n, 0)), action=np.zeros((n, 0)),
                next_obs=np.zeros((n, 0)), r_dense=np.zeros(n), r_sparse=arrays["last_rollout/r_sparse"],
                done=np.zeros(n, dtype=bool), terminal=np.zeros(n, dtype=bool), success=np.zeros(n, dtype=bool),
            )
        trainer.rng.bit_generator.state = meta["rng"]
        trainer.iteration = meta["iteration"]
        trainer.env_steps = meta["env_steps"]
        trainer.grad_steps = meta["grad_steps"]
        trainer.lagrange.lam = meta["lambda"]
        return trainer


def _check_finite(name: str, loss: Tensor) -> None:
    if not np.isfinite(loss.item()):
        raise TrainingDivergence(f"non-finite {name} loss {loss.item()}")
