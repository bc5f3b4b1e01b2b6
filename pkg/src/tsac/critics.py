"""Dense and sparse state-action critics, TD targets and the hinge action distance."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import MLP, DimensionError, Tensor
from .envs import TransitionBatch

WHICH = ("dense", "sparse")


class Critics:
    """Twin (or single) Q-nets for the dense and the sparse reward, plus targets."""

    def __init__(self, obs_dim: int, action_dim: int, hidden=(128, 128), activation: str = "tanh",
                 twin: bool = True, tau: float = 0.005, rng=None, sparse: bool = True):
        if not 0.0 <= tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.tau = tau
        n = 2 if twin else 1
        sizes = (obs_dim + action_dim, *hidden, 1)
        self.online = {"dense": [MLP(sizes, activation, rng=rng) for _ in range(n)]}
        if sparse:
            self.online["sparse"] = [MLP(sizes, activation, rng=rng) for _ in range(n)]
        self.target = {k: [net.copy() for net in nets] for k, nets in self.online.items()}

    def nets(self, which: str = "dense", use_target: bool = False) -> list[MLP]:
        return (self.target if use_target else self.online)[which]

    def parameters(self, which: str | None = None) -> list[Tensor]:
        keys = self.online if which is None else [which]
        return [p for k in keys for net in self.online[k] for p in net.parameters()]

    def target_parameters(self) -> list[Tensor]:
        return [p for nets in self.target.values() for net in nets for p in net.parameters()]

    def forward_all(self, obs, a, which: str = "dense", use_target: bool = False) -> list[Tensor]:
        x = ad.concat([ad.as_tensor(obs), ad.as_tensor(a)], axis=1)
        if x.shape[1] != self.obs_dim + self.action_dim:
            raise DimensionError(f"critic expects {self.obs_dim}+{self.action_dim} inputs, got {x.shape}")
        return [ad.reshape(net(x), (-1,)) for net in self.nets(which, use_target)]

    def q_eval(self, obs, a, which: str = "dense", use_target: bool = False, reduce: str = "min") -> Tensor:
        """One value per batch row; twins reduced by ``min`` or by taking the ``first``."""
        qs = self.forward_all(obs, a, which, use_target)
        if reduce == "first" or len(qs) == 1:
            return qs[0]
        if reduce != "min":
            raise ValueError(f"unknown reduce {reduce!r}")
        return ad.minimum(qs[0], qs[1])

    def polyak_update(self, tau: float | None = None) -> None:
        """target <- (1 - tau) * target + tau * online, in place."""
        tau = self.tau if tau is None else tau
        for k, nets in self.online.items():
            for net, tgt in zip(nets, self.target[k]):
                for p, q in zip(net.parameters(), tgt.parameters()):
                    q.data *= 1.0 - tau
                    q.data += tau * p.data

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


def td_target(critics: Critics, batch: TransitionBatch, next_actions: np.ndarray, gamma: float,
              sparse: bool = True) -> tuple[np.ndarray, np.ndarray | None]:
    """Bootstrapped targets ``r + gamma * (1 - terminal) * Q_target(s', a')`` for both rewards."""
    mask = gamma * (1.0 - batch.terminal.astype(np.float64))
    with ad.no_grad():
        qd = critics.q_eval(batch.next_obs, next_actions, "dense", use_target=True).data
        y_dense = batch.r_dense + mask * qd
        y_sparse = None
        if sparse:
            qs = critics.q_eval(batch.next_obs, next_actions, "sparse", use_target=True).data
            y_sparse = batch.r_sparse + mask * qs
    return y_dense, y_sparse


def critic_loss(critics: Critics, obs, actions, y_dense, y_sparse=None) -> Tensor:
    """Sum over critics and twins of the mean squared TD error; targets are constants."""
    terms = []
    for which, y in (("dense", y_dense), ("sparse", y_sparse)):
        if y is None:
            continue
        for q in critics.forward_all(obs, actions, which):
            terms.append(ad.mean(ad.square(ad.sub(q, np.asarray(y)))))
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    return total


def polyak_update(critics: Critics, tau: float | None = None) -> None:
    critics.polyak_update(tau)


def hinge_distance(critics: Critics, obs, a_hat, a, reduce: str = "min") -> Tensor:
    """Per-row ``max(0, Q(s, a_hat) - Q(s, a))``.

    ``Q(s, a_hat)`` is computed without a graph; gradient flows only through
    ``a`` (the critic's own parameters collect gradient but are not stepped
    by the caller).
    """
    with ad.no_grad():
        q_hat = critics.q_eval(obs, ad.stop_gradient(a_hat), "dense", reduce=reduce).data
    q_a = critics.q_eval(obs, a, "dense", reduce=reduce)
    return ad.hinge(ad.sub(q_hat, q_a))


def fit_critics(critics: Critics, optimizer: ad.Adam, batch: TransitionBatch, next_actions: np.ndarray,
                gamma: float, sparse: bool = True) -> float:
    """One optimizer step on the critic loss followed by a polyak update."""
    y_dense, y_sparse = td_target(critics, batch, next_actions, gamma, sparse)
    critics.zero_grad()
    loss = critic_loss(critics, batch.obs, batch.action, y_dense, y_sparse)
    value = loss.item()
    if not np.isfinite(value):
        raise ad.TrainingDivergence(f"non-finite critic loss {value}")
    ad.backward(loss)
    optimizer.step()
    critics.polyak_update()
    return value
