"""Squashed-Gaussian shared/correction policies and the action-correction functions."""

from __future__ import annotations

import enum
import math

import numpy as np

from . import autodiff as ad
from .autodiff import MLP, Tensor

LOG_STD_BOUNDS = (-10.0, 2.0)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_LOG2 = math.log(2.0)


class PolicyError(FloatingPointError):
    pass


class CorrectionFnKind(str, enum.Enum):
    SP_DOMINATED = "sp_dominated"
    ACP_DOMINATED = "acp_dominated"
    EQUAL = "equal"
    SOFTCLIP = "softclip"


# (weight on the shared action, weight on the correction)
_WEIGHTS = {
    CorrectionFnKind.SP_DOMINATED: (2.0, 1.0),
    CorrectionFnKind.ACP_DOMINATED: (1.0, 2.0),
    CorrectionFnKind.EQUAL: (1.0, 1.0),
    CorrectionFnKind.SOFTCLIP: (2.0, 1.0),
}


def correct(kind, a_hat, delta_a, bound: float = 1.0):
    """Combine a proposed action with a correction and keep the result in [-bound, bound].

    Works on numpy arrays or on ``Tensor``s (then differentiable; the hard
    clip passes gradient 1 strictly inside the interval and 0 elsewhere).
    """
    kind = CorrectionFnKind(kind)
    w_hat, w_delta = _WEIGHTS[kind]
    if not isinstance(a_hat, Tensor) and not isinstance(delta_a, Tensor):
        x = w_hat * np.asarray(a_hat, dtype=np.float64) + w_delta * np.asarray(delta_a, dtype=np.float64)
        if kind is CorrectionFnKind.SOFTCLIP:
            return bound * np.tanh(x / bound)
        return np.minimum(np.maximum(x, -bound), bound)
    x = ad.add(ad.mul(a_hat, w_hat), ad.mul(delta_a, w_delta))
    if kind is CorrectionFnKind.SOFTCLIP:
        return ad.mul(ad.tanh(ad.mul(x, 1.0 / bound)), bound)
    return ad.clip(x, -bound, bound)


class GaussianPolicy:
    """tanh-squashed diagonal Gaussian scaled to (-bound, bound).

    The net maps its input to ``[mean, log_std]``; ``log_std`` is clamped to
    ``log_std_bounds``.
    """

    def __init__(self, in_dim: int, action_dim: int, hidden=(128, 128), activation: str = "tanh",
                 bound: float = 1.0, log_std_bounds=LOG_STD_BOUNDS, rng=None, net: MLP | None = None):
        self.in_dim = in_dim
        self.action_dim = action_dim
        self.bound = float(bound)
        self.log_std_bounds = tuple(log_std_bounds)
        self.net = net if net is not None else MLP((in_dim, *hidden, 2 * action_dim), activation, rng=rng)

    def parameters(self) -> list[Tensor]:
        return self.net.parameters()

    def dist_params(self, x) -> tuple[Tensor, Tensor]:
        out = self.net(x)
        if not np.all(np.isfinite(out.data)):
            raise PolicyError("policy network produced non-finite output")
        d = self.action_dim
        mean = ad.getitem(out, (slice(None), slice(0, d)))
        log_std = ad.clip(ad.getitem(out, (slice(None), slice(d, 2 * d))), *self.log_std_bounds)
        return mean, log_std

    def sample(self, x, rng: np.random.Generator | None = None, deterministic: bool = False,
               noise: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
        """Reparameterized draw ``bound * tanh(mean + std * xi)`` and its log-density.

        ``noise`` fixes ``xi``; otherwise it is drawn from ``rng`` (or zero
        when ``deterministic``).
        """
        mean, log_std = self.dist_params(x)
        if noise is None:
            noise = np.zeros(mean.shape) if deterministic else rng.standard_normal(mean.shape)
        u = ad.add(mean, ad.mul(ad.exp(log_std), noise))
        action = ad.mul(ad.tanh(u), self.bound)
        # log(1 - tanh(u)^2) = 2 * (log 2 - u - softplus(-2u))
        log_det = ad.mul(ad.sub(ad.sub(_LOG2, u), ad.softplus(ad.mul(u, -2.0))), 2.0)
        const = -0.5 * noise**2 - _HALF_LOG_2PI - math.log(self.bound)
        per_dim = ad.sub(ad.sub(const, log_std), log_det)
        return action, ad.sum_(per_dim, axis=1)

    def log_prob(self, x, action: np.ndarray) -> np.ndarray:
        """Density of a given squashed action (inverts the tanh); numpy only."""
        with ad.no_grad():
            mean, log_std = self.dist_params(x)
        y = np.clip(np.asarray(action) / self.bound, -1.0 + 1e-15, 1.0 - 1e-15)
        u = np.arctanh(y)
        z = (u - mean.data) / np.exp(log_std.data)
        log_det = 2.0 * (_LOG2 - u - np.logaddexp(0.0, -2.0 * u))
        per_dim = -0.5 * z**2 - _HALF_LOG_2PI - log_std.data - log_det - math.log(self.bound)
        return per_dim.sum(axis=1)

    def copy(self) -> "GaussianPolicy":
        return GaussianPolicy(self.in_dim, self.action_dim, bound=self.bound,
                              log_std_bounds=self.log_std_bounds, net=self.net.copy())


def sp_sample(policy: GaussianPolicy, obs, rng=None, deterministic: bool = False, noise=None):
    """Shared policy proposal ``a_hat`` and its log-probability."""
    return policy.sample(obs, rng, deterministic, noise)


def acp_sample(policy: GaussianPolicy, obs, a_hat, rng=None, deterministic: bool = False, noise=None):
    """Correction ``delta_a`` conditioned on the concatenation of ``obs`` and ``a_hat``."""
    return policy.sample(ad.concat([ad.as_tensor(obs), ad.as_tensor(a_hat)], axis=1), rng, deterministic, noise)


def compose_act(sp: GaussianPolicy, acp: GaussianPolicy | None, kind, obs, rng=None,
                deterministic: bool = False) -> dict:
    """Full pipeline, no graph recorded: propose, correct, combine.

    With ``acp=None`` (the plain multi-task SAC baseline) the executed action
    is ``clip(a_hat)`` and the correction is zero.
    """
    with ad.no_grad():
        a_hat, logp_sp = sp_sample(sp, obs, rng, deterministic)
        if acp is None:
            delta = np.zeros_like(a_hat.data)
            logp_acp = np.zeros(len(delta))
            a = np.clip(a_hat.data, -sp.bound, sp.bound)
        else:
            d, lp = acp_sample(acp, obs, a_hat, rng, deterministic)
            delta, logp_acp = d.data, lp.data
            a = correct(kind, a_hat.data, delta, sp.bound)
    return {"a": a, "a_hat": a_hat.data, "delta_a": delta, "logp_sp": logp_sp.data, "logp_acp": logp_acp}
