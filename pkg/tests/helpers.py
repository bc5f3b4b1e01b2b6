"""Small shared fixtures: a tabular MDP with an exact solver, and a desk-sized trainer config."""

import numpy as np

from tsac.envs import TransitionBatch
from tsac.trainer import TrainerConfig

N_STATES, N_ACTIONS, GAMMA = 5, 2, 0.9
ACTIONS = np.array([-0.5, 0.5])

# transition counts in quarters over next states; column N_STATES is the terminal sink
_P = np.zeros((N_STATES, N_ACTIONS, N_STATES + 1), dtype=int)
_P[0, 0, [0, 1]] = [2, 2]
_P[0, 1, [1, 2]] = [3, 1]
_P[1, 0, [0]] = [4]
_P[1, 1, [2, 3]] = [2, 2]
_P[2, 0, [1, 2]] = [1, 3]
_P[2, 1, [3]] = [4]
_P[3, 0, [2, 4]] = [2, 2]
_P[3, 1, [4, 5]] = [2, 2]
_P[4, 0, [0, 4]] = [1, 3]
_P[4, 1, [5]] = [4]
R_DENSE = np.array([[-1.0, -0.5], [-0.8, -0.2], [-0.6, 0.0], [-0.4, 0.3], [-0.1, 0.5]])
R_SPARSE = np.zeros((N_STATES, N_ACTIONS))
R_SPARSE[3, 1] = R_SPARSE[4, 1] = R_SPARSE[4, 0] = 1.0
POLICY = np.array([1, 1, 1, 1, 0])


def exact_q(rewards: np.ndarray) -> np.ndarray:
    """Q of the fixed table policy, by iterating the Bellman operator to its fixed point."""
    q = np.zeros((N_STATES, N_ACTIONS))
    probs = _P[:, :, :N_STATES] / 4.0
    for _ in range(2000):
        v = q[np.arange(N_STATES), POLICY]
        q_new = rewards + GAMMA * probs @ v
        if np.max(np.abs(q_new - q)) < 1e-14:
            break
        q = q_new
    return q_new


def tabular_batch() -> tuple[TransitionBatch, np.ndarray]:
    """Every (s, a, s') row repeated by its probability weight, plus the policy's next actions."""
    rows = []
    for s in range(N_STATES):
        for a in range(N_ACTIONS):
            for s2 in range(N_STATES + 1):
                rows += [(s, a, s2)] * _P[s, a, s2]
    rows = np.array(rows)
    n = len(rows)
    eye = np.eye(N_STATES)
    terminal = rows[:, 2] == N_STATES
    s2 = np.minimum(rows[:, 2], N_STATES - 1)
    batch = TransitionBatch(
        task_id=np.zeros(n, dtype=np.int64), obs=eye[rows[:, 0]], action=ACTIONS[rows[:, 1]][:, None],
        next_obs=eye[s2], r_dense=R_DENSE[rows[:, 0], rows[:, 1]], r_sparse=R_SPARSE[rows[:, 0], rows[:, 1]],
        done=terminal, terminal=terminal, success=np.zeros(n, dtype=bool),
    )
    return batch, ACTIONS[POLICY[s2]][:, None]


def all_state_actions() -> tuple[np.ndarray, np.ndarray]:
    return np.repeat(np.eye(N_STATES), N_ACTIONS, axis=0), np.tile(ACTIONS, N_STATES)[:, None]


def desk_config(**kw) -> TrainerConfig:
    """The reduced network/batch sizes used for CPU-scale learning runs."""
    base = dict(hidden_sizes=(64, 64), batch_size=128, lr=1e-3, rollout_steps=50, learning_starts=1000)
    base.update(kw)
    return TrainerConfig(**base)


def tiny_config(**kw) -> TrainerConfig:
    """Just big enough for gradient steps to happen in the first iterations."""
    base = dict(hidden_sizes=(8, 8), batch_size=16, lr=1e-3, rollout_steps=10, learning_starts=20,
                lambda_init=0.5, lr_lambda=0.01)
    base.update(kw)
    return TrainerConfig(**base)
