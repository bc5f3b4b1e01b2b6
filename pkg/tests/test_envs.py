import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsac import envs
from tsac.envs import CmdpSuite, ConfigurationError, SimulationError, TaskSpec, VectorEnv

finite = st.floats(-5, 5, allow_nan=False)


def one_task_suite(**task_kw):
    return CmdpSuite("one", (TaskSpec(0, (1.0, 0.0), **task_kw),))


class TestTaskSpec:
    def test_rejects_bad_epsilon_and_delta(self):
        with pytest.raises(ConfigurationError):
            TaskSpec(0, (0.0, 0.0), epsilon=0.0)
        with pytest.raises(ConfigurationError):
            TaskSpec(0, (0.0, 0.0), delta_reward=-1.0)

    def test_rejects_inverted_init_box(self):
        with pytest.raises(ConfigurationError):
            TaskSpec(0, (0.0, 0.0), init_low=(0.1, 0.0), init_high=(0.0, 0.1))

    def test_suite_validation(self):
        t = TaskSpec(0, (0.0, 0.0))
        with pytest.raises(ConfigurationError):
            CmdpSuite("x", (t,), gamma=1.0)
        with pytest.raises(ConfigurationError):
            CmdpSuite("x", (t,), horizon=0)
        with pytest.raises(ConfigurationError):
            CmdpSuite("x", (TaskSpec(1, (0.0, 0.0)),))


class TestSampleTask:
    def test_single_task(self):
        suite = one_task_suite()
        rng = np.random.default_rng(0)
        assert all(envs.sample_task(suite, rng).task_id == 0 for _ in range(20))

    def test_uniform_frequencies(self):
        suite = envs.mtpoint10()
        rng = np.random.default_rng(7)
        n = 100_000
        counts = np.bincount([envs.sample_task(suite, rng).task_id for _ in range(n)], minlength=10)
        sigma = math.sqrt(n * 0.1 * 0.9)
        assert np.all(np.abs(counts - n * 0.1) < 3 * sigma)

    def test_seeded_sequence(self):
        suite = envs.mtpoint10()
        a = [envs.sample_task(suite, np.random.default_rng(3)).task_id for _ in range(5)]
        b = [envs.sample_task(suite, np.random.default_rng(3)).task_id for _ in range(5)]
        assert a == b

    def test_empty_suite(self):
        with pytest.raises(ConfigurationError):
            envs.sample_task(CmdpSuite("empty", ()), np.random.default_rng(0))


class TestReset:
    def test_point_region(self):
        task = TaskSpec(0, (1.0, 0.0), init_low=(0.3, -0.2), init_high=(0.3, -0.2))
        np.testing.assert_array_equal(envs.reset(task, np.random.default_rng(0)), [0.3, -0.2])

    def test_mean_near_center(self):
        task = TaskSpec(0, (1.0, 0.0), init_low=(-0.5, 0.0), init_high=(0.5, 2.0))
        rng = np.random.default_rng(11)
        s = np.array([envs.reset(task, rng) for _ in range(10_000)])
        sd = (np.array([1.0, 2.0]) / math.sqrt(12)) / math.sqrt(len(s))
        assert np.all(np.abs(s.mean(axis=0) - task.init_center) < 3 * sd)
        assert np.all(s >= task.init_low) and np.all(s <= task.init_high)

    def test_reproducible(self):
        task = TaskSpec(0, (1.0, 0.0))
        np.testing.assert_array_equal(envs.reset(task, np.random.default_rng(5)),
                                      envs.reset(task, np.random.default_rng(5)))


class TestStep:
    def test_zero_action_stays(self):
        task = TaskSpec(0, (1.0, 0.0))
        tr = envs.step(task, [0.3, 0.4], [0.0, 0.0])
        np.testing.assert_array_equal(tr.s_next, [0.3, 0.4])
        assert tr.r_sparse == envs.sparse_reward([0.3, 0.4], task)

    def test_one_step_short_reaches_goal(self):
        # 0.15 away, full action toward the goal moves 0.1 -> 0.05 from goal, inside eps=0.1
        task = TaskSpec(0, (1.0, 0.0))
        before = envs.step(task, [0.75, 0.0], [0.0, 0.0])
        tr = envs.step(task, [0.85, 0.0], [1.0, 0.0])
        assert before.r_sparse == 0.0
        assert tr.r_sparse == 1.0 and tr.success
        assert tr.r_dense == pytest.approx(-0.05, abs=1e-12)

    def test_negative_gain_reverses_motion(self):
        task = TaskSpec(0, (1.0, 0.0), action_gain=(-1.0, -1.0))
        tr = envs.step(task, [0.0, 0.0], [1.0, 1.0])
        np.testing.assert_allclose(tr.s_next, [-0.1, -0.1])

    def test_done_at_horizon(self):
        task = TaskSpec(0, (1.0, 0.0))
        assert not envs.step(task, [0, 0], [0, 0], t=98, horizon=100).done
        assert envs.step(task, [0, 0], [0, 0], t=99, horizon=100).done

    def test_non_finite_raises(self):
        task = TaskSpec(0, (1.0, 0.0))
        with pytest.raises(SimulationError):
            envs.step(task, [0.0, np.nan], [0.0, 0.0])
        with pytest.raises(SimulationError):
            envs.step(task, [0.0, 0.0], [np.inf, 0.0])

    @given(st.tuples(finite, finite), st.tuples(st.floats(-1, 1), st.floats(-1, 1)))
    def test_pure(self, s, a):
        task = TaskSpec(0, (0.5, -0.5), action_gain=(1.0, -1.0))
        t1, t2 = envs.step(task, s, a), envs.step(task, s, a)
        np.testing.assert_array_equal(t1.s_next, t2.s_next)
        assert (t1.r_dense, t1.r_sparse, t1.done) == (t2.r_dense, t2.r_sparse, t2.done)


class TestSparseReward:
    task = TaskSpec(0, (0.5, 0.25), epsilon=0.125)

    def test_at_goal(self):
        assert envs.sparse_reward((0.5, 0.25), self.task) == 1.0

    def test_inclusive_boundary(self):
        # 0.125 is exact in binary, so the distance is exactly epsilon
        assert envs.sparse_reward((0.625, 0.25), self.task) == 1.0
        assert envs.sparse_reward((0.5, 0.125), self.task) == 1.0

    def test_twice_epsilon(self):
        assert envs.sparse_reward((0.75, 0.25), self.task) == 0.0

    @given(st.tuples(finite, finite))
    def test_dichotomy(self, s):
        assert envs.sparse_reward(s, self.task) in (0.0, self.task.delta_reward)

    @given(st.tuples(finite, finite), st.tuples(finite, finite))
    def test_monotone_in_distance(self, s1, s2):
        g = self.task.goal
        d1, d2 = math.hypot(s1[0] - g[0], s1[1] - g[1]), math.hypot(s2[0] - g[0], s2[1] - g[1])
        if d1 <= d2:
            assert envs.sparse_reward(s1, self.task) >= envs.sparse_reward(s2, self.task)

    @given(st.floats(0, 4), st.floats(0, 4), st.floats(0, 2 * math.pi))
    def test_dense_increases_toward_goal(self, r1, r2, ang):
        if abs(r1 - r2) < 1e-9:
            return
        g = np.array(self.task.goal)
        u = np.array([math.cos(ang), math.sin(ang)])
        near, far = sorted([r1, r2])
        assert envs.dense_reward(g + near * u, self.task) > envs.dense_reward(g + far * u, self.task)


class TestVectorEnv:
    def test_batch_size(self):
        suite = envs.mtpoint4()
        batch = envs.vector_rollout(suite, lambda o: np.zeros((len(o), 2)), 5, np.random.default_rng(0))
        assert len(batch) == 20
        np.testing.assert_array_equal(batch.task_id[:4], [0, 1, 2, 3])

    def test_random_policy_sparse_rate(self):
        suite = envs.mtpoint4()
        rng = np.random.default_rng(0)
        env = VectorEnv(suite, 1)
        batch = env.rollout(lambda o: rng.uniform(-1, 1, (len(o), 2)), 2500)
        rate = batch.r_sparse.mean()
        assert len(batch) == 10_000
        assert 0.0 < rate < 1.0

    def test_deterministic_policy_bit_identical(self):
        suite = envs.mtpoint4()

        def pol(o):
            return np.tanh(o[:, :2] * 3.0 - o[:, 2:4])

        b1 = VectorEnv(suite, 42).rollout(pol, 150)
        b2 = VectorEnv(suite, 42).rollout(pol, 150)
        for name in ("obs", "action", "next_obs", "r_dense", "r_sparse", "done"):
            assert getattr(b1, name).tobytes() == getattr(b2, name).tobytes()

    def test_non_finite_action_names_lane(self):
        env = VectorEnv(envs.mtpoint4(), 0)
        a = np.zeros((4, 2))
        a[2, 1] = np.nan
        with pytest.raises(SimulationError, match="lane 2"):
            env.step(a)

    def test_matches_single_task_step(self):
        suite = envs.mtpoint4()
        env = VectorEnv(suite, 3)
        s0 = env.states.copy()
        a = np.random.default_rng(0).uniform(-1, 1, (4, 2))
        batch = env.step(a)
        for i, task in enumerate(suite.tasks):
            tr = envs.step(task, s0[i], a[i])
            np.testing.assert_allclose(batch.next_obs[i, :2], tr.s_next, rtol=0, atol=1e-15)
            assert batch.r_sparse[i] == tr.r_sparse
            assert batch.r_dense[i] == pytest.approx(tr.r_dense, abs=1e-14)

    def test_auto_reset_and_latched_success(self):
        task = TaskSpec(0, (0.0, 0.0), init_low=(0.0, 0.0), init_high=(0.0, 0.0))
        suite = CmdpSuite("one", (task,), horizon=5)
        env = VectorEnv(suite, 0)
        # start at the goal, then walk away: success latches
        batch = env.rollout(lambda o: np.array([[0.6, 0.0]]), 5)
        assert batch.r_sparse[0] == 1.0 and batch.r_sparse[-1] == 0.0
        assert batch.success.all()
        assert batch.done.tolist() == [False] * 4 + [True]
        assert not batch.terminal.any()
        assert env.finished[0]["success"]
        np.testing.assert_array_equal(env.states, [[0.0, 0.0]])
        assert env.t[0] == 0

    def test_terminate_on_success(self):
        task = TaskSpec(0, (0.0, 0.0), init_low=(0.0, 0.0), init_high=(0.0, 0.0))
        env = VectorEnv(CmdpSuite("one", (task,), terminate_on_success=True), 0)
        b = env.step(np.zeros((1, 2)))
        assert b.done[0] and b.terminal[0]

    def test_lane_streams_independent_of_other_lanes(self):
        suite = envs.mtpoint4()
        full = VectorEnv(suite, 9)
        np.testing.assert_array_equal(full.lane_rngs[1].random(3), VectorEnv(suite, 9).lane_rngs[1].random(3))

    def test_state_round_trip(self):
        suite = envs.mtpoint4()
        env = VectorEnv(suite, 4)
        pol = lambda o: np.full((len(o), 2), 0.7)  # noqa: E731
        env.rollout(pol, 130)
        state = env.get_state()
        ref = env.rollout(pol, 120)
        other = VectorEnv(suite, 99)
        other.set_state(state)
        again = other.rollout(pol, 120)
        assert ref.next_obs.tobytes() == again.next_obs.tobytes()


class TestEvaluate:
    def test_oracle_policy_succeeds_everywhere(self):
        suite = envs.mtpoint10()
        goals = np.array([t.goal for t in suite.tasks])
        gains = np.array([t.action_gain for t in suite.tasks])

        def oracle(obs):
            tid = obs[:, 2:].argmax(axis=1)
            d = goals[tid] - obs[:, :2]
            return np.clip(10.0 * d, -1, 1) * gains[tid]

        res = envs.evaluate_policy(suite, oracle, 3, 0)
        assert res["mean_success"] == 1.0
        assert res["per_task_success"] == [1.0] * 10
        assert res["success_stderr"] == 0.0

    def test_idle_policy_fails(self):
        suite = envs.mtpoint4()
        res = envs.evaluate_policy(suite, lambda o: np.zeros((len(o), 2)), 2, 0)
        assert res["mean_success"] == 0.0
        assert res["mean_sparse_return"] == 0.0


class TestSuites:
    def test_builtins(self):
        s4, s10 = envs.get_suite("mtpoint4"), envs.get_suite("mtpoint10")
        assert (s4.n_tasks, s10.n_tasks) == (4, 10)
        assert s4.obs_dim == 6
        gains = {t.action_gain for t in s4.tasks}
        assert len(gains) == 4  # every sign pattern present
        for t in s10.tasks:
            assert math.hypot(*t.goal) == pytest.approx(1.0)

    def test_unknown_name(self):
        with pytest.raises(ConfigurationError):
            envs.get_suite("nope")

    def test_file_round_trip(self, tmp_path):
        d = envs.suite_to_dict(envs.mtpoint4())
        p = tmp_path / "suite.json"
        p.write_text(json.dumps(d))
        assert envs.get_suite(str(p)) == envs.mtpoint4()

    def test_yaml_file(self, tmp_path):
        p = tmp_path / "s.yaml"
        p.write_text("name: two\ntasks:\n  - {goal: [1, 0]}\n  - {goal: [0, 1], action_gain: [-1, 1], epsilon: 0.2}\n")
        s = envs.load_suite(p)
        assert s.n_tasks == 2 and s.tasks[1].epsilon == 0.2 and s.tasks[1].action_gain == (-1.0, 1.0)

    @pytest.mark.parametrize("bad", [
        {"tasks": [{"goal": [0, 0]}], "colour": 1},
        {"tasks": [{"goal": [0, 0], "speed": 3}]},
        {"tasks": []},
        {"tasks": [{"epsilon": 0.1}]},
        {"tasks": [{"goal": [0, 0], "epsilon": -1}]},
    ])
    def test_strict_schema(self, bad):
        with pytest.raises(ConfigurationError):
            envs.suite_from_dict(bad)

    def test_observe_one_hot(self):
        s = envs.mtpoint4()
        obs = s.observe([2, 0], [[0.1, 0.2], [0.3, 0.4]])
        np.testing.assert_array_equal(obs, [[0.1, 0.2, 0, 0, 1, 0], [0.3, 0.4, 1, 0, 0, 0]])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sparse_reward_matches_success_flag(seed):
    suite = envs.mtpoint4()
    rng = np.random.default_rng(seed)
    env = VectorEnv(suite, seed)
    batch = env.rollout(lambda o: rng.uniform(-1, 1, (len(o), 2)), 30)
    assert set(np.unique(batch.r_sparse)) <= {0.0, 1.0}
    # success latches: any sparse hit implies the flag for that step
    assert np.all(batch.success[batch.r_sparse > 0])
