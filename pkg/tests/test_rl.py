"""Policy gradient learner, exact return oracle, and reset pools."""

import types

import numpy as np
import pytest

from hiddengoal import (
    ContractViolation,
    PrivilegedState,
    ResetPool,
    RetryConfig,
    RngHub,
    Step,
    TabularPolicy,
    Trajectory,
    TwoArmedBandit,
    exact_return,
    exact_return_with_grad,
    make_env,
    pg_update,
    plan_teacher,
    rollout,
    run_plain_rl,
    run_retry,
    sample_context,
)
from hiddengoal.rl import _mix_at, _returns_to_go
from oracle_helpers import central_diff_grad, max_rel_grad_err

BANDIT_OBS = (0, ())


def bandit_traj(action, reward, success, tag):
    state = PrivilegedState(1, BANDIT_OBS)
    final = None if success else state
    return Trajectory((Step(state, BANDIT_OBS, action, reward, success),), 1, final, tag)


class TestRetryConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            RetryConfig(iterations=-1)
        with pytest.raises(ValueError):
            RetryConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            RetryConfig(baseline="median")
        with pytest.raises(ValueError):
            RetryConfig(mix=1.5)
        with pytest.raises(ValueError):
            RetryConfig(mix_schedule="exponential")

    def test_mix_schedule_endpoints(self):
        cfg = RetryConfig(iterations=11, mix=0.5, mix_schedule="linear-to-zero")
        assert _mix_at(cfg, 1) == pytest.approx(0.5)
        assert _mix_at(cfg, 11) == pytest.approx(0.0)
        constant = RetryConfig(iterations=11, mix=0.5)
        assert _mix_at(constant, 7) == 0.5


def test_returns_to_go():
    state = PrivilegedState(1, BANDIT_OBS)
    steps = tuple(
        Step(state, BANDIT_OBS, 0, r, False) for r in (0.0, 0.0, 1.0)
    )
    traj = Trajectory(steps, 1, state)
    assert _returns_to_go(traj, 0.5) == pytest.approx([0.25, 0.5, 1.0])


class TestPgUpdate:
    def test_off_policy_batch_rejected(self):
        policy = TabularPolicy.uniform(2)
        cfg = RetryConfig(gamma=0.99)
        with pytest.raises(ContractViolation, match="off-policy"):
            pg_update(policy, [bandit_traj(0, 1.0, True, "someone-else")], cfg)

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError, match="non-empty"):
            pg_update(TabularPolicy.uniform(2), [], RetryConfig(gamma=0.99))

    def test_unresolved_gamma_rejected(self):
        policy = TabularPolicy.uniform(2)
        with pytest.raises(ValueError, match="gamma"):
            pg_update(policy, [bandit_traj(0, 1.0, True, policy.tag)], RetryConfig())

    @pytest.mark.parametrize("baseline", ["none", "mean-return"])
    def test_bandit_arithmetic(self, baseline):
        policy = TabularPolicy.uniform(2)
        batch = [
            bandit_traj(0, 1.0, True, policy.tag),
            bandit_traj(1, 0.0, False, policy.tag),
        ]
        cfg = RetryConfig(gamma=0.99, learning_rate=1.0, baseline=baseline)
        updated = pg_update(policy, batch, cfg)
        # Both baselines land on the same total here: without one only
        # the rewarded episode moves the row; with the 0.5 mean both
        # episodes push half as hard in the same direction.
        assert updated.logits[BANDIT_OBS] == pytest.approx([0.5, -0.5])

    def test_original_policy_untouched(self):
        policy = TabularPolicy({BANDIT_OBS: np.zeros(2)}, 2)
        batch = [bandit_traj(0, 1.0, True, policy.tag)]
        pg_update(policy, batch, RetryConfig(gamma=0.99))
        assert policy.logits[BANDIT_OBS] == pytest.approx([0.0, 0.0])

    def test_unsupported_policy_type(self):
        dummy = types.SimpleNamespace(tag="")
        with pytest.raises(TypeError):
            pg_update(dummy, [bandit_traj(0, 1.0, True, "")], RetryConfig(gamma=0.99))


class TestExactReturn:
    def test_uniform_bandit_value(self):
        assert exact_return(TwoArmedBandit(), TabularPolicy.uniform(2)) == pytest.approx(0.5)

    def test_uniform_bandit_gradient(self):
        j, grad = exact_return_with_grad(TwoArmedBandit(), TabularPolicy.uniform(2))
        assert j == pytest.approx(0.5)
        assert grad[BANDIT_OBS] == pytest.approx([0.25, -0.25])

    def test_gradient_matches_finite_differences(self, line2):
        from hiddengoal import enumerate_states

        rng = np.random.default_rng(12)
        observations = sorted({line2.observe(s) for s in enumerate_states(line2)})
        policy = TabularPolicy({o: rng.normal(scale=0.5, size=3) for o in observations}, 3)
        _, analytic = exact_return_with_grad(line2, policy)
        numeric = central_diff_grad(line2, policy, observations)
        assert max_rel_grad_err(analytic, numeric) < 1e-6

    def test_matches_scripted_policy_value(self, line3, oracle3):
        assert exact_return(line3, oracle3.greedy_tabular()) == pytest.approx(
            oracle3.j_opt, abs=1e-9
        )

    def test_state_cap_enforced(self, line3):
        with pytest.raises(RuntimeError, match="cap"):
            exact_return(line3, TabularPolicy.uniform(3), state_cap=10)


class TestResetPool:
    def test_empty_pool_resets_to_initial_states(self, line3):
        pool = ResetPool(mix=1.0)
        rng = np.random.default_rng(0)
        starts = {pool.sample_reset(line3, rng) for _ in range(20)}
        assert starts == {line3.initial_state(c) for c in line3.contexts}

    def test_zero_mix_ignores_pool(self, line3):
        pool = ResetPool(mix=0.0)
        pool.add_teacher([PrivilegedState(1, (2, ()))])
        rng = np.random.default_rng(0)
        for _ in range(20):
            assert pool.sample_reset(line3, rng).base == (0, ())

    def test_reset_observation_probs_sum_to_one(self, line3):
        pool = ResetPool(mix=0.5)
        pool.add_teacher([PrivilegedState(1, (2, ())), PrivilegedState(2, (0, ()))])
        probs = pool.reset_observation_probs(line3)
        assert sum(probs.values()) == pytest.approx(1.0)
        assert probs[(2, ())] == pytest.approx(0.25)
        assert probs[(0, ())] == pytest.approx(0.75)

    def test_sample_matches_declared_distribution(self, line3):
        pool = ResetPool(mix=0.6)
        pool.add_teacher([PrivilegedState(1, (2, ())), PrivilegedState(3, (5, ()))])
        probs = pool.reset_observation_probs(line3)
        rng = np.random.default_rng(8)
        counts: dict = {}
        n = 4000
        for _ in range(n):
            obs = line3.observe(pool.sample_reset(line3, rng))
            counts[obs] = counts.get(obs, 0) + 1
        for obs, p in probs.items():
            assert counts.get(obs, 0) / n == pytest.approx(p, abs=0.03)

    def test_jsonable_round_trip(self):
        pool = ResetPool(mix=0.4)
        pool.add_teacher([PrivilegedState(1, (2, (3,)))])
        pool.add_student([PrivilegedState(2, (0, ()))])
        clone = ResetPool.from_jsonable(pool.to_jsonable())
        assert clone.mix == pool.mix
        assert clone.teacher_states == pool.teacher_states
        assert clone.student_states == pool.student_states


class TestTrainingLoops:
    def test_zero_iterations_returns_uniform(self, line3):
        cfg = RetryConfig(iterations=0)
        policy, logs = run_plain_rl(line3, cfg, RngHub(0))
        assert logs == []
        assert policy.logits == {}

    def test_zero_mix_recovery_equals_plain_loop(self, line3, teacher3):
        cfg = RetryConfig(iterations=4, episodes_per_iter=4, validation_episodes=10, mix=0.0)
        with_pool, pooled_logs = run_retry(line3, teacher3, cfg, RngHub(13))
        without, plain_logs = run_plain_rl(line3, cfg, RngHub(13))
        assert set(with_pool.logits) == set(without.logits)
        for obs in with_pool.logits:
            assert np.array_equal(with_pool.logits[obs], without.logits[obs])
        for a, b in zip(pooled_logs, plain_logs):
            assert a.validation_success == b.validation_success
            assert a.train_success == b.train_success
            assert a.mean_return == b.mean_return
            assert a.exploration == b.exploration

    def test_plain_loop_has_no_pool_diagnostics(self, line3):
        cfg = RetryConfig(iterations=2, episodes_per_iter=2, validation_episodes=5)
        _, logs = run_plain_rl(line3, cfg, RngHub(14))
        for log in logs:
            assert log.sup_ratio is None
            assert log.pool_teacher is None

    def test_recovery_loop_populates_diagnostics(self, line3, teacher3):
        cfg = RetryConfig(iterations=2, episodes_per_iter=2, validation_episodes=5)
        _, logs = run_retry(line3, teacher3, cfg, RngHub(15))
        for log in logs:
            assert log.sup_ratio >= 1.0 - 1e-9
            assert log.advantage_sup >= -1e-9
            assert log.pool_teacher > 0
            assert log.exploration is not None

    def test_deterministic(self, line3, teacher3):
        cfg = RetryConfig(iterations=2, episodes_per_iter=2, validation_episodes=5)
        _, a = run_retry(line3, teacher3, cfg, RngHub(16))
        _, b = run_retry(line3, teacher3, cfg, RngHub(16))
        assert a == b

    def test_pool_grows_each_iteration(self, line3, teacher3):
        cfg = RetryConfig(iterations=3, episodes_per_iter=2, validation_episodes=5)
        _, logs = run_retry(line3, teacher3, cfg, RngHub(17))
        sizes = [log.pool_teacher for log in logs]
        assert sizes == sorted(sizes)
        assert sizes[-1] > sizes[0]
