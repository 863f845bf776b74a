"""Environment families: dynamics, state spaces, and the scripted sweep."""

import numpy as np
import pytest

from hiddengoal import (
    ContractViolation,
    LineSearchEnv,
    PrivilegedState,
    PushLineEnv,
    RoomGraphEnv,
    TwoArmedBandit,
    enumerate_states,
    make_env,
    rollout,
    scripted_search_actor,
)
from oracle_helpers import dfs_state_closure

FAMILIES = [("line-search", 3), ("line-search", 2), ("push-line", 3), ("room-graph", 4)]


class TestConstruction:
    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="unknown environment kind"):
            make_env("maze")

    def test_too_few_goals_rejected(self):
        with pytest.raises(ValueError, match="at least 2 goals"):
            make_env("line-search", 1)

    def test_gamma_bounds(self):
        with pytest.raises(ValueError, match="gamma"):
            make_env("line-search", 3, gamma=1.0)

    @pytest.mark.parametrize(
        "kind,factor", [("line-search", 8), ("push-line", 6), ("room-graph", 4)]
    )
    def test_default_horizon(self, kind, factor):
        for k in (2, 3, 5):
            assert make_env(kind, k).horizon == factor * k

    def test_infeasible_horizon_rejected(self):
        with pytest.raises(ValueError, match="horizon"):
            make_env("line-search", 3, horizon=5)

    def test_uniform_prior(self, line3):
        assert line3.contexts == (1, 2, 3)
        assert line3.context_prior == pytest.approx((1 / 3,) * 3)


class TestStateSpace:
    def test_line3_has_84_states(self, line3):
        assert len(enumerate_states(line3)) == 84

    @pytest.mark.parametrize("kind,goals", FAMILIES)
    def test_enumeration_matches_independent_dfs(self, kind, goals):
        env = make_env(kind, goals)
        assert set(enumerate_states(env)) == dfs_state_closure(env)

    def test_enumeration_sorted_and_cap_enforced(self, line3):
        states = enumerate_states(line3)
        assert states == sorted(states, key=lambda s: (s.context, s.base))
        with pytest.raises(RuntimeError, match="cap"):
            enumerate_states(line3, cap=10)

    @pytest.mark.parametrize("kind,goals", FAMILIES)
    def test_observation_erases_only_context(self, kind, goals):
        env = make_env(kind, goals)
        for state in enumerate_states(env):
            assert env.observe(state) == state.base
            twin_contexts = [
                c for c in env.contexts if c != state.context and c not in state.base[1]
            ]
            for c in twin_contexts:
                assert env.observe(PrivilegedState(c, state.base)) == state.base

    def test_validate_state_rejects_malformed(self, line3):
        with pytest.raises(ContractViolation):
            line3.validate_state(PrivilegedState(9, (0, ())))
        with pytest.raises(ContractViolation):
            line3.validate_state(PrivilegedState(1, (99, ())))
        with pytest.raises(ContractViolation):
            line3.validate_state(PrivilegedState(1, (0, (2, 2))))
        with pytest.raises(ContractViolation):  # true goal marked as ruled out
            line3.validate_state(PrivilegedState(1, (0, (1,))))

    def test_validate_action_bounds(self, line3):
        with pytest.raises(ContractViolation):
            line3.validate_action(3)
        with pytest.raises(ContractViolation):
            line3.validate_action(-1)


class TestLineSearch:
    def test_open_true_chest_succeeds(self):
        env = LineSearchEnv(3)
        nxt, reward, success = env.step(PrivilegedState(2, (4, ())), 2)
        assert (nxt, reward, success) == (None, 1.0, True)

    def test_open_wrong_chest_reveals_nonterminally(self):
        env = LineSearchEnv(3)
        nxt, reward, success = env.step(PrivilegedState(2, (2, ())), 2)
        assert not success and reward == 0.0
        assert nxt == PrivilegedState(2, (2, (1,)))
        again, _, _ = env.step(nxt, 2)
        assert again == nxt  # re-opening adds nothing

    def test_open_off_chest_is_noop(self):
        env = LineSearchEnv(3)
        for pos in (0, 1, 3):
            nxt, reward, success = env.step(PrivilegedState(2, (pos, ())), 2)
            assert (nxt.base, reward, success) == ((pos, ()), 0.0, False)

    def test_walls_clamp_movement(self):
        env = LineSearchEnv(3)
        left, _, _ = env.step(PrivilegedState(1, (0, ())), 0)
        right, _, _ = env.step(PrivilegedState(1, (6, ())), 1)
        assert left.base[0] == 0
        assert right.base[0] == 6


class TestPushLine:
    def test_entering_true_goal_cell_succeeds(self):
        env = PushLineEnv(3)
        nxt, reward, success = env.step(PrivilegedState(1, (1, ())), 1)
        assert (nxt, reward, success) == (None, 1.0, True)

    def test_entering_wrong_goal_cell_marks(self):
        env = PushLineEnv(3)
        nxt, _, success = env.step(PrivilegedState(2, (1, ())), 1)
        assert not success
        assert nxt == PrivilegedState(2, (2, (1,)))

    def test_wall_push_stays_unmarked(self):
        env = PushLineEnv(3)
        nxt, _, _ = env.step(PrivilegedState(2, (0, ())), 0)
        assert nxt.base == (0, ())

    def test_sitting_on_goal_cell_does_not_retrigger(self):
        env = PushLineEnv(3)
        # Pushing off cell 2 and back on marks once, not twice.
        state = PrivilegedState(3, (2, (1,)))
        left, _, _ = env.step(state, 0)
        back, _, _ = env.step(left, 1)
        assert back == state


class TestRoomGraph:
    def test_goto_room_from_room_is_noop(self):
        env = RoomGraphEnv(4)
        state = PrivilegedState(2, (1, ()))
        nxt, _, success = env.step(state, 3)
        assert not success and nxt == state

    def test_hall_to_goal_room_succeeds(self):
        env = RoomGraphEnv(4)
        nxt, reward, success = env.step(PrivilegedState(2, (0, ())), 2)
        assert (nxt, reward, success) == (None, 1.0, True)

    def test_hall_to_wrong_room_marks(self):
        env = RoomGraphEnv(4)
        nxt, _, success = env.step(PrivilegedState(2, (0, ())), 3)
        assert not success
        assert nxt == PrivilegedState(2, (3, (3,)))

    def test_goto_hall_always_works(self):
        env = RoomGraphEnv(4)
        nxt, _, _ = env.step(PrivilegedState(2, (3, (3,))), 0)
        assert nxt.base == (0, (3,))


class TestBandit:
    def test_arm0_pays_and_terminates(self):
        env = TwoArmedBandit()
        assert env.step(env.initial_state(1), 0) == (None, 1.0, True)

    def test_arm1_pays_nothing(self):
        env = TwoArmedBandit()
        nxt, reward, success = env.step(env.initial_state(1), 1)
        assert (reward, success) == (0.0, False)
        assert nxt == env.initial_state(1)

    def test_single_step_horizon(self):
        assert TwoArmedBandit().horizon == 1


@pytest.mark.parametrize("kind,goals", FAMILIES)
def test_mask_only_grows_along_rollouts(kind, goals):
    env = make_env(kind, goals)
    rng = np.random.default_rng(2)

    def uniform(state, obs):
        return np.full(env.n_actions, 1.0 / env.n_actions)

    for context in env.contexts:
        traj = rollout(env, uniform, env.initial_state(context), rng)
        masks = [set(s.base[1]) for s in traj.visited_states()]
        for before, after in zip(masks, masks[1:]):
            assert before <= after
            assert context not in after


@pytest.mark.parametrize("kind,goals", FAMILIES)
def test_scripted_sweep_succeeds_for_every_context(kind, goals):
    env = make_env(kind, goals)
    actor = scripted_search_actor(env)
    for context in env.contexts:
        traj = rollout(env, actor, env.initial_state(context), np.random.default_rng(0))
        assert traj.success
        assert traj.length <= env.horizon


def test_scripted_sweep_on_bandit():
    env = TwoArmedBandit()
    traj = rollout(env, scripted_search_actor(env), env.initial_state(1), np.random.default_rng(0))
    assert traj.success and traj.length == 1


def test_features_one_hot_plus_mask(line3):
    vec = line3.features((3, (1, 3)))
    assert vec.shape == (7 + 3,)
    assert vec[3] == 1.0 and vec.sum() == 3.0
    assert vec[7 + 0] == 1.0 and vec[7 + 2] == 1.0
