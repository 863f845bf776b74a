"""Evaluation, exploration buckets, gap curves, and density ratios."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hiddengoal import (
    AggDataset,
    IterationLog,
    RngHub,
    TabularPolicy,
    bayes_error,
    delta_curve,
    density_ratio,
    epsilon_decomposition,
    evaluate,
    exploration_level,
    make_env,
    rollout,
)
from hiddengoal.metrics import modal_level, optimal_visitation, sampled_visitation, smoothed_series


def one_hot_actor(env, action):
    def act(state, obs):
        probs = np.zeros(env.n_actions)
        probs[action] = 1.0
        return probs

    return act


class TestExplorationLevel:
    def test_scripted_sweep_buckets_on_line3(self, line3, teacher3):
        from hiddengoal import scripted_search_actor

        actor = scripted_search_actor(line3)
        rng = np.random.default_rng(0)
        expected = {1: "none", 2: "low", 3: "high"}  # wrong goals revealed: 0, 1, 2
        for context, level in expected.items():
            traj = rollout(line3, actor, line3.initial_state(context), rng)
            assert exploration_level(line3, traj) == level

    def test_medium_between_low_and_full_sweep(self, room4):
        from hiddengoal import scripted_search_actor

        traj = rollout(
            room4, scripted_search_actor(room4), room4.initial_state(3), np.random.default_rng(0)
        )
        assert exploration_level(room4, traj) == "medium"  # 2 of 3 wrong rooms revealed

    def test_inherited_marks_count(self, line3):
        from hiddengoal import PrivilegedState

        start = PrivilegedState(3, (0, (1, 2)))  # reset state carries two marks
        traj = rollout(line3, one_hot_actor(line3, 0), start, np.random.default_rng(0), max_steps=2)
        assert exploration_level(line3, traj) == "high"

    def test_modal_tie_breaks_to_lower_level(self):
        assert modal_level({"none": 3, "high": 3}) == "none"
        assert modal_level({"low": 1, "medium": 5}) == "medium"


class TestEvaluate:
    def test_reproducible_given_stream(self, line3, teacher3):
        a = evaluate(line3, teacher3, 40, RngHub(9).stream("eval"))
        b = evaluate(line3, teacher3, 40, RngHub(9).stream("eval"))
        assert a == b

    def test_teacher_is_perfect(self, line3, teacher3, oracle3):
        report = evaluate(line3, teacher3, 50, RngHub(0).stream("eval"), j_opt=oracle3.j_opt)
        assert report.success_rate == 1.0
        assert report.mean_return > oracle3.j_opt  # privileged beats realizable
        assert report.regret == pytest.approx(oracle3.j_opt - report.mean_return)

    def test_histogram_sums_to_episodes(self, line3):
        report = evaluate(line3, TabularPolicy.uniform(3), 30, RngHub(1).stream("eval"))
        assert sum(report.exploration.values()) == 30
        assert report.modal_exploration in ("none", "low", "medium", "high")

    def test_regret_nonnegative_for_observation_policies(self, line3, oracle3):
        report = evaluate(
            line3, TabularPolicy.uniform(3), 200, RngHub(2).stream("eval"), j_opt=oracle3.j_opt
        )
        assert report.regret >= -1e-9

    def test_zero_episodes_rejected(self, line3):
        with pytest.raises(ValueError, match="episodes"):
            evaluate(line3, TabularPolicy.uniform(3), 0, RngHub(0).stream("eval"))


class TestDeltaCurve:
    def test_monotone_series(self):
        logs = [IterationLog(i, delta_minority=d, delta_count=10) for i, d in enumerate([0, 2, 2, 5])]
        curve = delta_curve(logs)
        assert curve.series == (0, 2, 2, 5)
        assert curve.increments == (2, 0, 3)
        assert curve.monotone_nondecreasing

    def test_detects_decrease(self):
        logs = [IterationLog(i, delta_minority=d, delta_count=10) for i, d in enumerate([3, 1])]
        assert not delta_curve(logs).monotone_nondecreasing

    def test_skips_rows_without_gap_fields(self):
        logs = [IterationLog(0), IterationLog(1, delta_minority=4, delta_count=9)]
        assert delta_curve(logs).series == (4,)

    def test_iteration_log_rate(self):
        log = IterationLog(0, delta_minority=3, delta_count=12)
        assert log.delta_total == 3
        assert log.delta_rate == pytest.approx(0.25)
        assert IterationLog(0).delta_rate is None


def test_smoothed_series_is_cumulative_mean():
    assert smoothed_series([4.0, 2.0, 3.0]) == pytest.approx((4.0, 3.0, 3.0))
    assert smoothed_series([]) == ()


class TestEpsilonDecomposition:
    def test_uniform_policy_on_conflicting_labels(self):
        ds = AggDataset()
        for action in (1, 1, 2):
            ds.append((0, ()), action, context=1, iteration=0)
        report = epsilon_decomposition(ds, TabularPolicy.uniform(3))
        assert report.epsilon == pytest.approx(2 / 3)
        assert report.delta == pytest.approx(1 / 3)
        assert report.epsilon_model == pytest.approx(1 / 3)
        assert report.clipped_mass == 0.0

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            epsilon_decomposition(AggDataset(), TabularPolicy.uniform(3))

    @settings(max_examples=40, deadline=None)
    @given(
        st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=30),
        st.integers(0, 2**16),
    )
    def test_loss_never_beats_bayes_floor(self, labels, seed):
        ds = AggDataset()
        for obs_id, action in labels:
            ds.append((obs_id, ()), action, context=1, iteration=0)
        rng = np.random.default_rng(seed)
        logits = {(i, ()): rng.normal(size=3) for i in range(3)}
        report = epsilon_decomposition(ds, TabularPolicy(logits, 3))
        assert report.epsilon >= report.delta - 1e-12
        assert report.delta == pytest.approx(bayes_error(ds).delta)


class TestDensityRatio:
    def test_identical_distributions_have_unit_sup(self):
        probs = {(0, ()): 0.5, (1, ()): 0.5}
        report = density_ratio(probs, probs)
        assert report.sup_ratio == pytest.approx(1.0)
        assert not report.disjoint_support

    def test_sup_at_least_one(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            p = rng.dirichlet(np.ones(4))
            q = rng.dirichlet(np.ones(4))
            support = [(i, ()) for i in range(4)]
            report = density_ratio(dict(zip(support, p)), dict(zip(support, q)))
            assert report.sup_ratio >= 1.0 - 1e-9

    def test_disjoint_support_flagged(self):
        report = density_ratio({(0, ()): 1.0}, {(1, ()): 1.0})
        assert report.disjoint_support
        assert report.sup_ratio > 1.0

    def test_argmax_matches_table(self):
        report = density_ratio({(0, ()): 0.9, (1, ()): 0.1}, {(0, ()): 0.2, (1, ()): 0.8})
        assert report.argmax_obs == (0, ())
        assert report.table[(0, ())][2] == pytest.approx(report.sup_ratio)

    def test_bad_inputs_rejected(self):
        with pytest.raises(ValueError, match="smoothing"):
            density_ratio({(0, ()): 1.0}, {(0, ()): 1.0}, smoothing=0.0)
        with pytest.raises(ValueError, match="empty"):
            density_ratio({}, {})


class TestVisitation:
    def test_exact_visitation_normalized(self, line3, oracle3):
        visits = optimal_visitation(line3, oracle3)
        assert sum(visits.values()) == pytest.approx(1.0)
        start = line3.observe(line3.initial_state(1))
        assert visits[start] > 0

    def test_sampled_visitation_tracks_exact(self, line3, oracle3):
        exact = optimal_visitation(line3, oracle3)
        sampled = sampled_visitation(
            line3, oracle3.greedy_tabular(), 4000, RngHub(4).stream("vis")
        )
        support = set(exact) | set(sampled)
        tv = 0.5 * sum(abs(exact.get(o, 0.0) - sampled.get(o, 0.0)) for o in support)
        assert tv < 0.05
