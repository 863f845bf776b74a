"""Evaluation and diagnostic metrics shared by every training method.

Exploration is bucketed by how many distinct wrong goals an episode has
revealed by its end: none (0), low (1), medium (2 up to K-2), and high
once all K-1 wrong goals are revealed, i.e. the episode performed the
full sweep. Counts include marks inherited from a mid-task reset state,
so pool resets are credited with the exploration embodied in the pool.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .beliefs import RealizablePolicy, bayes_error
from .core import (
    Actor,
    ContextualMdp,
    Observation,
    Trajectory,
    discounted_return,
    rollout,
    sample_context,
)
from .policies import AggDataset, TabularPolicy
from .teacher import TeacherPolicy

__all__ = [
    "EXPLORATION_LEVELS",
    "DeltaCurve",
    "EpsilonReport",
    "EvalReport",
    "IterationLog",
    "RatioReport",
    "delta_curve",
    "density_ratio",
    "epsilon_decomposition",
    "evaluate",
    "exploration_level",
    "modal_level",
    "optimal_visitation",
    "sampled_visitation",
    "smoothed_series",
]

EXPLORATION_LEVELS = ("none", "low", "medium", "high")


def exploration_level(env: ContextualMdp, traj: Trajectory) -> str:
    """Bucket one episode by distinct wrong goals revealed at its end."""
    if traj.final_state is not None:
        revealed = traj.final_state.base[1]
    else:
        revealed = traj.steps[-1].state.base[1]
    wrong = len(revealed)
    if wrong == 0:
        return "none"
    if wrong >= env.num_goals - 1:
        return "high"
    return "low" if wrong == 1 else "medium"


def modal_level(histogram: dict[str, int]) -> str:
    """Most frequent level; ties break toward the lower level."""
    return max(EXPLORATION_LEVELS, key=lambda lv: (histogram.get(lv, 0), -EXPLORATION_LEVELS.index(lv)))


@dataclass(frozen=True)
class EvalReport:
    """Aggregate statistics over fresh evaluation episodes."""

    episodes: int
    success_rate: float
    mean_return: float
    exploration: dict[str, int]
    modal_exploration: str
    j_opt: float | None = None
    regret: float | None = None
    seed: int | None = None


def _as_actor(policy, greedy: bool) -> Actor:
    if isinstance(policy, TabularPolicy):
        return policy.greedy_actor() if greedy else policy.actor()
    if isinstance(policy, (TeacherPolicy, RealizablePolicy)):
        return policy.actor()
    if callable(policy):
        return policy
    raise TypeError(f"cannot evaluate object of type {type(policy).__name__}")


def evaluate(
    env: ContextualMdp,
    policy,
    episodes: int,
    rng: np.random.Generator,
    j_opt: float | None = None,
    greedy: bool = False,
    seed: int | None = None,
) -> EvalReport:
    """Roll fresh episodes from the initial-state distribution.

    Contexts are drawn from the prior and actions from the policy,
    both through the supplied generator, so a fixed stream fixes the
    report exactly. Regret is reported against j_opt when given.
    """
    if episodes <= 0:
        raise ValueError(f"episodes must be positive, got {episodes}")
    actor = _as_actor(policy, greedy)
    successes = 0
    returns = []
    histogram = {level: 0 for level in EXPLORATION_LEVELS}
    for _ in range(episodes):
        context = sample_context(env, rng)
        traj = rollout(env, actor, env.initial_state(context), rng)
        successes += int(traj.success)
        returns.append(discounted_return(traj, env.gamma))
        histogram[exploration_level(env, traj)] += 1
    mean_return = float(np.mean(returns))
    return EvalReport(
        episodes=episodes,
        success_rate=successes / episodes,
        mean_return=mean_return,
        exploration=histogram,
        modal_exploration=modal_level(histogram),
        j_opt=j_opt,
        regret=None if j_opt is None else j_opt - mean_return,
        seed=seed,
    )


@dataclass(frozen=True)
class IterationLog:
    """One training iteration's bookkeeping, shared across methods.

    Fields that do not apply to a method stay None and serialize as
    nulls, keeping one stable row schema for every run artifact.
    delta_total is the total minority-label count of the aggregate
    dataset: an exact integer that pure aggregation can only grow,
    which is what makes its monotonicity checkable with zero slack.
    delta_count is the dataset size behind it, so the gap is also
    available as the exact fraction delta_rate.
    """

    iteration: int
    queries: int | None = None
    dataset_size: int | None = None
    delta_minority: int | None = None
    delta_count: int | None = None
    train_loss: float | None = None
    validation_success: float | None = None
    train_success: float | None = None
    mean_return: float | None = None
    exploration: dict[str, int] | None = None
    sup_ratio: float | None = None
    advantage_sup: float | None = None
    pool_teacher: int | None = None
    pool_student: int | None = None

    @property
    def delta_total(self) -> int | None:
        return self.delta_minority

    @property
    def delta_rate(self) -> float | None:
        if self.delta_minority is None or not self.delta_count:
            return None
        return self.delta_minority / self.delta_count


@dataclass(frozen=True)
class DeltaCurve:
    """Realizability-gap series with an exact monotonicity verdict."""

    series: tuple[int, ...]
    increments: tuple[int, ...]
    monotone_nondecreasing: bool


def delta_curve(logs: list[IterationLog]) -> DeltaCurve:
    """Extract the integer delta_total series and check it never
    decreases; increments are the per-iteration jumps."""
    series = tuple(
        log.delta_total
        for log in logs
        if log.delta_total is not None
    )
    increments = tuple(b - a for a, b in zip(series, series[1:]))
    return DeltaCurve(series, increments, all(step >= 0 for step in increments))


def smoothed_series(values: list[float] | tuple[float, ...]) -> tuple[float, ...]:
    """Cumulative mean of a series: the standard way to read a trend off
    a noisy per-iteration statistic. For a series that decays to a
    plateau below its early values the cumulative mean is monotone even
    though the raw series jitters."""
    out: list[float] = []
    total = 0.0
    for i, value in enumerate(values, start=1):
        total += float(value)
        out.append(total / i)
    return tuple(out)


@dataclass(frozen=True)
class EpsilonReport:
    """Split of imitation loss into irreducible and model parts.

    epsilon is the policy's expected 0-1 disagreement with the dataset
    labels; delta is the dataset's Bayes floor; epsilon_model is the
    excess above the floor, clipped at zero (clipped_mass records how
    much clipping removed, nonzero only when the policy beats the
    majority rule through sampling luck elsewhere).
    """

    epsilon: float
    delta: float
    epsilon_model: float
    clipped_mass: float


def epsilon_decomposition(dataset: AggDataset, policy: TabularPolicy) -> EpsilonReport:
    if len(dataset) == 0:
        raise ValueError("cannot decompose loss on an empty dataset")
    agreement = 0.0
    for record in dataset:
        agreement += float(policy.probs(record.obs)[record.action])
    epsilon = 1.0 - agreement / len(dataset)
    delta = bayes_error(dataset).delta
    raw_model = epsilon - delta
    epsilon_model = max(0.0, raw_model)
    return EpsilonReport(epsilon, delta, epsilon_model, epsilon_model - raw_model)


@dataclass(frozen=True)
class RatioReport:
    """Smoothed sup density ratio between a reset distribution and a
    target visitation. disjoint_support flags raw mass with no target
    mass, the regime where the unsmoothed ratio would be infinite.
    advantage_sup, when filled by a trainer, is the largest optimal
    advantage forgone at any visited (observation, action) pair."""

    sup_ratio: float
    argmax_obs: Observation
    table: dict[Observation, tuple[float, float, float]]
    smoothing: float
    disjoint_support: bool
    advantage_sup: float | None = None


def density_ratio(
    reset_probs: dict[Observation, float],
    target_probs: dict[Observation, float],
    smoothing: float = 1e-3,
) -> RatioReport:
    """max_o p'(o) / q'(o) over the union support, after adding
    `smoothing` to both and renormalizing."""
    if smoothing <= 0:
        raise ValueError(f"smoothing must be positive, got {smoothing}")
    support = sorted(set(reset_probs) | set(target_probs))
    if not support:
        raise ValueError("both distributions are empty")
    n = len(support)
    table: dict[Observation, tuple[float, float, float]] = {}
    sup_ratio = -1.0
    argmax_obs = support[0]
    disjoint = False
    for obs in support:
        p_raw = reset_probs.get(obs, 0.0)
        q_raw = target_probs.get(obs, 0.0)
        if p_raw > 0.0 and q_raw == 0.0:
            disjoint = True
        p = (p_raw + smoothing) / (1.0 + smoothing * n)
        q = (q_raw + smoothing) / (1.0 + smoothing * n)
        ratio = p / q
        table[obs] = (p, q, ratio)
        if ratio > sup_ratio:
            sup_ratio = ratio
            argmax_obs = obs
    return RatioReport(sup_ratio, argmax_obs, table, smoothing, disjoint)


def optimal_visitation(env: ContextualMdp, oracle: RealizablePolicy) -> dict[Observation, float]:
    """Exact observation-visitation frequency of the belief-optimal
    policy: prior-weighted visit counts along each context's
    deterministic greedy episode, normalized over all visits."""
    counts: dict[Observation, float] = {}
    rng = np.random.default_rng(0)  # deterministic actor, draws unused
    for context, prior in zip(env.contexts, env.context_prior):
        traj = rollout(env, oracle.actor(), env.initial_state(context), rng)
        for step in traj.steps:
            counts[step.obs] = counts.get(step.obs, 0.0) + prior
    total = sum(counts.values())
    return {obs: c / total for obs, c in sorted(counts.items())}


def sampled_visitation(
    env: ContextualMdp, policy, episodes: int, rng: np.random.Generator
) -> dict[Observation, float]:
    """Monte Carlo counterpart of optimal_visitation, for cross checks."""
    actor = _as_actor(policy, greedy=False)
    counts: dict[Observation, float] = {}
    for _ in range(episodes):
        context = sample_context(env, rng)
        traj = rollout(env, actor, env.initial_state(context), rng)
        for step in traj.steps:
            counts[step.obs] = counts.get(step.obs, 0.0) + 1.0
    total = sum(counts.values())
    return {obs: c / total for obs, c in sorted(counts.items())}
