"""Imitation trainers: behavior cloning, query-everywhere aggregation
(DAgger), and discriminator-gated querying (CritiQ).

All three share the same ingredients: teacher demonstrations, an
append-only label dataset, and exact tabular refits. They differ only
in when the teacher is asked for more labels. DAgger asks at every
state the student visits; the gated trainer asks only where the
teacher-likeness score falls below kappa, and additionally returns the
best iterate by validation success instead of the last one.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .beliefs import bayes_error
from .core import ContextualMdp, PrivilegedState, RngHub, rollout, sample_context
from .envs import enumerate_states
from .metrics import IterationLog, evaluate
from .policies import (
    AggDataset,
    Discriminator,
    TabularPolicy,
    bc_fit,
    train_discriminator,
)
from .teacher import TeacherPolicy, teacher_rollout_from

__all__ = [
    "BcConfig",
    "CritiqConfig",
    "DaggerConfig",
    "collect_demos",
    "cross_entropy",
    "run_bc",
    "run_critiq",
    "run_dagger",
    "run_dagger_iteration",
]


@dataclass(frozen=True)
class BcConfig:
    num_demos: int = 300
    ridge: float = 0.1
    validation_episodes: int = 100

    def __post_init__(self):
        if self.num_demos < 1:
            raise ValueError("num_demos must be at least 1")


@dataclass(frozen=True)
class DaggerConfig:
    iterations: int = 10
    # 20 episodes gives each of a handful of contexts several episodes
    # per iteration, which keeps per-iteration query counts close to
    # their expectation instead of dominated by episode-length noise.
    episodes_per_iter: int = 20
    num_demos: int = 300
    ridge: float = 0.1
    validation_episodes: int = 100
    beta: float = 0.0  # expert-mixing schedule knob; pure student rollouts by default

    def __post_init__(self):
        if self.iterations < 1 or self.episodes_per_iter < 1:
            raise ValueError("iterations and episodes_per_iter must be at least 1")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")


@dataclass(frozen=True)
class CritiqConfig:
    iterations: int = 10
    episodes_per_iter: int = 20  # matched to DaggerConfig for paired runs
    num_demos: int = 300
    kappa: float = 0.5
    lambda_reg: float = 0.1
    ridge: float = 0.1
    validation_episodes: int = 100
    discriminator_smoothing: float = 1.0
    teacher_rollouts_per_iter: int = 20
    aggregate_recovery: bool = False
    alpha_welltrained: float | None = None  # optional diagnostic threshold

    def __post_init__(self):
        if self.iterations < 1 or self.episodes_per_iter < 1:
            raise ValueError("iterations and episodes_per_iter must be at least 1")
        if not 0.0 < self.kappa < 1.0:
            raise ValueError("kappa must lie in (0, 1)")
        if self.lambda_reg < 0:
            raise ValueError("lambda_reg must be nonnegative")


def collect_demos(
    env: ContextualMdp,
    teacher: TeacherPolicy,
    num_demos: int,
    rng: np.random.Generator,
    iteration: int = 0,
) -> AggDataset:
    """Teacher rollouts from sampled-context initial states, flattened
    into (observation, action) labels."""
    dataset = AggDataset()
    for _ in range(num_demos):
        context = sample_context(env, rng)
        traj = teacher_rollout_from(env, teacher, env.initial_state(context))
        for step in traj.steps:
            dataset.append(step.obs, step.action, context, iteration)
    return dataset


def cross_entropy(policy: TabularPolicy, dataset: AggDataset) -> float:
    """Mean negative log likelihood of the dataset labels."""
    total = 0.0
    for record in dataset:
        total -= float(np.log(policy.probs(record.obs)[record.action]))
    return total / len(dataset)


def _dataset_log(
    iteration: int,
    dataset: AggDataset,
    queries: int,
    train_loss: float,
    validation: float | None = None,
) -> IterationLog:
    report = bayes_error(dataset)
    return IterationLog(
        iteration=iteration,
        queries=queries,
        dataset_size=len(dataset),
        delta_minority=report.minority,
        delta_count=report.count,
        train_loss=train_loss,
        validation_success=validation,
    )


def run_bc(
    env: ContextualMdp,
    teacher: TeacherPolicy,
    num_demos: int,
    rng: np.random.Generator,
    ridge: float = 0.1,
    validation_episodes: int = 100,
) -> tuple[TabularPolicy, IterationLog]:
    """Fit once to teacher demonstrations and measure the result."""
    demos = collect_demos(env, teacher, num_demos, rng)
    policy = bc_fit(demos, env.n_actions, ridge)
    validation = evaluate(env, policy, validation_episodes, rng).success_rate
    return policy, _dataset_log(0, demos, 0, cross_entropy(policy, demos), validation)


def run_dagger_iteration(
    env: ContextualMdp,
    teacher: TeacherPolicy,
    policy: TabularPolicy,
    dataset: AggDataset,
    rng: np.random.Generator,
    episodes: int = 10,
    ridge: float = 0.1,
    iteration: int = 1,
    beta: float = 0.0,
) -> tuple[TabularPolicy, AggDataset, IterationLog]:
    """One aggregation round: roll the student, label every visited
    state with the teacher's action, refit on the grown dataset."""
    grown = dataset.copy()
    queries = 0
    actor = _mixed_actor(policy, teacher, beta)
    for _ in range(episodes):
        context = sample_context(env, rng)
        traj = rollout(env, actor, env.initial_state(context), rng, policy_tag=policy.tag)
        for step in traj.steps:
            grown.append(step.obs, teacher.action(step.state), context, iteration)
            queries += 1
    refit = bc_fit(grown, env.n_actions, ridge)
    log = _dataset_log(iteration, grown, queries, cross_entropy(refit, grown))
    return refit, grown, log


def _mixed_actor(policy: TabularPolicy, teacher: TeacherPolicy, beta: float):
    if beta <= 0.0:
        return policy.actor()

    def act(state, obs):
        expert = np.zeros(policy.n_actions)
        expert[teacher.action(state)] = 1.0
        return beta * expert + (1.0 - beta) * policy.probs(obs)

    return act


def run_dagger(
    env: ContextualMdp,
    teacher: TeacherPolicy,
    cfg: DaggerConfig,
    hub: RngHub,
) -> tuple[TabularPolicy, list[IterationLog]]:
    """Demo-initialized DAgger; returns the final iterate.

    Iteration 0 in the logs is the behavior-cloning starting point; its
    query count is zero because demonstrations are not corrections.
    """
    demos = collect_demos(env, teacher, cfg.num_demos, hub.stream("demos"))
    dataset = demos
    policy = bc_fit(dataset, env.n_actions, cfg.ridge)
    logs = [
        replace(
            _dataset_log(0, dataset, 0, cross_entropy(policy, dataset)),
            validation_success=evaluate(
                env, policy, cfg.validation_episodes, hub.stream("validation", 0)
            ).success_rate,
        )
    ]
    for i in range(1, cfg.iterations + 1):
        policy, dataset, log = run_dagger_iteration(
            env,
            teacher,
            policy,
            dataset,
            hub.stream("rollout", i),
            episodes=cfg.episodes_per_iter,
            ridge=cfg.ridge,
            iteration=i,
            beta=cfg.beta,
        )
        validation = evaluate(
            env, policy, cfg.validation_episodes, hub.stream("validation", i)
        ).success_rate
        logs.append(replace(log, validation_success=validation))
    return policy, logs


def _success_bonus(
    policy: TabularPolicy,
    discriminator: Discriminator,
    env: ContextualMdp,
    preimages: dict,
    lambda_reg: float,
) -> TabularPolicy:
    """Tilt logits toward actions whose successors look teacher-like.

    This realizes the regularizer as a deterministic post-fit bonus:
    for each dataset observation, each action gains lambda times the
    mean successor score over the observation's reachable preimages,
    with success transitions scored 1. Labels still dominate; the bonus
    only settles otherwise-even choices.
    """
    if lambda_reg == 0.0:
        return policy
    new_logits = {}
    for obs, row in policy.logits.items():
        states = preimages.get(obs, ())
        if not states:
            new_logits[obs] = row.copy()
            continue
        bonus = np.zeros(policy.n_actions)
        for action in range(policy.n_actions):
            score = 0.0
            for s in states:
                nxt, _, success = env.step(s, action)
                score += 1.0 if success else discriminator.score(env.observe(nxt))
            bonus[action] = score / len(states)
        new_logits[obs] = row + lambda_reg * bonus
    return TabularPolicy(new_logits, policy.n_actions, policy.temperature)


def _observation_preimages(env: ContextualMdp) -> dict:
    preimages: dict = {}
    for s in enumerate_states(env):
        preimages.setdefault(env.observe(s), []).append(s)
    return preimages


def run_critiq(
    env: ContextualMdp,
    teacher: TeacherPolicy,
    cfg: CritiqConfig,
    hub: RngHub,
) -> tuple[TabularPolicy, list[IterationLog]]:
    """Gated-query imitation.

    Start from a behavior-cloned policy on teacher demos. Each
    iteration rolls the current student; the teacher is consulted only
    at states whose observation the discriminator scores below kappa
    (off the teacher's beaten path). The refit adds a small logit bonus
    toward teacher-like successors. The discriminator's teacher side is
    the whole teacher corpus so far (demo observations plus fresh
    rollouts each iteration; the teacher is stationary, so evidence
    accumulates), while its student side is only the current
    iteration's rollouts (the student is not). Keeping the demo mass on
    the teacher side is what stops a student that dithers on the
    demonstrated path from outvoting the teacher there and triggering
    queries at observations the dataset already covers. Returns the
    iterate with the best validation success (earliest on ties), not
    the last one.
    """
    demos = collect_demos(env, teacher, cfg.num_demos, hub.stream("demos"))
    dataset = demos
    preimages = _observation_preimages(env)
    policy = bc_fit(dataset, env.n_actions, cfg.ridge)
    discriminator = Discriminator.empty(cfg.discriminator_smoothing, cfg.kappa)

    # Burn-in: score teacher visitation against the initial student's.
    teacher_corpus = [record.obs for record in demos]
    teacher_obs = _teacher_observations(
        env, teacher, cfg.teacher_rollouts_per_iter, hub.stream("disc-teacher", 0)
    )
    teacher_corpus.extend(teacher_obs)
    student_obs: list = []
    init_rng = hub.stream("disc-student", 0)
    init_trajs = []
    for _ in range(cfg.episodes_per_iter):
        context = sample_context(env, init_rng)
        traj = rollout(env, policy.actor(), env.initial_state(context), init_rng)
        init_trajs.append(traj)
        student_obs.extend(traj.observations())
    discriminator = train_discriminator(discriminator, teacher_corpus, student_obs)

    candidates = [policy]
    validations = [
        evaluate(env, policy, cfg.validation_episodes, hub.stream("validation", 0)).success_rate
    ]
    loss0 = cross_entropy(policy, dataset) - cfg.lambda_reg * _mean_traj_score(
        discriminator, init_trajs
    )
    logs = [replace(_dataset_log(0, dataset, 0, loss0), validation_success=validations[0])]

    for i in range(1, cfg.iterations + 1):
        rng = hub.stream("rollout", i)
        queries = 0
        student_obs = []
        trajs = []
        for _ in range(cfg.episodes_per_iter):
            context = sample_context(env, rng)
            traj = rollout(env, policy.actor(), env.initial_state(context), rng, policy_tag=policy.tag)
            trajs.append(traj)
            student_obs.extend(traj.observations())
            for step in traj.steps:
                if not discriminator.is_critical(step.obs):
                    continue
                queries += 1
                if cfg.aggregate_recovery:
                    recovery = teacher_rollout_from(env, teacher, step.state)
                    for rec in recovery.steps:
                        dataset.append(rec.obs, rec.action, context, i)
                else:
                    dataset.append(step.obs, teacher.action(step.state), context, i)
        refit = bc_fit(dataset, env.n_actions, cfg.ridge)
        policy = _success_bonus(refit, discriminator, env, preimages, cfg.lambda_reg)
        loss = cross_entropy(policy, dataset) - cfg.lambda_reg * _mean_traj_score(
            discriminator, trajs
        )
        teacher_corpus.extend(
            _teacher_observations(
                env, teacher, cfg.teacher_rollouts_per_iter, hub.stream("disc-teacher", i)
            )
        )
        discriminator = train_discriminator(discriminator, teacher_corpus, student_obs)
        validation = evaluate(
            env, policy, cfg.validation_episodes, hub.stream("validation", i)
        ).success_rate
        candidates.append(policy)
        validations.append(validation)
        logs.append(replace(_dataset_log(i, dataset, queries, loss), validation_success=validation))

    best = int(np.argmax(validations))
    return candidates[best], logs


def _teacher_observations(
    env: ContextualMdp, teacher: TeacherPolicy, rollouts: int, rng: np.random.Generator
) -> list:
    observations = []
    for _ in range(rollouts):
        context = sample_context(env, rng)
        traj = teacher_rollout_from(env, teacher, env.initial_state(context))
        observations.extend(traj.observations())
    return observations


def _mean_traj_score(discriminator: Discriminator, trajs: list) -> float:
    """Mean over trajectories of the mean per-state score along each."""
    if not trajs:
        return 0.0
    per_traj = [
        float(np.mean([discriminator.score(o) for o in traj.observations()]))
        for traj in trajs
    ]
    return float(np.mean(per_traj))
