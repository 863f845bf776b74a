"""Sparse-reward policy gradient with pluggable reset distributions.

The learner is plain REINFORCE with a mean-return baseline on tabular
(or linear-softmax) logits; exact_return computes the true objective by
dynamic programming, including its analytic gradient, so the sampled
update direction can be checked against ground truth.

run_retry grows the reset distribution the way a teacher would: states
the student reaches feed teacher recovery rollouts, and the states the
teacher traverses on its way back to the goal become future reset
candidates. run_plain_rl is the same learner pinned to initial-state
resets.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .beliefs import solve_belief_mdp
from .core import (
    ContextualMdp,
    ContractViolation,
    PrivilegedState,
    RngHub,
    Trajectory,
    discounted_return,
    rollout,
    sample_context,
)
from .envs import enumerate_states
from .metrics import (
    IterationLog,
    density_ratio,
    evaluate,
    exploration_level,
    EXPLORATION_LEVELS,
    optimal_visitation,
)
from .policies import LinearSoftmaxPolicy, TabularPolicy
from .teacher import TeacherPolicy, teacher_rollout_from

__all__ = [
    "ResetPool",
    "RetryConfig",
    "exact_return",
    "exact_return_with_grad",
    "pg_update",
    "run_plain_rl",
    "run_retry",
]


@dataclass(frozen=True)
class RetryConfig:
    iterations: int = 300
    episodes_per_iter: int = 16
    learning_rate: float = 0.5
    gamma: float | None = None  # None defers to the environment's discount
    baseline: str = "mean-return"  # or "none"
    mix: float = 0.5
    mix_schedule: str = "constant"  # or "linear-to-zero"
    teacher_rollouts_per_iter: int = 10
    init_teacher_rollouts: int = 50
    validation_episodes: int = 30

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.baseline not in ("none", "mean-return"):
            raise ValueError(f"unknown baseline {self.baseline!r}")
        if not 0.0 <= self.mix <= 1.0:
            raise ValueError("mix must lie in [0, 1]")
        if self.mix_schedule not in ("constant", "linear-to-zero"):
            raise ValueError(f"unknown mix schedule {self.mix_schedule!r}")


@dataclass
class ResetPool:
    """Append-only multisets of privileged states usable as resets.

    teacher_states come from teacher rollouts (demonstrated recovery),
    student_states from the learner's own visits. Resets draw from the
    teacher pool with probability mix, otherwise from the environment's
    initial-state distribution.
    """

    mix: float = 0.5
    teacher_states: list[PrivilegedState] = field(default_factory=list)
    student_states: list[PrivilegedState] = field(default_factory=list)

    def add_teacher(self, states) -> None:
        self.teacher_states.extend(states)

    def add_student(self, states) -> None:
        self.student_states.extend(states)

    def sample_reset(self, env: ContextualMdp, rng: np.random.Generator) -> PrivilegedState:
        if self.mix > 0 and self.teacher_states and rng.random() < self.mix:
            return self.teacher_states[int(rng.integers(len(self.teacher_states)))]
        return env.initial_state(sample_context(env, rng))

    def reset_observation_probs(self, env: ContextualMdp) -> dict:
        """The exact observation distribution sample_reset draws from."""
        probs: dict = {}
        pool_share = self.mix if self.teacher_states else 0.0
        if self.teacher_states:
            weight = pool_share / len(self.teacher_states)
            for s in self.teacher_states:
                obs = env.observe(s)
                probs[obs] = probs.get(obs, 0.0) + weight
        for context, prior in zip(env.contexts, env.context_prior):
            obs = env.observe(env.initial_state(context))
            probs[obs] = probs.get(obs, 0.0) + (1.0 - pool_share) * prior
        return probs

    def to_jsonable(self) -> dict:
        def encode(states):
            return [[s.context, [s.base[0], list(s.base[1])]] for s in states]

        return {
            "mix": self.mix,
            "teacher_states": encode(self.teacher_states),
            "student_states": encode(self.student_states),
        }

    @staticmethod
    def from_jsonable(payload: dict) -> "ResetPool":
        def decode(raw):
            return [
                PrivilegedState(int(c), (int(loc), tuple(int(g) for g in revealed)))
                for c, (loc, revealed) in raw
            ]

        return ResetPool(
            mix=float(payload["mix"]),
            teacher_states=decode(payload["teacher_states"]),
            student_states=decode(payload["student_states"]),
        )


def _returns_to_go(traj: Trajectory, gamma: float) -> np.ndarray:
    out = np.zeros(len(traj.steps))
    acc = 0.0
    for t in range(len(traj.steps) - 1, -1, -1):
        acc = traj.steps[t].reward + gamma * acc
        out[t] = acc
    return out


def pg_update(policy, batch: list[Trajectory], cfg: RetryConfig):
    """One REINFORCE step on a batch of on-policy trajectories.

    theta <- theta + alpha * sum_t grad log pi(a_t | o_t) (G_t - b),
    with G_t the discounted return-to-go and b the batch mean return
    (or zero when baseline is "none"). Rejects batches whose policy
    tag differs from the given snapshot.
    """
    if not batch:
        raise ValueError("pg_update needs a non-empty batch")
    for traj in batch:
        if traj.policy_tag != policy.tag:
            raise ContractViolation(
                f"off-policy batch: trajectory from {traj.policy_tag!r}, "
                f"updating {policy.tag!r}"
            )
    gamma = cfg.gamma
    if gamma is None:
        raise ValueError("pg_update needs cfg.gamma resolved to a number")
    returns = [_returns_to_go(traj, gamma) for traj in batch]
    b = float(np.mean([r[0] if len(r) else 0.0 for r in returns]))
    if cfg.baseline == "none":
        b = 0.0

    if isinstance(policy, TabularPolicy):
        new_logits = {obs: row.copy() for obs, row in policy.logits.items()}
        for traj, gs in zip(batch, returns):
            for t, step in enumerate(traj.steps):
                probs = policy.probs(step.obs)
                row = new_logits.setdefault(step.obs, np.zeros(policy.n_actions))
                grad = -probs
                grad[step.action] += 1.0
                row += cfg.learning_rate * (gs[t] - b) * grad / policy.temperature
        return TabularPolicy(new_logits, policy.n_actions, policy.temperature)

    if isinstance(policy, LinearSoftmaxPolicy):
        new_weights = policy.weights.copy()
        for traj, gs in zip(batch, returns):
            for t, step in enumerate(traj.steps):
                phi = np.asarray(policy.feature_map(step.obs), dtype=float)
                probs = policy.probs(step.obs)
                grad = -probs
                grad[step.action] += 1.0
                new_weights += (
                    cfg.learning_rate
                    * (gs[t] - b)
                    * np.outer(grad, phi)
                    / policy.temperature
                )
        return LinearSoftmaxPolicy(new_weights, policy.feature_map, policy.temperature)

    raise TypeError(f"pg_update does not support {type(policy).__name__}")


def exact_return(
    env: ContextualMdp, policy, gamma: float | None = None, state_cap: int = 10_000
) -> float:
    """Exact J(pi) by finite-horizon dynamic programming over
    (privileged state, step). Errors out if the reachable state set
    exceeds state_cap."""
    return _exact_dp(env, policy, gamma, state_cap, want_grad=False)[0]


def exact_return_with_grad(
    env: ContextualMdp, policy: TabularPolicy, gamma: float | None = None, state_cap: int = 10_000
) -> tuple[float, dict]:
    """J(pi) and its analytic gradient with respect to every logit row,
    by forward sensitivity through the same dynamic program. Gradient
    keys cover all reachable observations (rows absent from the policy
    are treated as the zero row they default to)."""
    return _exact_dp(env, policy, gamma, state_cap, want_grad=True)


def _exact_dp(env, policy, gamma, state_cap, want_grad):
    if gamma is None:
        gamma = env.gamma
    states = enumerate_states(env, cap=state_cap)
    observations = sorted({env.observe(s) for s in states})
    obs_index = {obs: i for i, obs in enumerate(observations)}
    n_theta = len(observations) * env.n_actions
    probs_by_obs = {obs: policy.probs(obs) for obs in observations}
    edges = {
        s: [env.step(s, a) for a in range(env.n_actions)] for s in states
    }

    # dprobs[a][b] = d pi(a|o) / d theta[o, b]; nonzero only on o's own row.
    def dprobs(obs):
        p = probs_by_obs[obs]
        return (np.diag(p) - np.outer(p, p)) / getattr(policy, "temperature", 1.0)

    v_next = {s: 0.0 for s in states}
    g_next = {s: np.zeros(n_theta) for s in states} if want_grad else None
    for _ in range(env.horizon):
        v_now = {}
        g_now = {} if want_grad else None
        for s in states:
            obs = env.observe(s)
            p = probs_by_obs[obs]
            q = np.array(
                [
                    r + (0.0 if done else gamma * v_next[nxt])
                    for nxt, r, done in edges[s]
                ]
            )
            v_now[s] = float(p @ q)
            if want_grad:
                g = np.zeros(n_theta)
                base = obs_index[obs] * env.n_actions
                g[base : base + env.n_actions] += dprobs(obs).T @ q
                for a, (nxt, _, done) in enumerate(edges[s]):
                    if not done:
                        g += p[a] * gamma * g_next[nxt]
                g_now[s] = g
        v_next = v_now
        if want_grad:
            g_next = g_now

    j = 0.0
    g_total = np.zeros(n_theta) if want_grad else None
    for context, prior in zip(env.contexts, env.context_prior):
        s0 = env.initial_state(context)
        j += prior * v_next[s0]
        if want_grad:
            g_total += prior * g_next[s0]
    if not want_grad:
        return j, None
    grad = {
        obs: g_total[i * env.n_actions : (i + 1) * env.n_actions]
        for obs, i in obs_index.items()
    }
    return j, grad


def _mix_at(cfg: RetryConfig, iteration: int) -> float:
    if cfg.mix_schedule == "linear-to-zero" and cfg.iterations > 1:
        frac = (iteration - 1) / (cfg.iterations - 1)
        return cfg.mix * (1.0 - frac)
    return cfg.mix


def _exploration_histogram(env, batch) -> dict[str, int]:
    hist = {level: 0 for level in EXPLORATION_LEVELS}
    for traj in batch:
        hist[exploration_level(env, traj)] += 1
    return hist


def _train_loop(
    env: ContextualMdp,
    teacher: TeacherPolicy | None,
    cfg: RetryConfig,
    hub: RngHub,
) -> tuple[TabularPolicy, list[IterationLog]]:
    cfg = replace(cfg, gamma=env.gamma if cfg.gamma is None else cfg.gamma)
    use_pool = teacher is not None
    pool = ResetPool(mix=cfg.mix if use_pool else 0.0)
    oracle = None
    d_opt = None
    if use_pool:
        oracle = solve_belief_mdp(env)
        d_opt = optimal_visitation(env, oracle)
        init_rng = hub.stream("pool-init")
        for _ in range(cfg.init_teacher_rollouts):
            context = sample_context(env, init_rng)
            traj = teacher_rollout_from(env, teacher, env.initial_state(context))
            pool.add_teacher(traj.visited_states())

    policy = TabularPolicy.uniform(env.n_actions)
    best_policy, best_val = policy, -1.0
    logs: list[IterationLog] = []
    for i in range(1, cfg.iterations + 1):
        pool.mix = _mix_at(cfg, i) if use_pool else 0.0
        rng = hub.stream("episodes", i)
        batch = []
        for _ in range(cfg.episodes_per_iter):
            start = pool.sample_reset(env, rng)
            batch.append(
                rollout(env, policy.actor(), start, rng, policy_tag=policy.tag,
                        stream_id=f"episodes/{i}")
            )
        sup_ratio = None
        advantage_sup = None
        if use_pool:
            # Ratio of this iteration's reset distribution to the
            # optimal realizable visitation, before the pool grows.
            sup_ratio = density_ratio(pool.reset_observation_probs(env), d_opt).sup_ratio
            advantage_sup = max(
                oracle.v[step.obs] - oracle.q[step.obs][step.action]
                for traj in batch
                for step in traj.steps
            )
        new_policy = pg_update(policy, batch, cfg)
        visited = [s for traj in batch for s in traj.visited_states()]
        if use_pool:
            pool.add_student(visited)
            rec_rng = hub.stream("recovery", i)
            for _ in range(cfg.teacher_rollouts_per_iter):
                anchor = visited[int(rec_rng.integers(len(visited)))]
                recovery = teacher_rollout_from(env, teacher, anchor)
                pool.add_teacher(recovery.visited_states())
        validation = evaluate(
            env, new_policy, cfg.validation_episodes, hub.stream("validation", i)
        ).success_rate
        returns = [discounted_return(traj, cfg.gamma) for traj in batch]
        logs.append(
            IterationLog(
                iteration=i,
                validation_success=validation,
                train_success=float(np.mean([traj.success for traj in batch])),
                mean_return=float(np.mean(returns)),
                exploration=_exploration_histogram(env, batch),
                sup_ratio=sup_ratio,
                advantage_sup=advantage_sup,
                pool_teacher=len(pool.teacher_states) if use_pool else None,
                pool_student=len(pool.student_states) if use_pool else None,
            )
        )
        if validation > best_val:
            best_policy, best_val = new_policy, validation
        policy = new_policy
    return best_policy, logs


def run_retry(
    env: ContextualMdp,
    teacher: TeacherPolicy,
    cfg: RetryConfig,
    hub: RngHub,
) -> tuple[TabularPolicy, list[IterationLog]]:
    """Recovery-reset policy gradient; returns the validation-best
    iterate (validated from true initial states)."""
    return _train_loop(env, teacher, cfg, hub)


def run_plain_rl(
    env: ContextualMdp,
    cfg: RetryConfig,
    hub: RngHub,
) -> tuple[TabularPolicy, list[IterationLog]]:
    """The same learner with resets pinned to the initial-state
    distribution. With a zero-iteration budget this returns the
    untrained uniform policy."""
    return _train_loop(env, None, cfg, hub)
