"""Observation-space oracles: best realizable value and the gap below it.

With a uniform context prior and deterministic dynamics, the belief
after any observation here is uniform over the contexts that have not
been ruled out, so the belief MDP collapses onto the observation set.
Solving it exactly gives the best any context-blind policy can do
(J_opt), and the Bayes error of a label dataset gives the floor on
imitation loss that no amount of fitting can remove (delta).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import ContextualMdp, ContractViolation, Observation, PrivilegedState, Trajectory
from .envs import enumerate_states
from .policies import AggDataset, TabularPolicy
from .teacher import TeacherPolicy, teacher_rollout_from

__all__ = [
    "CriticalCandidate",
    "DeltaReport",
    "ObsDelta",
    "RealizablePolicy",
    "bayes_error",
    "dataset_distance",
    "oracle_critical_states",
    "solve_belief_mdp",
]

RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class RealizablePolicy:
    """Exact solution of the belief MDP, indexed by observation."""

    actions_by_obs: dict[Observation, int]
    v: dict[Observation, float]
    q: dict[Observation, tuple[float, ...]]
    survivors: dict[Observation, tuple[int, ...]]
    j_opt: float
    sweeps: int
    residual: float
    n_actions: int

    def action(self, obs: Observation) -> int:
        try:
            return self.actions_by_obs[obs]
        except KeyError:
            raise ContractViolation(f"no plan for observation {obs}") from None

    def actor(self):
        def act(state, obs):
            probs = np.zeros(self.n_actions)
            probs[self.action(obs)] = 1.0
            return probs

        return act

    def greedy_tabular(self) -> TabularPolicy:
        """The same policy as a TabularPolicy with -inf off-action
        logits, so softmax machinery treats it as deterministic."""
        logits = {}
        for obs, action in self.actions_by_obs.items():
            row = np.full(self.n_actions, -np.inf)
            row[action] = 0.0
            logits[obs] = row
        return TabularPolicy(logits, self.n_actions)


def _belief_structure(env: ContextualMdp):
    """Group reachable states by observation and verify the
    observation-to-belief bijection the solver relies on."""
    preimages: dict[Observation, list[PrivilegedState]] = {}
    for s in enumerate_states(env):
        preimages.setdefault(env.observe(s), []).append(s)
    survivors = {
        obs: tuple(sorted(s.context for s in states))
        for obs, states in preimages.items()
    }
    for obs, states in preimages.items():
        if len(survivors[obs]) != len(set(survivors[obs])):
            raise ContractViolation(f"duplicate contexts behind observation {obs}")
        # Successor observations must partition the surviving contexts
        # the same way the global preimage map does, otherwise the
        # observation is not a sufficient statistic for the belief.
        for action in range(env.n_actions):
            groups: dict[Observation, set[int]] = {}
            for s in states:
                nxt, _, success = env.step(s, action)
                if not success:
                    groups.setdefault(env.observe(nxt), set()).add(s.context)
            for nxt_obs, contexts in groups.items():
                if contexts != set(survivors[nxt_obs]):
                    raise ContractViolation(
                        f"observation {nxt_obs} does not pin down the belief: "
                        f"{sorted(contexts)} reachable vs {survivors[nxt_obs]} global"
                    )
    return preimages, survivors


def solve_belief_mdp(env: ContextualMdp) -> RealizablePolicy:
    """Exact value iteration on the observation MDP.

    V(o) = max_a [ P(success | o, a) + gamma * sum_o' P(o' | o, a) V(o') ]
    with the expectation over a uniform belief on the surviving
    contexts. Runs to a sup-norm residual below 1e-10; ties in the
    greedy argmax break toward the lowest action index. j_opt is the
    value at the shared initial observation.
    """
    preimages, survivors = _belief_structure(env)
    observations = sorted(preimages)
    # Cache the outcome distribution for every (observation, action).
    outcomes: dict[tuple[Observation, int], tuple[float, dict[Observation, float]]] = {}
    for obs in observations:
        states = preimages[obs]
        weight = 1.0 / len(states)
        for action in range(env.n_actions):
            p_success = 0.0
            nxt_probs: dict[Observation, float] = {}
            for s in states:
                nxt, _, success = env.step(s, action)
                if success:
                    p_success += weight
                else:
                    nxt_obs = env.observe(nxt)
                    nxt_probs[nxt_obs] = nxt_probs.get(nxt_obs, 0.0) + weight
            outcomes[(obs, action)] = (p_success, nxt_probs)

    v = {obs: 0.0 for obs in observations}
    sweeps = 0
    residual = float("inf")
    max_sweeps = 100_000
    while residual >= RESIDUAL_TOL:
        if sweeps > max_sweeps:
            raise RuntimeError("belief value iteration failed to converge")
        residual = 0.0
        new_v = {}
        for obs in observations:
            best = -float("inf")
            for action in range(env.n_actions):
                p_success, nxt_probs = outcomes[(obs, action)]
                val = p_success + env.gamma * sum(
                    p * v[nxt_obs] for nxt_obs, p in nxt_probs.items()
                )
                best = max(best, val)
            residual = max(residual, abs(best - v[obs]))
            new_v[obs] = best
        v = new_v
        sweeps += 1

    q: dict[Observation, tuple[float, ...]] = {}
    greedy: dict[Observation, int] = {}
    for obs in observations:
        row = []
        for action in range(env.n_actions):
            p_success, nxt_probs = outcomes[(obs, action)]
            row.append(
                p_success
                + env.gamma * sum(p * v[nxt_obs] for nxt_obs, p in nxt_probs.items())
            )
        q[obs] = tuple(row)
        greedy[obs] = int(np.argmax(row))

    initial_obs = {env.observe(env.initial_state(c)) for c in env.contexts}
    if len(initial_obs) != 1:
        raise ContractViolation("initial observation differs across contexts")
    j_opt = v[initial_obs.pop()]
    return RealizablePolicy(greedy, v, q, survivors, j_opt, sweeps, residual, env.n_actions)


@dataclass(frozen=True)
class ObsDelta:
    """Label histogram and local Bayes error at one observation."""

    counts: dict[int, int]
    minority: int
    total: int

    @property
    def delta(self) -> float:
        return self.minority / self.total


@dataclass(frozen=True)
class DeltaReport:
    """Realizability gap of a label dataset under 0-1 loss.

    delta_total is the total minority-label count: the number of labels
    any single observation-conditioned rule must get wrong. It is an
    exact integer, and appending labels can only keep or grow it, so
    monotonicity checks need no float tolerance. delta is the same gap
    as a fraction of the dataset.
    """

    per_obs: dict[Observation, ObsDelta]
    minority: int
    count: int
    aliased: tuple[Observation, ...]

    @property
    def delta_total(self) -> int:
        return self.minority

    @property
    def delta(self) -> float:
        return self.minority / self.count if self.count else 0.0


def bayes_error(dataset: AggDataset) -> DeltaReport:
    """Exact counting: at each observation the best rule keeps the
    majority label, so the local gap is (total - majority) / total."""
    per_obs: dict[Observation, ObsDelta] = {}
    minority_sum = 0
    total_sum = 0
    for obs, counts in dataset.label_counts().items():
        total = sum(counts.values())
        minority = total - max(counts.values())
        per_obs[obs] = ObsDelta(dict(sorted(counts.items())), minority, total)
        minority_sum += minority
        total_sum += total
    aliased = tuple(sorted(o for o, d in per_obs.items() if len(d.counts) > 1))
    return DeltaReport(per_obs, minority_sum, total_sum, aliased)


def dataset_distance(state: PrivilegedState, dataset: AggDataset, env: ContextualMdp) -> int:
    """Fewest context-fixed transitions from state to any observation in
    the dataset's support. Saturates at the horizon when no path back
    exists (success transitions are not traversable)."""
    env.validate_state(state)
    support = dataset.support()
    if env.observe(state) in support:
        return 0
    seen = {state}
    frontier = deque([(state, 0)])
    while frontier:
        current, dist = frontier.popleft()
        if dist >= env.horizon:
            continue
        for action in range(env.n_actions):
            nxt, _, success = env.step(current, action)
            if success or nxt in seen:
                continue
            if env.observe(nxt) in support:
                return dist + 1
            seen.add(nxt)
            frontier.append((nxt, dist + 1))
    return env.horizon


@dataclass(frozen=True)
class CriticalCandidate:
    """A trajectory step whose next state leaves the dataset's support,
    scored by how cheaply querying there would restore coverage."""

    index: int
    state: PrivilegedState
    delta_increase: float
    distance: int
    score: float


def oracle_critical_states(
    env: ContextualMdp,
    traj: Trajectory,
    dataset: AggDataset,
    teacher: TeacherPolicy,
    lambda_distance: float = 1.0,
) -> list[CriticalCandidate]:
    """Exhaustive what-if scoring of query points along one trajectory.

    A step t is a candidate when its successor's observation falls
    outside the dataset support (the first moment coverage is lost).
    Each candidate is scored by how much appending a full teacher
    recovery rollout from s_t would raise the dataset's realizability
    gap, plus lambda times the distance from s_t back to the support.
    Lower is better; the list is sorted ascending with ties broken by
    earlier index.
    """
    support = dataset.support()
    base_delta = bayes_error(dataset).delta_total
    candidates: list[CriticalCandidate] = []
    for t, step in enumerate(traj.steps):
        successor = (
            traj.steps[t + 1].state if t + 1 < len(traj.steps) else traj.final_state
        )
        if successor is None:  # success transition, nothing to recover from
            continue
        if env.observe(successor) in support:
            continue
        hypothetical = dataset.copy()
        recovery = teacher_rollout_from(env, teacher, step.state)
        for rec_step in recovery.steps:
            hypothetical.append(rec_step.obs, rec_step.action, recovery.context, -1)
        delta_increase = bayes_error(hypothetical).delta_total - base_delta
        distance = dataset_distance(step.state, dataset, env)
        candidates.append(
            CriticalCandidate(
                t, step.state, delta_increase, distance,
                delta_increase + lambda_distance * distance,
            )
        )
    return sorted(candidates, key=lambda c: (c.score, c.index))
