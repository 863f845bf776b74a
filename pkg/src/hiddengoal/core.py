"""Core types for contextual MDPs with hidden goals.

A task instance pairs a hidden context (the goal identity) with an
observable base state. The environment dynamics may depend on the
context, but the agent only ever sees the base state, so distinct
privileged states can collapse onto one observation. Everything else
in this package (teachers, students, oracles) is built on the small
set of types defined here.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "ContractViolation",
    "ContextualMdp",
    "PrivilegedState",
    "RngHub",
    "Step",
    "Trajectory",
    "discounted_return",
    "replay_check",
    "rollout",
    "sample_context",
]

# Observations are plain hashable tuples: (location, revealed wrong goals).
Observation = tuple[int, tuple[int, ...]]

# An actor maps (privileged state, observation) to action probabilities.
# Students ignore the state; teachers ignore the observation.
Actor = Callable[["PrivilegedState", Observation], np.ndarray]


class ContractViolation(Exception):
    """An operation was called outside its stated contract."""


@dataclass(frozen=True, slots=True)
class PrivilegedState:
    """Full environment state: hidden context plus observable base."""

    context: int
    base: Observation

    def __str__(self) -> str:
        return f"(c={self.context}, base={self.base})"


class ContextualMdp:
    """Finite-horizon contextual MDP with a context-erasing observation map.

    Subclasses define the dynamics. Episodes terminate early only on
    success (reaching the hidden goal), which pays reward 1; every
    other transition pays 0. The horizon cut-off is enforced by
    :func:`rollout`, not by the dynamics.
    """

    kind: str
    num_goals: int
    contexts: tuple[int, ...]
    actions: tuple[str, ...]
    gamma: float
    horizon: int
    context_prior: tuple[float, ...]

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def initial_state(self, context: int) -> PrivilegedState:
        raise NotImplementedError

    def step(
        self, state: PrivilegedState, action: int
    ) -> tuple[PrivilegedState | None, float, bool]:
        """Apply one action. Returns (next state, reward, success).

        On success the episode ends and there is no successor state,
        so the first element is None exactly when the third is True.
        """
        raise NotImplementedError

    def validate_state(self, state: PrivilegedState) -> None:
        """Raise ContractViolation if the state is not a well-formed
        member of this environment's state set."""
        raise NotImplementedError

    def observe(self, state: PrivilegedState) -> Observation:
        """Erase the context. Surjective but not injective: states that
        differ only in context share an observation."""
        self.validate_state(state)
        return state.base

    def validate_action(self, action: int) -> None:
        if not (isinstance(action, (int, np.integer)) and 0 <= action < self.n_actions):
            raise ContractViolation(
                f"action {action!r} outside range(0, {self.n_actions})"
            )

    def features(self, obs: Observation) -> np.ndarray:
        """Feature vector for linear-softmax policies; environments that
        support the linear hook override this."""
        raise NotImplementedError(f"{self.kind} provides no feature map")


@dataclass(frozen=True, slots=True)
class Step:
    """One transition: the state the action was taken in, what the agent
    saw there, and what happened."""

    state: PrivilegedState
    obs: Observation
    action: int
    reward: float
    success: bool


@dataclass(frozen=True, slots=True)
class Trajectory:
    """A finite rollout. final_state is the post-action state when the
    episode ran out of horizon, and None when it ended in success (a
    success transition has no successor). seed names the RNG stream the
    episode consumed; policy_tag names the policy snapshot that acted."""

    steps: tuple[Step, ...]
    context: int
    final_state: PrivilegedState | None
    policy_tag: str = ""
    seed: str = ""

    @property
    def success(self) -> bool:
        return bool(self.steps) and self.steps[-1].success

    @property
    def length(self) -> int:
        return len(self.steps)

    def observations(self) -> list[Observation]:
        return [s.obs for s in self.steps]

    def visited_states(self) -> list[PrivilegedState]:
        """Every state an action was taken in, plus the terminal
        non-success state if the horizon expired."""
        states = [s.state for s in self.steps]
        if self.final_state is not None:
            states.append(self.final_state)
        return states


def _label_words(label: str) -> tuple[int, int]:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return (
        int.from_bytes(digest[:4], "big"),
        int.from_bytes(digest[4:8], "big"),
    )


@dataclass(frozen=True)
class RngHub:
    """Deterministic named random streams derived from one root seed.

    Each stream is keyed by a label path, so the generator a consumer
    receives depends only on (root seed, labels), never on how many
    draws other consumers made or in what order streams were created.
    That property is what makes run artifacts byte-reproducible.
    """

    root_seed: int

    def stream(self, *labels: str | int) -> np.random.Generator:
        words: list[int] = []
        for label in labels:
            words.extend(_label_words(str(label)))
        seq = np.random.SeedSequence(entropy=self.root_seed, spawn_key=tuple(words))
        return np.random.Generator(np.random.PCG64(seq))


def _sample_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF sampling so the draw depends only on rng.random()."""
    u = rng.random()
    acc = 0.0
    for i, p in enumerate(probs):
        acc += p
        if u < acc:
            return i
    return len(probs) - 1


def sample_context(env: ContextualMdp, rng: np.random.Generator) -> int:
    """Draw a hidden context from the environment's prior."""
    return env.contexts[_sample_index(np.asarray(env.context_prior, dtype=float), rng)]


def _validated_probs(env: ContextualMdp, probs: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (env.n_actions,):
        raise ContractViolation(
            f"actor returned {probs.shape} probabilities, expected ({env.n_actions},)"
        )
    if not np.all(np.isfinite(probs)) or np.any(probs < -1e-12):
        raise ContractViolation(f"actor returned invalid probabilities {probs}")
    total = float(probs.sum())
    if abs(total - 1.0) > 1e-9:
        raise ContractViolation(f"actor probabilities sum to {total}, expected 1")
    return probs


def rollout(
    env: ContextualMdp,
    actor: Actor,
    start: PrivilegedState,
    rng: np.random.Generator,
    max_steps: int | None = None,
    policy_tag: str = "",
    stream_id: str = "",
) -> Trajectory:
    """Roll an actor from a start state until success or the horizon.

    The horizon always counts from the start state, even when the start
    was drawn from a reset pool mid-task, so pool rollouts get a full
    episode budget.
    """
    env.validate_state(start)
    budget = env.horizon if max_steps is None else max_steps
    steps: list[Step] = []
    state = start
    for _ in range(budget):
        obs = env.observe(state)
        probs = _validated_probs(env, actor(state, obs))
        action = _sample_index(probs, rng)
        nxt, reward, success = env.step(state, action)
        steps.append(Step(state, obs, action, reward, success))
        if success:
            return Trajectory(tuple(steps), start.context, None, policy_tag, stream_id)
        assert nxt is not None
        state = nxt
    return Trajectory(tuple(steps), start.context, state, policy_tag, stream_id)


def discounted_return(traj: Trajectory, gamma: float) -> float:
    """Sum of gamma^t * r_t over the trajectory."""
    return float(sum(step.reward * gamma**t for t, step in enumerate(traj.steps)))


def replay_check(env: ContextualMdp, traj: Trajectory) -> None:
    """Re-simulate a trajectory's actions and verify every recorded field.

    Raises ContractViolation on the first mismatch. Used as a
    determinism and bookkeeping invariant in tests.
    """
    if not traj.steps:
        raise ContractViolation("empty trajectory")
    state: PrivilegedState | None = traj.steps[0].state
    for t, step in enumerate(traj.steps):
        if state != step.state:
            raise ContractViolation(f"state mismatch at t={t}: {state} != {step.state}")
        if env.observe(state) != step.obs:
            raise ContractViolation(f"observation mismatch at t={t}")
        nxt, reward, success = env.step(state, step.action)
        if (reward, success) != (step.reward, step.success):
            raise ContractViolation(f"outcome mismatch at t={t}")
        state = nxt
    if state != traj.final_state:
        raise ContractViolation(
            f"final state mismatch: {state} != {traj.final_state}"
        )


_policy_tag_counter = itertools.count()


def fresh_policy_tag(prefix: str = "pi") -> str:
    """Process-local monotone tag used to detect off-policy batches."""
    return f"{prefix}-{next(_policy_tag_counter)}"
