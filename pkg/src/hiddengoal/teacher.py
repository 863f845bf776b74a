"""Privileged teacher: exact value iteration with the context visible.

The teacher sees the full privileged state, so from its point of view
each context is a small deterministic shortest-path problem. Value
iteration over the reachable state set converges to the exact fixed
point (the dynamics are deterministic and rewards are terminal-only),
and the greedy policy heads straight for the hidden goal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    ContextualMdp,
    ContractViolation,
    PrivilegedState,
    Trajectory,
    rollout,
)
from .envs import enumerate_states

__all__ = ["TeacherPolicy", "plan_teacher", "teacher_rollout_from"]

RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class TeacherPolicy:
    """Greedy policy and exact value tables over privileged states."""

    actions_by_state: dict[PrivilegedState, int]
    v: dict[PrivilegedState, float]
    q: dict[PrivilegedState, tuple[float, ...]]
    sweeps: int
    residual: float
    n_actions: int

    def action(self, state: PrivilegedState) -> int:
        try:
            return self.actions_by_state[state]
        except KeyError:
            raise ContractViolation(f"teacher has no plan for state {state}") from None

    def value(self, state: PrivilegedState) -> float:
        try:
            return self.v[state]
        except KeyError:
            raise ContractViolation(f"teacher has no value for state {state}") from None

    def actor(self):
        """One-hot actor over privileged states, for rollout()."""

        def act(state, obs):
            probs = np.zeros(self.n_actions)
            probs[self.action(state)] = 1.0
            return probs

        return act


def plan_teacher(env: ContextualMdp) -> TeacherPolicy:
    """Exact synchronous value iteration over the reachable states.

    Stops when the sup-norm residual falls below 1e-10 (it reaches 0.0
    exactly once the sweep count passes the longest optimal path).
    Greedy ties break toward the lowest action index.
    """
    states = enumerate_states(env)
    gamma = env.gamma
    v = {s: 0.0 for s in states}
    # Cache transitions once; VI then touches only the cached edges.
    edges: dict[PrivilegedState, list[tuple[PrivilegedState | None, float, bool]]] = {
        s: [env.step(s, a) for a in range(env.n_actions)] for s in states
    }
    max_sweeps = len(states) + env.horizon + 2
    residual = float("inf")
    sweeps = 0
    while residual >= RESIDUAL_TOL:
        if sweeps > max_sweeps:
            raise RuntimeError("value iteration failed to converge")
        residual = 0.0
        new_v = {}
        for s in states:
            best = max(
                reward + (0.0 if success else gamma * v[nxt])
                for nxt, reward, success in edges[s]
            )
            residual = max(residual, abs(best - v[s]))
            new_v[s] = best
        v = new_v
        sweeps += 1

    q: dict[PrivilegedState, tuple[float, ...]] = {}
    actions: dict[PrivilegedState, int] = {}
    for s in states:
        row = tuple(
            reward + (0.0 if success else gamma * v[nxt])
            for nxt, reward, success in edges[s]
        )
        q[s] = row
        actions[s] = int(np.argmax(row))  # argmax takes the lowest index on ties
    return TeacherPolicy(actions, v, q, sweeps, residual, env.n_actions)


def teacher_rollout_from(
    env: ContextualMdp, teacher: TeacherPolicy, start: PrivilegedState
) -> Trajectory:
    """Deterministic greedy teacher episode from an arbitrary reachable
    state. Used both for demonstrations and for recovery resets."""
    rng = np.random.default_rng(0)  # one-hot actor, rng never influences the path
    return rollout(env, teacher.actor(), start, rng, policy_tag="teacher")
