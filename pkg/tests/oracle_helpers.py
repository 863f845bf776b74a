"""Independent reference implementations used only to check the package.

Everything here is written from first principles against the problem
statement, deliberately not sharing code paths with the package: a
memoized expectimax over posterior context sets, a DFS state closure,
central finite differences, and a brute-force critical-state scan.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from hiddengoal import ContextualMdp, PrivilegedState, TabularPolicy
from hiddengoal.rl import exact_return


def expectimax_value(env: ContextualMdp) -> float:
    """Optimal expected return over observation histories, by exhaustive
    recursion on (observation, surviving contexts, steps left). The
    posterior stays uniform over survivors because transitions are
    deterministic given the context, so this equals the best any
    context-blind policy can score."""

    @lru_cache(maxsize=None)
    def value(obs, survivors: frozenset, steps_left: int) -> float:
        if steps_left == 0:
            return 0.0
        best = 0.0
        for action in range(env.n_actions):
            total = 0.0
            landed: dict = {}
            for c in sorted(survivors):
                nxt, reward, success = env.step(PrivilegedState(c, obs), action)
                total += reward
                if not success:
                    landed.setdefault(env.observe(nxt), []).append(c)
            for key, group in landed.items():
                total += env.gamma * len(group) * value(key, frozenset(group), steps_left - 1)
            best = max(best, total / len(survivors))
        return best

    start_obs = {env.observe(env.initial_state(c)) for c in env.contexts}
    assert len(start_obs) == 1
    return value(start_obs.pop(), frozenset(env.contexts), env.horizon)


def dfs_state_closure(env: ContextualMdp) -> set[PrivilegedState]:
    """Reachable privileged states by depth-first search over
    non-success transitions, independent of the package BFS."""
    seen: set[PrivilegedState] = set()
    stack = [env.initial_state(c) for c in env.contexts]
    while stack:
        state = stack.pop()
        if state in seen:
            continue
        seen.add(state)
        for action in range(env.n_actions):
            nxt, _, success = env.step(state, action)
            if not success and nxt not in seen:
                stack.append(nxt)
    return seen


def central_diff_grad(
    env: ContextualMdp,
    policy: TabularPolicy,
    observations,
    h: float = 1e-5,
) -> dict:
    """Central finite differences of exact_return over every logit of
    every listed observation (rows absent from the policy are the zero
    rows they default to)."""
    grads = {}
    for obs in observations:
        row = policy.row(obs).astype(float)
        grad = np.zeros_like(row)
        for i in range(len(row)):
            for sign in (+1.0, -1.0):
                bumped_row = row.copy()
                bumped_row[i] += sign * h
                bumped = dict(policy.logits)
                bumped[obs] = bumped_row
                shifted = TabularPolicy(bumped, policy.n_actions, policy.temperature)
                grad[i] += sign * exact_return(env, shifted)
        grads[obs] = grad / (2.0 * h)
    return grads


def max_rel_grad_err(analytic: dict, numeric: dict) -> float:
    """Worst per-coordinate disagreement over the shared keys, scaled by
    the overall gradient magnitude so exact zeros do not divide by
    zero."""
    scale = max(
        (float(np.max(np.abs(np.asarray(g)))) for g in list(analytic.values()) + list(numeric.values())),
        default=0.0,
    )
    scale = max(scale, 1e-9)
    worst = 0.0
    for obs in numeric:
        diff = np.abs(np.asarray(analytic[obs], dtype=float) - np.asarray(numeric[obs], dtype=float))
        worst = max(worst, float(diff.max()) / scale)
    return worst


def brute_critical_scan(env: ContextualMdp, traj, dataset) -> set[int]:
    """Necessary condition checked directly from the dynamics: step t is
    a candidate when its action has a successor state (no success) whose
    observation lies outside the dataset's support."""
    support = {record.obs for record in dataset}
    out = set()
    for t, step in enumerate(traj.steps):
        nxt, _, success = env.step(step.state, step.action)
        if success:
            continue
        if env.observe(nxt) not in support:
            out.add(t)
    return out
