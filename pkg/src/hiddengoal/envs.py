"""Hidden-goal environment families.

Three families share the same structure: K candidate goals, a hidden
context naming the true one, reward 1 exactly on reaching it, and an
observation that reveals only which wrong goals have been ruled out so
far. They differ in how costly it is to check a candidate:

- line-search: walk a line of closed chests and open them,
- push-line: push a block right past goal cells, each visit is free,
- room-graph: hop between a hallway and K rooms.

A fourth, trivial environment (two-armed bandit) exists for gradient
checks; it has a single context and no aliasing.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .core import ContextualMdp, ContractViolation, PrivilegedState

__all__ = [
    "ENV_KINDS",
    "LineSearchEnv",
    "PushLineEnv",
    "RoomGraphEnv",
    "TwoArmedBandit",
    "enumerate_states",
    "make_env",
    "scripted_search_actor",
    "worst_case_scripted_steps",
]

ENV_KINDS = ("line-search", "push-line", "room-graph")

_HORIZON_FACTOR = {"line-search": 8, "push-line": 6, "room-graph": 4}


class _GoalFamilyEnv(ContextualMdp):
    """Shared plumbing for the three K-goal families."""

    def __init__(self, kind: str, num_goals: int, horizon: int | None, gamma: float):
        if num_goals < 2:
            raise ValueError(f"{kind} needs at least 2 goals, got {num_goals}")
        if not 0.0 < gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
        self.kind = kind
        self.num_goals = num_goals
        self.contexts = tuple(range(1, num_goals + 1))
        self.gamma = gamma
        self.horizon = (
            horizon if horizon is not None else _HORIZON_FACTOR[kind] * num_goals
        )
        self.context_prior = tuple(1.0 / num_goals for _ in self.contexts)
        self._validate_feasibility()

    def initial_state(self, context: int) -> PrivilegedState:
        if context not in self.contexts:
            raise ContractViolation(f"unknown context {context} for {self.kind}")
        return PrivilegedState(context, (0, ()))

    def _max_location(self) -> int:
        raise NotImplementedError

    def validate_state(self, state: PrivilegedState) -> None:
        if state.context not in self.contexts:
            raise ContractViolation(f"unknown context {state.context}")
        loc, revealed = state.base
        if not 0 <= loc <= self._max_location():
            raise ContractViolation(f"location {loc} out of range for {self.kind}")
        if tuple(sorted(set(revealed))) != tuple(revealed):
            raise ContractViolation(f"revealed set {revealed} not sorted and unique")
        for goal in revealed:
            if goal not in self.contexts:
                raise ContractViolation(f"revealed goal {goal} does not exist")
        if state.context in revealed:
            raise ContractViolation(
                f"true goal {state.context} cannot be marked as ruled out"
            )

    def _validate_feasibility(self) -> None:
        # The horizon must leave room for the exhaustive nearest-first
        # sweep to finish under the worst context.
        worst = worst_case_scripted_steps(self)
        if self.horizon < worst:
            raise ValueError(
                f"horizon {self.horizon} shorter than the {worst}-step "
                f"exhaustive sweep for {self.kind} with {self.num_goals} goals"
            )

    def features(self, obs):
        loc, revealed = obs
        span = self._max_location() + 1
        vec = np.zeros(span + self.num_goals)
        vec[loc] = 1.0
        for goal in revealed:
            vec[span + goal - 1] = 1.0
        return vec


def _with_reveal(revealed: tuple[int, ...], goal: int) -> tuple[int, ...]:
    if goal in revealed:
        return revealed
    return tuple(sorted(revealed + (goal,)))


class LineSearchEnv(_GoalFamilyEnv):
    """A line of positions 0..2K with chest i at position 2i.

    Actions: left, right, open. Opening the true goal's chest succeeds;
    opening a wrong chest reveals it as empty (a persistent mark on the
    observation); opening anywhere else does nothing.
    """

    actions = ("left", "right", "open")

    def __init__(self, num_goals: int = 3, horizon: int | None = None, gamma: float = 0.99):
        super().__init__("line-search", num_goals, horizon, gamma)

    def _max_location(self) -> int:
        return 2 * self.num_goals

    def step(self, state, action):
        self.validate_state(state)
        self.validate_action(action)
        pos, opened = state.base
        if action == 0:
            return PrivilegedState(state.context, (max(pos - 1, 0), opened)), 0.0, False
        if action == 1:
            nxt = min(pos + 1, 2 * self.num_goals)
            return PrivilegedState(state.context, (nxt, opened)), 0.0, False
        if pos % 2 == 0 and pos > 0:
            chest = pos // 2
            if chest == state.context:
                return None, 1.0, True
            return PrivilegedState(state.context, (pos, _with_reveal(opened, chest))), 0.0, False
        return PrivilegedState(state.context, (pos, opened)), 0.0, False


class PushLineEnv(_GoalFamilyEnv):
    """A block on cells 0..2K with goal i at cell 2i.

    Actions: push-left, push-right. Entering the true goal cell
    succeeds; entering a wrong goal cell marks it visited. Pushes into
    a wall leave the block in place.
    """

    actions = ("push-left", "push-right")

    def __init__(self, num_goals: int = 3, horizon: int | None = None, gamma: float = 0.99):
        super().__init__("push-line", num_goals, horizon, gamma)

    def _max_location(self) -> int:
        return 2 * self.num_goals

    def step(self, state, action):
        self.validate_state(state)
        self.validate_action(action)
        cell, visited = state.base
        nxt = max(cell - 1, 0) if action == 0 else min(cell + 1, 2 * self.num_goals)
        if nxt != cell and nxt % 2 == 0 and nxt > 0:
            goal = nxt // 2
            if goal == state.context:
                return None, 1.0, True
            visited = _with_reveal(visited, goal)
        return PrivilegedState(state.context, (nxt, visited)), 0.0, False


class RoomGraphEnv(_GoalFamilyEnv):
    """A hallway (node 0) connected to K rooms (nodes 1..K).

    Actions: goto-hall, goto-room-1 .. goto-room-K. Moves along absent
    edges are no-ops, so the action set is state independent. Entering
    the goal room succeeds; entering a wrong room marks it visited.
    """

    def __init__(self, num_goals: int = 3, horizon: int | None = None, gamma: float = 0.99):
        self.actions = ("goto-hall",) + tuple(
            f"goto-room-{j}" for j in range(1, num_goals + 1)
        )
        super().__init__("room-graph", num_goals, horizon, gamma)

    def _max_location(self) -> int:
        return self.num_goals

    def step(self, state, action):
        self.validate_state(state)
        self.validate_action(action)
        node, visited = state.base
        if action == 0:
            return PrivilegedState(state.context, (0, visited)), 0.0, False
        if node != 0 or action == node:
            return PrivilegedState(state.context, (node, visited)), 0.0, False
        room = action
        if room == state.context:
            return None, 1.0, True
        return PrivilegedState(state.context, (room, _with_reveal(visited, room))), 0.0, False


class TwoArmedBandit(ContextualMdp):
    """One state, one context, two arms, one step. Arm 0 pays 1."""

    kind = "bandit"
    num_goals = 1
    actions = ("arm-0", "arm-1")

    def __init__(self, gamma: float = 0.99):
        self.contexts = (1,)
        self.gamma = gamma
        self.horizon = 1
        self.context_prior = (1.0,)

    def initial_state(self, context: int) -> PrivilegedState:
        if context != 1:
            raise ContractViolation(f"unknown context {context} for bandit")
        return PrivilegedState(1, (0, ()))

    def validate_state(self, state: PrivilegedState) -> None:
        if state.context != 1 or state.base != (0, ()):
            raise ContractViolation(f"invalid bandit state {state}")

    def step(self, state, action):
        self.validate_state(state)
        self.validate_action(action)
        if action == 0:
            return None, 1.0, True
        return PrivilegedState(1, (0, ())), 0.0, False

    def features(self, obs):
        return np.array([1.0])


def make_env(
    kind: str,
    num_goals: int = 3,
    horizon: int | None = None,
    gamma: float = 0.99,
) -> ContextualMdp:
    """Build one of the shipped environment families by name."""
    builders = {
        "line-search": LineSearchEnv,
        "push-line": PushLineEnv,
        "room-graph": RoomGraphEnv,
    }
    if kind not in builders:
        raise ValueError(f"unknown environment kind {kind!r}, expected one of {ENV_KINDS}")
    return builders[kind](num_goals=num_goals, horizon=horizon, gamma=gamma)


def scripted_search_actor(env: ContextualMdp):
    """Deterministic exhaustive search from the observation alone.

    Checks candidate goals in index order (which is nearest-first from
    the shared start), skipping goals already revealed as wrong. Serves
    as the feasibility witness: it succeeds within the horizon for
    every context.
    """

    def one_hot(a: int) -> np.ndarray:
        probs = np.zeros(env.n_actions)
        probs[a] = 1.0
        return probs

    if env.kind == "line-search":

        def actor(state, obs):
            pos, opened = obs
            target = min(g for g in env.contexts if g not in opened)
            if pos < 2 * target:
                return one_hot(1)
            if pos > 2 * target:
                return one_hot(0)
            return one_hot(2)

        return actor

    if env.kind == "push-line":

        def actor(state, obs):
            return one_hot(1)

        return actor

    if env.kind == "room-graph":

        def actor(state, obs):
            node, visited = obs
            if node != 0:
                return one_hot(0)
            return one_hot(min(g for g in env.contexts if g not in visited))

        return actor

    if env.kind == "bandit":

        def actor(state, obs):
            return one_hot(0)

        return actor

    raise ValueError(f"no scripted actor for kind {env.kind!r}")


def worst_case_scripted_steps(env: ContextualMdp) -> int:
    """Steps the scripted sweep needs under its worst context, by
    direct simulation of the deterministic dynamics."""
    actor = scripted_search_actor(env)
    worst = 0
    for context in env.contexts:
        state: PrivilegedState | None = env.initial_state(context)
        steps = 0
        while True:
            assert state is not None
            obs = state.base
            action = int(actor(state, obs).argmax())
            state, _, success = env.step(state, action)
            steps += 1
            if success:
                break
            if steps > 100 * env.num_goals:
                raise RuntimeError(f"scripted sweep diverged on {env.kind}")
        worst = max(worst, steps)
    return worst


def enumerate_states(env: ContextualMdp, cap: int = 1_000_000) -> list[PrivilegedState]:
    """All privileged states reachable from the initial states, via
    breadth-first closure over non-success transitions.

    Returns them sorted by (context, base) so downstream indexing is
    order independent. Raises RuntimeError if the closure exceeds cap.
    """
    seen: set[PrivilegedState] = set()
    queue: deque[PrivilegedState] = deque()
    for context in env.contexts:
        start = env.initial_state(context)
        seen.add(start)
        queue.append(start)
    while queue:
        state = queue.popleft()
        for action in range(env.n_actions):
            nxt, _, success = env.step(state, action)
            if success or nxt in seen:
                continue
            seen.add(nxt)
            if len(seen) > cap:
                raise RuntimeError(f"state enumeration exceeded cap {cap}")
            queue.append(nxt)
    return sorted(seen, key=lambda s: (s.context, s.base))
