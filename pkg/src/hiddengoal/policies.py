"""Tabular policies, label datasets, and the teacher-likeness scorer.

Students are softmax-over-logits tables keyed by observation, so the
whole pipeline stays exact and replayable. The discriminator is the
closed-form minimizer of the usual two-class logistic objective on
count data: score(o) = (teacher visits + s) / (all visits + 2s),
which is 0.5 wherever it has seen nothing.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .core import Observation, PrivilegedState, fresh_policy_tag
from .teacher import TeacherPolicy

__all__ = [
    "AggDataset",
    "DatasetRecord",
    "Discriminator",
    "PolicyFormatError",
    "TabularPolicy",
    "bc_fit",
    "load_policy",
    "save_policy",
    "train_discriminator",
]

POLICY_FORMAT = "hiddengoal-policy"
POLICY_VERSION = 1


class PolicyFormatError(ValueError):
    """A policy file is missing, malformed, or from an unknown version."""


@dataclass
class TabularPolicy:
    """Softmax policy over per-observation logit rows.

    Observations without a row fall back to uniform. Instances are
    treated as immutable snapshots after construction; updates build a
    new instance (the tag tells snapshots apart for on-policy checks).
    """

    logits: dict[Observation, np.ndarray]
    n_actions: int
    temperature: float = 1.0
    tag: str = field(default_factory=fresh_policy_tag)

    def row(self, obs: Observation) -> np.ndarray:
        existing = self.logits.get(obs)
        return existing if existing is not None else np.zeros(self.n_actions)

    def probs(self, obs: Observation) -> np.ndarray:
        z = self.row(obs) / self.temperature
        z = z - z.max()
        e = np.exp(z)
        return e / e.sum()

    def greedy_action(self, obs: Observation) -> int:
        return int(np.argmax(self.row(obs)))  # lowest index wins ties

    def actor(self):
        def act(state, obs):
            return self.probs(obs)

        return act

    def greedy_actor(self):
        def act(state, obs):
            probs = np.zeros(self.n_actions)
            probs[self.greedy_action(obs)] = 1.0
            return probs

        return act

    @staticmethod
    def uniform(n_actions: int, temperature: float = 1.0) -> "TabularPolicy":
        return TabularPolicy({}, n_actions, temperature)


@dataclass
class LinearSoftmaxPolicy:
    """Softmax over a linear score of environment-provided features.

    Same actor and update contracts as TabularPolicy, for observation
    spaces too large to tabulate. weights has shape (actions, features).
    """

    weights: np.ndarray
    feature_map: "object"
    temperature: float = 1.0
    tag: str = field(default_factory=fresh_policy_tag)

    @property
    def n_actions(self) -> int:
        return self.weights.shape[0]

    def probs(self, obs: Observation) -> np.ndarray:
        z = self.weights @ np.asarray(self.feature_map(obs), dtype=float)
        z = z / self.temperature
        z = z - z.max()
        e = np.exp(z)
        return e / e.sum()

    def actor(self):
        def act(state, obs):
            return self.probs(obs)

        return act


@dataclass(frozen=True, slots=True)
class DatasetRecord:
    """One labeled example: what was seen, what the teacher said, which
    context and query round produced it."""

    obs: Observation
    action: int
    context: int
    iteration: int


class AggDataset:
    """Append-only store of (observation, teacher action) labels.

    Aliasing makes labels conflict: the same observation can carry
    different actions under different contexts, and that conflict is
    exactly what the realizability gap measures.
    """

    def __init__(self, records: Iterable[DatasetRecord] = ()):
        self._records: list[DatasetRecord] = list(records)

    def append(self, obs: Observation, action: int, context: int, iteration: int) -> None:
        self._records.append(DatasetRecord(obs, action, context, iteration))

    def copy(self) -> "AggDataset":
        return AggDataset(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[DatasetRecord]:
        return iter(self._records)

    def support(self) -> set[Observation]:
        return {r.obs for r in self._records}

    def label_counts(self) -> dict[Observation, Counter]:
        counts: dict[Observation, Counter] = {}
        for r in self._records:
            counts.setdefault(r.obs, Counter())[r.action] += 1
        return counts


def bc_fit(dataset: AggDataset, n_actions: int, ridge: float = 0.1) -> TabularPolicy:
    """Fit logits to the ridge-smoothed empirical label frequencies.

    logits[o][a] = log((count + ridge) / (total + ridge * A)), so the
    softmax reproduces the smoothed conditional exactly and greedy
    picks the majority label (lowest index on ties).
    """
    if ridge < 0:
        raise ValueError(f"ridge must be nonnegative, got {ridge}")
    logits: dict[Observation, np.ndarray] = {}
    for obs, counts in dataset.label_counts().items():
        total = sum(counts.values())
        row = np.array(
            [
                np.log((counts.get(a, 0) + ridge) / (total + ridge * n_actions))
                for a in range(n_actions)
            ]
        )
        logits[obs] = row
    return TabularPolicy(logits, n_actions)


@dataclass(frozen=True)
class Discriminator:
    """Count-based teacher-likeness score per observation.

    score(o) near 1 means o shows up mostly under teacher visitation,
    near 0 mostly under the student, 0.5 with no evidence either way.
    Observations scoring below kappa are treated as off the teacher's
    beaten path, i.e. critical.
    """

    teacher_counts: dict[Observation, int]
    student_counts: dict[Observation, int]
    smoothing: float = 1.0
    kappa: float = 0.5

    @staticmethod
    def empty(smoothing: float = 1.0, kappa: float = 0.5) -> "Discriminator":
        return Discriminator({}, {}, smoothing, kappa)

    def score(self, obs: Observation) -> float:
        nt = self.teacher_counts.get(obs, 0)
        ns = self.student_counts.get(obs, 0)
        denom = nt + ns + 2 * self.smoothing
        if denom == 0:
            return 0.5
        return (nt + self.smoothing) / denom

    def is_critical(self, obs: Observation) -> bool:
        return self.score(obs) < self.kappa


def train_discriminator(
    discriminator: Discriminator,
    teacher_obs: Iterable[Observation],
    student_obs: Iterable[Observation],
) -> Discriminator:
    """Refit from fresh observation multisets, keeping the smoothing
    and threshold of the discriminator being replaced."""
    return Discriminator(
        dict(Counter(teacher_obs)),
        dict(Counter(student_obs)),
        discriminator.smoothing,
        discriminator.kappa,
    )


def _obs_to_json(obs: Observation) -> list:
    return [int(obs[0]), [int(g) for g in obs[1]]]


def _obs_from_json(raw) -> Observation:
    try:
        loc, revealed = raw
        return (int(loc), tuple(int(g) for g in revealed))
    except (TypeError, ValueError) as exc:
        raise PolicyFormatError(f"bad observation encoding {raw!r}") from exc


def save_policy(path: str | Path, policy: TabularPolicy | TeacherPolicy) -> None:
    """Write a policy as versioned JSON. Floats are emitted via repr,
    so a load-save cycle is byte identical."""
    if isinstance(policy, TabularPolicy):
        payload = {
            "format": POLICY_FORMAT,
            "version": POLICY_VERSION,
            "kind": "tabular",
            "n_actions": policy.n_actions,
            "temperature": policy.temperature,
            "entries": [
                {"obs": _obs_to_json(obs), "logits": [float(x) for x in policy.logits[obs]]}
                for obs in sorted(policy.logits)
            ],
        }
    elif isinstance(policy, TeacherPolicy):
        payload = {
            "format": POLICY_FORMAT,
            "version": POLICY_VERSION,
            "kind": "teacher",
            "n_actions": policy.n_actions,
            "sweeps": policy.sweeps,
            "residual": policy.residual,
            "entries": [
                {
                    "context": s.context,
                    "base": _obs_to_json(s.base),
                    "action": policy.actions_by_state[s],
                    "v": policy.v[s],
                    "q": [float(x) for x in policy.q[s]],
                }
                for s in sorted(policy.actions_by_state, key=lambda s: (s.context, s.base))
            ],
        }
    else:
        raise TypeError(f"cannot save policy of type {type(policy).__name__}")
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def load_policy(path: str | Path) -> TabularPolicy | TeacherPolicy:
    """Parse and validate a policy file. Raises PolicyFormatError on any
    structural problem; never returns a partially built policy."""
    try:
        payload = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise PolicyFormatError(f"policy file not found: {path}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise PolicyFormatError(f"unreadable policy file {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != POLICY_FORMAT:
        raise PolicyFormatError(f"{path} is not a {POLICY_FORMAT} file")
    if payload.get("version") != POLICY_VERSION:
        raise PolicyFormatError(
            f"unsupported policy version {payload.get('version')!r} in {path}"
        )
    kind = payload.get("kind")
    try:
        n_actions = int(payload["n_actions"])
        entries = payload["entries"]
        if kind == "tabular":
            logits: dict[Observation, np.ndarray] = {}
            for entry in entries:
                row = np.array([float(x) for x in entry["logits"]])
                if row.shape != (n_actions,):
                    raise PolicyFormatError(f"logit row of wrong length in {path}")
                logits[_obs_from_json(entry["obs"])] = row
            return TabularPolicy(logits, n_actions, float(payload["temperature"]))
        if kind == "teacher":
            actions: dict[PrivilegedState, int] = {}
            v: dict[PrivilegedState, float] = {}
            q: dict[PrivilegedState, tuple[float, ...]] = {}
            for entry in entries:
                state = PrivilegedState(int(entry["context"]), _obs_from_json(entry["base"]))
                qrow = tuple(float(x) for x in entry["q"])
                if len(qrow) != n_actions:
                    raise PolicyFormatError(f"q row of wrong length in {path}")
                actions[state] = int(entry["action"])
                v[state] = float(entry["v"])
                q[state] = qrow
            return TeacherPolicy(
                actions, v, q, int(payload["sweeps"]), float(payload["residual"]), n_actions
            )
    except PolicyFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise PolicyFormatError(f"malformed policy file {path}: {exc}") from exc
    raise PolicyFormatError(f"unknown policy kind {kind!r} in {path}")
