"""Experiment runner: validated configs in, deterministic artifacts out.

A run is (environment, method, seed list). Per seed it produces
  <out>/seed-<n>/iterations.jsonl   one object per training iteration
  <out>/seed-<n>/policy.json        final policy, versioned format
  <out>/seed-<n>/eval.json          fresh-episode evaluation report
plus <out>/config.json, <out>/summary.csv (one row per seed), and
<out>/timings.json. Timings are the only wall-clock record and are
explicitly non-normative; every JSONL/CSV byte is a pure function of
(config, seed). Failures leave completed artifacts in place and write
FAILED.json beside them.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .beliefs import solve_belief_mdp
from .core import ContextualMdp, RngHub, rollout
from .envs import make_env
from .imitation import (
    CritiqConfig,
    DaggerConfig,
    run_bc,
    run_critiq,
    run_dagger,
)
from .metrics import (
    EvalReport,
    IterationLog,
    evaluate,
    modal_level,
    optimal_visitation,
    sampled_visitation,
)
from .policies import TabularPolicy, load_policy, save_policy
from .rl import RetryConfig, run_plain_rl, run_retry
from .teacher import plan_teacher

__all__ = [
    "ComparisonError",
    "ConfigError",
    "EnvSection",
    "ExperimentConfig",
    "compare",
    "eval_policy",
    "load_config",
    "oracle_report",
    "run_experiment",
]

ITERATION_SCHEMA = "hiddengoal.iteration/1"
SUMMARY_SCHEMA = "hiddengoal.summary/1"
COMPARISON_SCHEMA = "hiddengoal.comparison/1"

METHODS = ("bc", "dagger", "critiq", "retry", "plain_rl", "oracle")


class ConfigError(ValueError):
    """Configuration failed validation; message carries file and line."""


class ComparisonError(ValueError):
    """Run directories cannot be compared; message says why."""


class EnvSection(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["line-search", "push-line", "room-graph"] = "line-search"
    num_goals: int = Field(default=3, ge=2)
    horizon: int | None = Field(default=None, ge=1)
    gamma: float = Field(default=0.99, gt=0.0, lt=1.0)


class BcSection(BaseModel):
    model_config = ConfigDict(extra="forbid")
    num_demos: int = Field(default=300, ge=1)
    ridge: float = Field(default=0.1, ge=0.0)
    validation_episodes: int = Field(default=100, ge=1)


class DaggerSection(BaseModel):
    model_config = ConfigDict(extra="forbid")
    iterations: int = Field(default=10, ge=1)
    episodes_per_iter: int = Field(default=20, ge=1)
    num_demos: int = Field(default=300, ge=1)
    ridge: float = Field(default=0.1, ge=0.0)
    validation_episodes: int = Field(default=100, ge=1)
    beta: float = Field(default=0.0, ge=0.0, le=1.0)


class CritiqSection(BaseModel):
    model_config = ConfigDict(extra="forbid")
    iterations: int = Field(default=10, ge=1)
    episodes_per_iter: int = Field(default=20, ge=1)
    num_demos: int = Field(default=300, ge=1)
    kappa: float = Field(default=0.5, gt=0.0, lt=1.0)
    lambda_reg: float = Field(default=0.1, ge=0.0)
    ridge: float = Field(default=0.1, ge=0.0)
    validation_episodes: int = Field(default=100, ge=1)
    discriminator_smoothing: float = Field(default=1.0, ge=0.0)
    teacher_rollouts_per_iter: int = Field(default=20, ge=1)
    aggregate_recovery: bool = False
    alpha_welltrained: float | None = None


class RetrySection(BaseModel):
    model_config = ConfigDict(extra="forbid")
    iterations: int = Field(default=300, ge=0)
    episodes_per_iter: int = Field(default=16, ge=1)
    learning_rate: float = Field(default=0.5, gt=0.0)
    gamma: float | None = Field(default=None, gt=0.0, lt=1.0)
    baseline: Literal["none", "mean-return"] = "mean-return"
    mix: float = Field(default=0.5, ge=0.0, le=1.0)
    mix_schedule: Literal["constant", "linear-to-zero"] = "constant"
    teacher_rollouts_per_iter: int = Field(default=10, ge=1)
    init_teacher_rollouts: int = Field(default=50, ge=1)
    validation_episodes: int = Field(default=30, ge=1)


class OracleSection(BaseModel):
    model_config = ConfigDict(extra="forbid")
    sampled_episodes: int = Field(default=10_000, ge=1)


class ExperimentConfig(BaseModel):
    """Everything a run needs; unknown fields are rejected."""

    model_config = ConfigDict(extra="forbid")
    version: Literal[1] = 1
    method: Literal["bc", "dagger", "critiq", "retry", "plain_rl", "oracle"]
    out_dir: str
    env: EnvSection = EnvSection()
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4], min_length=1)
    eval_episodes: int = Field(default=100, ge=1)
    workers: int | None = Field(default=None, ge=1)
    bc: BcSection = BcSection()
    dagger: DaggerSection = DaggerSection()
    critiq: CritiqSection = CritiqSection()
    retry: RetrySection = RetrySection()
    plain_rl: RetrySection = RetrySection()
    oracle: OracleSection = OracleSection()


def _anchor_line(text: str, loc: tuple) -> int:
    """Best-effort line number for a validation error location path."""
    lines = text.splitlines()
    start = 0
    line_no = 1
    for part in loc:
        if not isinstance(part, str):
            continue
        for i in range(start, len(lines)):
            stripped = lines[i].lstrip()
            if stripped.startswith(f"{part}:") or stripped.startswith(f'"{part}"'):
                line_no = i + 1
                start = i + 1
                break
    return line_no


def parse_config(raw: dict, source: str = "<config>", text: str = "") -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = first.get("loc", ())
        line = _anchor_line(text, loc) if text else 1
        dotted = ".".join(str(p) for p in loc) or "<root>"
        raise ConfigError(f"{source}:{line}: {dotted}: {first['msg']}") from exc


def load_config(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    """Read a YAML or JSON config file and apply flag overrides on top
    (flags > file > defaults)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}:1: cannot read config: {exc}") from exc
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark else 1
        raise ConfigError(f"{path}:{line}: invalid syntax: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}:1: config must be a mapping")
    merged = _deep_merge(raw, overrides or {})
    return parse_config(merged, source=str(path), text=text)


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def _build_env(section: EnvSection) -> ContextualMdp:
    return make_env(section.kind, section.num_goals, section.horizon, section.gamma)


def _log_row(config: ExperimentConfig, seed: int, log: IterationLog) -> dict:
    return {
        "schema": ITERATION_SCHEMA,
        "method": config.method,
        "env_kind": config.env.kind,
        "num_goals": config.env.num_goals,
        "seed": seed,
        "iteration": log.iteration,
        "queries": log.queries,
        "dataset_size": log.dataset_size,
        "delta_total": log.delta_total,
        "delta_count": log.delta_count,
        "delta_rate": log.delta_rate,
        "train_loss": log.train_loss,
        "validation_success": log.validation_success,
        "train_success": log.train_success,
        "mean_return": log.mean_return,
        "exploration": log.exploration,
        "sup_ratio": log.sup_ratio,
        "advantage_sup": log.advantage_sup,
        "pool_teacher": log.pool_teacher,
        "pool_student": log.pool_student,
    }


def _eval_json(report: EvalReport) -> dict:
    return {
        "schema": "hiddengoal.eval/1",
        "episodes": report.episodes,
        "success_rate": report.success_rate,
        "mean_return": report.mean_return,
        "j_opt": report.j_opt,
        "regret": report.regret,
        "exploration": report.exploration,
        "modal_exploration": report.modal_exploration,
        "seed": report.seed,
    }


def _dump_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


SUMMARY_FIELDS = [
    "schema",
    "method",
    "env_kind",
    "num_goals",
    "seed",
    "eval_episodes",
    "success_rate",
    "mean_return",
    "j_opt",
    "regret",
    "modal_exploration",
    "exploration_none",
    "exploration_low",
    "exploration_medium",
    "exploration_high",
    "iterations",
    "total_queries",
    "final_delta_total",
    "min_train_loss",
]


def _summary_row(
    config: ExperimentConfig, seed: int, report: EvalReport, logs: list[IterationLog]
) -> dict:
    queries = [log.queries for log in logs if log.queries is not None]
    deltas = [log.delta_total for log in logs if log.delta_total is not None]
    losses = [log.train_loss for log in logs if log.train_loss is not None]
    return {
        "schema": SUMMARY_SCHEMA,
        "method": config.method,
        "env_kind": config.env.kind,
        "num_goals": config.env.num_goals,
        "seed": seed,
        "eval_episodes": report.episodes,
        "success_rate": report.success_rate,
        "mean_return": report.mean_return,
        "j_opt": report.j_opt,
        "regret": report.regret,
        "modal_exploration": report.modal_exploration,
        "exploration_none": report.exploration["none"],
        "exploration_low": report.exploration["low"],
        "exploration_medium": report.exploration["medium"],
        "exploration_high": report.exploration["high"],
        "iterations": len(logs),
        "total_queries": sum(queries) if queries else None,
        "final_delta_total": deltas[-1] if deltas else None,
        "min_train_loss": min(losses) if losses else None,
    }


def _train_for_method(config: ExperimentConfig, env: ContextualMdp, hub: RngHub):
    """Dispatch to the method trainer; returns (policy, logs)."""
    method = config.method
    if method == "bc":
        teacher = plan_teacher(env)
        policy, log = run_bc(
            env,
            teacher,
            config.bc.num_demos,
            hub.stream("bc"),
            ridge=config.bc.ridge,
            validation_episodes=config.bc.validation_episodes,
        )
        return policy, [log]
    if method == "dagger":
        teacher = plan_teacher(env)
        cfg = DaggerConfig(**config.dagger.model_dump())
        return run_dagger(env, teacher, cfg, hub)
    if method == "critiq":
        teacher = plan_teacher(env)
        cfg = CritiqConfig(**config.critiq.model_dump())
        return run_critiq(env, teacher, cfg, hub)
    if method == "retry":
        teacher = plan_teacher(env)
        cfg = RetryConfig(**config.retry.model_dump())
        return run_retry(env, teacher, cfg, hub)
    if method == "plain_rl":
        section = config.plain_rl.model_dump()
        section["mix"] = 0.0
        cfg = RetryConfig(**section)
        return run_plain_rl(env, cfg, hub)
    raise ValueError(f"no trainer for method {method!r}")


def run_seed(config: ExperimentConfig, seed: int) -> dict:
    """Train and evaluate one seed; writes the per-seed artifacts and
    returns the summary row."""
    env = _build_env(config.env)
    hub = RngHub(seed)
    seed_dir = Path(config.out_dir) / f"seed-{seed}"
    seed_dir.mkdir(parents=True, exist_ok=True)

    if config.method == "oracle":
        payload, report, logs, policy = _oracle_artifacts(config, env, hub, seed)
        _dump_json(seed_dir / "oracle.json", payload)
    else:
        policy, logs = _train_for_method(config, env, hub)
        report = None

    j_opt = solve_belief_mdp(env).j_opt
    if report is None:
        report = evaluate(
            env, policy, config.eval_episodes, hub.stream("eval"), j_opt=j_opt, seed=seed
        )

    with (seed_dir / "iterations.jsonl").open("w") as fh:
        for log in logs:
            fh.write(json.dumps(_log_row(config, seed, log), sort_keys=True) + "\n")
    save_policy(seed_dir / "policy.json", policy)
    _dump_json(seed_dir / "eval.json", _eval_json(report))
    return _summary_row(config, seed, report, logs)


def _oracle_artifacts(config: ExperimentConfig, env: ContextualMdp, hub: RngHub, seed: int):
    """Exact belief solution plus its evaluation; the 'training' of the
    oracle method is value iteration."""
    oracle = solve_belief_mdp(env)
    policy = oracle.greedy_tabular()
    # Exact success by enumeration: greedy episodes per context.
    import numpy as np

    successes = 0
    for context in env.contexts:
        traj = rollout(
            env, oracle.actor(), env.initial_state(context), np.random.default_rng(0)
        )
        successes += int(traj.success)
    exact_success = successes / len(env.contexts)
    report = evaluate(
        env,
        policy,
        config.eval_episodes,
        hub.stream("eval"),
        j_opt=oracle.j_opt,
        seed=seed,
    )
    visit_exact = optimal_visitation(env, oracle)
    visit_sampled = sampled_visitation(
        env, policy, config.oracle.sampled_episodes, hub.stream("oracle-visitation")
    )
    payload = {
        "schema": "hiddengoal.oracle/1",
        "j_opt": oracle.j_opt,
        "success_exact": exact_success,
        "sweeps": oracle.sweeps,
        "residual": oracle.residual,
        "visitation_exact": [[[o[0], list(o[1])], p] for o, p in visit_exact.items()],
        "visitation_sampled": [[[o[0], list(o[1])], p] for o, p in visit_sampled.items()],
    }
    log = IterationLog(iteration=0, validation_success=exact_success)
    return payload, report, [log], policy


def run_experiment(config: ExperimentConfig) -> list[dict]:
    """Run every seed, write artifacts, and return the summary rows.

    Seeds are independent; with workers > 1 they run in parallel
    processes. Artifacts are identical either way because each seed's
    randomness derives only from its own seed.
    """
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(out / "config.json", config.model_dump(mode="json"))
    workers = config.workers or min(len(config.seeds), os.cpu_count() or 1)
    timings: dict[str, float] = {}
    rows: list[dict] = []
    try:
        if workers <= 1 or len(config.seeds) == 1:
            for seed in config.seeds:
                start = time.perf_counter()
                rows.append(run_seed(config, seed))
                timings[f"seed-{seed}"] = time.perf_counter() - start
        else:
            payload = config.model_dump(mode="json")
            start = time.perf_counter()
            with ProcessPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(_run_seed_payload, [(payload, s) for s in config.seeds]))
            timings["all-seeds-wall"] = time.perf_counter() - start
    except Exception as exc:
        _dump_json(
            out / "FAILED.json",
            {"error": str(exc), "type": type(exc).__name__, "method": config.method},
        )
        raise
    _write_summary(out / "summary.csv", rows)
    _dump_json(out / "timings.json", {k: round(v, 3) for k, v in sorted(timings.items())})
    return rows


def _run_seed_payload(args: tuple) -> dict:
    payload, seed = args
    return run_seed(ExperimentConfig.model_validate(payload), seed)


def _write_summary(path: Path, rows: list[dict]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in SUMMARY_FIELDS})


def eval_policy(
    env_section: EnvSection,
    policy_path: str | Path,
    episodes: int = 100,
    seed: int = 0,
    greedy: bool = False,
) -> EvalReport:
    """Evaluate a saved policy file on a fresh environment."""
    env = _build_env(env_section)
    policy = load_policy(policy_path)
    j_opt = solve_belief_mdp(env).j_opt
    hub = RngHub(seed)
    return evaluate(
        env, policy, episodes, hub.stream("eval"), j_opt=j_opt, greedy=greedy, seed=seed
    )


def oracle_report(env_section: EnvSection, seed: int = 0, sampled_episodes: int = 10_000) -> dict:
    """Exact belief solution summary for one environment."""
    import numpy as np

    env = _build_env(env_section)
    oracle = solve_belief_mdp(env)
    successes = 0
    for context in env.contexts:
        traj = rollout(
            env, oracle.actor(), env.initial_state(context), np.random.default_rng(0)
        )
        successes += int(traj.success)
    hub = RngHub(seed)
    sampled = sampled_visitation(
        env, oracle.greedy_tabular(), sampled_episodes, hub.stream("oracle-visitation")
    )
    return {
        "schema": "hiddengoal.oracle/1",
        "env_kind": env_section.kind,
        "num_goals": env_section.num_goals,
        "j_opt": oracle.j_opt,
        "success_exact": successes / len(env.contexts),
        "sweeps": oracle.sweeps,
        "residual": oracle.residual,
        "visitation_exact": [
            [[o[0], list(o[1])], p] for o, p in optimal_visitation(env, oracle).items()
        ],
        "visitation_sampled": [[[o[0], list(o[1])], p] for o, p in sampled.items()],
    }


def _read_run(run_dir: Path) -> dict:
    if not run_dir.is_dir():
        raise ComparisonError(f"{run_dir} is not a directory")
    found = sorted(p.name for p in run_dir.iterdir())
    config_path = run_dir / "config.json"
    summary_path = run_dir / "summary.csv"
    if not config_path.exists() or not summary_path.exists():
        raise ComparisonError(
            f"{run_dir} is not a completed run (need config.json and summary.csv; found: {found})"
        )
    config = json.loads(config_path.read_text())
    with summary_path.open() as fh:
        summary = list(csv.DictReader(fh))
    iteration_rows: dict[int, list[dict]] = {}
    for seed in config["seeds"]:
        jsonl = run_dir / f"seed-{seed}" / "iterations.jsonl"
        if not jsonl.exists():
            raise ComparisonError(f"{run_dir} is missing {jsonl.relative_to(run_dir)}")
        iteration_rows[seed] = [json.loads(line) for line in jsonl.read_text().splitlines()]
    return {"dir": run_dir, "config": config, "summary": summary, "iterations": iteration_rows}


def _mean_stderr(values: list[float]) -> tuple[float, float]:
    import numpy as np

    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    stderr = float(arr.std(ddof=1) / np.sqrt(len(arr))) if len(arr) > 1 else 0.0
    return mean, stderr


def compare(run_dirs: list[str | Path], out_dir: str | Path | None = None) -> dict:
    """Cross-method comparison over runs that share env and seeds.

    Writes comparison.csv (one row per method, mean and stderr over
    seeds), delta_curves.csv, and exploration_series.csv when an output
    directory is given; always returns the same tables as a dict.
    """
    if len(run_dirs) < 2:
        raise ComparisonError("compare needs at least two run directories")
    runs = [_read_run(Path(d)) for d in run_dirs]
    env0 = runs[0]["config"]["env"]
    seeds0 = runs[0]["config"]["seeds"]
    for run in runs[1:]:
        if run["config"]["env"] != env0:
            raise ComparisonError(
                f"environment mismatch: {run['dir']} ran {run['config']['env']}, "
                f"expected {env0}"
            )
        if run["config"]["seeds"] != seeds0:
            raise ComparisonError(
                f"seed mismatch: {run['dir']} ran seeds {run['config']['seeds']}, "
                f"expected {seeds0}"
            )
    methods = [run["config"]["method"] for run in runs]
    if len(set(methods)) != len(methods):
        raise ComparisonError(f"duplicate methods in comparison: {methods}")

    comparison_rows = []
    for run in runs:
        success, success_err = _mean_stderr(
            [float(r["success_rate"]) for r in run["summary"]]
        )
        mean_return, return_err = _mean_stderr(
            [float(r["mean_return"]) for r in run["summary"]]
        )
        deltas = [
            float(r["final_delta_total"]) for r in run["summary"] if r["final_delta_total"]
        ]
        comparison_rows.append(
            {
                "schema": COMPARISON_SCHEMA,
                "method": run["config"]["method"],
                "env_kind": env0["kind"],
                "num_goals": env0["num_goals"],
                "seeds": ";".join(str(s) for s in seeds0),
                "mean_success": success,
                "stderr_success": success_err,
                "mean_return": mean_return,
                "stderr_return": return_err,
                "mean_final_delta": sum(deltas) / len(deltas) if deltas else None,
            }
        )

    delta_rows = []
    exploration_rows = []
    for run in runs:
        for seed in seeds0:
            for row in run["iterations"][seed]:
                if row.get("delta_total") is not None:
                    delta_rows.append(
                        {
                            "method": row["method"],
                            "seed": seed,
                            "iteration": row["iteration"],
                            "delta_total": row["delta_total"],
                            "dataset_size": row["dataset_size"],
                            "queries": row["queries"],
                        }
                    )
                if row.get("exploration") is not None:
                    hist = row["exploration"]
                    modal = modal_level(hist)
                    exploration_rows.append(
                        {
                            "method": row["method"],
                            "seed": seed,
                            "iteration": row["iteration"],
                            "none": hist.get("none", 0),
                            "low": hist.get("low", 0),
                            "medium": hist.get("medium", 0),
                            "high": hist.get("high", 0),
                            "modal": modal,
                        }
                    )

    tables = {
        "comparison": comparison_rows,
        "delta_curves": delta_rows,
        "exploration_series": exploration_rows,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_table(out / "comparison.csv", comparison_rows)
        _write_table(out / "delta_curves.csv", delta_rows)
        _write_table(out / "exploration_series.csv", exploration_rows)
    return tables


def _write_table(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
