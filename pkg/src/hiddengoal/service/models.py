"""Request and response bodies for the HTTP service.

The run endpoint accepts the same ExperimentConfig the harness uses, so
a config file posted by the CLI is validated exactly once by one schema.
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field

from ..harness import EnvSection, ExperimentConfig

__all__ = [
    "CompareRequest",
    "CompareResponse",
    "EvalRequest",
    "EvalResponse",
    "HealthResponse",
    "OracleRequest",
    "OracleResponse",
    "RunRequest",
    "RunResponse",
]


class HealthResponse(BaseModel):
    status: str = "ok"
    name: str = "hiddengoal"
    version: str


class RunRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    config: ExperimentConfig


class RunResponse(BaseModel):
    out_dir: str
    rows: list[dict]
    artifacts: list[str]


class EvalRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    env: EnvSection = EnvSection()
    policy_path: str
    episodes: int = Field(default=100, ge=1)
    seed: int = 0
    greedy: bool = False


class EvalResponse(BaseModel):
    episodes: int
    success_rate: float
    mean_return: float
    j_opt: float | None = None
    regret: float | None = None
    exploration: dict[str, int]
    modal_exploration: str
    seed: int | None = None


class OracleRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    env: EnvSection = EnvSection()
    seed: int = 0
    sampled_episodes: int = Field(default=10_000, ge=1)


class OracleResponse(BaseModel):
    env_kind: str
    num_goals: int
    j_opt: float
    success_exact: float
    sweeps: int
    residual: float
    visitation_exact: list
    visitation_sampled: list


class CompareRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    run_dirs: list[str] = Field(min_length=2)
    out_dir: str | None = None


class CompareResponse(BaseModel):
    comparison: list[dict]
    delta_curves: list[dict]
    exploration_series: list[dict]
    files: list[str]
