"""HTTP facade over the harness.

Request validation errors surface as 422 with field detail (FastAPI's
default); config semantics and comparison problems map to 400; runtime
failures map to 500 with the exception message. The service holds no
state between requests, so it parallels the CLI exactly.
"""

from __future__ import annotations

from importlib.metadata import PackageNotFoundError, version

from fastapi import FastAPI, HTTPException

from ..harness import (
    ComparisonError,
    ConfigError,
    compare,
    eval_policy,
    oracle_report,
    run_experiment,
)
from ..policies import PolicyFormatError
from .models import (
    CompareRequest,
    CompareResponse,
    EvalRequest,
    EvalResponse,
    HealthResponse,
    OracleRequest,
    OracleResponse,
    RunRequest,
    RunResponse,
)

__all__ = ["app", "create_app"]


def _version() -> str:
    try:
        return version("hiddengoal")
    except PackageNotFoundError:
        return "0.0.0"


def create_app() -> FastAPI:
    app = FastAPI(title="hiddengoal", version=_version())

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(version=_version())

    @app.post("/run", response_model=RunResponse)
    def run(request: RunRequest) -> RunResponse:
        config = request.config
        try:
            rows = run_experiment(config)
        except (ConfigError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except Exception as exc:
            raise HTTPException(status_code=500, detail=str(exc)) from exc
        artifacts = ["config.json", "summary.csv", "timings.json"] + [
            f"seed-{seed}/" for seed in config.seeds
        ]
        return RunResponse(out_dir=config.out_dir, rows=rows, artifacts=artifacts)

    @app.post("/eval", response_model=EvalResponse)
    def eval_(request: EvalRequest) -> EvalResponse:
        try:
            report = eval_policy(
                request.env,
                request.policy_path,
                episodes=request.episodes,
                seed=request.seed,
                greedy=request.greedy,
            )
        except (PolicyFormatError, FileNotFoundError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except Exception as exc:
            raise HTTPException(status_code=500, detail=str(exc)) from exc
        return EvalResponse(
            episodes=report.episodes,
            success_rate=report.success_rate,
            mean_return=report.mean_return,
            j_opt=report.j_opt,
            regret=report.regret,
            exploration=report.exploration,
            modal_exploration=report.modal_exploration,
            seed=report.seed,
        )

    @app.post("/oracle", response_model=OracleResponse)
    def oracle(request: OracleRequest) -> OracleResponse:
        try:
            payload = oracle_report(
                request.env, seed=request.seed, sampled_episodes=request.sampled_episodes
            )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except Exception as exc:
            raise HTTPException(status_code=500, detail=str(exc)) from exc
        payload.pop("schema")
        return OracleResponse(**payload)

    @app.post("/compare", response_model=CompareResponse)
    def compare_(request: CompareRequest) -> CompareResponse:
        try:
            tables = compare(request.run_dirs, request.out_dir)
        except ComparisonError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except Exception as exc:
            raise HTTPException(status_code=500, detail=str(exc)) from exc
        files = (
            ["comparison.csv", "delta_curves.csv", "exploration_series.csv"]
            if request.out_dir
            else []
        )
        return CompareResponse(files=files, **tables)

    return app


app = create_app()
