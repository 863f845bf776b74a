"""Command line client for the experiment service.

Every subcommand talks HTTP to the service app. By default the app is
mounted in-process (no socket, nothing to start); pass --server to point
the same commands at a running instance instead. Config precedence is
flags > config file > defaults. Exit codes: 0 success, 2 invalid
configuration or arguments, 1 runtime failure (partial artifacts are
left in place together with FAILED.json).
"""

from __future__ import annotations

import asyncio
import json
import sys
from pathlib import Path

import click
import httpx

from .harness import ConfigError, load_config, parse_config

ENV_KINDS = ("line-search", "push-line", "room-graph")
METHODS = ("bc", "dagger", "critiq", "retry", "plain_rl", "oracle")


def _call(server: str | None, path: str, payload: dict) -> httpx.Response:
    """POST to the service, in-process unless a server URL is given."""

    async def go() -> httpx.Response:
        if server:
            async with httpx.AsyncClient(base_url=server, timeout=None) as client:
                return await client.post(path, json=payload)
        from .service.app import app

        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(
            transport=transport, base_url="http://hiddengoal.local", timeout=None
        ) as client:
            return await client.post(path, json=payload)

    try:
        return asyncio.run(go())
    except httpx.HTTPError as exc:
        click.echo(f"error: cannot reach server: {exc}", err=True)
        sys.exit(1)


def _detail(response: httpx.Response) -> str:
    try:
        detail = response.json().get("detail")
    except ValueError:
        detail = None
    if isinstance(detail, list):
        parts = []
        for item in detail:
            loc = ".".join(str(p) for p in item.get("loc", []) if p != "body")
            parts.append(f"{loc}: {item.get('msg')}")
        return "; ".join(parts)
    return str(detail) if detail else response.text


def _exit_for(response: httpx.Response) -> None:
    message = _detail(response)
    if response.status_code in (400, 422):
        click.echo(f"error: {message}", err=True)
        sys.exit(2)
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _env_payload(config: str | None, env: str | None, goals: int | None) -> dict:
    section: dict = {}
    if config:
        try:
            loaded = load_config(config)
        except ConfigError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        section = loaded.env.model_dump(mode="json")
    if env:
        section["kind"] = env
    if goals:
        section["num_goals"] = goals
    return section


def _print_rows(rows: list[dict], columns: list[str]) -> None:
    widths = {c: max(len(c), *(len(_cell(r.get(c))) for r in rows)) for c in columns}
    header = "  ".join(c.ljust(widths[c]) for c in columns)
    click.echo(header)
    click.echo("  ".join("-" * widths[c] for c in columns))
    for row in rows:
        click.echo("  ".join(_cell(row.get(c)).ljust(widths[c]) for c in columns))


def _cell(value) -> str:
    if value is None or value == "":
        return "-"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


@click.group()
def main() -> None:
    """Train, evaluate, and compare policies in hidden-goal environments."""


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None, help="YAML or JSON config file.")
@click.option("--method", type=click.Choice(METHODS), default=None, help="Training method.")
@click.option("--env", type=click.Choice(ENV_KINDS), default=None, help="Environment family.")
@click.option("--goals", type=int, default=None, help="Number of candidate goals.")
@click.option("--seed", "seeds", type=int, multiple=True, help="Seed (repeatable); overrides the config list.")
@click.option("--out", type=click.Path(), default=None, help="Output directory for artifacts.")
@click.option("--episodes", type=int, default=None, help="Evaluation episodes per seed.")
@click.option("--workers", type=int, default=None, help="Parallel seed workers.")
@click.option("--server", default=None, help="Base URL of a running service; default is in-process.")
def run(config_path, method, env, goals, seeds, out, episodes, workers, server) -> None:
    """Run one method over its seed list and write artifacts."""
    overrides: dict = {}
    if method:
        overrides["method"] = method
    if env or goals:
        overrides["env"] = {}
        if env:
            overrides["env"]["kind"] = env
        if goals:
            overrides["env"]["num_goals"] = goals
    if seeds:
        overrides["seeds"] = list(seeds)
    if out:
        overrides["out_dir"] = out
    if episodes:
        overrides["eval_episodes"] = episodes
    if workers:
        overrides["workers"] = workers
    try:
        if config_path:
            config = load_config(config_path, overrides)
        else:
            config = parse_config(overrides, source="<flags>")
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    response = _call(server, "/run", {"config": config.model_dump(mode="json")})
    if response.status_code != 200:
        _exit_for(response)
    body = response.json()
    _print_rows(
        body["rows"],
        ["method", "seed", "success_rate", "mean_return", "regret", "modal_exploration"],
    )
    click.echo(f"artifacts: {body['out_dir']}")


@main.command("eval")
@click.argument("policy", type=click.Path())
@click.option("--config", "config_path", type=click.Path(), default=None, help="Config file to take the environment from.")
@click.option("--env", type=click.Choice(ENV_KINDS), default=None)
@click.option("--goals", type=int, default=None)
@click.option("--episodes", type=int, default=100)
@click.option("--seed", type=int, default=0)
@click.option("--greedy", is_flag=True, default=False, help="Act greedily instead of sampling.")
@click.option("--server", default=None)
def eval_cmd(policy, config_path, env, goals, episodes, seed, greedy, server) -> None:
    """Evaluate a saved policy file on fresh episodes."""
    payload = {
        "env": _env_payload(config_path, env, goals),
        "policy_path": str(Path(policy)),
        "episodes": episodes,
        "seed": seed,
        "greedy": greedy,
    }
    response = _call(server, "/eval", payload)
    if response.status_code != 200:
        _exit_for(response)
    body = response.json()
    for key in ("episodes", "success_rate", "mean_return", "j_opt", "regret", "modal_exploration"):
        click.echo(f"{key}: {_cell(body.get(key))}")
    click.echo(f"exploration: {json.dumps(body['exploration'])}")


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--env", type=click.Choice(ENV_KINDS), default=None)
@click.option("--goals", type=int, default=None)
@click.option("--seed", type=int, default=0)
@click.option("--episodes", type=int, default=10_000, help="Episodes for the sampled visitation check.")
@click.option("--server", default=None)
def oracle(config_path, env, goals, seed, episodes, server) -> None:
    """Solve the environment exactly and report the optimal return."""
    payload = {
        "env": _env_payload(config_path, env, goals),
        "seed": seed,
        "sampled_episodes": episodes,
    }
    response = _call(server, "/oracle", payload)
    if response.status_code != 200:
        _exit_for(response)
    body = response.json()
    for key in ("env_kind", "num_goals", "j_opt", "success_exact", "sweeps", "residual"):
        click.echo(f"{key}: {body[key]}")
    click.echo(f"visitation support: {len(body['visitation_exact'])} observations")


@main.command()
@click.argument("run_dirs", nargs=-1, required=True, type=click.Path())
@click.option("--out", type=click.Path(), default=None, help="Where to write comparison tables.")
@click.option("--server", default=None)
def compare(run_dirs, out, server) -> None:
    """Compare completed runs that share an environment and seeds."""
    payload = {"run_dirs": [str(Path(d)) for d in run_dirs], "out_dir": out}
    response = _call(server, "/compare", payload)
    if response.status_code != 200:
        _exit_for(response)
    body = response.json()
    _print_rows(
        body["comparison"],
        ["method", "mean_success", "stderr_success", "mean_return", "mean_final_delta"],
    )
    if out:
        click.echo(f"tables: {out}")


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port) -> None:
    """Start the HTTP service."""
    import uvicorn

    uvicorn.run("hiddengoal.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
