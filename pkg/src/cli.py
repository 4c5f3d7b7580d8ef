"""Command-line interface for edge-scaler."""

from __future__ import annotations

import functools
import json
import os
from collections.abc import Callable
from pathlib import Path
from typing import Any

import click
import yaml

from . import __version__
from .config import AGENTS, FORMATS, ConfigManager, ExperimentConfig, default_config
from .core import ResultRow, SimulationEngine
from .errors import EdgeScalerError
from .render import ResultWriter, SummaryRenderer, result_filename


def _parse_float_list(text: str | None, name: str) -> list[float] | None:
    if text is None:
        return None
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise click.BadParameter(f"expected a comma separated list of numbers: {text}", param_hint=name) from exc


def _parse_seeds(text: str | None) -> list[int] | None:
    if text is None:
        return None
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise click.BadParameter(f"expected a comma separated list of integers: {text}", param_hint="--seed") from exc


def shared_options(command: Callable[..., Any]) -> Callable[..., Any]:
    """Flags every simulation subcommand accepts."""
    options = [
        click.option("--config", "config_file", type=click.Path(dir_okay=False), help="Experiment config file (YAML)"),
        click.option("--config-dir", help="Custom configuration directory"),
        click.option("--agent", type=click.Choice(AGENTS), help="Scaling policy"),
        click.option("--alloc", type=click.Choice(["ff", "rf"]), help="Allocator for monitoring agents"),
        click.option("--seed", "seeds", help="Comma separated seed list, e.g. 0,1,2"),
        click.option("--events", type=click.IntRange(min=1), help="Events per episode"),
        click.option("--episodes", type=click.IntRange(min=1), help="Episodes per run"),
        click.option("--out", "out_dir", type=click.Path(file_okay=False), help="Output directory"),
        click.option("--format", "fmt", type=click.Choice(FORMATS), help="Result file format"),
        click.option("--pin-id", help="Fixed experiment id instead of a timestamp"),
        click.option("--workers", type=click.IntRange(min=1), help="Parallel seed runs"),
        click.option("--snapshot-dir", type=click.Path(file_okay=False), help="Save learned tables and weights here"),
        click.option("--no-color", is_flag=True, help="Plain console summary"),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def build_overrides(
    agent: str | None = None,
    alloc: str | None = None,
    seeds: str | None = None,
    events: int | None = None,
    episodes: int | None = None,
    out_dir: str | None = None,
    fmt: str | None = None,
    pin_id: str | None = None,
    workers: int | None = None,
) -> dict[str, Any]:
    """Config tree fragment holding only the flags that were given."""
    experiment = {
        "agent": agent,
        "allocator": alloc,
        "seeds": _parse_seeds(seeds),
        "events_per_episode": events,
        "episodes": episodes,
        "workers": workers,
    }
    output = {"dir": out_dir, "format": fmt, "experiment_id": pin_id}
    overrides: dict[str, Any] = {}
    if experiment := {k: v for k, v in experiment.items() if v is not None}:
        overrides["experiment"] = experiment
    if output := {k: v for k, v in output.items() if v is not None}:
        overrides["output"] = output
    return overrides


def handle_errors(command: Callable[..., Any]) -> Callable[..., Any]:
    """Report domain errors as one JSON line on stderr and exit with status 1."""

    @functools.wraps(command)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return command(*args, **kwargs)
        except EdgeScalerError as exc:
            click.echo(json.dumps(exc.to_dict()), err=True)
            raise click.exceptions.Exit(1) from exc

    return wrapper


def _load(options: dict[str, Any], extra: dict[str, Any] | None = None) -> ExperimentConfig:
    manager = ConfigManager(custom_config_dir=options["config_dir"])
    overrides = build_overrides(
        agent=options["agent"],
        alloc=options["alloc"],
        seeds=options["seeds"],
        events=options["events"],
        episodes=options["episodes"],
        out_dir=options["out_dir"],
        fmt=options["fmt"],
        pin_id=options["pin_id"],
        workers=options["workers"],
    )
    if extra:
        overrides.update(extra)
    return manager.load_experiment(options["config_file"], overrides)


def _finish(
    config: ExperimentConfig,
    engine: SimulationEngine,
    rows: list[ResultRow],
    command: str,
    no_color: bool,
) -> None:
    path = Path(config.output_dir) / result_filename(
        engine.experiment_id, command, config.output_format
    )
    written = ResultWriter().emit(rows, config.output_format, path)
    for line in SummaryRenderer(use_colors=not no_color).render(rows):
        click.echo(line)
    click.echo(str(written))


@click.group()
@click.version_option(version=__version__, prog_name="edge-scaler")
def main() -> None:
    """edge-scaler - event-driven simulator for learning-based serverless auto-scaling at the edge."""


@main.command()
@shared_options
@handle_errors
def run(**options: Any) -> None:
    """Run one agent over every configured seed and episode."""
    config = _load(options)
    engine = SimulationEngine(config, snapshot_dir=options["snapshot_dir"])
    rows = engine.run_experiment()
    _finish(config, engine, rows, "run", options["no_color"])


@main.command()
@click.option("--axis", type=click.Choice(["lambda", "deadline"]), required=True, help="Sweep axis")
@click.option("--values", "values_text", help="Comma separated sweep values (axis default if omitted)")
@shared_options
@handle_errors
def sweep(axis: str, values_text: str | None, **options: Any) -> None:
    """Final-episode metrics per sweep value for every configured agent, averaged over seeds."""
    values = _parse_float_list(values_text, "--values")
    extra: dict[str, Any] = {"sweep": {"axis": axis}}
    if values is not None:
        extra["sweep"]["values"] = values
    if options["agent"]:
        spec = options["agent"] if options["agent"] in ("rl", "drl") else f"{options['agent']}:{options['alloc'] or 'ff'}"
        extra["sweep"]["agents"] = [spec]
    config = _load(options, extra)
    engine = SimulationEngine(config, snapshot_dir=options["snapshot_dir"])
    rows = engine.run_sweep(axis, values)
    _finish(config, engine, rows, f"sweep-{axis}", options["no_color"])


@main.command()
@shared_options
@handle_errors
def episodes(**options: Any) -> None:
    """Per-episode learning curves for rl and drl (or only --agent)."""
    config = _load(options)
    engine = SimulationEngine(config, snapshot_dir=options["snapshot_dir"])
    agents = [options["agent"]] if options["agent"] else ["rl", "drl"]
    rows = engine.run_convergence(agents)
    _finish(config, engine, rows, "episodes", options["no_color"])


@main.command("config")
@click.option("--config", "config_file", type=click.Path(dir_okay=False), help="Experiment config file (YAML)")
@click.option("--config-dir", help="Custom configuration directory")
@click.option("--info", is_flag=True, help="Show configuration file locations and sources")
@click.option("--init", "init_global", is_flag=True, help="Write the default configuration to the global file")
@handle_errors
def config_command(config_file: str | None, config_dir: str | None, info: bool, init_global: bool) -> None:
    """Print the effective configuration as YAML."""
    manager = ConfigManager(custom_config_dir=config_dir)

    if init_global:
        path = manager.save_global_config(default_config())
        click.echo(f"Default configuration written to {path}")
        return

    if info:
        details = manager.get_config_info(config_file)
        click.echo("Configuration Information")
        click.echo("=" * 40)
        click.echo(f"Config Directory: {details['config_dir']}")
        click.echo(
            f"  Global:   {details['global_config']} "
            f"{'(found)' if details['sources']['global_exists'] else '(missing)'}"
        )
        if details["explicit_config"]:
            click.echo(
                f"  Explicit: {details['explicit_config']} "
                f"{'(found)' if details['sources']['explicit_exists'] else '(missing)'}"
            )
        click.echo()
        click.echo("Environment Variables:")
        click.echo(f"  EDGE_SCALER_CONFIG_DIR: {os.getenv('EDGE_SCALER_CONFIG_DIR', 'not set')}")
        click.echo(f"  XDG_CONFIG_HOME: {os.getenv('XDG_CONFIG_HOME', 'not set')}")
        return

    tree = manager.get_config(config_file)
    ExperimentConfig.from_dict(tree)
    click.echo(yaml.safe_dump(tree, indent=2, default_flow_style=False, sort_keys=False), nl=False)


if __name__ == "__main__":
    main()
