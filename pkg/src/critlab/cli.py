from __future__ import annotations

from pathlib import Path
from typing import Callable

import typer
from rich.console import Console
from rich.table import Table

from .config import EXPERIMENTS, ConfigError, load_config
from .experiments import run_experiment

app = typer.Typer(no_args_is_help=True)
console = Console()

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2

_DESCRIPTIONS = {
    "convergence": "Distance from the derivative-zero measure to the root law along n.",
    "jensen-audit": "Both sides of the Jensen inequality for random Möbius maps.",
    "smallball": "Joint and linear small-ball probabilities with Wilson intervals.",
    "decouple-check": "Exact decoupling identity and the decoupling inequality.",
    "maxlog": "Growth of max log|S_n| on a circle against log n.",
    "lln": "Law of large numbers for log_- potentials of Möbius maps.",
}


def _report_config_error(exc: ConfigError) -> None:
    for error in exc.errors:
        console.print(f"[red]config error:[/red] {error}")


def _run(
    experiment: str,
    config: Path,
    seed: int | None,
    workers: int | None,
    out_dir: Path | None,
    log_level: str | None,
) -> None:
    try:
        config_obj = load_config(
            config,
            experiment=experiment,
            seed=seed,
            workers=workers,
            out_dir=out_dir,
            log_level=log_level,
        )
    except ConfigError as exc:
        _report_config_error(exc)
        raise typer.Exit(code=EXIT_CONFIG)

    result = run_experiment(config_obj)
    table = Table(title=f"{experiment} verdicts")
    table.add_column("verdict")
    table.add_column("result")
    for name, ok in result.verdicts.items():
        if name in result.inconclusive:
            table.add_row(name, "[yellow]inconclusive[/yellow]")
        else:
            table.add_row(name, "[green]pass[/green]" if ok else "[red]fail[/red]")
    console.print(table)
    console.print(f"Manifest written to {result.manifest}")
    raise typer.Exit(code=EXIT_PASS if result.passed else EXIT_FAIL)


def _experiment_command(experiment: str) -> Callable[..., None]:
    def command(
        config: Path = typer.Option(..., "--config", exists=True, dir_okay=False),
        seed: int | None = typer.Option(None, "--seed", min=0),
        workers: int | None = typer.Option(None, "--workers", min=1),
        out_dir: Path | None = typer.Option(None, "--out", dir_okay=True, file_okay=False),
        log_level: str | None = typer.Option(None, "--log-level"),
    ) -> None:
        _run(experiment, config, seed, workers, out_dir, log_level)

    command.__doc__ = _DESCRIPTIONS[experiment]
    return command


for _name in EXPERIMENTS:
    app.command(_name)(_experiment_command(_name))


@app.command("validate-config")
def validate_config_command(
    config: Path = typer.Option(..., "--config", exists=True, dir_okay=False),
    experiment: str | None = typer.Option(None, "--experiment"),
) -> None:
    """Parse a config and report every problem without running anything."""
    try:
        config_obj = load_config(config, experiment=experiment)
    except ConfigError as exc:
        _report_config_error(exc)
        raise typer.Exit(code=EXIT_CONFIG)
    console.print(f"Config valid for {config_obj.experiment} with {len(config_obj.seeds)} seed(s).")


def main() -> None:
    app()


if __name__ == "__main__":
    main()
