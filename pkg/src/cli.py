"""
🖥️ GHARTREE CLI
===============

`ghartree` console script: thin typer commands over the harness.
Reports print to stdout through rich; logs go to stderr.
"""

from pathlib import Path
from typing import Dict, Optional

import typer
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from .errors import ConfigError, GHartreeError
from .harness import EXIT_CONFIG_ERROR, RunConfig, execute, load_config, parse_config
from .logging_setup import configure_logging
from .settings import get_settings

app = typer.Typer(add_completion=False, help="Generalized Hartree equation experiments")
console = Console()

DEFAULT_SUITE_CONFIG = """\
preset = inequality-suite
params.N = 1
params.p = 1.8
params.gamma = 0.05
params.m = 0.55
params.M = 6
params.M0 = 4
"""

ConfigOption = typer.Option(..., "--config", help="Run config (key = value lines)")
OutOption = typer.Option(None, "--out", help="Output directory")
SeedOption = typer.Option(None, "--seed", min=0, help="RNG seed override")
JobsOption = typer.Option(None, "--jobs", min=1, help="Concurrent workers for sweeps")


@app.callback()
def _setup() -> None:
    settings = get_settings()
    configure_logging(settings.log_level, settings.log_json)


def _load(path: Path) -> RunConfig:
    try:
        return load_config(path)
    except (ConfigError, ValidationError, OSError) as exc:
        console.print(f"[red]config error:[/red] {exc}")
        raise typer.Exit(EXIT_CONFIG_ERROR)


def _summary_table(title: str, summary: Dict[str, object]) -> Table:
    table = Table(title=title)
    table.add_column("key", style="cyan")
    table.add_column("value")
    for key, value in summary.items():
        table.add_row(key, f"{value:.6g}" if isinstance(value, float) else str(value))
    return table


def _run(config: RunConfig, out: Optional[Path], action: Optional[str] = None) -> None:
    try:
        outcome = execute(config, out, action)  # type: ignore[arg-type]
    except ConfigError as exc:
        console.print(f"[red]config error:[/red] {exc}")
        raise typer.Exit(EXIT_CONFIG_ERROR)
    except GHartreeError as exc:
        console.print(f"[red]run failed:[/red] {exc}")
        raise typer.Exit(1)
    except OSError as exc:
        console.print(f"[red]run failed:[/red] cannot write results: {exc}")
        raise typer.Exit(1)
    console.print(_summary_table(f"{action or config.preset}: {outcome.halt_reason}", outcome.summary))
    raise typer.Exit(outcome.exit_code)


@app.command("check-params")
def check_params(config: Path = ConfigOption, out: Optional[Path] = OutOption) -> None:
    """Admissibility report, derived constants and suggested orders"""
    run_config = _load(config)
    report = run_config.params.report
    table = Table(title=f"regime: {report.regime}")
    for column in ("condition", "status", "lhs", "rhs"):
        table.add_column(column)
    for c in report.conditions:
        status = "[green]ok[/green]" if c.satisfied else "[red]violated[/red]"
        table.add_row(c.id, status, f"{c.lhs:.8g}", f"{c.rhs:.8g}")
    console.print(table)
    _run(run_config, out, "params-report")


@app.command()
def simulate(config: Path = ConfigOption, out: Optional[Path] = OutOption,
             seed: Optional[int] = SeedOption) -> None:
    """Run the config's preset"""
    _run(_load(config).with_overrides(seed=seed), out)


@app.command("blowup-scan")
def blowup_scan(config: Path = ConfigOption, out: Optional[Path] = OutOption,
                jobs: Optional[int] = JobsOption) -> None:
    """Blow-up verdict across a range of chirps, optionally simulating each"""
    _run(_load(config).with_overrides(jobs=jobs), out, "blowup-scan")


@app.command("scatter-demo")
def scatter_demo(config: Path = ConfigOption, out: Optional[Path] = OutOption) -> None:
    """Nonautonomous run, scattering state and residual curve"""
    _run(_load(config), out, "scatter-demo")


@app.command("verify-inequalities")
def verify_inequalities(
    config: Optional[Path] = typer.Option(None, "--config", help="Optional run config"),
    out: Optional[Path] = OutOption,
    seed: Optional[int] = SeedOption,
    jobs: Optional[int] = JobsOption,
) -> None:
    """Weighted inequality suite with refinement study"""
    try:
        run_config = load_config(config) if config else parse_config(DEFAULT_SUITE_CONFIG)
    except (ConfigError, ValidationError, OSError) as exc:
        console.print(f"[red]config error:[/red] {exc}")
        raise typer.Exit(EXIT_CONFIG_ERROR)
    _run(run_config.with_overrides(seed=seed, jobs=jobs), out, "inequality-suite")


def main() -> None:
    app()


if __name__ == "__main__":
    main()
