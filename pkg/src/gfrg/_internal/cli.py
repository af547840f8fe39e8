import json
import logging
from pathlib import Path
from typing import Annotated, Any, Callable, Optional, TypeVar

import numpy as np
import typer
from rich import console
from rich.logging import RichHandler

from gfrg._internal import debug
from gfrg._internal.config import ExperimentConfig
from gfrg._internal.errors import ConfigError, GfrgError
from gfrg._internal.parallel import THREADS_ENV
from gfrg._internal.pipeline import (
    FAILURE_MANIFEST,
    PipelineStage,
    VerifySuite,
    morrey_report,
    run_audits,
    run_pipeline,
    stokes_report,
    transport_report,
    verify,
)
from gfrg._internal.report import build_report
from gfrg._internal.storage import write_json

_T = TypeVar("_T")

app = typer.Typer(context_settings={"help_option_names": ["-h", "--help"]})
_console = console.Console()

_ConfigOption = Annotated[
    Optional[Path],
    typer.Option("--config", "-c", help="JSON configuration file.", exists=True, file_okay=True, dir_okay=False, readable=True),
]
_SeedOption = Annotated[Optional[int], typer.Option("--seed", help="Root seed of every random draw.", min=0)]
_OutOption = Annotated[
    Optional[Path],
    typer.Option("--out", "-o", help="Artifact directory.", file_okay=False, dir_okay=True),
]
_ThreadsOption = Annotated[Optional[int], typer.Option("--threads", help="Worker threads.", envvar=THREADS_ENV, min=1)]
_GridOption = Annotated[Optional[str], typer.Option("--grid", help="Dimension and nodes per axis, as `n,m`.")]
_GroupOption = Annotated[Optional[str], typer.Option("--group", help="Structure group: u1 or su2.")]
_VerboseOption = Annotated[bool, typer.Option("--verbose", "-v", help="Log per-iteration details.")]


def _version_callback(value: bool) -> None:  # noqa: FBT001
    """Print the installed gfrg version and stop before any subcommand runs.

    Args:
        value: Whether `-V`/`--version` was given.

    Raises:
        typer.Exit: Once the version is printed.
    """
    if value:
        _console.print(f"gfrg version: {debug._get_version()}")
        raise typer.Exit


def _debug_callback(value: bool) -> None:  # noqa: FBT001
    if value:
        debug._print_debug_info()
        raise typer.Exit


@app.callback(invoke_without_command=True)
def _common(
    ctx: typer.Context,
    version: bool = typer.Option(None, "-V", "--version", callback=_version_callback, help="Show version and exit."),  # noqa: FBT001
    debug_info: bool = typer.Option(  # noqa: FBT001
        None, "-D", "--debug-info", callback=_debug_callback, help="Show debug information and exit.",
    ),
) -> None:
    """Gauge fixing and regularity audits for Yang-Mills connections on lattice fields.

    Generates model connections, builds averaged radial gauges on a
    stratification of the cube, truncates and fixes them to the Coulomb gauge,
    and audits every estimate of the construction numerically.
    """
    if ctx.invoked_subcommand is None:
        _console.print(ctx.get_help())


def _configure_logging(verbose: bool, name: str) -> logging.Logger:  # noqa: FBT001
    logging.basicConfig(
        level=logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=_console)],
    )
    logging.getLogger("gfrg").setLevel(logging.DEBUG if verbose else logging.INFO)
    return logging.getLogger(f"gfrg.{name}")


def _parse_grid(grid: str) -> tuple[int, int]:
    try:
        n, m = (int(part) for part in grid.split(","))
    except ValueError as exc:
        raise ConfigError(f"--grid expects `n,m`, got {grid!r}") from exc
    return n, m


def _load_config(
    config: Optional[Path],
    seed: Optional[int],
    out: Optional[Path],
    threads: Optional[int],
    grid: Optional[str],
    group: Optional[str],
) -> ExperimentConfig:
    cfg = ExperimentConfig.load(config) if config is not None else ExperimentConfig()
    n, m = _parse_grid(grid) if grid is not None else (None, None)
    return cfg.with_overrides(seed=seed, output=out, threads=threads, n=n, m=m, group=group)


def _parse_points(text: str, what: str) -> np.ndarray:
    try:
        return np.asarray(json.loads(text), dtype=float)
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise ConfigError(f"{what} must be a JSON array of coordinates: {exc}") from exc


def _run(action: Callable[[], _T], logger: logging.Logger, output: Optional[Path]) -> _T:
    try:
        return action()
    except GfrgError as e:
        logger.exception(f"[bold red]{type(e).__name__}:[/bold red] {e}")
        if output is not None and output.is_dir() and not (output / FAILURE_MANIFEST).exists():
            write_json(output / FAILURE_MANIFEST, {**e.to_manifest(), "stage": "cli"})
        raise typer.Exit(code=e.exit_code) from e
    except Exception as e:
        logger.exception("[bold red]An unexpected error occurred:[/bold red]")
        if output is not None and output.is_dir():
            manifest = {"error": type(e).__name__, "message": str(e), "exit_code": 3, "details": {}, "stage": "cli"}
            write_json(output / FAILURE_MANIFEST, manifest)
        raise typer.Exit(code=3) from e


def _command(
    name: str,
    verbose: bool,  # noqa: FBT001
    options: tuple[Any, ...],
    action: Callable[[ExperimentConfig, logging.Logger], _T],
) -> _T:
    logger = _configure_logging(verbose, name)
    try:
        cfg = _load_config(*options)
    except GfrgError as e:
        logger.exception(f"[bold red]{type(e).__name__}:[/bold red] {e}")
        raise typer.Exit(code=e.exit_code) from e
    return _run(lambda: action(cfg, logger), logger, cfg.output)


def _stage_command(name: str, until: PipelineStage, verbose: bool, options: tuple[Any, ...]) -> None:  # noqa: FBT001
    result = _command(name, verbose, options, lambda cfg, logger: run_pipeline(cfg, logger, until=until))
    _console.print(f"[bold green]Stage {until} completed: {len(result.rows)} audit rows in {result.output}[/bold green]")


@app.command("generate")
def _generate_command(
    config: _ConfigOption = None,
    seed: _SeedOption = None,
    out: _OutOption = None,
    threads: _ThreadsOption = None,
    grid: _GridOption = None,
    group: _GroupOption = None,
    verbose: _VerboseOption = False,  # noqa: FBT002
) -> None:
    """Generate the model connection and write it with its singular set."""
    _stage_command("generate", "generate", verbose, (config, seed, out, threads, grid, group))


@app.command("transport")
def _transport_command(
    path: Annotated[str, typer.Option("--path", help="Polygonal path as a JSON array of points.")],
    config: _ConfigOption = None,
    seed: _SeedOption = None,
    out: _OutOption = None,
    threads: _ThreadsOption = None,
    grid: _GridOption = None,
    group: _GroupOption = None,
    verbose: _VerboseOption = False,  # noqa: FBT002
) -> None:
    """Parallel transport of the model connection along a polygonal path."""
    data = _command(
        "transport",
        verbose,
        (config, seed, out, threads, grid, group),
        lambda cfg, logger: transport_report(cfg, _parse_points(path, "--path"), logger),
    )
    _console.print(f"[bold green]Transport computed: |U - 1| = {data['distance_to_identity']:.6g}[/bold green]")


@app.command("stokes")
def _stokes_command(
    triangles: Annotated[
        Optional[str],
        typer.Option("--triangles", help="Triangles as a JSON array of vertex triples; sampled when omitted."),
    ] = None,
    count: Annotated[int, typer.Option("--count", help="Number of sampled triangles.", min=1)] = 12,
    config: _ConfigOption = None,
    seed: _SeedOption = None,
    out: _OutOption = None,
    threads: _ThreadsOption = None,
    grid: _GridOption = None,
    group: _GroupOption = None,
    verbose: _VerboseOption = False,  # noqa: FBT002
) -> None:
    """Compare monodromies of triangles with the curvature integral over them."""

    def _action(cfg: ExperimentConfig, logger: logging.Logger) -> Any:
        shapes = None if triangles is None else _parse_points(triangles, "--triangles")
        return stokes_report(cfg, count, logger, shapes)

    table = _command("stokes", verbose, (config, seed, out, threads, grid, group), _action)
    _console.print(f"[bold green]Stokes ratios written for {len(table)} triangles[/bold green]")


@app.command("morrey")
def _morrey_command(
    config: _ConfigOption = None,
    seed: _SeedOption = None,
    out: _OutOption = None,
    threads: _ThreadsOption = None,
    grid: _GridOption = None,
    group: _GroupOption = None,
    verbose: _VerboseOption = False,  # noqa: FBT002
) -> None:
    """Morrey norms of the model connection and its curvature."""
    data = _command("morrey", verbose, (config, seed, out, threads, grid, group), morrey_report)
    _console.print(f"[bold green]||F|| in M^{data['p']:g}_{data['q']:g} = {data['curvature_norm']:.6g}[/bold green]")


@app.command("stratify")
def _stratify_command(
    config: _ConfigOption = None,
    seed: _SeedOption = None,
    out: _OutOption = None,
    threads: _ThreadsOption = None,
    grid: _GridOption = None,
    group: _GroupOption = None,
    verbose: _VerboseOption = False,  # noqa: FBT002
) -> None:
    """Compute Q and the nested domains Omega_m."""
    _stage_command("stratify", "stratify", verbose, (config, seed, out, threads, grid, group))


@app.command("gauge-build")
def _gauge_build_command(
    config: _ConfigOption = None,
    seed: _SeedOption = None,
    out: _OutOption = None,
    threads: _ThreadsOption = None,
    grid: _GridOption = None,
    group: _GroupOption = None,
    verbose: _VerboseOption = False,  # noqa: FBT002
) -> None:
    """Build the averaged radial gauges on every level."""
    _stage_command("gauge-build", "gauge-build", verbose, (config, seed, out, threads, grid, group))


@app.command("truncate")
def _truncate_command(
    config: _ConfigOption = None,
    seed: _SeedOption = None,
    out: _OutOption = None,
    threads: _ThreadsOption = None,
    grid: _GridOption = None,
    group: _GroupOption = None,
    verbose: _VerboseOption = False,  # noqa: FBT002
) -> None:
    """Cut the gauged connections off near their Vitali covers."""
    _stage_command("truncate", "truncate", verbose, (config, seed, out, threads, grid, group))


@app.command("coulomb")
def _coulomb_command(
    config: _ConfigOption = None,
    seed: _SeedOption = None,
    out: _OutOption = None,
    threads: _ThreadsOption = None,
    grid: _GridOption = None,
    group: _GroupOption = None,
    verbose: _VerboseOption = False,  # noqa: FBT002
) -> None:
    """Fix the truncated connection to the Coulomb gauge."""
    _stage_command("coulomb", "coulomb", verbose, (config, seed, out, threads, grid, group))


@app.command("audit")
def _audit_command(
    config: _ConfigOption = None,
    seed: _SeedOption = None,
    out: _OutOption = None,
    threads: _ThreadsOption = None,
    grid: _GridOption = None,
    group: _GroupOption = None,
    verbose: _VerboseOption = False,  # noqa: FBT002
) -> None:
    """Run the property audits of the model connection only."""
    result = _command("audit", verbose, (config, seed, out, threads, grid, group), run_audits)
    _console.print(f"[bold green]All enabled audits passed ({len(result.rows)} rows)[/bold green]")


@app.command("pipeline")
def _pipeline_command(
    config: _ConfigOption = None,
    seed: _SeedOption = None,
    out: _OutOption = None,
    threads: _ThreadsOption = None,
    grid: _GridOption = None,
    group: _GroupOption = None,
    verbose: _VerboseOption = False,  # noqa: FBT002
) -> None:
    """Run every stage and audit end to end."""
    _stage_command("pipeline", "audit", verbose, (config, seed, out, threads, grid, group))


@app.command("verify")
def _verify_command(
    suite: Annotated[str, typer.Option("--suite", help="smoke or full.")] = "smoke",
    seed: _SeedOption = None,
    out: Annotated[Path, typer.Option("--out", "-o", help="Parent artifact directory.", file_okay=False)] = Path(
        "artifacts/verify",
    ),
    check_only: Annotated[
        bool,
        typer.Option("--check-only", help="Re-check the artifacts of an earlier verification."),
    ] = False,  # noqa: FBT002
    verbose: _VerboseOption = False,  # noqa: FBT002
) -> None:
    """Run a verification suite and report the failing cases."""
    logger = _configure_logging(verbose, "verify")
    if suite not in ("smoke", "full"):
        logger.error(f"[bold red]unknown suite {suite!r}[/bold red]")
        raise typer.Exit(code=ConfigError.exit_code)
    chosen: VerifySuite = "smoke" if suite == "smoke" else "full"
    result = _run(lambda: verify(chosen, seed or 0, out, logger, check_only=check_only), logger, None)
    for line in result.failures:
        _console.print(f"[bold red]{line}[/bold red]")
    if result.exit_code:
        raise typer.Exit(code=result.exit_code)
    _console.print(f"[bold green]All {len(result.cases)} verification cases passed[/bold green]")


@app.command("report")
def _report_command(
    directory: Annotated[
        Path,
        typer.Argument(help="Run directory, or a parent of run directories.", file_okay=False, dir_okay=True),
    ] = Path("artifacts"),
    plots: Annotated[bool, typer.Option("--plots/--no-plots", help="Draw the static plots.")] = True,  # noqa: FBT002
    verbose: _VerboseOption = False,  # noqa: FBT002
) -> None:
    """Consolidate audit tables into report.csv and report.json."""
    logger = _configure_logging(verbose, "report")
    result = _run(lambda: build_report(directory, logger, plots), logger, None)
    _console.print(f"[bold green]Report generated with {len(result.table)} rows![/bold green]")


if __name__ == "__main__":
    app()
