import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns
from rich import print  # noqa: A004

from gfrg._internal.errors import MissingArtifacts
from gfrg._internal.storage import write_json

_logger = logging.getLogger("gfrg.report")


@dataclass(frozen=True)
class ReportResult:
    """Tables and plots written by `build_report`."""

    table: pd.DataFrame
    """Every audit row of every run, with a `run` column."""
    outputs: list[Path]
    """Files written."""


def _say(message: str, logger: Optional[logging.Logger]) -> None:
    if logger:
        logger.info(message)
    else:
        print(message)


def _run_directories(directory: Path) -> list[Path]:
    runs = [directory] if (directory / "audits.csv").exists() else []
    runs.extend(path.parent for path in sorted(directory.glob("*/audits.csv")))
    return runs


def _collect(runs: list[Path], directory: Path, name: str) -> pd.DataFrame:
    frames = []
    for run in runs:
        path = run / name
        if path.exists():
            frame = pd.read_csv(path)
            frame.insert(0, "run", run.relative_to(directory).as_posix() if run != directory else ".")
            frames.append(frame)
    return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()


def plot_residual_history(residuals: pd.DataFrame, save_path: Path, logger: Optional[logging.Logger] = None) -> None:
    """Line chart of the Coulomb residual per step.

    Args:
        residuals: Rows with `run`, `step` and `residual`.
        save_path: Where to save the plot.
        logger: An optional logger for logging messages.
    """
    plt.figure(figsize=(12, 6))
    sns.lineplot(x="step", y="residual", hue="run", data=residuals, marker="o")
    if bool(np.all(residuals["residual"] > 0)):
        plt.yscale("log")
    plt.title("Coulomb Residual per Step")
    plt.xlabel("Step")
    plt.ylabel("Largest divergence")
    plt.grid(True)  # noqa: FBT003
    plt.tight_layout()
    plt.savefig(str(save_path))
    plt.close()
    _say(f"Residual history saved to {save_path}", logger)


def plot_density_profile(density: pd.DataFrame, save_path: Path, logger: Optional[logging.Logger] = None) -> None:
    """Line chart of the monotone density quantity against the radius.

    Args:
        density: Rows with `run`, `radius` and `value`.
        save_path: Where to save the plot.
        logger: An optional logger for logging messages.
    """
    plt.figure(figsize=(12, 6))
    sns.lineplot(x="radius", y="value", hue="run", data=density, marker="o")
    plt.title("Density Profile at the Singular Set")
    plt.xlabel("Radius")
    plt.ylabel("r^(4-n) integral |F|^2")
    plt.grid(True)  # noqa: FBT003
    plt.tight_layout()
    plt.savefig(str(save_path))
    plt.close()
    _say(f"Density profile saved to {save_path}", logger)


def plot_measured_constants(table: pd.DataFrame, save_path: Path, logger: Optional[logging.Logger] = None) -> None:
    """Bar chart of the largest measured value per audit.

    Args:
        table: Audit rows.
        save_path: Where to save the plot.
        logger: An optional logger for logging messages.
    """
    finite = table[np.isfinite(table["measured"].astype(float))]
    largest = finite.groupby("audit")["measured"].max().reset_index().sort_values("measured", ascending=False)
    plt.figure(figsize=(12, 6))
    sns.barplot(x="audit", y="measured", data=largest, palette="viridis", hue="audit", legend=False)
    plt.title("Largest Measured Value per Audit")
    plt.xlabel("Audit")
    plt.ylabel("Measured")
    plt.xticks(rotation=45, ha="right")
    plt.tight_layout()
    plt.savefig(str(save_path))
    plt.close()
    _say(f"Measured constants saved to {save_path}", logger)


def build_report(directory: Path, logger: Optional[logging.Logger] = None, plots: bool = True) -> ReportResult:  # noqa: FBT001, FBT002
    """Summarise the audits of one run, or of every run below a directory.

    Writes `report.csv` and `report.json` (audits, provenance and the list
    of failed assertions) and, unless disabled, the residual history,
    density profile and measured-constant plots.

    Args:
        directory: A run directory, or a parent of run directories.
        logger: An optional logger for logging messages.
        plots: Whether to draw the plots.

    Returns:
        The combined table and the written files.

    Raises:
        MissingArtifacts: If no audit table is found.
    """
    directory = Path(directory)
    runs = _run_directories(directory) if directory.is_dir() else []
    if not runs:
        raise MissingArtifacts(f"no audits.csv in {directory} or its subdirectories", directory=str(directory))
    _say(f"Summarising {len(runs)} run(s) under {directory}", logger)
    table = _collect(runs, directory, "audits.csv")
    provenance = _collect(runs, directory, "provenance.csv")
    outputs = [directory / "report.csv", directory / "report.json"]
    table.to_csv(outputs[0], index=False)
    failed = table[table["passed"].astype(str) == "False"]
    write_json(
        outputs[1],
        {
            "runs": [run.relative_to(directory).as_posix() if run != directory else "." for run in runs],
            "failures": [f"{run}: {audit}[{level}]" for run, audit, level in zip(failed["run"], failed["audit"], failed["level"])],
            "audits": json.loads(table.to_json(orient="records")),
            "provenance": json.loads(provenance.to_json(orient="records")),
        },
    )
    if plots:
        residuals = _collect(runs, directory, "coulomb_residuals.csv")
        if len(residuals):
            outputs.append(directory / "residual_history.png")
            plot_residual_history(residuals, outputs[-1], logger)
        density = _collect(runs, directory, "density.csv")
        if len(density):
            outputs.append(directory / "density_profile.png")
            plot_density_profile(density, outputs[-1], logger)
        if len(table):
            outputs.append(directory / "measured_constants.png")
            plot_measured_constants(table, outputs[-1], logger)
    (_logger if logger is None else logger).debug(f"report written: {[str(path) for path in outputs]}")
    return ReportResult(table, outputs)
