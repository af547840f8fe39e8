"""Tests for the CLI."""

from __future__ import annotations

import json
from pathlib import Path

import pandas as pd
import pytest
from typer.testing import CliRunner

from gfrg import AuditRow, app
from gfrg._internal import debug


@pytest.fixture(name="runner")
def _fixture_runner() -> CliRunner:
    return CliRunner()


@pytest.fixture(name="zero_config")
def _fixture_zero_config(tmp_path: Path) -> Path:
    path = tmp_path / "zero.json"
    path.write_text(json.dumps({"group": "u1", "n": 2, "m": 9, "generator": {"kind": "zero"}}), encoding="utf-8")
    return path


def test_main(runner: CliRunner) -> None:
    """Without a command the help is shown.

    Parameters:
        runner: CLI runner.
    """
    result = runner.invoke(app, [])
    assert result.exit_code == 0
    assert "Gauge fixing" in result.output


def test_show_help(runner: CliRunner) -> None:
    """Show help, with every command listed.

    Parameters:
        runner: CLI runner.
    """
    result = runner.invoke(app, ["-h"])
    assert result.exit_code == 0
    for command in ("generate", "transport", "stokes", "morrey", "stratify", "gauge-build", "coulomb", "verify", "report"):
        assert command in result.output


def test_show_version(runner: CliRunner) -> None:
    """`-V` prints the package version and exits before any subcommand.

    Parameters:
        runner: CLI runner.
    """
    result = runner.invoke(app, ["-V"])
    assert result.exit_code == 0
    assert f"gfrg version: {debug._get_version()}" in result.output


def test_show_debug_info(runner: CliRunner) -> None:
    """Show debug information.

    Parameters:
        runner: CLI runner.
    """
    result = runner.invoke(app, ["--debug-info"])
    assert result.exit_code == 0
    output = result.output.lower()
    assert "python" in output
    assert "system" in output
    assert "environment" in output
    assert "packages" in output


@pytest.mark.parametrize("grid", ["2x9", "7,9", "2,3"])
def test_bad_grid_is_a_configuration_error(runner: CliRunner, tmp_path: Path, grid: str) -> None:
    """Malformed or invalid grids exit with code 2.

    Parameters:
        runner: CLI runner.
        tmp_path: Temporary directory.
        grid: The `--grid` value.
    """
    result = runner.invoke(app, ["generate", "--grid", grid, "--out", str(tmp_path / "out")])
    assert result.exit_code == 2


def test_generate(runner: CliRunner, tmp_path: Path) -> None:
    """The generate stage writes the connection and its singular set.

    Parameters:
        runner: CLI runner.
        tmp_path: Temporary directory.
    """
    result = runner.invoke(app, ["generate", "--grid", "2,9", "--group", "u1", "--seed", "3", "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "connection.gfrg").exists()
    assert (tmp_path / "singular_set.json").exists()
    assert json.loads((tmp_path / "config.json").read_text(encoding="utf-8"))["seed"] == 3


def test_transport(runner: CliRunner, tmp_path: Path, zero_config: Path) -> None:
    """The trivial connection transports to the identity.

    Parameters:
        runner: CLI runner.
        tmp_path: Temporary directory.
        zero_config: Configuration of the trivial connection.
    """
    out = tmp_path / "out"
    result = runner.invoke(app, ["transport", "-c", str(zero_config), "-o", str(out), "--path", "[[0.1, 0.1], [0.9, 0.5]]"])
    assert result.exit_code == 0, result.output
    assert json.loads((out / "transport.json").read_text(encoding="utf-8"))["distance_to_identity"] == 0.0
    result = runner.invoke(app, ["transport", "-c", str(zero_config), "-o", str(out), "--path", "not json"])
    assert result.exit_code == 2


def test_missing_config_file(runner: CliRunner, tmp_path: Path) -> None:
    """A configuration file must exist.

    Parameters:
        runner: CLI runner.
        tmp_path: Temporary directory.
    """
    result = runner.invoke(app, ["morrey", "-c", str(tmp_path / "missing.json")])
    assert result.exit_code == 2


def test_report_without_runs(runner: CliRunner, tmp_path: Path) -> None:
    """Reporting on a directory without audits exits with code 2.

    Parameters:
        runner: CLI runner.
        tmp_path: Temporary directory.
    """
    result = runner.invoke(app, ["report", str(tmp_path), "--no-plots"])
    assert result.exit_code == 2


def test_report(runner: CliRunner, tmp_path: Path) -> None:
    """A recorded audit table is consolidated.

    Parameters:
        runner: CLI runner.
        tmp_path: Temporary directory.
    """
    pd.DataFrame([AuditRow("cnk", 0, 0.0, 1e-6).to_dict()]).to_csv(tmp_path / "audits.csv", index=False)
    result = runner.invoke(app, ["report", str(tmp_path), "--no-plots"])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "report.json").exists()


def test_verify_options(runner: CliRunner, tmp_path: Path) -> None:
    """Unknown suites exit with code 2; recorded failures with code 1.

    Parameters:
        runner: CLI runner.
        tmp_path: Temporary directory.
    """
    assert runner.invoke(app, ["verify", "--suite", "huge", "--out", str(tmp_path)]).exit_code == 2
    case = tmp_path / "case"
    case.mkdir()
    pd.DataFrame([AuditRow("cnk", 0, 1.0, 1e-6).to_dict()]).to_csv(case / "audits.csv", index=False)
    result = runner.invoke(app, ["verify", "--check-only", "--out", str(tmp_path)])
    assert result.exit_code == 1
    assert "case" in result.output
