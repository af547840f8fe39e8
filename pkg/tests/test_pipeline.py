"""Tests for the staged runs, the single measurements and the verification suites."""

from __future__ import annotations

from contextlib import suppress
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from gfrg import (
    FAILURE_MANIFEST,
    PIPELINE_STAGES,
    AuditFailed,
    AuditRow,
    ExperimentConfig,
    PipelineResult,
    UnsupportedSpec,
    build_report,
    check_artifacts,
    morrey_report,
    read_json,
    run_audits,
    run_pipeline,
    stokes_report,
    transport_report,
    verify,
    verify_cases,
)

_SMALL_SAMPLING = {
    "base_paths": 4,
    "inductive_paths": 4,
    "origin_candidates": 8,
    "lipschitz_pairs": 4,
    "lipschitz_points": 4,
}


def _config(output: Path, **extra: object) -> ExperimentConfig:
    data = {
        "group": "u1",
        "n": 2,
        "m": 9,
        "output": str(output),
        "generator": {"kind": "zero"},
        "sampling": dict(_SMALL_SAMPLING),
        "audits": {"elliptic_constant": None},
    }
    data.update(extra)
    return ExperimentConfig.from_dict(data)


@pytest.fixture(name="trivial_run", scope="module")
def _fixture_trivial_run(tmp_path_factory: pytest.TempPathFactory) -> PipelineResult:
    return run_pipeline(_config(tmp_path_factory.mktemp("runs") / "zero"))


def test_trivial_run_passes(trivial_run: PipelineResult) -> None:
    """Every enabled audit of the trivial connection passes.

    Parameters:
        trivial_run: Full run on the trivial connection.
    """
    assert trivial_run.failures == []
    table = trivial_run.table()
    assert list(table.columns) == ["audit", "statement", "level", "measured", "threshold", "bound", "passed"]
    assert {"omega_fraction", "clustering", "truncation", "coulomb_residual", "cnk"} <= set(table["audit"])
    assert not (trivial_run.output / FAILURE_MANIFEST).exists()


def test_trivial_run_artifacts(trivial_run: PipelineResult) -> None:
    """Every stage leaves its artifacts, and all field files decode.

    Parameters:
        trivial_run: Full run on the trivial connection.
    """
    output = trivial_run.output
    for name in (
        "config.json",
        "provenance.csv",
        "connection.gfrg",
        "singular_set.json",
        "curvature.gfrg",
        "omega_1.gfrg",
        "omega_2.gfrg",
        "origin.json",
        "gauge_1.gfrg",
        "gauge_2.gfrg",
        "cover_2.json",
        "truncated_2.gfrg",
        "coulomb_connection.gfrg",
        "coulomb.json",
        "coulomb_residuals.csv",
        "audits.csv",
        "audits.json",
    ):
        assert (output / name).exists(), name
    assert check_artifacts(output) >= 9
    assert ExperimentConfig.from_dict(read_json(output / "config.json")) == _config(output)
    assert len(read_json(output / "audits.json")) == len(trivial_run.rows)


def test_trivial_run_measurements(trivial_run: PipelineResult) -> None:
    """The trivial connection has full levels and vanishing gauges.

    Parameters:
        trivial_run: Full run on the trivial connection.
    """
    measured = {(row.audit, row.level): row.measured for row in trivial_run.rows}
    assert measured["omega_fraction", 1] == 1.0
    assert measured["nested", 2] == 0.0
    assert measured["flat_gauge", 1] == 0.0
    assert measured["truncation", 2] == 0.0
    assert measured["coulomb_converged", 0] == 1.0


def test_run_until_a_stage(tmp_path: Path) -> None:
    """Stopping after stratification writes no gauges.

    Parameters:
        tmp_path: Temporary directory.
    """
    result = run_pipeline(_config(tmp_path), until="stratify")
    assert (tmp_path / "omega_2.gfrg").exists()
    assert not (tmp_path / "gauge_1.gfrg").exists()
    stratify_rows = {"epsilon", "omega_fraction", "nested", "workable_cr", "density", "average_bound"}
    assert {row.audit for row in result.rows} <= stratify_rows
    assert PIPELINE_STAGES[0] == "generate"
    with pytest.raises(ValueError, match="unknown stage"):
        run_pipeline(_config(tmp_path), until="plot")  # type: ignore[arg-type]


def test_failed_stage_writes_a_manifest(tmp_path: Path) -> None:
    """A stage error is re-raised after naming the stage in the manifest.

    Parameters:
        tmp_path: Temporary directory.
    """
    cfg = _config(tmp_path, generator={"kind": "singular_model"})
    with pytest.raises(UnsupportedSpec):
        run_pipeline(cfg)
    manifest = read_json(tmp_path / FAILURE_MANIFEST)
    assert manifest["stage"] == "generate"
    assert manifest["error"] == "UnsupportedSpec"
    assert manifest["exit_code"] == 2


def test_failed_audit_keeps_the_table(tmp_path: Path) -> None:
    """An impossible threshold fails after every artifact is written.

    Parameters:
        tmp_path: Temporary directory.
    """
    cfg = _config(tmp_path, audits={"elliptic_constant": None, "cnk_tolerance": -1.0})
    with pytest.raises(AuditFailed) as error:
        run_audits(cfg)
    assert error.value.exit_code == 1
    assert "cnk[0]" in error.value.details["failures"]
    table = pd.read_csv(tmp_path / "audits.csv")
    assert (table.loc[table["audit"] == "cnk", "passed"].astype(str) == "False").all()
    assert read_json(tmp_path / FAILURE_MANIFEST)["stage"] == "audit"


@pytest.mark.parametrize(
    ("row", "expected"),
    [
        (AuditRow("a", 0, 1.0), None),
        (AuditRow("a", 0, 1.0, 2.0), True),
        (AuditRow("a", 0, 3.0, 2.0), False),
        (AuditRow("a", 0, 3.0, 2.0, "lower"), True),
        (AuditRow("a", 0, float("nan"), 2.0), False),
    ],
)
def test_audit_row_verdicts(row: AuditRow, expected: bool | None) -> None:
    """Rows without thresholds only report; NaN never passes.

    Parameters:
        row: The row.
        expected: Expected verdict.
    """
    assert row.passed is expected
    assert row.to_dict()["passed"] is expected


def test_audit_row_statement() -> None:
    """Known audits describe their inequality; unknown ones echo their name."""
    assert "Omega" in AuditRow("nested", 2, 0.0).statement
    assert AuditRow("custom", 0, 0.0).statement == "custom"


def test_transport_report(tmp_path: Path) -> None:
    """The trivial connection transports to the identity.

    Parameters:
        tmp_path: Temporary directory.
    """
    data = transport_report(_config(tmp_path), np.array([[0.1, 0.1], [0.9, 0.1], [0.9, 0.8]]))
    assert data["distance_to_identity"] == pytest.approx(0.0, abs=1e-12)
    assert read_json(tmp_path / "transport.json")["vertices"][1] == [0.9, 0.1]


def test_stokes_report(tmp_path: Path) -> None:
    """Explicit triangles give one row each.

    Parameters:
        tmp_path: Temporary directory.
    """
    triangles = np.array([[[0.2, 0.2], [0.7, 0.2], [0.3, 0.8]]])
    table = stokes_report(_config(tmp_path, generator={"kind": "abelian_model", "profile": "linear"}), triangles=triangles)
    assert list(table.columns) == ["lhs", "rhs", "ratio"]
    assert len(table) == 1
    assert 0.0 < table["ratio"].iloc[0] <= 1.01
    assert (tmp_path / "stokes.csv").exists()


@pytest.mark.slow
def test_stokes_report_over_generic_triangles(tmp_path: Path) -> None:
    """Two hundred sampled generic triangles keep the non-abelian Stokes ratio below two.

    Parameters:
        tmp_path: Temporary directory.
    """
    cfg = _config(tmp_path, group="su2", m=17, generator={"kind": "random_smooth"})
    table = stokes_report(cfg)
    assert len(table) == 200
    assert (table["rhs"] > 0).all()
    assert table["ratio"].max() <= 2.0


@pytest.mark.slow
def test_loop_curvature_audit_is_enforced(tmp_path: Path) -> None:
    """Loop-recovered curvature at twenty nodes stays within `5 h^4 + 1e-7` of the stencil.

    Parameters:
        tmp_path: Temporary directory.
    """
    cfg = _config(tmp_path, m=17, generator={"kind": "abelian_model", "epsilon": 0.01})
    rows = {row.audit: row for row in run_audits(cfg).rows}
    loop = rows["loop_curvature"]
    assert loop.threshold == pytest.approx(5.0 * cfg.grid.h**4 + 1e-7)
    assert loop.passed
    assert rows["loop_order"].passed


def test_morrey_report(tmp_path: Path) -> None:
    """Norms of the trivial connection vanish.

    Parameters:
        tmp_path: Temporary directory.
    """
    data = morrey_report(_config(tmp_path))
    assert data["curvature_norm"] == 0.0
    assert data["connection_norm"] == 0.0
    assert data["relaxed"]
    assert (tmp_path / "morrey.json").exists()


def test_verify_cases(tmp_path: Path) -> None:
    """The smoke suite is a subset of the full suite and uses coarse sampling.

    Parameters:
        tmp_path: Temporary directory.
    """
    smoke = verify_cases("smoke", 3, tmp_path)
    full = verify_cases("full", 3, tmp_path)
    assert set(smoke) < set(full)
    assert "singular-n4" in full
    assert full["singular-n4"].audits.workable_cr == 4.0
    assert full["smooth-n3"].audits.coulomb_residual == 1e-6
    assert full["smooth-n3"].audits.gauge_invariance == 1e-3
    assert smoke["smooth-n2"].audits.gauge_invariance == 0.05
    assert smoke["zero-n2"].sampling.base_paths == 32
    assert smoke["zero-n2"].output == tmp_path / "zero-n2"
    assert all(cfg.seed == 3 for cfg in full.values())
    with pytest.raises(ValueError, match="unknown suite"):
        verify_cases("huge", 0, tmp_path)  # type: ignore[arg-type]


def test_verify_check_only(tmp_path: Path) -> None:
    """Re-checking decodes the recorded artifacts and reports corrupted files.

    Parameters:
        tmp_path: Temporary directory.
    """
    run_pipeline(_config(tmp_path / "zero"), until="stratify")
    result = verify(output=tmp_path, check_only=True)
    assert result.cases == {"zero": "pass"}
    assert result.exit_code == 0
    assert read_json(tmp_path / "verify.json")["cases"] == {"zero": "pass"}
    path = tmp_path / "zero" / "connection.gfrg"
    path.write_bytes(path.read_bytes()[:-8])
    result = verify(output=tmp_path, check_only=True)
    assert result.cases == {"zero": "FieldDecodeError"}
    assert result.exit_code == 2


def test_verify_check_only_reports_recorded_failures(tmp_path: Path) -> None:
    """A recorded failed audit fails the re-check with exit code 1.

    Parameters:
        tmp_path: Temporary directory.
    """
    case = tmp_path / "case"
    case.mkdir()
    pd.DataFrame([AuditRow("cnk", 0, 1.0, 0.5).to_dict()]).to_csv(case / "audits.csv", index=False)
    result = verify(output=tmp_path, check_only=True)
    assert result.cases == {"case": "AuditFailed"}
    assert result.exit_code == 1
    (case / "audits.csv").unlink()
    assert verify(output=tmp_path, check_only=True).cases == {"case": "FieldDecodeError"}


@pytest.mark.slow
def test_verify_smoke_suite(tmp_path: Path) -> None:
    """The smoke suite runs every case and records a status for each.

    Parameters:
        tmp_path: Temporary directory.
    """
    result = verify("smoke", seed=0, output=tmp_path)
    assert set(result.cases) == set(verify_cases("smoke", 0, tmp_path))
    assert read_json(tmp_path / "verify.json")["suite"] == "smoke"
    for name, status in result.cases.items():
        if status == "pass":
            assert check_artifacts(tmp_path / name) > 0


@pytest.mark.slow
def test_singular_stratification_contains_far_nodes(tmp_path: Path) -> None:
    """On the four-dimensional point singularity, `{rho >= 4 D^-m}` lies in every `Omega_m`.

    Parameters:
        tmp_path: Temporary directory.
    """
    cfg = ExperimentConfig.from_dict(
        {
            "group": "su2",
            "n": 4,
            "m": 13,
            "levels": 3,
            "output": str(tmp_path),
            "generator": {"kind": "singular_model", "epsilon": 0.05},
        },
    )
    result = run_pipeline(cfg, until="stratify")
    assert result.failures == []
    measured = {(row.audit, row.level): row.measured for row in result.rows}
    assert measured["epsilon", 0] >= 0.05
    for level in (1, 2, 3):
        assert measured["workable_cr", level] <= 4.0
    assert measured["omega_fraction", 1] > 0.0
    assert measured["nested", 3] == 0.0


def _run_ignoring_verdicts(cfg: ExperimentConfig) -> None:
    with suppress(AuditFailed):
        run_pipeline(cfg)


def test_runs_are_reproducible(tmp_path: Path) -> None:
    """Two runs with one seed write identical tables and reports, whatever the worker count.

    Parameters:
        tmp_path: Temporary directory.
    """
    extra = {"group": "su2", "seed": 11, "generator": {"kind": "random_smooth", "band": 1}}
    names = ("audits.csv", "audits.json", "coulomb.json", "report.json")
    recorded = []
    for _ in range(2):
        _run_ignoring_verdicts(_config(tmp_path / "run", **extra))
        build_report(tmp_path / "run", plots=False)
        recorded.append({name: (tmp_path / "run" / name).read_bytes() for name in names})
    assert recorded[0] == recorded[1]
    _run_ignoring_verdicts(_config(tmp_path / "threaded", threads=2, **extra))
    for name in names[:3]:
        assert (tmp_path / "threaded" / name).read_bytes() == recorded[0][name], name
