"""Tests for the GFRG1 field files and the JSON artifacts."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from gfrg import (
    FIELD_MAGIC,
    SU2,
    BallCover,
    ConfigError,
    ConnectionField,
    CurvatureField,
    FieldDecodeError,
    GaugeField,
    Grid,
    PartialGauge,
    SingularSetModel,
    check_artifacts,
    curvature,
    load_cover,
    load_field,
    load_nodal,
    load_singular_set,
    read_json,
    save_cover,
    save_field,
    save_nodal,
    save_singular_set,
    sidecar_path,
)


@pytest.fixture(name="grid")
def _fixture_grid() -> Grid:
    return Grid(2, 5)


@pytest.fixture(name="connection")
def _fixture_connection(grid: Grid) -> ConnectionField:
    return ConnectionField(grid, SU2, SU2.random_algebra(np.random.default_rng(1), (2, *grid.shape), scale=0.2))


def test_connection_file_layout(tmp_path: Path, connection: ConnectionField) -> None:
    """The file starts with the magic bytes and its sidecar describes it.

    Parameters:
        tmp_path: Temporary directory.
        connection: Random connection.
    """
    path = save_field(tmp_path / "a.gfrg", connection, metadata={"seed": 1})
    assert path.read_bytes().startswith(FIELD_MAGIC)
    sidecar = read_json(sidecar_path(path))
    assert sidecar["kind"] == "connection"
    assert sidecar["group"] == SU2.name
    assert (sidecar["n"], sidecar["m"]) == (2, 5)
    assert sidecar["metadata"] == {"seed": 1}
    assert sidecar_path(path).name == "a.gfrg.json"


def test_fields_reload(tmp_path: Path, connection: ConnectionField) -> None:
    """Connections, curvatures and gauges come back with their type and data.

    Parameters:
        tmp_path: Temporary directory.
        connection: Random connection.
    """
    loaded = load_field(save_field(tmp_path / "a.gfrg", connection))
    assert isinstance(loaded, ConnectionField)
    np.testing.assert_array_equal(loaded.data, connection.data)
    curv = load_field(save_field(tmp_path / "f.gfrg", curvature(connection)))
    assert isinstance(curv, CurvatureField)
    np.testing.assert_array_equal(curv.data, curvature(connection).data)
    gauge = GaugeField(connection.grid, SU2, SU2.random_element(np.random.default_rng(2), connection.grid.shape))
    reloaded = load_field(save_field(tmp_path / "g.gfrg", gauge))
    assert isinstance(reloaded, GaugeField)
    np.testing.assert_array_equal(reloaded.values, gauge.values)


def test_partial_gauge_reloads(tmp_path: Path, grid: Grid) -> None:
    """Mask, statistics, reference, origin and dropped count survive.

    Parameters:
        tmp_path: Temporary directory.
        grid: The grid.
    """
    mask = grid.interior_mask(1)
    statistics = np.where(mask, 0.1, np.nan)
    gauge = PartialGauge(grid, SU2, mask, SU2.identity(grid.shape), 2, statistics, np.ones(grid.shape), 3, np.array([0.5, 0.25]))
    loaded = load_field(save_field(tmp_path / "p.gfrg", gauge))
    assert isinstance(loaded, PartialGauge)
    assert loaded.level == 2
    assert loaded.dropped == 3
    np.testing.assert_array_equal(loaded.mask, mask)
    np.testing.assert_array_equal(loaded.statistics, statistics)
    np.testing.assert_array_equal(loaded.reference, 1.0)
    np.testing.assert_array_equal(loaded.origin, [0.5, 0.25])


def test_nodal_arrays_reload(tmp_path: Path, grid: Grid) -> None:
    """Scalars stay real and masks stay boolean.

    Parameters:
        tmp_path: Temporary directory.
        grid: The grid.
    """
    values = grid.points[..., 0] ** 2
    loaded_grid, loaded = load_nodal(save_nodal(tmp_path / "s.gfrg", values, grid))
    assert loaded_grid == grid
    np.testing.assert_array_equal(loaded, values)
    _, mask = load_nodal(save_nodal(tmp_path / "m.gfrg", values > 0.2, grid))
    assert mask.dtype == np.bool_
    np.testing.assert_array_equal(mask, values > 0.2)
    with pytest.raises(ConfigError):
        save_nodal(tmp_path / "bad.gfrg", np.zeros(3), grid)


def test_loaders_refuse_the_wrong_kind(tmp_path: Path, grid: Grid, connection: ConnectionField) -> None:
    """Nodal files are not fields and fields are not nodal files.

    Parameters:
        tmp_path: Temporary directory.
        grid: The grid.
        connection: Random connection.
    """
    with pytest.raises(FieldDecodeError):
        load_field(save_nodal(tmp_path / "s.gfrg", np.zeros(grid.shape), grid))
    with pytest.raises(FieldDecodeError):
        load_nodal(save_field(tmp_path / "a.gfrg", connection))
    with pytest.raises(ConfigError):
        save_field(tmp_path / "x.gfrg", grid)  # type: ignore[arg-type]


def test_truncated_file(tmp_path: Path, connection: ConnectionField) -> None:
    """Missing bytes are decode errors with exit code 2.

    Parameters:
        tmp_path: Temporary directory.
        connection: Random connection.
    """
    path = save_field(tmp_path / "a.gfrg", connection)
    path.write_bytes(path.read_bytes()[:-16])
    with pytest.raises(FieldDecodeError) as error:
        load_field(path)
    assert error.value.exit_code == 2


def test_trailing_bytes(tmp_path: Path, connection: ConnectionField) -> None:
    """Extra bytes after the last block are rejected.

    Parameters:
        tmp_path: Temporary directory.
        connection: Random connection.
    """
    path = save_field(tmp_path / "a.gfrg", connection)
    path.write_bytes(path.read_bytes() + b"\0" * 16)
    with pytest.raises(FieldDecodeError):
        load_field(path)


def test_corrupted_magic(tmp_path: Path, connection: ConnectionField) -> None:
    """Files without the magic bytes are rejected.

    Parameters:
        tmp_path: Temporary directory.
        connection: Random connection.
    """
    path = save_field(tmp_path / "a.gfrg", connection)
    path.write_bytes(b"XXXXX" + path.read_bytes()[5:])
    with pytest.raises(FieldDecodeError):
        load_field(path)
    tiny = tmp_path / "tiny.gfrg"
    tiny.write_bytes(b"GF")
    with pytest.raises(FieldDecodeError):
        load_field(tiny)


def test_sidecar_must_agree(tmp_path: Path, connection: ConnectionField) -> None:
    """A missing or inconsistent sidecar is a decode error.

    Parameters:
        tmp_path: Temporary directory.
        connection: Random connection.
    """
    path = save_field(tmp_path / "a.gfrg", connection)
    sidecar_path(path).write_text('{"kind": "gauge", "n": 2, "m": 5}', encoding="utf-8")
    with pytest.raises(FieldDecodeError):
        load_field(path)
    sidecar_path(path).unlink()
    with pytest.raises(FieldDecodeError):
        load_field(path)


def test_cover_reloads(tmp_path: Path) -> None:
    """Ball covers keep centres, radii and failure counts.

    Parameters:
        tmp_path: Temporary directory.
    """
    cover = BallCover(np.array([[0.25, 0.25], [0.75, 0.5]]), np.array([0.1, 0.05]), 2)
    loaded = load_cover(save_cover(tmp_path / "cover.json", cover))
    np.testing.assert_array_equal(loaded.centers, cover.centers)
    np.testing.assert_array_equal(loaded.radii, cover.radii)
    assert loaded.ball_def_failures == 2
    empty = load_cover(save_cover(tmp_path / "empty.json", BallCover.empty(3)))
    assert len(empty) == 0
    (tmp_path / "bad.json").write_text('{"n": 2, "centers": [[0.1, 0.1]], "radii": []}', encoding="utf-8")
    with pytest.raises(FieldDecodeError):
        load_cover(tmp_path / "bad.json")


def test_singular_set_reloads(tmp_path: Path) -> None:
    """The reloaded model measures the same distances.

    Parameters:
        tmp_path: Temporary directory.
    """
    singular = SingularSetModel.central_plane(5)
    loaded = load_singular_set(save_singular_set(tmp_path / "singular.json", singular))
    points = np.random.default_rng(3).uniform(size=(10, 5))
    np.testing.assert_allclose(loaded.rho(points), singular.rho(points), atol=1e-12)
    (tmp_path / "list.json").write_text("[]", encoding="utf-8")
    with pytest.raises(FieldDecodeError):
        load_singular_set(tmp_path / "list.json")


def test_check_artifacts(tmp_path: Path, grid: Grid, connection: ConnectionField) -> None:
    """Every field file below a directory is decoded; the first bad one fails.

    Parameters:
        tmp_path: Temporary directory.
        grid: The grid.
        connection: Random connection.
    """
    save_field(tmp_path / "a.gfrg", connection)
    save_nodal(tmp_path / "nested" / "rho.gfrg", np.ones(grid.shape), grid)
    assert check_artifacts(tmp_path) == 2
    (tmp_path / "nested" / "rho.gfrg").write_bytes(b"GFRG1")
    with pytest.raises(FieldDecodeError):
        check_artifacts(tmp_path)
