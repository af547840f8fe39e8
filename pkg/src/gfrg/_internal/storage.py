from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Literal, Union

import numpy as np
from numpy.typing import NDArray

from gfrg._internal.errors import ConfigError, FieldDecodeError, GfrgError
from gfrg._internal.field import ConnectionField, CurvatureField, GaugeField, Grid
from gfrg._internal.gaugebuild import BallCover, PartialGauge
from gfrg._internal.lie import LieGroup, group_from_tag
from gfrg._internal.transport import SingularSetModel

_logger = logging.getLogger("gfrg.storage")

FIELD_MAGIC = b"GFRG1"
"""Leading bytes of every field file."""

FieldKind = Literal["connection", "curvature", "gauge", "partial_gauge", "scalar", "mask"]
"""What a field file holds."""

StoredField = Union[ConnectionField, CurvatureField, GaugeField, PartialGauge]
"""Objects `save_field` and `load_field` handle."""

_HEADER = np.dtype(
    [
        ("magic", "S5"),
        ("kind", "u1"),
        ("n", "u1"),
        ("matrix", "u1"),
        ("m", "<u4"),
        ("components", "<u4"),
        ("level", "<i4"),
        ("flags", "<u4"),
    ],
)
_KINDS: tuple[FieldKind, ...] = ("connection", "curvature", "gauge", "partial_gauge", "scalar", "mask")
_HAS_MASK = 1
_HAS_STATISTICS = 2
_HAS_REFERENCE = 4
_COMPLEX = np.dtype("<c16")
_REAL = np.dtype("<f8")
_BYTE = np.dtype("u1")


def sidecar_path(path: Path) -> Path:
    """The JSON sidecar next to a field file.

    Args:
        path: Field file.

    Returns:
        `<path>.json`.
    """
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_json(path: Path, data: Any) -> Path:
    """Write JSON with sorted keys, so equal data gives equal bytes.

    Args:
        path: Target file.
        data: JSON-compatible data.

    Returns:
        The path.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, allow_nan=True) + "\n", encoding="utf-8")
    return path


def read_json(path: Path) -> Any:
    """Read a JSON artifact.

    Args:
        path: The file.

    Returns:
        The decoded data.

    Raises:
        FieldDecodeError: If the file is missing or malformed.
    """
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FieldDecodeError(f"cannot read {path}: {exc}", path=str(path)) from exc


def _write(path: Path, header: dict[str, int], blocks: list[NDArray], sidecar: dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    record = np.zeros((), dtype=_HEADER)
    record["magic"] = FIELD_MAGIC
    for key, value in header.items():
        record[key] = value
    with path.open("wb") as file:
        file.write(record.tobytes())
        for block in blocks:
            file.write(np.ascontiguousarray(block).tobytes())
    write_json(sidecar_path(path), {"format": FIELD_MAGIC.decode(), **sidecar})
    _logger.debug(f"wrote {sidecar['kind']} field to {path}")
    return path


def _group_sidecar(group: LieGroup) -> dict[str, Any]:
    return {"group": group.name, "tubular_radius": group.tubular_radius}


def save_field(path: Path, obj: StoredField, metadata: dict[str, Any] | None = None) -> Path:
    """Write a field in the GFRG1 format: a fixed header, little-endian data blocks and a JSON sidecar.

    Closed-form evaluators are not stored; a reloaded connection
    interpolates its nodal data.

    Args:
        path: Target file.
        obj: The field.
        metadata: Extra JSON-compatible data for the sidecar.

    Returns:
        The path.

    Raises:
        ConfigError: For unsupported objects.
    """
    sidecar: dict[str, Any] = {"metadata": metadata or {}}
    if isinstance(obj, PartialGauge):
        flags = _HAS_MASK | _HAS_STATISTICS | (_HAS_REFERENCE if obj.reference is not None else 0)
        blocks = [obj.values.astype(_COMPLEX), obj.mask.astype(_BYTE), np.asarray(obj.statistics, dtype=_REAL)]
        if obj.reference is not None:
            blocks.append(np.asarray(obj.reference, dtype=_REAL))
        sidecar.update(
            kind="partial_gauge",
            dropped=obj.dropped,
            origin=None if obj.origin is None else [float(value) for value in obj.origin],
        )
        components, level = 1, obj.level
    elif isinstance(obj, GaugeField):
        flags, blocks, components, level = 0, [obj.values.astype(_COMPLEX)], 1, 0
        sidecar["kind"] = "gauge"
    elif isinstance(obj, CurvatureField):
        flags, blocks, components, level = 0, [obj.data.astype(_COMPLEX)], len(obj.data), 0
        sidecar["kind"] = "curvature"
    elif isinstance(obj, ConnectionField):
        flags, blocks, components, level = 0, [obj.data.astype(_COMPLEX)], len(obj.data), 0
        sidecar.update(kind="connection", interpolation_order=obj.interpolation_order)
    else:
        raise ConfigError(f"cannot store objects of type {type(obj).__name__}")
    grid, group = obj.grid, obj.group
    sidecar.update(_group_sidecar(group), n=grid.n, m=grid.m)
    header = {
        "kind": _KINDS.index(sidecar["kind"]),
        "n": grid.n,
        "matrix": group.N,
        "m": grid.m,
        "components": components,
        "level": level,
        "flags": flags,
    }
    return _write(path, header, blocks, sidecar)


def save_nodal(path: Path, values: NDArray, grid: Grid, metadata: dict[str, Any] | None = None) -> Path:
    """Write a scalar field or a node mask in the GFRG1 format.

    Args:
        path: Target file.
        values: Real or boolean array of shape `grid.shape`.
        grid: The grid.
        metadata: Extra JSON-compatible data for the sidecar.

    Returns:
        The path.

    Raises:
        ConfigError: If the array does not live on the grid.
    """
    values = np.asarray(values)
    if values.shape != grid.shape:
        raise ConfigError(f"array of shape {values.shape} does not live on {grid}")
    kind: FieldKind = "mask" if values.dtype == np.bool_ else "scalar"
    block = values.astype(_BYTE if kind == "mask" else _REAL)
    header = {"kind": _KINDS.index(kind), "n": grid.n, "matrix": 0, "m": grid.m, "components": 1, "level": 0, "flags": 0}
    return _write(path, header, [block], {"kind": kind, "n": grid.n, "m": grid.m, "metadata": metadata or {}})


class _Reader:
    def __init__(self, path: Path, payload: bytes, offset: int) -> None:
        self.path = path
        self.payload = payload
        self.offset = offset

    def take(self, dtype: np.dtype, shape: tuple[int, ...]) -> NDArray:
        count = int(np.prod(shape))
        end = self.offset + count * dtype.itemsize
        if end > len(self.payload):
            raise FieldDecodeError(f"{self.path} is truncated", path=str(self.path), expected=end, size=len(self.payload))
        block = np.frombuffer(self.payload, dtype=dtype, count=count, offset=self.offset).reshape(shape).copy()
        self.offset = end
        return block

    def finish(self) -> None:
        if self.offset != len(self.payload):
            raise FieldDecodeError(
                f"{self.path} has {len(self.payload) - self.offset} trailing bytes",
                path=str(self.path),
            )


def _open(path: Path) -> tuple[np.void, dict[str, Any], _Reader]:
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as exc:
        raise FieldDecodeError(f"cannot read {path}: {exc}", path=str(path)) from exc
    if len(payload) < _HEADER.itemsize:
        raise FieldDecodeError(f"{path} is shorter than the header", path=str(path))
    header = np.frombuffer(payload, dtype=_HEADER, count=1)[0]
    if bytes(header["magic"]) != FIELD_MAGIC:
        raise FieldDecodeError(f"{path} is not a GFRG1 field file", path=str(path))
    if int(header["kind"]) >= len(_KINDS):
        raise FieldDecodeError(f"{path} has unknown field kind {int(header['kind'])}", path=str(path))
    sidecar = read_json(sidecar_path(path))
    if not isinstance(sidecar, dict):
        raise FieldDecodeError(f"sidecar of {path} must be a JSON object", path=str(path))
    kind = _KINDS[int(header["kind"])]
    if sidecar.get("kind") != kind or sidecar.get("n") != int(header["n"]) or sidecar.get("m") != int(header["m"]):
        raise FieldDecodeError(f"{path} disagrees with its sidecar", path=str(path), kind=kind)
    return header, sidecar, _Reader(path, payload, _HEADER.itemsize)


def _decode_grid(header: np.void, path: Path) -> Grid:
    try:
        return Grid(int(header["n"]), int(header["m"]))
    except ConfigError as exc:
        raise FieldDecodeError(f"{path} describes an invalid grid: {exc}", path=str(path)) from exc


def _decode_group(header: np.void, sidecar: dict[str, Any], path: Path) -> LieGroup:
    try:
        group = group_from_tag(str(sidecar["group"]), float(sidecar["tubular_radius"]))
    except (KeyError, TypeError, ValueError, ConfigError) as exc:
        raise FieldDecodeError(f"{path} names an invalid group: {exc}", path=str(path)) from exc
    if group.N != int(header["matrix"]):
        raise FieldDecodeError(f"{path}: matrix size {int(header['matrix'])} does not fit {group.name}", path=str(path))
    return group


def load_field(path: Path) -> StoredField:
    """Read a field written by `save_field`.

    Args:
        path: The field file.

    Returns:
        The field, of the stored type.

    Raises:
        FieldDecodeError: If the file is truncated, corrupted or inconsistent with its sidecar.
    """
    path = Path(path)
    header, sidecar, reader = _open(path)
    kind = _KINDS[int(header["kind"])]
    if kind in ("scalar", "mask"):
        raise FieldDecodeError(f"{path} holds a {kind}; use load_nodal", path=str(path))
    grid = _decode_grid(header, path)
    group = _decode_group(header, sidecar, path)
    size = group.N
    components = int(header["components"])
    flags = int(header["flags"])
    try:
        if kind == "connection":
            data = reader.take(_COMPLEX, (components, *grid.shape, size, size))
            reader.finish()
            return ConnectionField(grid, group, data, interpolation_order=int(sidecar.get("interpolation_order", 3)))
        if kind == "curvature":
            data = reader.take(_COMPLEX, (components, *grid.shape, size, size))
            reader.finish()
            return CurvatureField(grid, group, data)
        values = reader.take(_COMPLEX, (*grid.shape, size, size))
        if kind == "gauge":
            reader.finish()
            return GaugeField(grid, group, values)
        if not flags & _HAS_MASK or not flags & _HAS_STATISTICS:
            raise FieldDecodeError(f"{path} lacks the blocks of a partial gauge", path=str(path))
        mask = reader.take(_BYTE, grid.shape).astype(bool)
        statistics = reader.take(_REAL, grid.shape)
        reference = reader.take(_REAL, grid.shape) if flags & _HAS_REFERENCE else None
        reader.finish()
        origin = sidecar.get("origin")
        return PartialGauge(
            grid,
            group,
            mask,
            values,
            int(header["level"]),
            statistics,
            reference,
            int(sidecar.get("dropped", 0)),
            None if origin is None else np.asarray(origin, dtype=float),
        )
    except FieldDecodeError:
        raise
    except GfrgError as exc:
        raise FieldDecodeError(f"{path} decodes to an invalid {kind}: {exc}", path=str(path)) from exc


def load_nodal(path: Path) -> tuple[Grid, NDArray]:
    """Read a scalar field or mask written by `save_nodal`.

    Args:
        path: The field file.

    Returns:
        The grid and the array (boolean for masks).

    Raises:
        FieldDecodeError: On malformed files.
    """
    path = Path(path)
    header, _, reader = _open(path)
    kind = _KINDS[int(header["kind"])]
    if kind not in ("scalar", "mask"):
        raise FieldDecodeError(f"{path} holds a {kind}; use load_field", path=str(path))
    grid = _decode_grid(header, path)
    values = reader.take(_BYTE, grid.shape).astype(bool) if kind == "mask" else reader.take(_REAL, grid.shape)
    reader.finish()
    return grid, values


def save_cover(path: Path, cover: BallCover) -> Path:
    """Write a ball cover as JSON.

    Args:
        path: Target file.
        cover: The cover.

    Returns:
        The path.
    """
    return write_json(
        path,
        {
            "centers": cover.centers.tolist(),
            "radii": cover.radii.tolist(),
            "n": int(cover.centers.shape[1]),
            "ball_def_failures": cover.ball_def_failures,
        },
    )


def load_cover(path: Path) -> BallCover:
    """Read a ball cover written by `save_cover`.

    Args:
        path: The file.

    Returns:
        The cover.

    Raises:
        FieldDecodeError: On malformed files.
    """
    data = read_json(path)
    try:
        n = int(data["n"])
        centers = np.asarray(data["centers"], dtype=float).reshape(-1, n)
        radii = np.asarray(data["radii"], dtype=float)
        if len(radii) != len(centers):
            raise ValueError("centre and radius counts differ")
        return BallCover(centers, radii, int(data.get("ball_def_failures", 0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise FieldDecodeError(f"malformed cover {path}: {exc}", path=str(path)) from exc


def save_singular_set(path: Path, singular: SingularSetModel) -> Path:
    """Write a singular set model as JSON.

    Args:
        path: Target file.
        singular: The model.

    Returns:
        The path.
    """
    return write_json(path, singular.to_dict())


def load_singular_set(path: Path) -> SingularSetModel:
    """Read a singular set model written by `save_singular_set`.

    Args:
        path: The file.

    Returns:
        The model.

    Raises:
        FieldDecodeError: On malformed files.
    """
    data = read_json(path)
    if not isinstance(data, dict):
        raise FieldDecodeError(f"malformed singular set {path}", path=str(path))
    try:
        return SingularSetModel.from_dict(data)
    except ConfigError as exc:
        raise FieldDecodeError(f"malformed singular set {path}: {exc}", path=str(path)) from exc


def check_artifacts(directory: Path) -> int:
    """Decode every field file below a directory.

    Args:
        directory: Artifact directory.

    Returns:
        Number of files decoded.

    Raises:
        FieldDecodeError: At the first file that does not decode.
    """
    count = 0
    for path in sorted(Path(directory).rglob("*.gfrg")):
        header, _, _ = _open(path)
        if _KINDS[int(header["kind"])] in ("scalar", "mask"):
            load_nodal(path)
        else:
            load_field(path)
        count += 1
    _logger.debug(f"decoded {count} field files under {directory}")
    return count
