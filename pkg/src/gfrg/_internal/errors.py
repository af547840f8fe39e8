from __future__ import annotations

from typing import Any


class GfrgError(Exception):
    """Base class for every error raised by gfrg.

    Attributes:
        exit_code: Process exit code the CLI maps this error to.
        details: Diagnostics attached by the raising code.
    """

    exit_code: int = 3

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.details: dict[str, Any] = details

    def to_manifest(self) -> dict[str, Any]:
        """Machine-readable form used by failure manifests.

        Returns:
            A JSON-serialisable mapping.
        """
        return {
            "error": type(self).__name__,
            "message": str(self),
            "exit_code": self.exit_code,
            "details": {key: _jsonable(value) for key, value in self.details.items()},
        }


def _jsonable(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, dict):
        return {str(key): _jsonable(item) for key, item in value.items()}
    try:
        return float(value)
    except (TypeError, ValueError):
        return repr(value)


# Usage and configuration (exit code 2).


class ConfigError(GfrgError):
    """Invalid configuration or command-line input."""

    exit_code = 2


class UnsupportedSpec(ConfigError):
    """A generator or geometry specification that cannot be realised."""


class MissingArtifacts(ConfigError):
    """An artifact directory lacks the files a command needs."""


class FieldDecodeError(ConfigError):
    """A field file is truncated, corrupted or inconsistent with its sidecar."""


class SamplingExhausted(ConfigError):
    """Rejection sampling gave up; the singular set is too thick for the grid."""


# Assertion failures (exit code 1).


class AuditFailed(GfrgError):
    """One or more enabled audit assertions failed."""

    exit_code = 1


# Numerical failures (exit code 3).


class OutsideTubularNeighbourhood(GfrgError):
    """A matrix lies too far from the group to be projected."""


class ClusteringViolated(GfrgError):
    """Group samples are too spread out to be averaged."""


class LogarithmBranchCut(GfrgError):
    """The principal logarithm is undefined (eigenvalue at -1)."""


class GridMismatch(GfrgError):
    """Two fields live on different grids or groups."""


class PathHitsSingularSet(GfrgError):
    """A transport path comes within one grid spacing of the singular set."""


class TriangleHitsSingularSet(PathHitsSingularSet):
    """A solid triangle comes within one grid spacing of the singular set."""


class NoConvergence(GfrgError):
    """An iterative method exhausted its budget."""


class EmptyDomain(GfrgError):
    """A node mask that must be nonempty is empty."""


class WeightMassTooSmall(GfrgError):
    """The averaging weight has too little mass on the current domain."""


class MaskMismatch(GfrgError):
    """A truncated field would need gauge values outside the gauge's mask."""


class IterationDiverged(GfrgError):
    """The Coulomb iteration left the perturbative regime."""


class ConstraintViolated(GfrgError):
    """A field fails the constraints an audit requires."""
