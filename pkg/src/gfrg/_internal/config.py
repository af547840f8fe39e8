from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

from gfrg._internal.errors import ConfigError
from gfrg._internal.field import Grid
from gfrg._internal.lie import DEFAULT_TUBULAR_RADIUS, LieGroup, group_from_tag
from gfrg._internal.morrey import StratConfig

GeneratorKind = Literal["zero", "random_smooth", "pure_gauge", "abelian_model", "singular_model"]
"""Model connections `generate` can build."""

_GENERATOR_KINDS = ("zero", "random_smooth", "pure_gauge", "abelian_model", "singular_model")


@dataclass(frozen=True)
class IntegratorConfig:
    """Parallel-transport integrator settings."""

    tol: float = 1e-9
    """Step-doubling tolerance (operator norm)."""
    max_doublings: int = 20
    """Steps never exceed `2**max_doublings` per segment."""
    interpolation_order: int = 3
    """Spline order for off-grid evaluation of nodal fields."""

    def __post_init__(self) -> None:
        if self.tol <= 0 or self.max_doublings < 3 or not 1 <= self.interpolation_order <= 5:  # noqa: PLR2004
            raise ConfigError(f"invalid integrator settings {self}")


@dataclass(frozen=True)
class SamplingConfig:
    """Monte Carlo sample sizes of the gauge construction and its audits."""

    base_paths: int = 256
    """Paths per node for the level-1 gauge."""
    inductive_paths: int = 128
    """Paths per node for the later levels."""
    origin_candidates: int = 64
    """Candidate origins scored by their Riesz integral."""
    lipschitz_pairs: int = 32
    """Node pairs measured by the Lipschitz audit."""
    lipschitz_points: int = 16
    """Intermediate points per pair."""
    drop_fraction: float = 0.05
    """Largest admissible fraction of nodes dropped for failed averaging."""
    psi_mass_floor: float = 0.01
    """Lower bound on `mass(psi_x) / R^n` before averaging."""
    max_draws: int = 10_000
    """Rejection budget per node."""

    def __post_init__(self) -> None:
        counts = (self.base_paths, self.inductive_paths, self.origin_candidates, self.lipschitz_pairs, self.lipschitz_points)
        if min(counts) < 1 or not 0 <= self.drop_fraction < 1 or self.psi_mass_floor <= 0 or self.max_draws < 1:
            raise ConfigError(f"invalid sampling settings {self}")


@dataclass(frozen=True)
class CoulombConfig:
    """Coulomb gauge fixing settings."""

    tol: float = 1e-8
    """Stop when the Morrey-Sobolev norm of the update drops below this."""
    max_iter: int = 50
    """Iteration budget of the fixed-point scheme."""
    smallness: float = 0.2
    """Largest `M^{n/2}_2` curvature norm treated as perturbative."""
    solver_tol: float = 1e-12
    """Relative residual of the inner Neumann solves."""
    relaxation_sweeps: int = 500
    """Sweep budget of the relaxation method."""
    overrelaxation: float = 1.0
    """Overrelaxation exponent of the relaxation method (1 disables it)."""
    step: float = 1.0
    """Damping of each fixed-point update, in `(0, 1]`."""

    def __post_init__(self) -> None:
        if self.tol <= 0 or self.max_iter < 1 or self.smallness <= 0 or self.solver_tol <= 0:
            raise ConfigError(f"invalid Coulomb settings {self}")
        if self.relaxation_sweeps < 1 or not 0 < self.overrelaxation < 2 or not 0 < self.step <= 1:  # noqa: PLR2004
            raise ConfigError(f"invalid relaxation settings {self}")


@dataclass(frozen=True)
class GeneratorSpec:
    """Which model connection to generate."""

    kind: GeneratorKind = "random_smooth"
    """Generator name."""
    epsilon: float = 0.05
    """Target size of the curvature."""
    band: int = 3
    """Fourier modes per axis for band-limited fields."""
    log_damping: bool = True
    """Damp the singular profile by `(1 + log^2(1/rho))^(-1/2)`."""
    profile: Literal["linear", "sine"] = "sine"
    """Profile `f` of the abelian model `A_1 = f(x_2) X`."""
    singular_set: dict[str, Any] | None = None
    """Singular set description; the central plane when omitted."""

    def __post_init__(self) -> None:
        if self.kind not in _GENERATOR_KINDS:
            raise ConfigError(f"unknown generator {self.kind!r}; expected one of {', '.join(_GENERATOR_KINDS)}")
        if self.epsilon < 0 or self.band < 1:
            raise ConfigError(f"invalid generator parameters {self}")
        if self.profile not in ("linear", "sine"):
            raise ConfigError(f"unknown abelian profile {self.profile!r}")


@dataclass(frozen=True)
class AuditThresholds:
    """Pass/fail limits of the audited inequalities; `None` only reports."""

    gauge_invariance: float | None = 1e-3
    """Largest `||F(sigma(A))| - |F(A)||` on interior nodes."""
    stokes_ratio: float | None = 2.0
    """Largest non-abelian Stokes ratio."""
    loop_curvature: float | None = 5.0
    """Coefficient `C` in the bound `C h^4 + 1e-7` on loop-recovered minus stencil curvature."""
    lipschitz_constant: float | None = None
    """Largest measured Lipschitz constant."""
    flat_gauge: float | None = 1e-6
    """Largest `|sigma(A)|` for flat connections."""
    truncation_ratio: float | None = 20.0
    """Largest `||F(A~_m)|| / epsilon`."""
    density_floor: float | None = 0.01
    """Smallest `|B(x, r) ∩ Omega_m| / r^n` for `r >= R_m`."""
    workable_cr: float | None = 4.0
    """Largest smallest-workable `C_R`, so that `{rho >= C_R D^-m}` lies in `Omega_m`."""
    coulomb_ratio: float | None = None
    """Largest `||A_coulomb||_{2,1} / ||F||_2`."""
    coulomb_residual: float | None = 1e-6
    """Largest relative Coulomb residual."""
    neumann_constant: float | None = None
    """Largest Neumann estimate constant."""
    elliptic_constant: float | None = 10.0
    """Largest Hodge estimate constant."""
    cnk_tolerance: float | None = 1e-6
    """Tolerance on the closed-form `c_(n,k)` values."""


_PRESCRIBED_KEYS = {"strat.kappa"}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a pipeline run depends on; a fixed seed makes it deterministic."""

    group: str = "su2"
    """Group tag."""
    n: int = 3
    """Dimension."""
    m: int = 9
    """Nodes per axis."""
    seed: int = 0
    """Root seed for every random draw."""
    threads: int = 1
    """Worker count."""
    output: Path = Path("artifacts")
    """Artifact directory."""
    levels: int = 2
    """Highest stratification level built."""
    tubular_radius: float = DEFAULT_TUBULAR_RADIUS
    """Projection radius of the group."""
    strat: StratConfig = field(default_factory=lambda: StratConfig(epsilon=0.05))
    """Stratification constants."""
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    """Transport settings."""
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    """Monte Carlo sizes."""
    coulomb: CoulombConfig = field(default_factory=CoulombConfig)
    """Gauge fixing settings."""
    generator: GeneratorSpec = field(default_factory=GeneratorSpec)
    """Model connection."""
    audits: AuditThresholds = field(default_factory=AuditThresholds)
    """Pass/fail limits."""

    def __post_init__(self) -> None:
        object.__setattr__(self, "output", Path(self.output))
        if self.levels < 1 or self.threads < 1 or self.seed < 0:
            raise ConfigError(f"invalid run settings: levels={self.levels}, threads={self.threads}, seed={self.seed}")
        Grid(self.n, self.m)
        group_from_tag(self.group, self.tubular_radius)

    @property
    def grid(self) -> Grid:
        """The grid."""
        return Grid(self.n, self.m)

    @property
    def lie_group(self) -> LieGroup:
        """The structure group."""
        return group_from_tag(self.group, self.tubular_radius)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ExperimentConfig:
        """Build a configuration from a nested mapping.

        Args:
            data: Mapping with the dataclass field names as keys.

        Returns:
            The configuration.

        Raises:
            ConfigError: On unknown keys or invalid values.
        """
        return _build(cls, data, "")

    @classmethod
    def load(cls, path: Path) -> ExperimentConfig:
        """Read a JSON configuration file.

        Args:
            path: File path.

        Returns:
            The configuration.

        Raises:
            ConfigError: If the file is missing or malformed.
        """
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"configuration {path} must be a JSON object")
        return cls.from_dict(data)

    def with_overrides(self, **overrides: Any) -> ExperimentConfig:
        """Replace top-level keys, ignoring `None` values.

        Args:
            **overrides: Top-level field values.

        Returns:
            The updated configuration.
        """
        return dataclasses.replace(self, **{key: value for key, value in overrides.items() if value is not None})

    def to_dict(self) -> dict[str, Any]:
        """JSON-compatible form, the inverse of `from_dict`.

        Returns:
            The mapping.
        """
        data = dataclasses.asdict(self)
        data["output"] = str(self.output)
        return data

    def provenance(self) -> list[dict[str, Any]]:
        """Every constant with its value and whether the default is prescribed or chosen here.

        Returns:
            One row per flattened key.
        """
        rows = [
            {"key": key, "value": value, "source": "prescribed" if key in _PRESCRIBED_KEYS else "chosen"}
            for key, value in _flatten(self.to_dict(), "")
        ]
        rows.extend(
            [
                {"key": "truncation.inner_factor", "value": 5, "source": "prescribed"},
                {"key": "truncation.outer_factor", "value": 10, "source": "prescribed"},
                {"key": "truncation.far_factor", "value": 20, "source": "prescribed"},
                {"key": "bump.plateau", "value": 1, "source": "prescribed"},
                {"key": "bump.support", "value": 2, "source": "prescribed"},
            ],
        )
        return rows


def _flatten(data: dict[str, Any], prefix: str) -> list[tuple[str, Any]]:
    items: list[tuple[str, Any]] = []
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict) and key != "singular_set":
            items.extend(_flatten(value, f"{name}."))
        else:
            items.append((name, value))
    return items


def _build(cls: type, data: dict[str, Any], prefix: str) -> Any:
    if not isinstance(data, dict):
        raise ConfigError(f"section {prefix.rstrip('.') or 'root'} must be an object")
    known = {item.name: item for item in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(prefix + key for key in unknown)}")
    values = {}
    for key, value in data.items():
        nested = _NESTED.get(key) if cls is ExperimentConfig else None
        values[key] = _build(nested, value, f"{prefix}{key}.") if nested is not None else value
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"invalid configuration section {prefix.rstrip('.') or 'root'}: {exc}") from exc


_NESTED: dict[str, type] = {
    "strat": StratConfig,
    "integrator": IntegratorConfig,
    "sampling": SamplingConfig,
    "coulomb": CoulombConfig,
    "generator": GeneratorSpec,
    "audits": AuditThresholds,
}
