from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy import linalg

from gfrg._internal.config import GeneratorSpec
from gfrg._internal.errors import UnsupportedSpec
from gfrg._internal.field import ConnectionField, GaugeField, Grid
from gfrg._internal.lie import AlgebraElement, LieGroup, dagger, operator_norm
from gfrg._internal.transport import SingularSetModel

_logger = logging.getLogger("gfrg.generators")

_GENERATOR_STAGE = 0
_SINGULAR_DIMENSION = 4


@dataclass(frozen=True, eq=False)
class GeneratedField:
    """A model connection with the data it was built from."""

    connection: ConnectionField
    """The connection, with its closed form attached."""
    singular: SingularSetModel
    """Singular set of the model (empty for smooth models)."""
    gauge: GaugeField | None = None
    """For `pure_gauge`: the `sigma` with `A = sigma(0)`."""


class _FourierSeries:
    """Real band-limited series `sum_l c_l cos(2 pi k_l . x + phase_l)` with vector coefficients."""

    def __init__(self, rng: np.random.Generator, n: int, band: int, channels: int) -> None:
        terms = 2 * band * n
        self.wavevectors = rng.integers(-band, band + 1, size=(terms, n)).astype(float)
        self.phases = rng.uniform(0.0, 2.0 * np.pi, size=terms)
        decay = 1.0 + np.sum(self.wavevectors**2, axis=1)
        self.coefficients = rng.normal(size=(terms, channels)) / decay[:, None]

    def _angles(self, points: NDArray) -> NDArray:
        return 2.0 * np.pi * points @ self.wavevectors.T + self.phases

    def values(self, points: NDArray) -> NDArray[np.float64]:
        """Shape `(k, channels)`."""
        return np.cos(self._angles(points)) @ self.coefficients

    def derivatives(self, points: NDArray) -> NDArray[np.float64]:
        """Shape `(k, n, channels)`."""
        slopes = -2.0 * np.pi * np.sin(self._angles(points))
        return np.einsum("kl,la,lc->kac", slopes, self.wavevectors, self.coefficients)


def _random_smooth(grid: Grid, group: LieGroup, spec: GeneratorSpec, rng: np.random.Generator) -> ConnectionField:
    basis = group.algebra_basis
    series = _FourierSeries(rng, grid.n, spec.band, grid.n * len(basis))
    nodes = grid.points.reshape(-1, grid.n)
    slopes = series.derivatives(nodes).reshape(len(nodes), grid.n, grid.n, len(basis))
    slopes = np.tensordot(slopes, basis, axes=1)
    linear = np.zeros(len(nodes))
    for a in range(grid.n):
        for b in range(a + 1, grid.n):
            linear += 2.0 * operator_norm(slopes[:, a, b] - slopes[:, b, a]) ** 2
    largest = float(np.sqrt(np.max(linear)))
    scale = spec.epsilon / largest if largest > 0 else 0.0

    def _evaluate(points: NDArray) -> NDArray[np.complex128]:
        coefficients = series.values(points).reshape(len(points), grid.n, len(basis))
        return scale * np.tensordot(coefficients, basis, axes=1)

    return ConnectionField.from_function(grid, group, _evaluate)


def _pure_gauge(grid: Grid, group: LieGroup, spec: GeneratorSpec, rng: np.random.Generator) -> tuple[ConnectionField, GaugeField]:
    basis = group.algebra_basis
    series = _FourierSeries(rng, grid.n, spec.band, len(basis))
    nodes = grid.points.reshape(-1, grid.n)
    largest = float(np.max(operator_norm(np.tensordot(series.values(nodes), basis, axes=1))))
    scale = 1.0 / largest if largest > 0 else 0.0
    size = group.N

    def _phi(points: NDArray) -> AlgebraElement:
        return scale * np.tensordot(series.values(points), basis, axes=1)

    def _evaluate(points: NDArray) -> NDArray[np.complex128]:
        phi = _phi(points)
        slopes = scale * np.tensordot(series.derivatives(points), basis, axes=1)
        block = np.zeros((len(points), grid.n, 2 * size, 2 * size), dtype=complex)
        block[..., :size, :size] = phi[:, None]
        block[..., size:, size:] = phi[:, None]
        block[..., :size, size:] = slopes
        exponential = linalg.expm(block.reshape(-1, 2 * size, 2 * size)).reshape(block.shape)
        sigma = exponential[..., :size, :size]
        d_sigma = exponential[..., :size, size:]
        return group.to_algebra(-d_sigma @ dagger(sigma))

    connection = ConnectionField.from_function(grid, group, _evaluate)
    gauge = GaugeField(grid, group, group.exp(_phi(nodes)).reshape(*grid.shape, size, size))
    return connection, gauge


def abelian_direction(group: LieGroup) -> AlgebraElement:
    """A fixed algebra element of unit operator norm generating a circle subgroup.

    Args:
        group: The group.

    Returns:
        `i` for `U(1)`, `i diag(1, -1, 0, ...)` otherwise.
    """
    if group.N == 1:
        return np.array([[1j]])
    diagonal = np.zeros(group.N, dtype=complex)
    diagonal[0], diagonal[1] = 1j, -1j
    return np.diag(diagonal)


def _abelian_model(grid: Grid, group: LieGroup, spec: GeneratorSpec) -> ConnectionField:
    direction = abelian_direction(group)
    epsilon = spec.epsilon

    def _evaluate(points: NDArray) -> NDArray[np.complex128]:
        second = points[:, 1]
        if spec.profile == "linear":
            profile = epsilon * (second - 0.5)
        else:
            profile = epsilon * np.sin(2.0 * np.pi * second) / (2.0 * np.pi)
        out = np.zeros((len(points), grid.n, group.N, group.N), dtype=complex)
        out[:, 0] = profile[:, None, None] * direction
        return out

    return ConnectionField.from_function(grid, group, _evaluate)


def _singular_model(grid: Grid, group: LieGroup, spec: GeneratorSpec) -> ConnectionField:
    if grid.n != _SINGULAR_DIMENSION:
        raise UnsupportedSpec(f"the singular model is built in dimension 4, got n = {grid.n}")
    direction = abelian_direction(group)
    floor = grid.h / 2.0
    epsilon = spec.epsilon

    def _evaluate(points: NDArray) -> NDArray[np.complex128]:
        y = points - 0.5
        rho = np.maximum(np.linalg.norm(y, axis=1), floor)
        damping = 1.0 / np.sqrt(1.0 + np.log(1.0 / rho) ** 2) if spec.log_damping else np.ones_like(rho)
        profile = epsilon * damping / (2.0 * np.sqrt(2.0) * rho**2)
        rotated = np.stack([-y[:, 1], y[:, 0], -y[:, 3], y[:, 2]], axis=1)
        return (profile[:, None] * rotated)[..., None, None] * direction

    return ConnectionField.from_function(grid, group, _evaluate)


def generate(spec: GeneratorSpec, grid: Grid, group: LieGroup, seed: int = 0) -> GeneratedField:
    """Build a model connection.

    Args:
        spec: Which model and its parameters.
        grid: The grid.
        group: Structure group.
        seed: Root seed.

    Returns:
        The generated field.

    Raises:
        UnsupportedSpec: If the model cannot be built on this grid.
    """
    rng = np.random.default_rng([seed, _GENERATOR_STAGE])
    if spec.singular_set is not None:
        singular = SingularSetModel.from_dict(spec.singular_set)
        if singular.n != grid.n:
            raise UnsupportedSpec(f"singular set lives in dimension {singular.n}, grid in {grid.n}")
    elif spec.kind == "singular_model":
        singular = SingularSetModel.central_plane(grid.n) if grid.n >= _SINGULAR_DIMENSION else SingularSetModel.empty(grid.n)
    else:
        singular = SingularSetModel.empty(grid.n)
    gauge = None
    if spec.kind == "zero":
        connection = ConnectionField.zeros(grid, group)
    elif spec.kind == "random_smooth":
        connection = _random_smooth(grid, group, spec, rng)
    elif spec.kind == "pure_gauge":
        connection, gauge = _pure_gauge(grid, group, spec, rng)
    elif spec.kind == "abelian_model":
        connection = _abelian_model(grid, group, spec)
    else:
        connection = _singular_model(grid, group, spec)
    _logger.info(f"generated {spec.kind} connection on {grid} for {group.name}")
    return GeneratedField(connection, singular, gauge)

