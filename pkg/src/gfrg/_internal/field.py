from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Callable, TypeAlias

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage

from gfrg._internal.errors import ConfigError, GridMismatch
from gfrg._internal.lie import AlgebraElement, GroupElement, LieGroup, dagger, operator_norm

ScalarField: TypeAlias = NDArray[np.float64]
"""A real value per grid node, shape `grid.shape`."""

NodeMask: TypeAlias = NDArray[np.bool_]
"""A boolean per grid node, shape `grid.shape`."""

Evaluator: TypeAlias = Callable[[NDArray[np.float64]], NDArray[np.complex128]]
"""Closed-form field values: points `(k, n)` to components `(k, c, N, N)`."""

_CENTRAL = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_EDGE0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_EDGE1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0


@dataclass(frozen=True)
class Grid:
    """Uniform grid over the unit cube `[0, 1]^n` with `m` nodes per axis."""

    n: int
    """Dimension, between 2 and 4."""
    m: int
    """Nodes per axis, at least 5."""

    def __post_init__(self) -> None:
        if not 2 <= self.n <= 4:  # noqa: PLR2004
            raise ConfigError(f"grid dimension must be 2..4, got {self.n}")
        if self.m < 5:  # noqa: PLR2004
            raise ConfigError(f"grid needs at least 5 nodes per axis, got {self.m}")

    @property
    def h(self) -> float:
        """Grid spacing `1 / (m - 1)`."""
        return 1.0 / (self.m - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        """Node array shape."""
        return (self.m,) * self.n

    @property
    def size(self) -> int:
        """Number of nodes."""
        return self.m**self.n

    @cached_property
    def coordinates(self) -> NDArray[np.float64]:
        """Node coordinates along one axis; both endpoints are exact."""
        return np.arange(self.m) / (self.m - 1)

    @cached_property
    def points(self) -> NDArray[np.float64]:
        """Node positions, shape `(*shape, n)`."""
        axes = np.meshgrid(*([self.coordinates] * self.n), indexing="ij")
        return np.stack(axes, axis=-1)

    @cached_property
    def weights(self) -> ScalarField:
        """Quadrature weight of each node (trapezoid rule, halved per boundary face).

        The weights are the volumes of the node cells clipped to the cube and sum to one.
        """
        line = np.full(self.m, self.h)
        line[[0, -1]] = self.h / 2.0
        weights = line
        for _ in range(self.n - 1):
            weights = np.multiply.outer(weights, line)
        return weights

    def nearest_index(self, points: NDArray) -> NDArray[np.intp]:
        """Index of the nearest node to each point.

        Args:
            points: Array of shape `(..., n)`.

        Returns:
            Integer array of the same shape.
        """
        return np.clip(np.rint(np.asarray(points) / self.h), 0, self.m - 1).astype(np.intp)

    def interior_mask(self, width: int = 2) -> NodeMask:
        """Nodes at least `width` nodes away from every face.

        Args:
            width: Number of excluded layers.

        Returns:
            The mask.
        """
        line = np.zeros(self.m, dtype=bool)
        line[width : self.m - width] = True
        mask = line
        for _ in range(self.n - 1):
            mask = np.logical_and.outer(mask, line)
        return mask

    def refined(self) -> Grid:
        """The grid with spacing halved (`2m - 1` nodes per axis)."""
        return Grid(self.n, 2 * self.m - 1)


def derivative(values: NDArray, axis: int, h: float, order: int = 4) -> NDArray:
    """Finite-difference derivative along a grid axis.

    Fourth order uses the five-point central stencil in the interior and
    one-sided five-point stencils on the two layers next to each face.

    Args:
        values: Array whose leading axes are grid axes.
        axis: Grid axis to differentiate along.
        h: Grid spacing.
        order: 4 (default) or 2.

    Returns:
        Array of the same shape.
    """
    f = np.moveaxis(np.asarray(values), axis, 0)
    out = np.empty_like(f)
    if order == 2:  # noqa: PLR2004
        out[1:-1] = (f[2:] - f[:-2]) / 2.0
        out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / 2.0
        out[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / 2.0
    elif order == 4:  # noqa: PLR2004
        out[2:-2] = _CENTRAL[0] * f[:-4] + _CENTRAL[1] * f[1:-3] + _CENTRAL[3] * f[3:-1] + _CENTRAL[4] * f[4:]
        head = f[:5]
        tail = f[::-1][:5]
        out[0] = np.tensordot(_EDGE0, head, axes=1)
        out[1] = np.tensordot(_EDGE1, head, axes=1)
        out[-1] = -np.tensordot(_EDGE0, tail, axes=1)
        out[-2] = -np.tensordot(_EDGE1, tail, axes=1)
    else:
        raise ConfigError(f"unsupported stencil order {order}")
    return np.moveaxis(out / h, 0, axis)


def gradient(values: NDArray, h: float, n: int, order: int = 4) -> NDArray:
    """Stack of derivatives along the first `n` axes.

    Args:
        values: Array whose leading `n` axes are grid axes.
        h: Grid spacing.
        n: Number of grid axes.
        order: Stencil order.

    Returns:
        Array with a new leading axis of length `n`.
    """
    return np.stack([derivative(values, axis, h, order) for axis in range(n)])


class _SplineSampler:
    """Spline interpolation of a stack of matrix-valued grid arrays."""

    def __init__(self, data: NDArray[np.complex128], h: float, order: int) -> None:
        self._h = h
        self._order = order
        self._lead = data.shape[0]
        self._size = data.shape[-1]
        grid_ndim = data.ndim - 3
        stacked = np.moveaxis(data, (-2, -1), (1, 2)).reshape(-1, *data.shape[1 : 1 + grid_ndim])
        self._coefficients = [
            ndimage.spline_filter(part, order=order, mode="mirror")
            for array in stacked
            for part in (array.real, array.imag)
        ]

    def __call__(self, points: NDArray[np.float64]) -> NDArray[np.complex128]:
        coords = (np.asarray(points, dtype=float) / self._h).T
        values = np.empty((len(self._coefficients) // 2, coords.shape[1]), dtype=complex)
        for index in range(len(values)):
            real = ndimage.map_coordinates(
                self._coefficients[2 * index], coords, order=self._order, mode="mirror", prefilter=False,
            )
            imag = ndimage.map_coordinates(
                self._coefficients[2 * index + 1], coords, order=self._order, mode="mirror", prefilter=False,
            )
            values[index] = real + 1j * imag
        values = values.reshape(self._lead, self._size, self._size, -1)
        return np.moveaxis(values, -1, 0)


@dataclass(frozen=True, eq=False)
class ConnectionField:
    """A Lie-algebra-valued 1-form sampled at the nodes of a grid."""

    grid: Grid
    """The grid."""
    group: LieGroup
    """Structure group."""
    data: NDArray[np.complex128]
    """Components `A_alpha(x)`, shape `(n, *grid.shape, N, N)`."""
    evaluator: Evaluator | None = field(default=None, repr=False)
    """Optional closed form used for off-grid evaluation."""
    interpolation_order: int = 3
    """Spline order for off-grid evaluation without a closed form."""

    def __post_init__(self) -> None:
        expected = (self.grid.n, *self.grid.shape, self.group.N, self.group.N)
        if self.data.shape != expected:
            raise GridMismatch(f"connection data has shape {self.data.shape}, expected {expected}")
        self.group.check_algebra(self.data)

    @classmethod
    def zeros(cls, grid: Grid, group: LieGroup) -> ConnectionField:
        """The trivial connection.

        Args:
            grid: The grid.
            group: Structure group.

        Returns:
            A connection with all components zero.
        """
        data = np.zeros((grid.n, *grid.shape, group.N, group.N), dtype=complex)

        def _zero(points: NDArray[np.float64]) -> NDArray[np.complex128]:
            return np.zeros((len(points), grid.n, group.N, group.N), dtype=complex)

        return cls(grid, group, data, evaluator=_zero)

    @classmethod
    def from_function(cls, grid: Grid, group: LieGroup, function: Evaluator) -> ConnectionField:
        """Sample a closed-form connection and keep the closed form for transport.

        Args:
            grid: The grid.
            group: Structure group.
            function: Maps points `(k, n)` to components `(k, n, N, N)`.

        Returns:
            The connection.
        """
        points = grid.points.reshape(-1, grid.n)
        values = function(points).reshape(*grid.shape, grid.n, group.N, group.N)
        return cls(grid, group, np.ascontiguousarray(np.moveaxis(values, grid.n, 0)), evaluator=function)

    @property
    def n(self) -> int:
        """Dimension of the base cube."""
        return self.grid.n

    def with_data(self, data: NDArray[np.complex128]) -> ConnectionField:
        """A connection on the same grid with new nodal data and no closed form.

        Args:
            data: New components.

        Returns:
            The connection.
        """
        return ConnectionField(self.grid, self.group, data, interpolation_order=self.interpolation_order)

    def scaled(self, factor: float) -> ConnectionField:
        """The connection `factor * A`.

        Args:
            factor: Real scale.

        Returns:
            The scaled connection (closed form kept when present).
        """
        evaluator = None
        if self.evaluator is not None:
            base = self.evaluator
            evaluator = lambda points: factor * base(points)  # noqa: E731
        return ConnectionField(self.grid, self.group, factor * self.data, evaluator, self.interpolation_order)

    @cached_property
    def _sampler(self) -> _SplineSampler:
        return _SplineSampler(self.data, self.grid.h, self.interpolation_order)

    def sample(self, points: NDArray[np.float64]) -> AlgebraElement:
        """Evaluate all components at arbitrary points of the cube.

        Args:
            points: Array of shape `(k, n)`.

        Returns:
            Array of shape `(k, n, N, N)`.
        """
        points = np.asarray(points, dtype=float).reshape(-1, self.n)
        if self.evaluator is not None:
            return self.evaluator(points)
        return self.group.to_algebra(self._sampler(points))


@dataclass(frozen=True, eq=False)
class CurvatureField:
    """A Lie-algebra-valued 2-form; only components `F_ab` with `a < b` are stored."""

    grid: Grid
    """The grid."""
    group: LieGroup
    """Structure group."""
    data: NDArray[np.complex128]
    """Components in `pairs` order, shape `(n(n-1)/2, *grid.shape, N, N)`."""
    interpolation_order: int = 3
    """Spline order for off-grid evaluation."""

    @property
    def pairs(self) -> list[tuple[int, int]]:
        """Index pairs `(a, b)` with `a < b`, in storage order."""
        return list(combinations(range(self.grid.n), 2))

    def component(self, a: int, b: int) -> NDArray[np.complex128]:
        """The component `F_ab` for any pair of axes.

        Args:
            a: First axis.
            b: Second axis.

        Returns:
            Array of shape `(*grid.shape, N, N)`; zero when `a == b`.
        """
        if a == b:
            return np.zeros(self.data.shape[1:], dtype=complex)
        if a < b:
            return self.data[self.pairs.index((a, b))]
        return -self.data[self.pairs.index((b, a))]

    @cached_property
    def _sampler(self) -> _SplineSampler:
        return _SplineSampler(self.data, self.grid.h, self.interpolation_order)

    def sample(self, points: NDArray[np.float64]) -> AlgebraElement:
        """Interpolate the stored components at arbitrary points.

        Args:
            points: Array of shape `(k, n)`.

        Returns:
            Array of shape `(k, n(n-1)/2, N, N)`.
        """
        points = np.asarray(points, dtype=float).reshape(-1, self.grid.n)
        return self.group.to_algebra(self._sampler(points))

    def full(self, values: NDArray | None = None) -> NDArray[np.complex128]:
        """Expand stored pairs to the antisymmetric `(n, n, ...)` form.

        Args:
            values: Pair-indexed values (defaults to `data`).

        Returns:
            Array with two leading axis indices.
        """
        values = self.data if values is None else values
        n = self.grid.n
        out = np.zeros((n, n, *values.shape[1:]), dtype=complex)
        for index, (a, b) in enumerate(self.pairs):
            out[a, b] = values[index]
            out[b, a] = -values[index]
        return out


@dataclass(frozen=True, eq=False)
class GaugeField:
    """A group-valued function on the grid nodes."""

    grid: Grid
    """The grid."""
    group: LieGroup
    """Structure group."""
    values: GroupElement
    """Values `sigma(x)`, shape `(*grid.shape, N, N)`."""

    def __post_init__(self) -> None:
        expected = (*self.grid.shape, self.group.N, self.group.N)
        if self.values.shape != expected:
            raise GridMismatch(f"gauge values have shape {self.values.shape}, expected {expected}")
        self.group.check_elements(self.values, tol=1e-9)

    @classmethod
    def identity(cls, grid: Grid, group: LieGroup) -> GaugeField:
        """The identity gauge transformation.

        Args:
            grid: The grid.
            group: Structure group.

        Returns:
            The gauge field equal to `1_G` everywhere.
        """
        return cls(grid, group, group.identity(grid.shape))

    @classmethod
    def constant(cls, grid: Grid, group: LieGroup, element: GroupElement) -> GaugeField:
        """A constant gauge transformation.

        Args:
            grid: The grid.
            group: Structure group.
            element: The constant value.

        Returns:
            The gauge field.
        """
        values = np.broadcast_to(np.asarray(element, dtype=complex), (*grid.shape, group.N, group.N)).copy()
        return cls(grid, group, values)

    def inverse(self) -> GaugeField:
        """Pointwise inverse."""
        return GaugeField(self.grid, self.group, dagger(self.values))

    def compose(self, other: GaugeField) -> GaugeField:
        """Pointwise product `self * other`, acting as `other` first.

        Args:
            other: Gauge field on the same grid.

        Returns:
            The composed gauge field.

        Raises:
            GridMismatch: If the grids differ.
        """
        _check_same(self.grid, self.group, other.grid, other.group)
        return GaugeField(self.grid, self.group, self.values @ other.values)


def _check_same(grid: Grid, group: LieGroup, other_grid: Grid, other_group: LieGroup) -> None:
    if grid != other_grid or group.N != other_group.N or group.special != other_group.special:
        raise GridMismatch(f"fields live on different grids or groups: {grid}/{group.name} vs {other_grid}/{other_group.name}")


def curvature(connection: ConnectionField, order: int = 4) -> CurvatureField:
    """Curvature `F_ab = d_a A_b - d_b A_a + [A_a, A_b]` by finite differences.

    Args:
        connection: The connection.
        order: Stencil order (4 or 2).

    Returns:
        The curvature.
    """
    grid = connection.grid
    data = connection.data
    components = []
    for a, b in combinations(range(grid.n), 2):
        commutator = data[a] @ data[b] - data[b] @ data[a]
        components.append(derivative(data[b], a, grid.h, order) - derivative(data[a], b, grid.h, order) + commutator)
    stacked = np.array(components)
    return CurvatureField(grid, connection.group, connection.group.to_algebra(stacked), connection.interpolation_order)


def apply_gauge(gauge: GaugeField, connection: ConnectionField, order: int = 4) -> ConnectionField:
    """Gauge action `sigma A sigma^-1 - (d sigma) sigma^-1`.

    Args:
        gauge: The gauge transformation.
        connection: The connection.
        order: Stencil order for `d sigma`.

    Returns:
        The transformed connection.

    Raises:
        GridMismatch: If the fields live on different grids or groups.
    """
    _check_same(gauge.grid, gauge.group, connection.grid, connection.group)
    sigma = gauge.values
    inverse = dagger(sigma)
    out = np.empty_like(connection.data)
    for alpha in range(connection.n):
        d_sigma = derivative(sigma, alpha, gauge.grid.h, order)
        out[alpha] = sigma @ connection.data[alpha] @ inverse - d_sigma @ inverse
    return connection.with_data(connection.group.to_algebra(out))


def curvature_magnitude(curv: CurvatureField) -> ScalarField:
    """Pointwise `|F| = (sum over all ordered pairs of |F_ab|^2)^(1/2)` with operator norms.

    Args:
        curv: The curvature.

    Returns:
        The scalar field.
    """
    return np.sqrt(2.0 * np.sum(operator_norm(curv.data) ** 2, axis=0))


def connection_magnitude(connection: ConnectionField) -> ScalarField:
    """Pointwise `|A| = (sum_a |A_a|^2)^(1/2)` with operator norms.

    Args:
        connection: The connection.

    Returns:
        The scalar field.
    """
    return np.sqrt(np.sum(operator_norm(connection.data) ** 2, axis=0))


def ym_residual(connection: ConnectionField, order: int = 4) -> ScalarField:
    """Norm of the covariant divergence of the curvature.

    Computes `R_b = sum_a (d_a F_ab + [A_a, F_ab])` and returns
    `(sum_b |R_b|^2)^(1/2)`; it vanishes for Yang-Mills connections.

    Args:
        connection: The connection.
        order: Stencil order.

    Returns:
        The scalar field.
    """
    curv = curvature(connection, order)
    full = curv.full()
    grid = connection.grid
    residual = np.zeros_like(connection.data)
    for b in range(grid.n):
        for a in range(grid.n):
            if a == b:
                continue
            f_ab = full[a, b]
            residual[b] += derivative(f_ab, a, grid.h, order) + connection.data[a] @ f_ab - f_ab @ connection.data[a]
    return np.sqrt(np.sum(operator_norm(residual) ** 2, axis=0))


def gauge_invariance_defect(gauge: GaugeField, connection: ConnectionField, width: int = 2) -> dict[str, float]:
    """Measure how far stencil curvature is from exact gauge covariance.

    Args:
        gauge: The gauge transformation.
        connection: The connection.
        width: Boundary layers excluded from the maxima.

    Returns:
        `magnitude`: max of `||F(sigma(A))| - |F(A)||`;
        `conjugation`: max of `|F(sigma(A)) - sigma F(A) sigma^-1|` over components.
    """
    before = curvature(connection)
    after = curvature(apply_gauge(gauge, connection))
    interior = connection.grid.interior_mask(width)
    magnitude = np.abs(curvature_magnitude(after) - curvature_magnitude(before))[interior]
    conjugated = gauge.values @ before.data @ dagger(gauge.values)
    conjugation = np.max(operator_norm(after.data - conjugated), axis=0)[interior]
    return {
        "magnitude": float(np.max(magnitude, initial=0.0)),
        "conjugation": float(np.max(conjugation, initial=0.0)),
    }


def restrict(values: NDArray, grid: Grid, coarse: Grid) -> NDArray:
    """Values of a fine-grid array at the nodes shared with a coarser grid.

    Args:
        values: Array whose leading axes are the fine grid axes.
        grid: Fine grid.
        coarse: Coarse grid with `(grid.m - 1)` divisible by `(coarse.m - 1)`.

    Returns:
        The restricted array.

    Raises:
        GridMismatch: If the grids do not nest.
    """
    if grid.n != coarse.n or (grid.m - 1) % (coarse.m - 1):
        raise GridMismatch(f"{coarse} does not nest in {grid}")
    stride = (grid.m - 1) // (coarse.m - 1)
    return np.asarray(values)[(slice(None, None, stride),) * grid.n]

