"""Tests for grids, stencils and the discrete fields."""

from __future__ import annotations

import numpy as np
import pytest

from gfrg import (
    SU2,
    U1,
    ConfigError,
    ConnectionField,
    ConstraintViolated,
    CurvatureField,
    GaugeField,
    Grid,
    GridMismatch,
    apply_gauge,
    connection_magnitude,
    curvature,
    curvature_magnitude,
    derivative,
    gauge_invariance_defect,
    gradient,
    restrict,
    ym_residual,
)


def _linear_u1(points: np.ndarray) -> np.ndarray:
    values = np.zeros((len(points), 2, 1, 1), dtype=complex)
    values[:, 1, 0, 0] = 1j * points[:, 0]
    return values


def _band_limited_algebra(rng: np.random.Generator, grid: Grid, leading: tuple[int, ...], amplitude: float) -> np.ndarray:
    waves = rng.integers(-1, 2, size=(*leading, 3, 3, grid.n))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(*leading, 3, 3))
    weights = rng.uniform(-1.0, 1.0, size=(*leading, 3, 3)) * amplitude / 3.0
    out = np.zeros((*leading, *grid.shape, 2, 2), dtype=complex)
    for index in np.ndindex(*leading, 3):
        *lead, b = index
        coefficient = np.zeros(grid.shape)
        for mode in range(3):
            angle = 2.0 * np.pi * grid.points @ waves[(*lead, b, mode)] + phases[(*lead, b, mode)]
            coefficient += weights[(*lead, b, mode)] * np.cos(angle)
        out[tuple(lead)] += coefficient[..., None, None] * SU2.algebra_basis[b]
    return out


@pytest.mark.parametrize(("n", "m"), [(1, 9), (5, 9), (2, 4)])
def test_grid_validation(n: int, m: int) -> None:
    """Dimensions outside 2..4 and grids below 5 nodes are rejected.

    Parameters:
        n: Dimension.
        m: Nodes per axis.
    """
    with pytest.raises(ConfigError):
        Grid(n, m)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_grid_weights_sum_to_one(n: int) -> None:
    """The trapezoid weights integrate constants exactly.

    Parameters:
        n: Dimension.
    """
    grid = Grid(n, 5)
    assert grid.weights.shape == grid.shape
    assert float(np.sum(grid.weights)) == pytest.approx(1.0)


def test_grid_geometry() -> None:
    """Coordinates, nearest nodes, interior masks and refinement agree."""
    grid = Grid(2, 9)
    assert grid.h == 0.125
    assert grid.coordinates[-1] == 1.0
    assert grid.points.shape == (9, 9, 2)
    np.testing.assert_array_equal(grid.nearest_index(np.array([[0.26, 0.99], [-0.3, 0.5]])), [[2, 8], [0, 4]])
    assert int(np.sum(grid.interior_mask(2))) == 25
    assert grid.refined() == Grid(2, 17)


@pytest.mark.parametrize(("order", "degree"), [(4, 4), (2, 2)])
def test_derivative_is_exact_on_polynomials(order: int, degree: int) -> None:
    """Each stencil differentiates polynomials up to its order exactly, faces included.

    Parameters:
        order: Stencil order.
        degree: Polynomial degree.
    """
    grid = Grid(2, 9)
    x = grid.points[..., 0]
    values = x**degree + 0.5 * grid.points[..., 1]
    np.testing.assert_allclose(derivative(values, 0, grid.h, order), degree * x ** (degree - 1), atol=1e-10)
    np.testing.assert_allclose(derivative(values, 1, grid.h, order), 0.5, atol=1e-10)


def test_derivative_converges_at_fourth_order() -> None:
    """Halving the spacing divides the interior error by about sixteen."""
    errors = []
    for m in (17, 33):
        x = np.arange(m) / (m - 1)
        error = derivative(np.sin(3.0 * x), 0, 1.0 / (m - 1)) - 3.0 * np.cos(3.0 * x)
        errors.append(np.max(np.abs(error[2:-2])))
    assert 12.0 < errors[0] / errors[1] < 20.0


def test_gradient_stacks_axes() -> None:
    """The gradient has one leading entry per grid axis."""
    grid = Grid(3, 5)
    values = grid.points[..., 0] + 2.0 * grid.points[..., 1] - grid.points[..., 2]
    grad = gradient(values, grid.h, 3)
    assert grad.shape == (3, *grid.shape)
    np.testing.assert_allclose(grad[:, 2, 2, 2], [1.0, 2.0, -1.0], atol=1e-12)


def test_connection_validation() -> None:
    """Shapes and algebra constraints are enforced on construction."""
    grid = Grid(2, 5)
    with pytest.raises(GridMismatch):
        ConnectionField(grid, SU2, np.zeros((2, 5, 5, 1, 1), dtype=complex))
    data = np.zeros((2, 5, 5, 2, 2), dtype=complex)
    data[..., 0, 0] = 1.0
    with pytest.raises(ConstraintViolated):
        ConnectionField(grid, SU2, data)


def test_abelian_curvature_is_exact() -> None:
    """`A = i x_0 dx_1` has curvature `i dx_0 dx_1` and solves the Yang-Mills equation."""
    grid = Grid(2, 9)
    connection = ConnectionField.from_function(grid, U1, _linear_u1)
    curv = curvature(connection)
    np.testing.assert_allclose(curv.data[0, ..., 0, 0], 1j, atol=1e-12)
    np.testing.assert_allclose(curvature_magnitude(curv), np.sqrt(2.0), atol=1e-12)
    np.testing.assert_allclose(ym_residual(connection), 0.0, atol=1e-10)
    np.testing.assert_allclose(connection_magnitude(connection), grid.points[..., 0], atol=1e-12)


def test_constant_connection_curvature_is_a_commutator() -> None:
    """For constant components the curvature is `[A_0, A_1]`."""
    grid = Grid(2, 5)
    basis = SU2.algebra_basis
    data = np.zeros((2, *grid.shape, 2, 2), dtype=complex)
    data[0] = 0.3 * basis[0]
    data[1] = 0.2 * basis[1]
    curv = curvature(ConnectionField(grid, SU2, data))
    expected = 0.06 * (basis[0] @ basis[1] - basis[1] @ basis[0])
    np.testing.assert_allclose(curv.data[0], np.broadcast_to(expected, curv.data[0].shape), atol=1e-12)


def test_curvature_components_are_antisymmetric() -> None:
    """`component(b, a) = -component(a, b)` and `full` agrees with both."""
    grid = Grid(3, 5)
    rng = np.random.default_rng(1)
    data = SU2.random_algebra(rng, (3, *grid.shape))
    curv = CurvatureField(grid, SU2, data)
    assert curv.pairs == [(0, 1), (0, 2), (1, 2)]
    np.testing.assert_array_equal(curv.component(2, 0), -data[1])
    np.testing.assert_array_equal(curv.component(1, 1), 0.0)
    full = curv.full()
    np.testing.assert_array_equal(full[1, 2], data[2])
    np.testing.assert_array_equal(full[2, 1], -data[2])


def test_spline_sampling_reproduces_nodes() -> None:
    """Off-grid evaluation interpolates the nodal data."""
    grid = Grid(2, 9)
    rng = np.random.default_rng(2)
    connection = ConnectionField(grid, SU2, SU2.random_algebra(rng, (2, *grid.shape), scale=0.1))
    nodes = grid.points.reshape(-1, 2)[::7]
    expected = np.moveaxis(connection.data, 0, 2).reshape(-1, 2, 2, 2)[::7]
    np.testing.assert_allclose(connection.sample(nodes), expected, atol=1e-10)


def test_closed_form_sampling() -> None:
    """A connection built from a closed form evaluates it off the grid."""
    grid = Grid(2, 5)
    connection = ConnectionField.from_function(grid, U1, _linear_u1)
    points = np.array([[0.33, 0.1], [0.71, 0.9]])
    np.testing.assert_allclose(connection.sample(points)[:, 1, 0, 0], 1j * points[:, 0])
    np.testing.assert_allclose(connection.scaled(2.0).sample(points)[:, 1, 0, 0], 2j * points[:, 0])


def test_gauge_composition_and_inverse() -> None:
    """A gauge composed with its inverse is the identity."""
    grid = Grid(2, 5)
    rng = np.random.default_rng(3)
    gauge = GaugeField(grid, SU2, SU2.random_element(rng, grid.shape))
    np.testing.assert_allclose(gauge.compose(gauge.inverse()).values, GaugeField.identity(grid, SU2).values, atol=1e-12)
    with pytest.raises(GridMismatch):
        gauge.compose(GaugeField.identity(Grid(2, 9), SU2))


def test_constant_gauge_acts_by_conjugation() -> None:
    """Constant gauges conjugate the connection and the curvature exactly."""
    grid = Grid(3, 5)
    rng = np.random.default_rng(4)
    connection = ConnectionField(grid, SU2, SU2.random_algebra(rng, (3, *grid.shape), scale=0.2))
    element = SU2.random_element(rng)
    gauge = GaugeField.constant(grid, SU2, element)
    gauged = apply_gauge(gauge, connection)
    np.testing.assert_allclose(gauged.data, element @ connection.data @ element.conj().T, atol=1e-12)
    defect = gauge_invariance_defect(gauge, connection)
    assert defect["magnitude"] < 1e-10
    assert defect["conjugation"] < 1e-10


def test_smooth_gauge_covariance_defect_is_small() -> None:
    """Stencil curvature of a smoothly gauged connection is nearly the conjugated curvature."""
    grid = Grid(2, 17)
    x, y = grid.points[..., 0], grid.points[..., 1]
    basis = SU2.algebra_basis
    algebra = 0.4 * np.sin(np.pi * x)[..., None, None] * basis[0] + 0.3 * (x * y)[..., None, None] * basis[2]
    gauge = GaugeField(grid, SU2, SU2.exp(algebra))
    data = np.zeros((2, *grid.shape, 2, 2), dtype=complex)
    data[0] = 0.2 * y[..., None, None] * basis[1]
    data[1] = 0.1 * basis[0]
    defect = gauge_invariance_defect(gauge, ConnectionField(grid, SU2, data))
    assert defect["magnitude"] < 1e-2
    assert defect["conjugation"] < 1e-2


@pytest.mark.parametrize("seed", range(5))
def test_gauge_invariance_defect_is_fourth_order(seed: int) -> None:
    """For band-limited fields and gauges the defect is below `1e-4` at 33 nodes and drops 8x per halving.

    Parameters:
        seed: Seed of the random fields.
    """
    defects = []
    for m in (17, 33):
        grid = Grid(3, m)
        rng = np.random.default_rng(seed)
        connection = ConnectionField(grid, SU2, _band_limited_algebra(rng, grid, (3,), 0.1))
        gauge = GaugeField(grid, SU2, SU2.exp(_band_limited_algebra(rng, grid, (), 0.1)))
        defects.append(gauge_invariance_defect(gauge, connection)["magnitude"])
    assert defects[1] <= 1e-4
    assert defects[0] >= 8.0 * defects[1]


def test_restrict_to_nested_grid() -> None:
    """Restriction picks the shared nodes and rejects non-nested grids."""
    fine = Grid(2, 9)
    values = fine.points[..., 0] + fine.points[..., 1]
    coarse = restrict(values, fine, Grid(2, 5))
    np.testing.assert_allclose(coarse, Grid(2, 5).points.sum(axis=-1))
    with pytest.raises(GridMismatch):
        restrict(values, fine, Grid(2, 6))
