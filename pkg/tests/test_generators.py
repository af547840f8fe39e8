"""Tests for the model connections."""

from __future__ import annotations

import numpy as np
import pytest

from gfrg import (
    SU2,
    U1,
    ConfigError,
    GeneratorSpec,
    Grid,
    SingularSetModel,
    UnsupportedSpec,
    abelian_direction,
    connection_magnitude,
    curvature,
    curvature_magnitude,
    derivative,
    generate,
    operator_norm,
    ym_residual,
)


def test_zero_model() -> None:
    """The trivial connection has no gauge and no singular set."""
    generated = generate(GeneratorSpec(kind="zero"), Grid(2, 5), SU2)
    np.testing.assert_array_equal(generated.connection.data, 0.0)
    assert generated.gauge is None
    assert generated.singular.is_empty


@pytest.mark.parametrize("group", [U1, SU2])
def test_random_smooth_is_scaled_to_epsilon(group: object) -> None:
    """The largest curvature of a weak band-limited field is the requested size.

    Parameters:
        group: Structure group.
    """
    grid = Grid(2, 17)
    generated = generate(GeneratorSpec(kind="random_smooth", epsilon=0.01, band=1), grid, group, seed=5)  # type: ignore[arg-type]
    largest = float(np.max(curvature_magnitude(curvature(generated.connection))))
    assert largest == pytest.approx(0.01, rel=0.05)


def test_random_smooth_is_seeded() -> None:
    """The root seed fixes the field."""
    grid = Grid(2, 9)
    spec = GeneratorSpec(kind="random_smooth", band=2)
    first = generate(spec, grid, SU2, seed=11).connection.data
    np.testing.assert_array_equal(first, generate(spec, grid, SU2, seed=11).connection.data)
    assert not np.allclose(first, generate(spec, grid, SU2, seed=12).connection.data)


def test_pure_gauge_is_flat() -> None:
    """A pure gauge carries its gauge and has negligible stencil curvature."""
    grid = Grid(2, 33)
    generated = generate(GeneratorSpec(kind="pure_gauge", band=1), grid, SU2, seed=2)
    assert generated.gauge is not None
    SU2.check_elements(generated.gauge.values)
    data = generated.connection.data
    slope = max(float(np.max(operator_norm(derivative(data[a], b, grid.h)))) for a in range(2) for b in range(2))
    assert slope > 0
    assert float(np.max(curvature_magnitude(curvature(generated.connection)))) < 1e-2 * slope


def test_abelian_model_linear_profile() -> None:
    """`A_0 = epsilon (x_1 - 1/2) X` has constant curvature of size `sqrt(2) epsilon`."""
    grid = Grid(2, 9)
    connection = generate(GeneratorSpec(kind="abelian_model", epsilon=0.1, profile="linear"), grid, U1).connection
    np.testing.assert_allclose(curvature_magnitude(curvature(connection)), 0.1 * np.sqrt(2.0), atol=1e-10)
    np.testing.assert_allclose(ym_residual(connection), 0.0, atol=1e-10)
    np.testing.assert_allclose(connection.data[1], 0.0)


def test_abelian_model_sine_profile() -> None:
    """The sine profile reaches the same largest curvature."""
    grid = Grid(2, 17)
    connection = generate(GeneratorSpec(kind="abelian_model", epsilon=0.1), grid, SU2).connection
    assert float(np.max(curvature_magnitude(curvature(connection)))) == pytest.approx(0.1 * np.sqrt(2.0), rel=1e-2)


def test_abelian_direction() -> None:
    """The circle generator has unit operator norm."""
    np.testing.assert_array_equal(abelian_direction(U1), [[1j]])
    direction = abelian_direction(SU2)
    assert float(operator_norm(direction)) == pytest.approx(1.0)
    SU2.check_algebra(direction)


def test_singular_model() -> None:
    """In dimension 4 the model is singular at the centre of the cube."""
    grid = Grid(4, 5)
    generated = generate(GeneratorSpec(kind="singular_model", epsilon=0.1), grid, SU2)
    assert not generated.singular.is_empty
    assert float(generated.singular.rho(np.full((1, 4), 0.5))[0]) == pytest.approx(0.0)
    magnitude = connection_magnitude(generated.connection)
    assert np.all(np.isfinite(magnitude))
    assert magnitude[2, 2, 2, 2] == 0.0
    assert float(np.max(magnitude)) > 0


def test_singular_model_needs_dimension_four() -> None:
    """Other dimensions are rejected."""
    with pytest.raises(UnsupportedSpec):
        generate(GeneratorSpec(kind="singular_model"), Grid(3, 5), SU2)


def test_singular_set_dimension_must_match() -> None:
    """An explicit singular set must live in the grid dimension."""
    spec = GeneratorSpec(kind="zero", singular_set=SingularSetModel.empty(3).to_dict())
    with pytest.raises(UnsupportedSpec):
        generate(spec, Grid(2, 5), SU2)


@pytest.mark.parametrize(
    "arguments",
    [{"kind": "instanton"}, {"epsilon": -1.0}, {"band": 0}, {"profile": "cubic"}],
)
def test_generator_spec_validation(arguments: dict) -> None:
    """Unknown models and invalid parameters are configuration errors.

    Parameters:
        arguments: Invalid constructor arguments.
    """
    with pytest.raises(ConfigError):
        GeneratorSpec(**arguments)
