"""Tests for the averaged radial gauges, their audits, the Vitali cover and the truncation."""

from __future__ import annotations

import numpy as np
import pytest

from gfrg import (
    SU2,
    BallCover,
    ConnectionField,
    EmptyDomain,
    GeneratorSpec,
    Grid,
    GridMismatch,
    MaskMismatch,
    PartialGauge,
    SamplingConfig,
    StratConfig,
    WeightMassTooSmall,
    base_gauge,
    bump,
    choose_origin,
    gauge_potential_ratio,
    generate,
    inductive_step,
    lipschitz_audit,
    pointwise_bound_ratio,
    truncate,
    vitali_cover,
)

_SAMPLING = SamplingConfig(base_paths=4, inductive_paths=4, origin_candidates=8, lipschitz_pairs=4, lipschitz_points=4)


@pytest.fixture(name="grid")
def _fixture_grid() -> Grid:
    return Grid(2, 9)


@pytest.fixture(name="zero")
def _fixture_zero(grid: Grid) -> ConnectionField:
    return ConnectionField.zeros(grid, SU2)


def _identity_gauge(grid: Grid, mask: np.ndarray, level: int = 1) -> PartialGauge:
    return PartialGauge(grid, SU2, mask, SU2.identity(grid.shape), level, np.zeros(grid.shape))


def test_bump_profile() -> None:
    """The cutoff is one up to 1, zero from 2 and monotone in between."""
    t = np.linspace(0.0, 3.0, 61)
    values = bump(t)
    np.testing.assert_allclose(values[t <= 1.0], 1.0)
    np.testing.assert_allclose(values[t >= 2.0], 0.0)
    assert np.all(np.diff(values) <= 0)
    assert float(bump(np.array(1.5))) == pytest.approx(0.5)


def test_partial_gauge_filling(grid: Grid) -> None:
    """Filling copies the nearest defined value and refuses empty domains."""
    element = SU2.random_element(np.random.default_rng(7))
    values = SU2.identity(grid.shape)
    values[0, 0] = element
    mask = np.zeros(grid.shape, dtype=bool)
    mask[0, 0] = True
    gauge = PartialGauge(grid, SU2, mask, values, 1, np.zeros(grid.shape))
    np.testing.assert_allclose(gauge.filled().values[5, 7], element)
    with pytest.raises(EmptyDomain):
        _identity_gauge(grid, np.zeros(grid.shape, dtype=bool)).filled()
    with pytest.raises(GridMismatch):
        PartialGauge(grid, SU2, mask[:-1], values, 1, np.zeros(grid.shape))


def test_choose_origin(grid: Grid) -> None:
    """The origin minimises the sampled kernel integral inside the level."""
    f_mag = np.exp(-30.0 * np.sum((grid.points - 0.2) ** 2, axis=-1))
    omega = grid.interior_mask(1)
    choice = choose_origin(f_mag, grid, omega, np.random.default_rng(8), sample_size=16)
    assert omega[choice.index]
    np.testing.assert_allclose(choice.point, np.array(choice.index) * grid.h)
    assert choice.value <= choice.median
    assert choice.total == pytest.approx(float(np.sum(f_mag * grid.weights)))
    with pytest.raises(EmptyDomain):
        choose_origin(f_mag, grid, np.zeros(grid.shape, dtype=bool), np.random.default_rng(8))


def test_base_gauge_of_the_trivial_connection(grid: Grid, zero: ConnectionField) -> None:
    """All samples are the identity, so the gauge is the identity with zero statistic.

    Parameters:
        grid: The grid.
        zero: Trivial connection.
    """
    omega = grid.interior_mask(1)
    gauge = base_gauge(zero, omega, np.array([0.5, 0.5]), sampling=_SAMPLING)
    assert gauge.level == 1
    assert gauge.dropped == 0
    np.testing.assert_array_equal(gauge.mask, omega)
    np.testing.assert_allclose(gauge.values, SU2.identity(grid.shape), atol=1e-12)
    np.testing.assert_allclose(gauge.statistics[omega], 0.0, atol=1e-12)
    assert np.all(np.isnan(gauge.statistics[~omega]))
    np.testing.assert_array_equal(gauge.origin, [0.5, 0.5])
    with pytest.raises(EmptyDomain):
        base_gauge(zero, np.zeros(grid.shape, dtype=bool), np.array([0.5, 0.5]), sampling=_SAMPLING)


def test_base_gauge_is_deterministic(grid: Grid) -> None:
    """The same seed gives the same gauge regardless of the worker count."""
    connection = generate(GeneratorSpec(kind="random_smooth", epsilon=0.2, band=1), grid, SU2, seed=3).connection
    omega = grid.interior_mask(2)
    single = base_gauge(connection, omega, np.array([0.5, 0.5]), sampling=_SAMPLING, seed=4)
    threaded = base_gauge(connection, omega, np.array([0.5, 0.5]), sampling=_SAMPLING, seed=4, threads=2)
    np.testing.assert_array_equal(single.values, threaded.values)
    assert np.nanmax(single.statistics) > 0


def test_base_gauge_recovers_a_pure_gauge() -> None:
    """For `A = sigma(0)` every sample is `sigma(x*) sigma(x)^-1`, so the average is exact."""
    grid = Grid(2, 9)
    generated = generate(GeneratorSpec(kind="pure_gauge", band=1), grid, SU2, seed=1)
    assert generated.gauge is not None
    omega = np.ones(grid.shape, dtype=bool)
    gauge = base_gauge(generated.connection, omega, np.array([0.5, 0.5]), sampling=_SAMPLING)
    np.testing.assert_allclose(gauge.statistics, 0.0, atol=1e-6)
    sigma = generated.gauge.values
    expected = sigma[4, 4] @ np.conj(np.swapaxes(sigma, -1, -2))
    np.testing.assert_allclose(gauge.values, expected, atol=1e-7)


def test_inductive_step_extends_the_gauge(grid: Grid, zero: ConnectionField) -> None:
    """The next level covers its whole domain and records the kernel bound.

    Parameters:
        grid: The grid.
        zero: Trivial connection.
    """
    first = base_gauge(zero, grid.interior_mask(1), np.array([0.5, 0.5]), sampling=_SAMPLING)
    omega = np.ones(grid.shape, dtype=bool)
    second = inductive_step(zero, first, omega, StratConfig(0.05), sampling=_SAMPLING, f_mag=np.zeros(grid.shape))
    assert second.level == 2
    assert second.mask.all()
    np.testing.assert_allclose(second.values, SU2.identity(grid.shape), atol=1e-12)
    assert second.reference is not None
    np.testing.assert_allclose(second.reference, 0.0)


def test_inductive_step_needs_weight_mass(grid: Grid, zero: ConnectionField) -> None:
    """A node far from the previous domain sees no weight.

    Parameters:
        grid: The grid.
        zero: Trivial connection.
    """
    mask = np.zeros(grid.shape, dtype=bool)
    mask[0, 0] = True
    with pytest.raises(WeightMassTooSmall):
        inductive_step(zero, _identity_gauge(grid, mask), np.ones(grid.shape, dtype=bool), StratConfig(0.05), sampling=_SAMPLING)
    with pytest.raises(EmptyDomain):
        inductive_step(zero, _identity_gauge(grid, mask), np.zeros(grid.shape, dtype=bool), StratConfig(0.05), sampling=_SAMPLING)


def test_lipschitz_audit_of_the_trivial_connection(grid: Grid, zero: ConnectionField) -> None:
    """Nothing moves, so every measured constant vanishes.

    Parameters:
        grid: The grid.
        zero: Trivial connection.
    """
    gauge = _identity_gauge(grid, np.ones(grid.shape, dtype=bool))
    report = lipschitz_audit(zero, gauge, np.zeros(grid.shape), StratConfig(0.05), np.random.default_rng(9), sampling=_SAMPLING)
    assert len(report.constants) == _SAMPLING.lipschitz_pairs
    assert report.max_constant == 0.0
    assert report.max_pointwise == 0.0


def test_bound_ratios(grid: Grid, zero: ConnectionField) -> None:
    """Positive numerators over vanishing bounds are infinite; zero over zero is zero.

    Parameters:
        grid: The grid.
        zero: Trivial connection.
    """
    mask = np.ones(grid.shape, dtype=bool)
    assert gauge_potential_ratio(zero, np.zeros(grid.shape), mask) == 0.0
    data = np.zeros_like(zero.data)
    data[0] = 0.1 * SU2.algebra_basis[0]
    moving = zero.with_data(data)
    ratios = pointwise_bound_ratio(moving, np.zeros(grid.shape), mask)
    assert np.all(np.isinf(ratios))
    finite = pointwise_bound_ratio(moving, np.full(grid.shape, 0.2), mask)
    np.testing.assert_allclose(finite, 0.5)


def test_ball_cover_geometry(grid: Grid) -> None:
    """Disjointness, covering and the cutoff of a hand-made cover."""
    cover = BallCover(np.array([[0.25, 0.25], [0.75, 0.75]]), np.array([0.1, 0.1]))
    assert len(cover) == 2
    assert cover.is_disjoint()
    assert cover.covers(np.array([[0.3, 0.3], [0.7, 0.9]]))
    assert not cover.covers(np.array([[0.25, 0.25]]), factor=0.0)
    overlapping = BallCover(np.array([[0.25, 0.25], [0.3, 0.25]]), np.array([0.1, 0.1]))
    assert not overlapping.is_disjoint()
    psi = cover.cutoff(grid)
    assert psi[2, 2] == 1.0
    assert np.all((psi >= 0) & (psi <= 1))
    assert not BallCover.empty(2).covers(np.array([[0.5, 0.5]]))
    np.testing.assert_array_equal(BallCover.empty(2).cutoff(grid), 0.0)


def test_vitali_cover(grid: Grid) -> None:
    """The selected balls are disjoint and their dilates cover the complement."""
    distance = np.linalg.norm(grid.points - 0.5, axis=-1)
    f_mag = np.exp(-20.0 * distance**2)
    cfg = StratConfig(0.05)
    assert len(vitali_cover(f_mag, grid, np.ones(grid.shape, dtype=bool), cfg, 1)) == 0
    omega = distance >= 0.2
    cover = vitali_cover(f_mag, grid, omega, cfg, 1)
    assert len(cover) >= 1
    assert cover.is_disjoint()
    assert cover.covers(grid.points[~omega])


def test_truncate_the_trivial_connection(grid: Grid, zero: ConnectionField) -> None:
    """Cutting off the trivial connection leaves it trivial.

    Parameters:
        grid: The grid.
        zero: Trivial connection.
    """
    gauge = _identity_gauge(grid, np.ones(grid.shape, dtype=bool))
    cover = BallCover(np.array([[0.5, 0.5]]), np.array([0.05]))
    truncated, report = truncate(zero, gauge, cover, StratConfig(0.05), rho=np.full(grid.shape, 20.0))
    np.testing.assert_allclose(truncated.data, 0.0)
    assert report.curvature_norm == 0.0
    assert report.ratio_to_epsilon == 0.0
    assert report.cutoff_nodes > 0
    assert report.far_region_nodes == grid.size
    assert report.far_region_defect == 0.0


def test_truncate_requires_the_gauge_domain(grid: Grid, zero: ConnectionField) -> None:
    """Nodes kept by the cutoff must carry gauge values.

    Parameters:
        grid: The grid.
        zero: Trivial connection.
    """
    mask = np.ones(grid.shape, dtype=bool)
    mask[4, 4] = False
    with pytest.raises(MaskMismatch):
        truncate(zero, _identity_gauge(grid, mask), BallCover.empty(2), StratConfig(0.05))
    covered, _ = truncate(zero, _identity_gauge(grid, mask), BallCover(np.array([[0.5, 0.5]]), np.array([0.05])), StratConfig(0.05))
    assert covered.grid == grid
