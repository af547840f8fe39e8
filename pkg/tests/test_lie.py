"""Tests for the matrix groups, their logarithm and the equivariant projection."""

from __future__ import annotations

import numpy as np
import pytest

from gfrg import (
    SU2,
    U1,
    ClusteringViolated,
    ConfigError,
    ConstraintViolated,
    LogarithmBranchCut,
    OutsideTubularNeighbourhood,
    WeightedSamples,
    clustering_statistic,
    dagger,
    group_from_tag,
    operator_norm,
)


@pytest.fixture(name="rng")
def _fixture_rng() -> np.random.Generator:
    return np.random.default_rng(20)


def test_operator_norm_matches_svd(rng: np.random.Generator) -> None:
    """The closed form for 2 x 2 matrices agrees with the largest singular value.

    Parameters:
        rng: Seeded random generator.
    """
    matrices = rng.normal(size=(50, 2, 2)) + 1j * rng.normal(size=(50, 2, 2))
    expected = np.linalg.svd(matrices, compute_uv=False)[:, 0]
    np.testing.assert_allclose(operator_norm(matrices), expected, rtol=1e-10)


def test_algebra_basis_has_unit_norm() -> None:
    """Every basis element of su(2) is anti-hermitian, traceless and of unit norm."""
    basis = SU2.algebra_basis
    assert basis.shape == (3, 2, 2)
    np.testing.assert_allclose(operator_norm(basis), 1.0)
    SU2.check_algebra(basis)


def test_exp_log_round_trip(rng: np.random.Generator) -> None:
    """The principal logarithm inverts the exponential inside the injectivity radius.

    Parameters:
        rng: Seeded random generator.
    """
    x = SU2.random_algebra(rng, (40,), scale=0.5)
    x = x[operator_norm(x) < 3.0]
    np.testing.assert_allclose(SU2.log(SU2.exp(x)), x, atol=1e-10)


def test_u1_logarithm_is_the_angle() -> None:
    """On the circle the logarithm returns `i` times the principal angle."""
    angles = np.array([-3.0, -0.5, 0.0, 1.2, 3.1])
    elements = np.exp(1j * angles)[:, None, None]
    np.testing.assert_allclose(U1.log(elements)[:, 0, 0], 1j * angles, atol=1e-12)


def test_log_raises_on_branch_cut() -> None:
    """An eigenvalue at -1 has no principal logarithm."""
    with pytest.raises(LogarithmBranchCut):
        SU2.log(-np.eye(2, dtype=complex))
    with pytest.raises(LogarithmBranchCut):
        U1.log(np.array([[-1.0 + 0.0j]]))


def test_distance_is_bi_invariant(rng: np.random.Generator) -> None:
    """Left and right translations preserve the distance.

    Parameters:
        rng: Seeded random generator.
    """
    g = SU2.exp(SU2.random_algebra(rng, (10,), scale=0.3))
    h = SU2.exp(SU2.random_algebra(rng, (10,), scale=0.3))
    k = SU2.random_element(rng, (10,))
    base = SU2.distance(g, h)
    np.testing.assert_allclose(SU2.distance(k @ g, k @ h), base, atol=1e-10)
    np.testing.assert_allclose(SU2.distance(g @ k, h @ k), base, atol=1e-10)


def test_distance_fallback_is_chordal() -> None:
    """With the fallback the branch cut yields the chordal distance."""
    identity = np.eye(2, dtype=complex)
    assert float(SU2.distance(identity, -identity, fallback=True)) == pytest.approx(2.0)


def test_projection_is_right_equivariant(rng: np.random.Generator) -> None:
    """`project(M g) = project(M) g` for group elements `g`.

    Parameters:
        rng: Seeded random generator.
    """
    base = SU2.random_element(rng, (20,))
    noise = 0.05 * (rng.normal(size=(20, 2, 2)) + 1j * rng.normal(size=(20, 2, 2)))
    matrices = base + noise
    g = SU2.random_element(rng, (20,))
    np.testing.assert_allclose(SU2.project(matrices @ g), SU2.project(matrices) @ g, atol=1e-10)
    SU2.check_elements(SU2.project(matrices))


def test_projection_fixes_group_elements(rng: np.random.Generator) -> None:
    """Group elements are their own projection.

    Parameters:
        rng: Seeded random generator.
    """
    g = SU2.random_element(rng, (5,))
    np.testing.assert_allclose(SU2.project(g), g, atol=1e-12)


def test_projection_rejects_far_matrices() -> None:
    """Singular values outside the tubular neighbourhood are rejected with diagnostics."""
    with pytest.raises(OutsideTubularNeighbourhood) as error:
        SU2.project(3.0 * np.eye(2, dtype=complex))
    assert error.value.details["largest_singular_value"] == pytest.approx(3.0)


def test_average_of_clustered_samples(rng: np.random.Generator) -> None:
    """The projected mean of tightly clustered samples lies next to them.

    Parameters:
        rng: Seeded random generator.
    """
    centre = SU2.random_element(rng)
    spread = SU2.exp(SU2.random_algebra(rng, (30,), scale=0.02))
    samples = WeightedSamples.uniform(centre @ spread)
    assert clustering_statistic(samples) < 0.2
    average = SU2.average(samples)
    assert float(SU2.distance(average, centre)) < 0.05


def test_average_of_identical_samples_is_exact(rng: np.random.Generator) -> None:
    """Identical samples have zero statistic and average to themselves.

    Parameters:
        rng: Seeded random generator.
    """
    g = SU2.random_element(rng)
    samples = WeightedSamples(np.stack([g, g, g]), np.array([1.0, 2.0, 0.5]))
    assert clustering_statistic(samples) == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(SU2.average(samples), g, atol=1e-12)


def test_average_rejects_spread_samples() -> None:
    """Antipodal samples violate the clustering bound."""
    identity = np.eye(2, dtype=complex)
    with pytest.raises(ClusteringViolated) as error:
        SU2.average(WeightedSamples.uniform(np.stack([identity, -identity])))
    assert error.value.details["statistic"] == pytest.approx(1.0)


def test_weighted_samples_validation() -> None:
    """Negative or vanishing weights are configuration errors."""
    identity = np.eye(2, dtype=complex)[None]
    with pytest.raises(ConfigError):
        WeightedSamples(identity, np.array([-1.0]))
    with pytest.raises(ConfigError):
        WeightedSamples(identity, np.array([0.0]))


def test_check_elements_detects_defects() -> None:
    """Non-unitary matrices and wrong determinants are constraint violations."""
    with pytest.raises(ConstraintViolated):
        SU2.check_elements(np.array([[2.0, 0.0], [0.0, 0.5]], dtype=complex))
    with pytest.raises(ConstraintViolated):
        SU2.check_elements(np.diag([1j, 1.0]).astype(complex))
    with pytest.raises(ConstraintViolated):
        SU2.check_algebra(np.eye(2, dtype=complex))


def test_dagger_is_an_involution(rng: np.random.Generator) -> None:
    """Applying the conjugate transpose twice is the identity.

    Parameters:
        rng: Seeded random generator.
    """
    matrices = rng.normal(size=(3, 4, 2, 2)) + 1j * rng.normal(size=(3, 4, 2, 2))
    np.testing.assert_array_equal(dagger(dagger(matrices)), matrices)


@pytest.mark.parametrize(("tag", "size", "special"), [("u1", 1, False), ("SU2", 2, True), (" su3 ", 3, True)])
def test_group_from_tag(tag: str, size: int, special: bool) -> None:
    """Group tags resolve case-insensitively.

    Parameters:
        tag: The tag.
        size: Expected matrix size.
        special: Expected determinant constraint.
    """
    group = group_from_tag(tag)
    assert (group.N, group.special) == (size, special)


def test_unknown_group_tag() -> None:
    """Unknown tags are configuration errors with exit code 2."""
    with pytest.raises(ConfigError) as error:
        group_from_tag("so3")
    assert error.value.exit_code == 2
