from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import TypeAlias

import numpy as np
from numpy.typing import NDArray
from scipy import linalg

from gfrg._internal.errors import (
    ClusteringViolated,
    ConfigError,
    ConstraintViolated,
    LogarithmBranchCut,
    OutsideTubularNeighbourhood,
)

GroupElement: TypeAlias = NDArray[np.complex128]
"""An `N x N` unitary matrix, or a stack of them with shape `(..., N, N)`."""

AlgebraElement: TypeAlias = NDArray[np.complex128]
"""An `N x N` anti-hermitian matrix, or a stack of them with shape `(..., N, N)`."""

DEFAULT_TUBULAR_RADIUS = 0.5
"""Singular values of a projectable matrix must lie in `[1 - radius, 1 + radius]`."""

_BRANCH_CUT_TOLERANCE = 1e-12


def operator_norm(matrices: NDArray) -> NDArray[np.float64]:
    """Operator (spectral) norm of a stack of square matrices.

    Args:
        matrices: Array of shape `(..., N, N)`.

    Returns:
        Array of shape `(...)` with the largest singular value of each matrix.
    """
    matrices = np.asarray(matrices)
    size = matrices.shape[-1]
    if size == 1:
        return np.abs(matrices[..., 0, 0])
    if size == 2:  # noqa: PLR2004
        # closed form: sigma_max^2 = (|M|_F^2 + sqrt(|M|_F^4 - 4|det M|^2)) / 2
        frobenius = np.sum(np.abs(matrices) ** 2, axis=(-2, -1))
        det = matrices[..., 0, 0] * matrices[..., 1, 1] - matrices[..., 0, 1] * matrices[..., 1, 0]
        disc = np.sqrt(np.maximum(frobenius**2 - 4.0 * np.abs(det) ** 2, 0.0))
        return np.sqrt((frobenius + disc) / 2.0)
    return np.linalg.norm(matrices, ord=2, axis=(-2, -1))


def dagger(matrices: NDArray) -> NDArray:
    """Conjugate transpose over the last two axes.

    Args:
        matrices: Array of shape `(..., N, N)`.

    Returns:
        The conjugate transpose.
    """
    return np.conj(np.swapaxes(matrices, -1, -2))


@dataclass(frozen=True, eq=False)
class WeightedSamples:
    """Group-valued samples with non-negative weights."""

    elements: GroupElement
    """Stack of shape `(k, N, N)`."""
    weights: NDArray[np.float64]
    """Shape `(k,)`, non-negative with positive total."""

    def __post_init__(self) -> None:
        if self.elements.ndim != 3 or len(self.elements) != len(self.weights):  # noqa: PLR2004
            raise ConfigError("samples and weights must have matching lengths")
        if np.any(self.weights < 0) or not np.sum(self.weights) > 0:
            raise ConfigError("weights must be non-negative with positive total")

    @classmethod
    def uniform(cls, elements: GroupElement) -> WeightedSamples:
        """Equal weights for every element.

        Args:
            elements: Stack of shape `(k, N, N)`.

        Returns:
            The weighted samples.
        """
        return cls(np.asarray(elements, dtype=complex), np.ones(len(elements)))

    @property
    def total_weight(self) -> float:
        """Sum of the weights."""
        return float(np.sum(self.weights))

    def linear_mean(self) -> NDArray[np.complex128]:
        """Weighted mean in the ambient matrix space.

        Returns:
            An `N x N` matrix, generally not in the group.
        """
        return np.tensordot(self.weights, self.elements, axes=1) / self.total_weight


def clustering_statistic(samples: WeightedSamples) -> float:
    """Normalised weighted double sum of pairwise distances.

    Computes `sum_ij w_i w_j |f_i - f_j| / W^2` with the operator norm.
    Averaging is admissible when this is below the tubular radius.

    Args:
        samples: The weighted samples.

    Returns:
        The statistic.
    """
    elements = samples.elements
    weights = samples.weights
    total = 0.0
    # rows in blocks to bound the (k, k, N, N) temporary
    block = max(1, 2**16 // max(1, len(elements)))
    for start in range(0, len(elements), block):
        diff = elements[start : start + block, None] - elements[None, :]
        total += float(weights[start : start + block] @ operator_norm(diff) @ weights)
    return total / samples.total_weight**2


@dataclass(frozen=True)
class LieGroup:
    """A compact matrix group `G` inside `U(N)`: either `U(1)` or `SU(N)`.

    Elements are plain complex arrays; every method accepts stacks with
    arbitrary leading dimensions.
    """

    name: str
    """Group tag, such as `u1` or `su2`."""
    N: int  # noqa: N815
    """Matrix size."""
    special: bool
    """Whether determinants are constrained to 1."""
    tubular_radius: float = DEFAULT_TUBULAR_RADIUS
    """Allowed spread of singular values for projection and averaging."""

    def __post_init__(self) -> None:
        if self.N < 1 or not 0 < self.tubular_radius < 1:
            raise ConfigError(f"invalid group {self.name!r}")

    def identity(self, shape: tuple[int, ...] = ()) -> GroupElement:
        """Identity element, broadcast to a stack.

        Args:
            shape: Leading stack shape.

        Returns:
            A writable array of shape `(*shape, N, N)`.
        """
        return np.broadcast_to(np.eye(self.N, dtype=complex), (*shape, self.N, self.N)).copy()

    @cached_property
    def algebra_basis(self) -> AlgebraElement:
        """Basis of the Lie algebra, each element with unit operator norm.

        For `SU(N)` these are `i` times the generalised Gell-Mann matrices.
        """
        if not self.special:
            return np.array([[[1j]]]) if self.N == 1 else _unitary_basis(self.N)
        basis = []
        for a in range(self.N):
            for b in range(a + 1, self.N):
                sym = np.zeros((self.N, self.N), dtype=complex)
                sym[a, b] = sym[b, a] = 1j
                asym = np.zeros((self.N, self.N), dtype=complex)
                asym[a, b], asym[b, a] = 1.0, -1.0
                basis.extend([sym, asym])
        for d in range(1, self.N):
            diag = np.zeros(self.N, dtype=complex)
            diag[:d] = 1.0
            diag[d] = -d
            basis.append(1j * np.diag(diag) / d)
        return np.array(basis)

    def to_algebra(self, matrices: NDArray) -> AlgebraElement:
        """Orthogonal projection onto the Lie algebra.

        Args:
            matrices: Array of shape `(..., N, N)`.

        Returns:
            The anti-hermitian (and, for `SU(N)`, traceless) part.
        """
        part = (matrices - dagger(matrices)) / 2.0
        if self.special:
            trace = np.trace(part, axis1=-2, axis2=-1) / self.N
            part = part - trace[..., None, None] * np.eye(self.N)
        return part

    def exp(self, x: AlgebraElement) -> GroupElement:
        """Matrix exponential (Pade scaling and squaring).

        Args:
            x: Algebra elements of shape `(..., N, N)`.

        Returns:
            Group elements of the same shape.
        """
        x = np.asarray(x, dtype=complex)
        if self.N == 1:
            return np.exp(x)
        if x.ndim == 2:  # noqa: PLR2004
            return linalg.expm(x)
        flat = x.reshape(-1, self.N, self.N)
        if not len(flat):
            return x.copy()
        return linalg.expm(flat).reshape(x.shape)

    def log(self, g: GroupElement) -> AlgebraElement:
        """Principal logarithm of unitary matrices.

        Uses the Cayley transform `H = i(1 - g)(1 + g)^-1`, which is hermitian
        and shares eigenvectors with `g`; eigenvalues map back through
        `theta = 2 arctan(lambda)`. Exact for normal input, batched.

        Args:
            g: Group elements of shape `(..., N, N)`.

        Returns:
            Algebra elements with spectrum in `i(-pi, pi)`.

        Raises:
            LogarithmBranchCut: If some `g` has an eigenvalue at -1.
        """
        g = np.asarray(g, dtype=complex)
        if self.N == 1:
            z = g[..., 0, 0]
            if np.any(np.abs(z + 1.0) < _BRANCH_CUT_TOLERANCE):
                raise LogarithmBranchCut("eigenvalue -1 in principal logarithm")
            return (1j * np.angle(z))[..., None, None]
        eye = np.eye(self.N, dtype=complex)
        plus = eye + g
        smallest = np.linalg.svd(plus, compute_uv=False)[..., -1]
        if np.any(smallest < _BRANCH_CUT_TOLERANCE):
            raise LogarithmBranchCut("eigenvalue -1 in principal logarithm", smallest=float(np.min(smallest)))
        cayley = 1j * np.linalg.solve(plus, eye - g)
        cayley = (cayley + dagger(cayley)) / 2.0
        values, vectors = np.linalg.eigh(cayley)
        angles = 2.0 * np.arctan(values)
        return (vectors * (1j * angles)[..., None, :]) @ dagger(vectors)

    def distance(self, g: GroupElement, h: GroupElement, *, fallback: bool = False) -> NDArray[np.float64]:
        """Bi-invariant distance `|log(g^-1 h)|`.

        Args:
            g: Group elements.
            h: Group elements, broadcast against `g`.
            fallback: Return the chordal distance `|g - h|` instead of raising
                on the branch cut.

        Returns:
            Distances (a 0-d array for single elements).

        Raises:
            LogarithmBranchCut: If `g^-1 h` has eigenvalue -1 and `fallback` is off.
        """
        try:
            return operator_norm(self.log(dagger(g) @ h))
        except LogarithmBranchCut:
            if not fallback:
                raise
            return operator_norm(np.asarray(g) - np.asarray(h))

    def project(self, matrices: NDArray, *, check: bool = True) -> GroupElement:
        """Right-equivariant projection onto the group by polar decomposition.

        Args:
            matrices: Array of shape `(..., N, N)`.
            check: Enforce the tubular neighbourhood on singular values.

        Returns:
            The unitary polar factors, divided by the principal `N`-th root of
            their determinant for `SU(N)`.

        Raises:
            OutsideTubularNeighbourhood: If a singular value leaves
                `[1 - radius, 1 + radius]`.
        """
        matrices = np.asarray(matrices, dtype=complex)
        left, singular, right = np.linalg.svd(matrices)
        if check:
            low, high = float(np.min(singular)), float(np.max(singular))
            if low < 1.0 - self.tubular_radius or high > 1.0 + self.tubular_radius:
                raise OutsideTubularNeighbourhood(
                    f"singular values [{low:.3g}, {high:.3g}] outside the tubular neighbourhood",
                    smallest_singular_value=low,
                    largest_singular_value=high,
                    radius=self.tubular_radius,
                )
        polar = left @ right
        if self.special:
            root = np.exp(1j * np.angle(np.linalg.det(polar)) / self.N)
            polar = polar / root[..., None, None]
        return polar

    def average(self, samples: WeightedSamples) -> GroupElement:
        """Projected weighted mean of clustered group samples.

        Args:
            samples: The weighted samples.

        Returns:
            `project(weighted linear mean)`.

        Raises:
            ClusteringViolated: If the clustering statistic reaches the tubular radius.
            OutsideTubularNeighbourhood: If the mean still cannot be projected.
        """
        statistic = clustering_statistic(samples)
        if statistic >= self.tubular_radius:
            raise ClusteringViolated(
                f"clustering statistic {statistic:.3g} >= {self.tubular_radius}",
                statistic=statistic,
                threshold=self.tubular_radius,
            )
        try:
            return self.project(samples.linear_mean())
        except OutsideTubularNeighbourhood as exc:
            raise OutsideTubularNeighbourhood(str(exc), statistic=statistic, **exc.details) from exc

    def random_algebra(self, rng: np.random.Generator, shape: tuple[int, ...] = (), scale: float = 1.0) -> AlgebraElement:
        """Gaussian algebra elements.

        Args:
            rng: Random generator.
            shape: Leading stack shape.
            scale: Standard deviation of the basis coefficients.

        Returns:
            Algebra elements of shape `(*shape, N, N)`.
        """
        basis = self.algebra_basis
        coefficients = rng.normal(scale=scale, size=(*shape, len(basis)))
        return np.tensordot(coefficients, basis, axes=1)

    def random_element(self, rng: np.random.Generator, shape: tuple[int, ...] = ()) -> GroupElement:
        """Random group elements spread over the whole group.

        Args:
            rng: Random generator.
            shape: Leading stack shape.

        Returns:
            Group elements of shape `(*shape, N, N)`.
        """
        return self.exp(self.random_algebra(rng, shape, scale=np.pi))

    def check_elements(self, g: NDArray, tol: float = 1e-10) -> None:
        """Validate unitarity (and unit determinant for `SU(N)`).

        Args:
            g: Stack of candidate group elements.
            tol: Frobenius tolerance.

        Raises:
            ConstraintViolated: On the first violated invariant.
        """
        if not g.size:
            return
        defect = np.max(np.linalg.norm(dagger(g) @ g - np.eye(self.N), axis=(-2, -1)))
        if defect > tol:
            raise ConstraintViolated(f"unitarity defect {defect:.3g}", defect=float(defect))
        if self.special:
            det_defect = np.max(np.abs(np.linalg.det(g) - 1.0))
            if det_defect > tol:
                raise ConstraintViolated(f"determinant defect {det_defect:.3g}", defect=float(det_defect))

    def check_algebra(self, x: NDArray, tol: float = 1e-10) -> None:
        """Validate anti-hermiticity (and tracelessness for `SU(N)`).

        The tolerance is relative to the largest entry when that exceeds one.

        Args:
            x: Stack of candidate algebra elements.
            tol: Frobenius tolerance.

        Raises:
            ConstraintViolated: On the first violated invariant.
        """
        if not x.size:
            return
        scale = max(1.0, float(np.max(np.abs(x))))
        defect = np.max(np.linalg.norm(dagger(x) + x, axis=(-2, -1))) / scale
        if defect > tol:
            raise ConstraintViolated(f"anti-hermiticity defect {defect:.3g}", defect=float(defect))
        if self.special:
            trace_defect = np.max(np.abs(np.trace(x, axis1=-2, axis2=-1))) / scale
            if trace_defect > tol:
                raise ConstraintViolated(f"trace defect {trace_defect:.3g}", defect=float(trace_defect))


def _unitary_basis(size: int) -> AlgebraElement:
    special = LieGroup(f"su{size}", size, special=True).algebra_basis
    return np.concatenate([special, 1j * np.eye(size, dtype=complex)[None]])


U1 = LieGroup("u1", 1, special=False)
"""The circle group, used for abelian oracles."""

SU2 = LieGroup("su2", 2, special=True)
"""The default non-abelian group."""


def group_from_tag(tag: str, tubular_radius: float = DEFAULT_TUBULAR_RADIUS) -> LieGroup:
    """Resolve a group tag such as `u1`, `su2` or `su3`.

    Args:
        tag: Case-insensitive group tag.
        tubular_radius: Projection radius for the returned group.

    Returns:
        The group.

    Raises:
        ConfigError: For unknown tags.
    """
    tag = tag.strip().lower()
    if tag == "u1":
        return LieGroup("u1", 1, special=False, tubular_radius=tubular_radius)
    if tag.startswith("su") and tag[2:].isdigit() and int(tag[2:]) >= 2:  # noqa: PLR2004
        return LieGroup(tag, int(tag[2:]), special=True, tubular_radius=tubular_radius)
    raise ConfigError(f"unknown group {tag!r}; expected u1 or suN")
