from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import TYPE_CHECKING, Literal

import numpy as np
from numpy.typing import NDArray
from scipy import integrate, ndimage, signal, special

from gfrg._internal.errors import ConfigError
from gfrg._internal.field import CurvatureField, Grid, NodeMask, ScalarField, derivative
from gfrg._internal.lie import operator_norm
from gfrg._internal.transport import Triangle, triangle_integral

if TYPE_CHECKING:
    from collections.abc import Iterator

_logger = logging.getLogger("gfrg.morrey")

_BALL_SLACK = 1.0 + 1e-9

WeightKind = Literal["growth", "decay"]
"""Radial weights for Riesz sums: `(1 + d/R)^(kappa/2)` or `min(1, (R/d)^(1 - kappa/2))`."""


@dataclass(frozen=True)
class MorreyParams:
    """Exponents of the Morrey-Sobolev space `M^p_{q,k}`."""

    p: float
    """Scaling exponent, at least `q`."""
    q: float
    """Integrability exponent, at least 1."""
    k: int = 0
    """Derivative order, 0 to 2."""
    relaxed: bool = False
    """Set when the scale-invariant `p` had to be raised to `q`."""

    def __post_init__(self) -> None:
        if not 1 <= self.q <= self.p:
            raise ConfigError(f"Morrey exponents need 1 <= q <= p, got p={self.p}, q={self.q}")
        if self.k not in (0, 1, 2):
            raise ConfigError(f"derivative order must be 0..2, got {self.k}")

    @classmethod
    def scale_invariant(cls, n: int, k: int = 0, q: float = 2.0) -> MorreyParams:
        """The curvature space `M^{n/2}_{q,k}`; `p` is raised to `q` when `n/2 < q`.

        Args:
            n: Dimension.
            k: Derivative order.
            q: Integrability exponent.

        Returns:
            The parameters.
        """
        p = n / 2.0
        if p < q:
            return cls(q, q, k, relaxed=True)
        return cls(p, q, k)

    def with_order(self, k: int) -> MorreyParams:
        """The same exponents with another derivative order.

        Args:
            k: Derivative order.

        Returns:
            The parameters.
        """
        return MorreyParams(self.p, self.q, k, self.relaxed)


@dataclass(frozen=True)
class StratConfig:
    """Constants of the stratification `Omega_1 ⊆ Omega_2 ⊆ ...`."""

    epsilon: float
    """Smallness of the curvature."""
    kappa: float = 0.5
    """Exponent in `Q` and `T_m`."""
    D: float = 8.0  # noqa: N815
    """Scale ratio between levels."""
    C_R: float = 4.0  # noqa: N815
    """Constant in `R_m = C_R D^-m`."""

    def __post_init__(self) -> None:
        if self.epsilon <= 0 or not 0 < self.kappa < 1 or self.D <= 1 or self.C_R <= 0:
            raise ConfigError(f"invalid stratification constants {self}")

    def radius(self, m: int) -> float:
        """Scale `R_m = C_R D^-m`.

        Args:
            m: Level.

        Returns:
            The radius.
        """
        return self.C_R * self.D ** (-m)

    def threshold(self, m: int) -> float:
        """Level-`m` bound `epsilon D^((1 - kappa) m)` on `Q`.

        Args:
            m: Level.

        Returns:
            The threshold.
        """
        return self.epsilon * self.D ** ((1.0 - self.kappa) * m)

    def calibrated(self, smallness: float) -> StratConfig:
        """These constants with `epsilon` raised to a measured Morrey smallness.

        With `epsilon >= sup r^(2 - n/2) ||F||_L2(B(x, r))` and `C_R > 2`, every node with
        `rho >= R_m` has `Q` below the level-`m` threshold.

        Args:
            smallness: Output of `morrey_smallness`.

        Returns:
            A copy whose `epsilon` is `max(epsilon, smallness)`.
        """
        if smallness <= self.epsilon:
            return self
        return replace(self, epsilon=float(smallness))


@dataclass(frozen=True, eq=False)
class RadiusSet:
    """A geometric ladder of ball radii."""

    radii: NDArray[np.float64]
    """Sorted ascending, all positive."""

    def __post_init__(self) -> None:
        radii = np.asarray(self.radii, dtype=float)
        if not len(radii) or np.any(radii <= 0) or np.any(np.diff(radii) <= 0):
            raise ConfigError("radii must be positive and strictly increasing")
        object.__setattr__(self, "radii", radii)

    @classmethod
    def ladder(cls, grid: Grid, rmax: float | None = None, ratio: float = np.sqrt(2.0)) -> RadiusSet:
        """Radii `h ratio^j` up to `rmax` (the cube diameter by default).

        Args:
            grid: The grid.
            rmax: Largest admissible radius.
            ratio: Ratio between rungs.

        Returns:
            The ladder.
        """
        rmax = np.sqrt(grid.n) if rmax is None else rmax
        count = int(np.floor(np.log(rmax / grid.h) / np.log(ratio) + 1e-9)) + 1
        return cls(grid.h * ratio ** np.arange(max(count, 1)))

    def densified(self) -> RadiusSet:
        """The ladder with the geometric midpoint inserted between rungs."""
        mids = np.sqrt(self.radii[:-1] * self.radii[1:])
        return RadiusSet(np.sort(np.concatenate([self.radii, mids])))

    def __iter__(self) -> Iterator[float]:
        return iter(self.radii)

    def __len__(self) -> int:
        return len(self.radii)


# Ball sums.


@lru_cache(maxsize=256)
def _ball_kernel(n: int, m: int, h: float, radius: float) -> NDArray[np.float64]:
    reach = min(int(np.floor(radius / h * _BALL_SLACK)), m - 1)
    offsets = np.arange(-reach, reach + 1) * h
    squared = np.zeros((2 * reach + 1,) * n)
    for axis in range(n):
        shape = [1] * n
        shape[axis] = -1
        squared = squared + (offsets**2).reshape(shape)
    return (squared <= radius**2 * _BALL_SLACK).astype(float)


def ball_sums(values: ScalarField, grid: Grid, radius: float) -> ScalarField:
    """Weighted sums `sum_{y in B(x, r)} w(y) f(y)` for every node `x`.

    Balls are closed and clipped to the cube; membership uses node-centre distances,
    so nodes exactly at distance `r` count.

    Args:
        values: Scalar field.
        grid: The grid.
        radius: Ball radius.

    Returns:
        The sums, one per node.
    """
    kernel = _ball_kernel(grid.n, grid.m, grid.h, float(radius))
    weighted = np.asarray(values, dtype=float) * grid.weights
    if kernel.size == 1:
        return weighted
    out = signal.convolve(weighted, kernel, mode="same")
    if np.all(weighted >= 0):
        out = np.maximum(out, 0.0)
    return out


def ball_sum_at(values: ScalarField, grid: Grid, x: NDArray, radius: float) -> float:
    """Weighted sum over the closed ball `B(x, r)` around an arbitrary point.

    Args:
        values: Scalar field.
        grid: The grid.
        x: Centre.
        radius: Ball radius.

    Returns:
        The sum.
    """
    distance2 = np.sum((grid.points - np.asarray(x, dtype=float)) ** 2, axis=-1)
    inside = distance2 <= radius**2 * _BALL_SLACK
    return float(np.sum((np.asarray(values) * grid.weights)[inside]))


def _pointwise_magnitude(values: NDArray, grid: Grid) -> ScalarField:
    values = np.asarray(values)
    if values.ndim == grid.n:
        return np.abs(values)
    if values.ndim == grid.n + 1:
        return np.sqrt(np.sum(np.abs(values) ** 2, axis=0))
    if values.ndim == grid.n + 3:
        return np.sqrt(np.sum(operator_norm(values) ** 2, axis=0))
    raise ConfigError(f"cannot interpret an array of shape {values.shape} on {grid}")


def _as_stack(values: NDArray, grid: Grid) -> NDArray:
    values = np.asarray(values)
    return values[None] if values.ndim == grid.n else values


def morrey_norm(
    f: NDArray,
    params: MorreyParams,
    grid: Grid,
    centers: NodeMask | None = None,
    radii: RadiusSet | None = None,
    support: NodeMask | None = None,
) -> float:
    """Discrete Morrey norm `sup r^{n(1/p - 1/q)} (sum_{B(x, r)} |f|^q w)^{1/q}`.

    Args:
        f: Scalar field, or a component stack `(c, *grid.shape[, N, N])` whose
            pointwise magnitude is used.
        params: Exponents (the derivative order is ignored).
        grid: The grid.
        centers: Admissible ball centres (all nodes by default).
        radii: Ball radii (the ladder up to 1 by default).
        support: Restrict `f` to these nodes before measuring.

    Returns:
        The norm.
    """
    magnitude = _pointwise_magnitude(f, grid)
    if support is not None:
        magnitude = np.where(support, magnitude, 0.0)
    radii = RadiusSet.ladder(grid, 1.0) if radii is None else radii
    powered = magnitude**params.q
    best = 0.0
    for r in radii:
        sums = ball_sums(powered, grid, r)
        if centers is not None:
            sums = sums[centers]
        if not sums.size:
            continue
        scale = r ** (grid.n * (1.0 / params.p - 1.0 / params.q))
        best = max(best, scale * float(np.max(sums)) ** (1.0 / params.q))
    return best


def morrey_sobolev_norm(
    f: NDArray,
    params: MorreyParams,
    grid: Grid,
    centers: NodeMask | None = None,
    radii: RadiusSet | None = None,
    support: NodeMask | None = None,
    order: int = 4,
) -> float:
    """Sum over `j <= k` of the Morrey norms of `|nabla^j f|`.

    Args:
        f: Scalar field or component stack, as for `morrey_norm`.
        params: Exponents and derivative order.
        grid: The grid.
        centers: Admissible ball centres.
        radii: Ball radii.
        support: Restriction applied to every derivative.
        order: Stencil order.

    Returns:
        The norm.
    """
    stack = _as_stack(f, grid)
    total = morrey_norm(stack, params, grid, centers, radii, support)
    for _ in range(params.k):
        stack = np.concatenate(
            [np.stack([derivative(component, axis, grid.h, order) for axis in range(grid.n)]) for component in stack],
        )
        total += morrey_norm(stack, params, grid, centers, radii, support)
    return total


def maximal_function(u: ScalarField, grid: Grid, radii: RadiusSet | None = None) -> ScalarField:
    """Discrete Hardy-Littlewood maximal function over clipped balls.

    Args:
        u: Scalar field.
        grid: The grid.
        radii: Ball radii (the full ladder by default).

    Returns:
        Per node, the largest ball average of `|u|`.
    """
    radii = RadiusSet.ladder(grid) if radii is None else radii
    magnitude = np.abs(u)
    ones = np.ones(grid.shape)
    best = np.zeros(grid.shape)
    for r in radii:
        best = np.maximum(best, ball_sums(magnitude, grid, r) / ball_sums(ones, grid, r))
    return best


def average_bound_ratio(
    f_mag: ScalarField,
    grid: Grid,
    epsilon: float,
    centers: NodeMask | None = None,
    radii: RadiusSet | None = None,
) -> float:
    """Measured constant `C` in `sum_{B(x, r)} |F| w <= C epsilon r^(n-2)`.

    Args:
        f_mag: Curvature magnitude.
        grid: The grid.
        epsilon: Smallness parameter.
        centers: Ball centres.
        radii: Ball radii (up to 1 by default).

    Returns:
        The largest ratio.
    """
    radii = RadiusSet.ladder(grid, 1.0) if radii is None else radii
    best = 0.0
    for r in radii:
        sums = ball_sums(f_mag, grid, r)
        if centers is not None:
            sums = sums[centers]
        if sums.size:
            best = max(best, float(np.max(sums)) / (epsilon * r ** (grid.n - 2)))
    return best


# Riesz-type kernels.


@lru_cache(maxsize=64)
def cell_correction(n: int, exponent: float, points: int = 24) -> float:
    """`kappa(n, e) = integral over [-1/2, 1/2]^n of |z|^(e - n)`.

    The cube splits into `2n` pyramids over its faces; the radial integral is
    exact and the face integral uses a tensor Gauss-Legendre rule.

    Args:
        n: Dimension.
        exponent: Kernel exponent `e > 0`.
        points: Gauss points per face direction.

    Returns:
        The constant; the self-cell of spacing `h` contributes `kappa h^e`.
    """
    nodes, weights = np.polynomial.legendre.leggauss(points)
    grids = np.meshgrid(*([nodes] * (n - 1)), indexing="ij")
    radius2 = 1.0 + sum(g**2 for g in grids)
    tensor = np.ones(())
    for _ in range(n - 1):
        tensor = np.multiply.outer(tensor, weights)
    face = float(np.sum(tensor * radius2 ** ((exponent - n) / 2.0)))
    return 2.0 * n * 0.5**exponent / exponent * face


def _radial_weight(distance: NDArray, weight_kind: WeightKind | None, radius: float | None, kappa: float) -> NDArray:
    if weight_kind is None:
        return np.ones_like(distance)
    if radius is None or radius <= 0:
        raise ConfigError("weighted Riesz sums need a positive radius")
    if weight_kind == "growth":
        return (1.0 + distance / radius) ** (kappa / 2.0)
    if weight_kind == "decay":
        with np.errstate(divide="ignore"):
            return np.minimum(1.0, (radius / distance) ** (1.0 - kappa / 2.0))
    raise ConfigError(f"unknown weight {weight_kind!r}")


def riesz_kernel_integral(
    f_mag: ScalarField,
    grid: Grid,
    x: NDArray,
    exponent: float = 1,
    weight_kind: WeightKind | None = None,
    radius: float | None = None,
    kappa: float = 0.5,
) -> float | NDArray[np.float64]:
    """Riesz-type integral `sum_y weight(y) |F(y)| / |x - y|^(n - e) w(y)` at arbitrary points.

    Nodes closer than `h/2` to `x` are singular cells: they contribute
    `|F(y)| kappa(n, e) h^e w(y) / h^n` instead of the kernel value.

    Args:
        f_mag: Scalar field.
        grid: The grid.
        x: One point `(n,)` or many `(k, n)`.
        exponent: `e`, usually 1 or 2.
        weight_kind: Optional radial weight.
        radius: Scale of the radial weight.
        kappa: Exponent of the radial weight.

    Returns:
        A float for one point, an array for many.
    """
    points = np.asarray(x, dtype=float)
    single = points.ndim == 1
    points = np.atleast_2d(points)
    nodes = grid.points.reshape(-1, grid.n)
    mass = (np.asarray(f_mag) * grid.weights).ravel()
    self_factor = cell_correction(grid.n, float(exponent)) * grid.h ** (exponent - grid.n)
    out = np.empty(len(points))
    chunk = max(1, 2**22 // max(1, len(nodes)))
    for start in range(0, len(points), chunk):
        block = points[start : start + chunk]
        distance = np.linalg.norm(block[:, None, :] - nodes[None, :, :], axis=-1)
        singular = distance < grid.h / 2.0
        safe = np.where(singular, 1.0, distance)
        kernel = safe ** (exponent - grid.n) * _radial_weight(safe, weight_kind, radius, kappa)
        kernel = np.where(singular, self_factor, kernel)
        out[start : start + chunk] = kernel @ mass
    return float(out[0]) if single else out


@lru_cache(maxsize=32)
def _riesz_kernel(
    n: int,
    m: int,
    h: float,
    exponent: float,
    weight_kind: WeightKind | None,
    radius: float | None,
    kappa: float,
) -> NDArray[np.float64]:
    offsets = np.arange(-(m - 1), m) * h
    squared = np.zeros((2 * m - 1,) * n)
    for axis in range(n):
        shape = [1] * n
        shape[axis] = -1
        squared = squared + (offsets**2).reshape(shape)
    distance = np.sqrt(squared)
    centre = (m - 1,) * n
    distance[centre] = 1.0
    kernel = distance ** (exponent - n) * _radial_weight(distance, weight_kind, radius, kappa)
    kernel[centre] = cell_correction(n, float(exponent)) * h ** (exponent - n)
    return kernel


def riesz_potential(
    f_mag: ScalarField,
    grid: Grid,
    exponent: float = 1,
    weight_kind: WeightKind | None = None,
    radius: float | None = None,
    kappa: float = 0.5,
) -> ScalarField:
    """`riesz_kernel_integral` at every node at once, by FFT convolution.

    Args:
        f_mag: Scalar field.
        grid: The grid.
        exponent: Kernel exponent.
        weight_kind: Optional radial weight.
        radius: Scale of the radial weight.
        kappa: Exponent of the radial weight.

    Returns:
        The potential, one value per node.
    """
    kernel = _riesz_kernel(grid.n, grid.m, grid.h, float(exponent), weight_kind, radius, kappa)
    weighted = np.asarray(f_mag, dtype=float) * grid.weights
    out = signal.convolve(weighted, kernel, mode="same")
    return np.maximum(out, 0.0) if np.all(weighted >= 0) else out


def t_m_field(f_mag: ScalarField, grid: Grid, cfg: StratConfig, m: int) -> ScalarField:
    """`T_m(x) = integral (1 + |x - y|/R_m)^(kappa/2) |F(y)| / |x - y|^(n-1) dy` at every node.

    Args:
        f_mag: Curvature magnitude.
        grid: The grid.
        cfg: Stratification constants.
        m: Level.

    Returns:
        The field `T_m`.
    """
    return riesz_potential(f_mag, grid, 1, "growth", cfg.radius(m), cfg.kappa)


def fractional_weighted_integral(f_mag: ScalarField, grid: Grid, x: NDArray, radius: float, kappa: float = 0.5) -> float | NDArray[np.float64]:
    """The decaying variant `integral min(1, (R/|x-y|)^(1 - kappa/2)) |F(y)| / |x - y|^(n-2) dy`.

    Args:
        f_mag: Curvature magnitude.
        grid: The grid.
        x: One point or many.
        radius: Scale `R`.
        kappa: Exponent.

    Returns:
        The integral per point.
    """
    return riesz_kernel_integral(f_mag, grid, x, 2, "decay", radius, kappa)


# Stratification.


def q_function(
    f_mag: ScalarField,
    grid: Grid,
    kappa: float = 0.5,
    centers: NodeMask | None = None,
    radii: RadiusSet | None = None,
) -> ScalarField:
    """`Q(x) = sup_r r^(-n/2 + 1 + kappa) (sum_{B(x, r)} |F|^2 w)^(1/2)`.

    Args:
        f_mag: Curvature magnitude.
        grid: The grid.
        kappa: Exponent.
        centers: Nodes where `Q` is wanted; the others are NaN.
        radii: Ball radii (up to the cube diameter by default).

    Returns:
        The field `Q`.
    """
    radii = RadiusSet.ladder(grid) if radii is None else radii
    squared = np.asarray(f_mag, dtype=float) ** 2
    best = np.zeros(grid.shape)
    for r in radii:
        best = np.maximum(best, r ** (-grid.n / 2.0 + 1.0 + kappa) * np.sqrt(ball_sums(squared, grid, r)))
    if centers is not None:
        best = np.where(centers, best, np.nan)
    return best


def morrey_smallness(f_mag: ScalarField, grid: Grid, radii: RadiusSet | None = None) -> float:
    """Scale-invariant smallness `sup_{x, r} r^(2 - n/2) (sum_{B(x, r)} |F|^2 w)^(1/2)`.

    This is `max Q` with `kappa = 1`, taken over every node and the same radii as `q_function`.

    Args:
        f_mag: Curvature magnitude.
        grid: The grid.
        radii: Ball radii (up to the cube diameter by default).

    Returns:
        The smallness.
    """
    return float(np.max(q_function(f_mag, grid, 1.0, radii=radii), initial=0.0))


def omega_m(q: ScalarField, cfg: StratConfig, m: int, rho: ScalarField | None = None) -> NodeMask:
    """Nodes of `Omega_m = {Q < epsilon D^((1 - kappa) m)}` off the singular set.

    Args:
        q: The field `Q` (NaN nodes are excluded).
        cfg: Stratification constants.
        m: Level, at least 1.
        rho: Distance to the singular set at the nodes.

    Returns:
        The mask.

    Raises:
        ConfigError: For levels below 1.
    """
    if m < 1:
        raise ConfigError(f"levels start at 1, got {m}")
    with np.errstate(invalid="ignore"):
        mask = np.asarray(q) < cfg.threshold(m)
    if rho is not None:
        mask &= np.asarray(rho) > 0
    return mask


def smallest_workable_cr(mask: NodeMask, rho: ScalarField, cfg: StratConfig, m: int) -> float:
    """Infimum of the `C_R` for which `{rho >= C_R D^-m}` lies inside `Omega_m` at the nodes.

    Args:
        mask: The `Omega_m` mask.
        rho: Distance to the singular set.
        cfg: Stratification constants.
        m: Level.

    Returns:
        `max(rho outside Omega_m) D^m`, or 0 when `Omega_m` is everything.
    """
    outside = np.asarray(rho)[~mask]
    finite = outside[np.isfinite(outside)]
    if len(finite) < len(outside):
        return float("inf")
    return float(np.max(finite, initial=0.0)) * cfg.D**m


def omega_density(mask: NodeMask, grid: Grid, centers: NDArray, radius: float) -> NDArray[np.float64]:
    """Density ratios `|B(x, r) ∩ Omega_m| / r^n` for ball centres at nodes.

    Args:
        mask: The `Omega_m` mask.
        grid: The grid.
        centers: Node indices, shape `(k, n)`.
        radius: Ball radius.

    Returns:
        One ratio per centre.
    """
    sums = ball_sums(np.asarray(mask, dtype=float), grid, radius)
    index = tuple(np.asarray(centers).T)
    return sums[index] / radius**grid.n


# Densities and constants.


@dataclass(frozen=True, eq=False)
class DensityProfile:
    """The monotone quantity `r^(4-n) integral_{B(x, r)} |F|^2` over a radius ladder."""

    radii: NDArray[np.float64]
    """Radii, descending."""
    values: NDArray[np.float64]
    """Profile values in `radii` order."""
    monotone: bool
    """Whether the profile is non-decreasing in `r` up to the relative tolerance."""
    theta: float
    """Extrapolated density at `r = 0`, clipped at 0."""


def density_profile(
    f_mag: ScalarField,
    grid: Grid,
    x: NDArray,
    radii: RadiusSet | None = None,
    rtol: float = 0.01,
) -> DensityProfile:
    """Profile of `r^(4-n) sum_{B(x, r)} |F|^2 w` and its extrapolated density.

    Args:
        f_mag: Curvature magnitude.
        grid: The grid.
        x: Centre point.
        radii: Radii (the ladder up to 1 by default).
        rtol: Relative decrease tolerated by the monotonicity flag.

    Returns:
        The profile.
    """
    radii = RadiusSet.ladder(grid, 1.0) if radii is None else radii
    squared = np.asarray(f_mag, dtype=float) ** 2
    ascending = radii.radii
    values = np.array([r ** (4 - grid.n) * ball_sum_at(squared, grid, x, r) for r in ascending])
    monotone = bool(np.all(values[1:] >= values[:-1] * (1.0 - rtol)))
    theta = 0.0
    if len(ascending) >= 3:  # noqa: PLR2004
        _, intercept = np.polyfit(ascending[:3], values[:3], 1)
        theta = max(float(intercept), 0.0)
    elif len(ascending):
        theta = float(values[0])
    return DensityProfile(radii=ascending[::-1].copy(), values=values[::-1].copy(), monotone=monotone, theta=theta)


def radial_curvature_integral(curv: CurvatureField, x: NDArray) -> float:
    """`integral |F(y) . (x - y)/|x - y||^2 / |x - y|^(n-4) dy` over the cube.

    The node at `x`, if any, is skipped.

    Args:
        curv: The curvature.
        x: Centre point.

    Returns:
        The integral.
    """
    grid = curv.grid
    offset = np.asarray(x, dtype=float) - grid.points
    distance = np.linalg.norm(offset, axis=-1)
    keep = distance > grid.h / 2.0
    unit = np.where(keep[..., None], offset / np.where(keep, distance, 1.0)[..., None], 0.0)
    full = curv.full()
    radial = np.zeros((grid.n, *grid.shape))
    for a in range(grid.n):
        contracted = sum(full[a, b] * unit[..., b, None, None] for b in range(grid.n))
        radial[a] = operator_norm(contracted) ** 2
    density = np.sum(radial, axis=0) * np.where(keep, distance, 1.0) ** (4 - grid.n)
    return float(np.sum(np.where(keep, density, 0.0) * grid.weights))


def cnk_constant(n: int, k: int) -> float:
    """`c_{n,k}` = integral over the unit ball of `R^(n-k)` of `(1 - |v|^2)^((k-4)/2)`.

    Args:
        n: Ambient dimension.
        k: Stratum dimension, `4 <= k <= n <= 8`.

    Returns:
        The constant; 1 when `n == k`.

    Raises:
        ConfigError: Outside the admissible range.
    """
    if not 4 <= k <= n <= 8:  # noqa: PLR2004
        raise ConfigError(f"c_(n,k) needs 4 <= k <= n <= 8, got n={n}, k={k}")
    d = n - k
    if d == 0:
        return 1.0
    sphere = 2.0 * np.pi ** (d / 2.0) / special.gamma(d / 2.0)
    radial, _ = integrate.quad(lambda r: (1.0 - r * r) ** ((k - 4) / 2.0) * r ** (d - 1), 0.0, 1.0, epsabs=1e-13, epsrel=1e-12)
    return float(sphere * radial)


# Averaged triangle estimate.


def _uniform_in_ball(rng: np.random.Generator, centre: NDArray, radius: float, count: int) -> NDArray:
    n = len(centre)
    accepted: list[NDArray] = []
    while sum(len(part) for part in accepted) < count:
        direction = rng.normal(size=(2 * count, n))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        points = centre + radius * rng.uniform(size=(2 * count, 1)) ** (1.0 / n) * direction
        accepted.append(points[np.all((points >= 0) & (points <= 1), axis=1)])
    return np.concatenate(accepted)[:count]


def triangle_average_ratio(
    f_mag: ScalarField,
    grid: Grid,
    x: NDArray,
    r: float,
    big_r: float,
    rng: np.random.Generator,
    samples: int = 64,
) -> dict[str, float]:
    """Compare the averaged triangle integral with its fractional-integral bound.

    Estimates by Monte Carlo
    `L = integral_{B(x,R)} integral_{B(x,r)} integral_{triangle(x, x1, x2)} |F|`
    and evaluates
    `B = r^n R^n (integral_{B(x,r)} |F| |x-y|^(2-n) + r integral_{B(x,2R) - B(x,r)} |F| |x-y|^(1-n))`.

    Args:
        f_mag: Curvature magnitude.
        grid: The grid.
        x: Common vertex.
        r: Radius for the second vertex.
        big_r: Radius for the first vertex.
        rng: Random generator.
        samples: Number of sampled triangles.

    Returns:
        `lhs`, `rhs` and `ratio` (0 when both vanish).
    """
    x = np.asarray(x, dtype=float)
    first = _uniform_in_ball(rng, x, big_r, samples)
    second = _uniform_in_ball(rng, x, r, samples)
    values = np.asarray(f_mag, dtype=float)

    def _interpolate(points: NDArray) -> NDArray:
        return ndimage.map_coordinates(values, (points / grid.h).T, order=1, mode="nearest")

    integrals = []
    for x1, x2 in zip(first, second):
        tri = Triangle(np.stack([x, x1, x2]))
        integrals.append(triangle_integral(_interpolate, tri, rtol=1e-3, order=4, max_level=2) if tri.area > 0 else 0.0)
    volume_big = ball_sum_at(np.ones(grid.shape), grid, x, big_r)
    volume_small = ball_sum_at(np.ones(grid.shape), grid, x, r)
    lhs = volume_big * volume_small * float(np.mean(integrals))
    distance = np.linalg.norm(grid.points - x, axis=-1)
    safe = np.maximum(distance, grid.h / 2.0)
    inner = distance < r
    outer = (distance >= r) & (distance < 2.0 * big_r)
    mass = np.asarray(f_mag) * grid.weights
    rhs = r**grid.n * big_r**grid.n * (
        float(np.sum((mass * safe ** (2 - grid.n))[inner])) + r * float(np.sum((mass * safe ** (1 - grid.n))[outer]))
    )
    ratio = lhs / rhs if rhs > 0 else 0.0
    _logger.debug(f"triangle average at r={r:.3g}, R={big_r:.3g}: lhs={lhs:.3g}, rhs={rhs:.3g}")
    return {"lhs": lhs, "rhs": rhs, "ratio": ratio}
