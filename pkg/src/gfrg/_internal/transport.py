from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Literal

import numpy as np
from numpy.typing import NDArray

from gfrg._internal.errors import (
    ConfigError,
    NoConvergence,
    PathHitsSingularSet,
    SamplingExhausted,
    TriangleHitsSingularSet,
    UnsupportedSpec,
)
from gfrg._internal.field import ConnectionField, CurvatureField, curvature
from gfrg._internal.lie import AlgebraElement, GroupElement, operator_norm
from gfrg._internal.parallel import chunk_slices, map_chunks

_logger = logging.getLogger("gfrg.transport")

_GAUSS_OFFSETS = np.array([0.5 - np.sqrt(3.0) / 6.0, 0.5 + np.sqrt(3.0) / 6.0])
_MAGNUS_COMMUTATOR = np.sqrt(3.0) / 12.0
_INITIAL_STEPS = 4
_POINT_BUDGET = 2**17

ShapeKind = Literal["point", "segment", "triangle"]
"""Geometry drawn by `generic_sample`."""


# Geometry.


@dataclass(frozen=True, eq=False)
class PolyPath:
    """A polygonal path through the cube."""

    vertices: NDArray[np.float64]
    """Ordered vertices, shape `(k, n)` with `k >= 2`."""

    def __post_init__(self) -> None:
        vertices = np.asarray(self.vertices, dtype=float)
        if vertices.ndim != 2 or len(vertices) < 2:  # noqa: PLR2004
            raise ConfigError("a path needs at least two vertices")
        if np.any(np.all(vertices[1:] == vertices[:-1], axis=1)):
            raise ConfigError("consecutive path vertices must be distinct")
        object.__setattr__(self, "vertices", vertices)

    @property
    def starts(self) -> NDArray[np.float64]:
        """Segment start points."""
        return self.vertices[:-1]

    @property
    def ends(self) -> NDArray[np.float64]:
        """Segment end points."""
        return self.vertices[1:]

    def reversed(self) -> PolyPath:
        """The same path traversed backwards."""
        return PolyPath(self.vertices[::-1].copy())

    @property
    def length(self) -> float:
        """Euclidean length."""
        return float(np.sum(np.linalg.norm(np.diff(self.vertices, axis=0), axis=1)))


@dataclass(frozen=True, eq=False)
class Triangle:
    """A solid triangle with vertices `x0, x1, x2`."""

    vertices: NDArray[np.float64]
    """Shape `(3, n)`."""

    def __post_init__(self) -> None:
        vertices = np.asarray(self.vertices, dtype=float)
        if vertices.ndim != 2 or len(vertices) != 3:  # noqa: PLR2004
            raise ConfigError("a triangle needs exactly three vertices")
        object.__setattr__(self, "vertices", vertices)

    def loop(self) -> PolyPath:
        """The boundary loop `x0 -> x1 -> x2 -> x0`."""
        return PolyPath(np.concatenate([self.vertices, self.vertices[:1]]))

    @property
    def edges(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Edge vectors `x1 - x0` and `x2 - x0`."""
        return self.vertices[1] - self.vertices[0], self.vertices[2] - self.vertices[0]

    @property
    def area(self) -> float:
        """Two-dimensional area."""
        u, v = self.edges
        gram = float(u @ u) * float(v @ v) - float(u @ v) ** 2
        return 0.5 * float(np.sqrt(max(gram, 0.0)))

    @property
    def diameter(self) -> float:
        """Longest edge length."""
        x0, x1, x2 = self.vertices
        return float(max(np.linalg.norm(x1 - x0), np.linalg.norm(x2 - x1), np.linalg.norm(x0 - x2)))

    def frame(self) -> NDArray[np.float64]:
        """Orthonormal basis `(e1, e2)` of the triangle plane, oriented like `(x1 - x0, x2 - x0)`.

        Returns:
            Array of shape `(2, n)`.

        Raises:
            ConfigError: For degenerate triangles.
        """
        u, v = self.edges
        e1 = u / np.linalg.norm(u)
        w = v - (v @ e1) * e1
        norm = np.linalg.norm(w)
        if norm < 1e-14 * max(1.0, float(np.linalg.norm(v))):
            raise ConfigError("degenerate triangle")
        return np.stack([e1, w / norm])

    def subdivide(self) -> list[Triangle]:
        """Split into four congruent triangles through the edge midpoints."""
        x0, x1, x2 = self.vertices
        m01, m12, m20 = (x0 + x1) / 2, (x1 + x2) / 2, (x2 + x0) / 2
        return [
            Triangle(np.stack([x0, m01, m20])),
            Triangle(np.stack([m01, x1, m12])),
            Triangle(np.stack([m20, m12, x2])),
            Triangle(np.stack([m01, m12, m20])),
        ]

    def bisect(self) -> tuple[Triangle, Triangle]:
        """Split through the midpoint of the longest edge, keeping orientation."""
        vertices = self.vertices
        lengths = [np.linalg.norm(vertices[(i + 1) % 3] - vertices[i]) for i in range(3)]
        i = int(np.argmax(lengths))
        a, b, c = vertices[i], vertices[(i + 1) % 3], vertices[(i + 2) % 3]
        mid = (a + b) / 2
        return Triangle(np.stack([a, mid, c])), Triangle(np.stack([mid, b, c]))


@dataclass(frozen=True, eq=False)
class SingularSetModel:
    """An analytic singular set: points, affine planes and closed balls.

    Planes are stored as an origin and an orthonormal set of direction rows.
    """

    n: int
    """Ambient dimension."""
    points: NDArray[np.float64] = field(default_factory=lambda: np.zeros((0, 0)))
    """Point primitives, shape `(p, n)`."""
    planes: tuple[tuple[NDArray[np.float64], NDArray[np.float64]], ...] = ()
    """Plane primitives as `(origin (n,), directions (d, n))` pairs."""
    balls: NDArray[np.float64] = field(default_factory=lambda: np.zeros((0, 0)))
    """Ball primitives as rows `(center..., radius)`, shape `(b, n + 1)`."""

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=float).reshape(-1, self.n)
        balls = np.asarray(self.balls, dtype=float).reshape(-1, self.n + 1)
        planes = []
        for origin, directions in self.planes:
            basis = np.asarray(directions, dtype=float).reshape(-1, self.n)
            if len(basis):
                basis = np.linalg.qr(basis.T)[0].T
            planes.append((np.asarray(origin, dtype=float).reshape(self.n), basis))
        if np.any(balls[:, -1] < 0):
            raise ConfigError("ball radii must be non-negative")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "balls", balls)
        object.__setattr__(self, "planes", tuple(planes))

    @classmethod
    def empty(cls, n: int) -> SingularSetModel:
        """The empty singular set.

        Args:
            n: Ambient dimension.

        Returns:
            A model with no primitives.
        """
        return cls(n)

    @classmethod
    def central_plane(cls, n: int) -> SingularSetModel:
        """An `(n - 4)`-plane through the centre of the cube, spanned by the last axes.

        Args:
            n: Ambient dimension, at least 4.

        Returns:
            The model (a single point when `n == 4`).

        Raises:
            UnsupportedSpec: For `n < 4`.
        """
        if n < 4:  # noqa: PLR2004
            raise UnsupportedSpec(f"an (n-4)-plane needs n >= 4, got {n}")
        directions = np.eye(n)[4:]
        return cls(n, planes=((np.full(n, 0.5), directions),))

    @property
    def is_empty(self) -> bool:
        """Whether the model has no primitives."""
        return not (len(self.points) or len(self.planes) or len(self.balls))

    def _complement(self, vectors: NDArray, basis: NDArray) -> NDArray:
        if not len(basis):
            return vectors
        return vectors - (vectors @ basis.T) @ basis

    def rho(self, x: NDArray) -> NDArray[np.float64]:
        """Exact distance to the singular set.

        Args:
            x: Points of shape `(..., n)`.

        Returns:
            Distances of shape `(...)`; infinite for the empty set.
        """
        x = np.asarray(x, dtype=float)
        best = np.full(x.shape[:-1], np.inf)
        for point in self.points:
            best = np.minimum(best, np.linalg.norm(x - point, axis=-1))
        for origin, basis in self.planes:
            best = np.minimum(best, np.linalg.norm(self._complement(x - origin, basis), axis=-1))
        for ball in self.balls:
            best = np.minimum(best, np.maximum(np.linalg.norm(x - ball[:-1], axis=-1) - ball[-1], 0.0))
        return best

    def segment_rho(self, starts: NDArray, ends: NDArray) -> NDArray[np.float64]:
        """Distance from each segment `[start, end]` to the singular set.

        Args:
            starts: Shape `(..., n)`.
            ends: Shape `(..., n)`.

        Returns:
            Shape `(...)`.
        """
        starts = np.asarray(starts, dtype=float)
        ends = np.asarray(ends, dtype=float)
        best = np.full(np.broadcast_shapes(starts.shape, ends.shape)[:-1], np.inf)
        for point in self.points:
            best = np.minimum(best, _segment_origin_distance(starts - point, ends - point))
        for origin, basis in self.planes:
            best = np.minimum(
                best,
                _segment_origin_distance(self._complement(starts - origin, basis), self._complement(ends - origin, basis)),
            )
        for ball in self.balls:
            distance = _segment_origin_distance(starts - ball[:-1], ends - ball[:-1])
            best = np.minimum(best, np.maximum(distance - ball[-1], 0.0))
        return best

    def path_rho(self, path: PolyPath) -> float:
        """Distance from a polygonal path to the singular set.

        Args:
            path: The path.

        Returns:
            The smallest segment distance.
        """
        return float(np.min(self.segment_rho(path.starts, path.ends)))

    def triangle_rho(self, tri: Triangle) -> float:
        """Distance from a solid triangle to the singular set.

        Args:
            tri: The triangle.

        Returns:
            The distance.
        """
        best = np.inf
        vertices = tri.vertices
        for point in self.points:
            best = min(best, _triangle_origin_distance(vertices - point))
        for origin, basis in self.planes:
            best = min(best, _triangle_origin_distance(self._complement(vertices - origin, basis)))
        for ball in self.balls:
            best = min(best, max(_triangle_origin_distance(vertices - ball[:-1]) - ball[-1], 0.0))
        return float(best)

    def to_dict(self) -> dict[str, Any]:
        """JSON-compatible description.

        Returns:
            A mapping accepted by `from_dict`.
        """
        return {
            "n": self.n,
            "points": self.points.tolist(),
            "planes": [{"origin": origin.tolist(), "directions": basis.tolist()} for origin, basis in self.planes],
            "balls": self.balls.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SingularSetModel:
        """Rebuild a model from `to_dict` output.

        Args:
            data: The mapping.

        Returns:
            The model.

        Raises:
            ConfigError: On malformed input.
        """
        try:
            n = int(data["n"])
            planes = tuple(
                (np.asarray(plane["origin"], dtype=float), np.asarray(plane["directions"], dtype=float).reshape(-1, n))
                for plane in data.get("planes", [])
            )
            return cls(n, np.asarray(data.get("points", []), dtype=float), planes, np.asarray(data.get("balls", []), dtype=float))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed singular set description: {exc}") from exc


def _segment_origin_distance(starts: NDArray, ends: NDArray) -> NDArray[np.float64]:
    direction = ends - starts
    length2 = np.sum(direction**2, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(length2 > 0, -np.sum(starts * direction, axis=-1) / np.where(length2 > 0, length2, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    return np.linalg.norm(starts + t[..., None] * direction, axis=-1)


def _triangle_origin_distance(vertices: NDArray) -> float:
    x0, x1, x2 = vertices
    u, v = x1 - x0, x2 - x0
    gram = np.array([[u @ u, u @ v], [u @ v, v @ v]])
    det = float(np.linalg.det(gram))
    if det > 1e-14 * float(np.trace(gram)) ** 2:
        s, t = np.linalg.solve(gram, -np.array([x0 @ u, x0 @ v]))
        if s >= 0 and t >= 0 and s + t <= 1:
            return float(np.linalg.norm(x0 + s * u + t * v))
    edges = _segment_origin_distance(vertices, np.roll(vertices, -1, axis=0))
    return float(np.min(edges))


# Parallel transport.


def _ordered_product(factors: GroupElement) -> GroupElement:
    """Ordered product along axis 1 by pairwise reduction: `F_0 F_1 ... F_{s-1}`."""
    while factors.shape[1] > 1:
        if factors.shape[1] % 2:
            eye = np.broadcast_to(np.eye(factors.shape[-1], dtype=complex), (factors.shape[0], 1, *factors.shape[2:]))
            factors = np.concatenate([factors, eye], axis=1)
        factors = factors[:, 0::2] @ factors[:, 1::2]
    return factors[:, 0]


def _magnus_transport(connection: ConnectionField, starts: NDArray, ends: NDArray, steps: int) -> GroupElement:
    group = connection.group
    n = connection.n
    count = len(starts)
    offsets = (np.arange(steps)[:, None] + _GAUSS_OFFSETS[None, :]) / steps
    direction = ends - starts
    points = starts[:, None, None, :] + offsets[None, :, :, None] * direction[:, None, None, :]
    values = connection.sample(points.reshape(-1, n)).reshape(count, steps, 2, n, group.N, group.N)
    tangent = np.einsum("ka,ksgaij->ksgij", direction, values)
    dt = 1.0 / steps
    first, second = tangent[:, :, 0], tangent[:, :, 1]
    omega = (dt / 2.0) * (first + second) + _MAGNUS_COMMUTATOR * dt**2 * (first @ second - second @ first)
    return _ordered_product(group.exp(omega))


def transport_segments(
    connection: ConnectionField,
    starts: NDArray,
    ends: NDArray,
    tol: float = 1e-9,
    max_doublings: int = 20,
    threads: int = 1,
) -> GroupElement:
    """Parallel transport along many straight segments at once.

    Solves `dU/dt = U (v . A(gamma(t)))`, `U(0) = 1`, on each segment with a
    fourth-order Magnus integrator (two Gauss points per step). The number of
    steps doubles until two successive products differ by less than `tol`;
    converged segments are frozen while the rest keep refining.

    Args:
        connection: The connection.
        starts: Segment starts, shape `(k, n)`.
        ends: Segment ends, shape `(k, n)`.
        tol: Operator-norm tolerance between successive refinements.
        max_doublings: Refinement budget; steps never exceed `2**max_doublings`.
        threads: Worker count for independent chunks of segments.

    Returns:
        Group elements of shape `(k, N, N)`.

    Raises:
        NoConvergence: If some segment needs more than `2**max_doublings` steps.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    ends = np.atleast_2d(np.asarray(ends, dtype=float))
    size = connection.group.N
    result = np.empty((len(starts), size, size), dtype=complex)
    if not len(starts):
        return result

    def _solve(part: slice) -> GroupElement:
        a, b = starts[part], ends[part]
        out = np.empty((len(a), size, size), dtype=complex)
        pending = np.arange(len(a))
        steps = _INITIAL_STEPS
        previous = _chunked_magnus(connection, a, b, steps)
        while len(pending):
            steps *= 2
            if steps > 2**max_doublings:
                raise NoConvergence(
                    f"transport needs more than 2^{max_doublings} steps",
                    unconverged=len(pending),
                    steps=steps // 2,
                )
            current = _chunked_magnus(connection, a[pending], b[pending], steps)
            change = operator_norm(current - previous)
            done = change < tol
            out[pending[done]] = current[done]
            pending = pending[~done]
            previous = current[~done]
        return out

    chunk = max(1, _POINT_BUDGET // (2 * _INITIAL_STEPS))
    for part, values in zip(chunk_slices(len(starts), chunk), map_chunks(_solve, len(starts), chunk, threads)):
        result[part] = values
    return result


def _chunked_magnus(connection: ConnectionField, starts: NDArray, ends: NDArray, steps: int) -> GroupElement:
    chunk = max(1, _POINT_BUDGET // (2 * steps))
    if len(starts) <= chunk:
        return _magnus_transport(connection, starts, ends, steps)
    return np.concatenate(
        [_magnus_transport(connection, starts[part], ends[part], steps) for part in chunk_slices(len(starts), chunk)],
    )


def transport_paths(
    connection: ConnectionField,
    vertices: NDArray,
    tol: float = 1e-9,
    max_doublings: int = 20,
    threads: int = 1,
) -> GroupElement:
    """Transport along many polygonal paths with the same vertex count.

    Later segments multiply on the right: `A[[x0 -> x1 -> x2]] = A[[x0 -> x1]] A[[x1 -> x2]]`.

    Args:
        connection: The connection.
        vertices: Shape `(k, v, n)` with `v >= 2`.
        tol: Per-segment tolerance.
        max_doublings: Refinement budget.
        threads: Worker count.

    Returns:
        Group elements of shape `(k, N, N)`.
    """
    vertices = np.asarray(vertices, dtype=float)
    count, corners, n = vertices.shape
    starts = vertices[:, :-1].reshape(-1, n)
    ends = vertices[:, 1:].reshape(-1, n)
    moving = np.any(starts != ends, axis=1)
    size = connection.group.N
    segments = np.broadcast_to(np.eye(size, dtype=complex), (len(starts), size, size)).copy()
    if np.any(moving):
        segments[moving] = transport_segments(connection, starts[moving], ends[moving], tol, max_doublings, threads)
    return _ordered_product(segments.reshape(count, corners - 1, size, size))


def _check_clearance(singular: SingularSetModel | None, distance: Callable[[SingularSetModel], float], h: float, error: type[PathHitsSingularSet]) -> None:
    if singular is None or singular.is_empty:
        return
    rho = distance(singular)
    if rho <= h:
        raise error(f"geometry within {rho:.3g} <= h = {h:.3g} of the singular set", rho=rho, h=h)


def transport(
    connection: ConnectionField,
    path: PolyPath,
    tol: float = 1e-9,
    singular: SingularSetModel | None = None,
    max_doublings: int = 20,
) -> GroupElement:
    """Parallel transport `A[[x0 -> ... -> xk]]` along a polygonal path.

    Args:
        connection: The connection.
        path: The path.
        tol: Per-segment tolerance.
        singular: Singular set the path must clear by more than one grid spacing.
        max_doublings: Refinement budget.

    Returns:
        The transport, an `N x N` group element.

    Raises:
        PathHitsSingularSet: If the path comes within `h` of the singular set.
    """
    _check_clearance(singular, lambda model: model.path_rho(path), connection.grid.h, PathHitsSingularSet)
    return transport_paths(connection, path.vertices[None], tol, max_doublings)[0]


def monodromy(
    connection: ConnectionField,
    tri: Triangle,
    tol: float = 1e-9,
    singular: SingularSetModel | None = None,
    max_doublings: int = 20,
) -> GroupElement:
    """Transport around the boundary loop `x0 -> x1 -> x2 -> x0`.

    Args:
        connection: The connection.
        tri: The triangle.
        tol: Per-segment tolerance.
        singular: Singular set the loop must clear.
        max_doublings: Refinement budget.

    Returns:
        The monodromy.
    """
    return transport(connection, tri.loop(), tol, singular, max_doublings)


# Surface integrals and the Stokes inequality.


def _collapsed_rule(order: int) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes = (nodes + 1.0) / 2.0
    weights = weights / 2.0
    s, t = np.meshgrid(nodes, nodes, indexing="ij")
    w = np.multiply.outer(weights, weights) * s
    return s.ravel(), t.ravel(), w.ravel()


def triangle_integral(
    function: Callable[[NDArray[np.float64]], NDArray[np.float64]],
    tri: Triangle,
    rtol: float = 1e-6,
    order: int = 8,
    max_level: int = 5,
    atol: float = 1e-14,
) -> float:
    """Integrate a scalar function over a solid triangle.

    Uses a collapsed tensor Gauss-Legendre rule on composite midpoint
    refinements (`4^level` sub-triangles) until two levels agree to `rtol`.

    Args:
        function: Maps points `(k, n)` to values `(k,)`.
        tri: The triangle.
        rtol: Relative change that stops refinement.
        order: Gauss points per direction.
        max_level: Finest composite level.
        atol: Absolute change that also stops refinement.

    Returns:
        The integral against two-dimensional area.
    """
    s, t, w = _collapsed_rule(order)
    pieces = [tri]
    previous = None
    estimate = 0.0
    for level in range(max_level + 1):
        vertices = np.stack([piece.vertices for piece in pieces])
        x0, x1, x2 = vertices[:, 0], vertices[:, 1], vertices[:, 2]
        points = (
            x0[:, None, :]
            + s[None, :, None] * (x1 - x0)[:, None, :]
            + (s * t)[None, :, None] * (x2 - x1)[:, None, :]
        )
        values = np.asarray(function(points.reshape(-1, tri.vertices.shape[1]))).reshape(len(pieces), -1)
        areas = np.array([piece.area for piece in pieces])
        estimate = float(np.sum(2.0 * areas * (values @ w)))
        if previous is not None and abs(estimate - previous) <= max(rtol * abs(estimate), atol):
            return estimate
        previous = estimate
        if level < max_level:
            pieces = [child for piece in pieces for child in piece.subdivide()]
    _logger.debug(f"triangle quadrature stopped at level {max_level} (value {estimate:.6g})")
    return estimate


def planar_curvature(curv: CurvatureField, points: NDArray, frame: NDArray) -> AlgebraElement:
    """Curvature evaluated on a 2-plane: `F(e1, e2) = sum_ab F_ab e1_a e2_b`.

    Args:
        curv: The curvature.
        points: Shape `(k, n)`.
        frame: Two vectors, shape `(2, n)`.

    Returns:
        Algebra elements of shape `(k, N, N)`.
    """
    e1, e2 = frame
    coefficients = np.array([e1[a] * e2[b] - e1[b] * e2[a] for a, b in curv.pairs])
    return np.tensordot(coefficients, np.moveaxis(curv.sample(points), 1, 0), axes=1)


@dataclass(frozen=True)
class StokesResult:
    """Both sides of the non-abelian Stokes inequality."""

    lhs: float
    """`|monodromy - 1|`."""
    rhs: float
    """Surface integral of the curvature magnitude."""
    ratio: float
    """`lhs / rhs`, or 0 when both sides vanish."""


def stokes_check(
    connection: ConnectionField,
    tri: Triangle,
    tol: float = 1e-9,
    singular: SingularSetModel | None = None,
    curv: CurvatureField | None = None,
    integrand: Literal["tangential", "full"] = "tangential",
    rtol: float = 1e-6,
) -> StokesResult:
    """Compare `|A[[loop]] - 1|` with the integral of `|F|` over the solid triangle.

    The default integrand is the tangential curvature `|F(e1, e2)|`; `full`
    integrates the whole magnitude `|F|`, which only enlarges the right side.

    Args:
        connection: The connection.
        tri: The triangle.
        tol: Transport tolerance.
        singular: Singular set the triangle must clear.
        curv: Precomputed curvature of `connection`.
        integrand: `tangential` or `full`.
        rtol: Quadrature refinement tolerance.

    Returns:
        The two sides and their ratio.

    Raises:
        TriangleHitsSingularSet: If the solid triangle comes within `h` of the singular set.
    """
    _check_clearance(singular, lambda model: model.triangle_rho(tri), connection.grid.h, TriangleHitsSingularSet)
    hol = monodromy(connection, tri, tol)
    lhs = float(operator_norm(hol - np.eye(connection.group.N)))
    curv = curvature(connection) if curv is None else curv
    if integrand == "tangential":
        frame = tri.frame()

        def _density(points: NDArray) -> NDArray:
            return operator_norm(planar_curvature(curv, points, frame))
    else:

        def _density(points: NDArray) -> NDArray:
            return np.sqrt(2.0 * np.sum(operator_norm(curv.sample(points)) ** 2, axis=1))

    rhs = triangle_integral(_density, tri, rtol=rtol)
    if rhs < tol:
        ratio = 0.0 if lhs <= tol else float("inf")
    else:
        ratio = lhs / rhs
    return StokesResult(lhs=lhs, rhs=rhs, ratio=ratio)


# Curvature from small loops.


@dataclass(frozen=True, eq=False)
class LoopCurvature:
    """Curvature recovered from shrinking triangular loops."""

    epsilons: NDArray[np.float64]
    """Loop sizes, decreasing."""
    estimates: AlgebraElement
    """`2 (monodromy - 1) / eps^2` projected to the algebra, one per size."""
    limit: AlgebraElement
    """Richardson extrapolation eliminating the `eps^1 .. eps^(k-1)` terms of `k` sizes."""
    order: float
    """Observed convergence order in `eps` (NaN with fewer than three sizes)."""


def curvature_from_loops(
    connection: ConnectionField,
    x0: NDArray,
    v1: NDArray,
    v2: NDArray,
    epsilons: NDArray | list[float],
    tol: float = 1e-12,
    singular: SingularSetModel | None = None,
) -> LoopCurvature:
    """Recover `F(v1, v2)` at `x0` from the loops `x0 -> x0 + eps v1 -> x0 + eps v2 -> x0`.

    Args:
        connection: The connection.
        x0: Base point.
        v1: First direction.
        v2: Second direction.
        epsilons: Decreasing loop sizes with a constant ratio.
        tol: Transport tolerance.
        singular: Singular set the loops must clear.

    Returns:
        The estimates, their extrapolated limit and the observed order.

    Raises:
        ConfigError: If fewer than two sizes are given.
    """
    eps = np.asarray(epsilons, dtype=float)
    if len(eps) < 2:  # noqa: PLR2004
        raise ConfigError("curvature_from_loops needs at least two loop sizes")
    x0, v1, v2 = (np.asarray(vector, dtype=float) for vector in (x0, v1, v2))
    group = connection.group
    estimates = []
    for size in eps:
        tri = Triangle(np.stack([x0, x0 + size * v1, x0 + size * v2]))
        hol = monodromy(connection, tri, tol, singular)
        estimates.append(group.to_algebra(2.0 * (hol - np.eye(group.N)) / size**2))
    values = np.array(estimates)
    ratio = eps[-2] / eps[-1]
    table = values
    for power in range(1, len(eps)):
        factor = ratio**power
        table = (factor * table[1:] - table[:-1]) / (factor - 1.0)
    limit = group.to_algebra(table[-1])
    order = float("nan")
    if len(eps) >= 3:  # noqa: PLR2004
        coarse = float(operator_norm(values[-2] - values[-3]))
        fine = float(operator_norm(values[-1] - values[-2]))
        if fine > 0 and coarse > 0:
            order = float(np.log(coarse / fine) / np.log(ratio))
    return LoopCurvature(epsilons=eps, estimates=values, limit=limit, order=order)


# Generic geometry.


@dataclass(frozen=True, eq=False)
class GenericSample:
    """Geometry accepted by rejection sampling."""

    vertices: NDArray[np.float64]
    """Accepted vertices, shape `(k, n)`."""
    draws: int
    """Number of draws used, including the accepted one."""


_VERTEX_COUNT = {"point": 1, "segment": 2, "triangle": 3}


def generic_sample(
    singular: SingularSetModel | None,
    shape: ShapeKind,
    rng: np.random.Generator,
    h: float,
    bbox: tuple[NDArray, NDArray] | None = None,
    clearance: float | None = None,
    max_draws: int = 10_000,
) -> GenericSample:
    """Draw a point, segment or triangle that clears the singular set.

    Args:
        singular: The singular set (`None` for none).
        shape: Geometry kind.
        rng: Random generator.
        h: Grid spacing.
        bbox: Box `(lower, upper)` to draw vertices from; the unit cube by default.
        clearance: Required distance; `2h` by default.
        max_draws: Rejection budget.

    Returns:
        The accepted geometry and the number of draws.

    Raises:
        ConfigError: For unknown shapes.
        SamplingExhausted: If no draw clears the set within the budget.
    """
    if shape not in _VERTEX_COUNT:
        raise ConfigError(f"unknown shape {shape!r}")
    n = singular.n if singular is not None else (len(bbox[0]) if bbox is not None else None)
    if n is None:
        raise ConfigError("dimension unknown: pass a singular set or a bounding box")
    lower, upper = (np.zeros(n), np.ones(n)) if bbox is None else (np.asarray(bbox[0], float), np.asarray(bbox[1], float))
    clearance = 2.0 * h if clearance is None else clearance
    count = _VERTEX_COUNT[shape]
    for draw in range(1, max_draws + 1):
        vertices = rng.uniform(lower, upper, size=(count, n))
        if singular is None or singular.is_empty:
            return GenericSample(vertices, draw)
        if shape == "point":
            rho = float(singular.rho(vertices[0]))
        elif shape == "segment":
            rho = float(singular.segment_rho(vertices[0], vertices[1]))
        else:
            rho = singular.triangle_rho(Triangle(vertices))
        if rho > clearance:
            return GenericSample(vertices, draw)
    raise SamplingExhausted(
        f"no {shape} clearing the singular set by {clearance:.3g} in {max_draws} draws",
        shape=shape,
        clearance=clearance,
        max_draws=max_draws,
    )
