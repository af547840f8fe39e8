from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage, spatial

from gfrg._internal.config import IntegratorConfig, SamplingConfig
from gfrg._internal.errors import (
    ClusteringViolated,
    ConstraintViolated,
    EmptyDomain,
    GridMismatch,
    MaskMismatch,
    OutsideTubularNeighbourhood,
    SamplingExhausted,
    WeightMassTooSmall,
)
from gfrg._internal.field import (
    ConnectionField,
    GaugeField,
    Grid,
    NodeMask,
    ScalarField,
    apply_gauge,
    connection_magnitude,
    curvature,
    curvature_magnitude,
    gradient,
)
from gfrg._internal.lie import GroupElement, LieGroup, WeightedSamples, clustering_statistic, operator_norm
from gfrg._internal.morrey import (
    MorreyParams,
    RadiusSet,
    StratConfig,
    ball_sums,
    morrey_norm,
    riesz_kernel_integral,
    riesz_potential,
    t_m_field,
)
from gfrg._internal.parallel import map_chunks
from gfrg._internal.transport import SingularSetModel, transport_paths

_logger = logging.getLogger("gfrg.gaugebuild")

_NODE_CHUNK = 32
_INNER_FACTOR = 5.0
_FAR_FACTOR = 20.0


def bump(t: NDArray) -> NDArray[np.float64]:
    """Quintic cutoff: 1 for `t <= 1`, 0 for `t >= 2`, twice continuously differentiable.

    Args:
        t: Non-negative arguments.

    Returns:
        Values in `[0, 1]`.
    """
    s = np.clip(2.0 - np.asarray(t, dtype=float), 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


@dataclass(frozen=True, eq=False)
class PartialGauge:
    """A gauge transformation defined on the nodes of `Omega_m`."""

    grid: Grid
    """The grid."""
    group: LieGroup
    """Structure group."""
    mask: NodeMask
    """Nodes where the gauge is defined."""
    values: GroupElement
    """Shape `(*grid.shape, N, N)`; the identity off the mask."""
    level: int
    """Stratification level `m`."""
    statistics: ScalarField = field(repr=False)
    """Clustering statistic of each averaged node, NaN elsewhere."""
    reference: ScalarField | None = field(default=None, repr=False)
    """Kernel bound the statistic is compared against, when computed."""
    dropped: int = 0
    """Nodes removed because their samples could not be averaged."""
    origin: NDArray[np.float64] | None = None
    """Origin of the level-1 construction."""

    def __post_init__(self) -> None:
        if self.mask.shape != self.grid.shape or self.values.shape != (*self.grid.shape, self.group.N, self.group.N):
            raise GridMismatch("partial gauge arrays do not match the grid")
        self.group.check_elements(self.values[self.mask], tol=1e-9)

    def filled(self) -> GaugeField:
        """A full gauge field equal to the nearest masked value off the mask.

        Returns:
            The gauge field.

        Raises:
            EmptyDomain: If the mask is empty.
        """
        if not self.mask.any():
            raise EmptyDomain(f"level-{self.level} gauge has an empty domain")
        if self.mask.all():
            return GaugeField(self.grid, self.group, self.values)
        nearest = ndimage.distance_transform_edt(~self.mask, return_distances=False, return_indices=True)
        return GaugeField(self.grid, self.group, self.values[tuple(nearest)])

    def gauged(self, connection: ConnectionField) -> ConnectionField:
        """`sigma_m(A)` using the filled gauge.

        Args:
            connection: The connection.

        Returns:
            The gauge-transformed connection (meaningful on the mask).
        """
        return apply_gauge(self.filled(), connection)


@dataclass(frozen=True)
class OriginChoice:
    """The selected origin and its kernel integral."""

    point: NDArray[np.float64]
    """Origin coordinates."""
    index: tuple[int, ...]
    """Node index of the origin."""
    value: float
    """`integral |F(y)| / |y - x*|^(n-2)` at the origin."""
    median: float
    """Median of the same integral over the candidates."""
    total: float
    """`integral |F|` over the cube."""


def choose_origin(
    f_mag: ScalarField,
    grid: Grid,
    omega: NodeMask,
    rng: np.random.Generator,
    sample_size: int = 64,
) -> OriginChoice:
    """Pick the sampled node of `Omega_1` with the smallest Riesz integral of exponent 2.

    Args:
        f_mag: Curvature magnitude.
        grid: The grid.
        omega: The `Omega_1` mask.
        rng: Random generator.
        sample_size: Number of candidates.

    Returns:
        The choice.

    Raises:
        EmptyDomain: If `Omega_1` is empty.
    """
    nodes = np.argwhere(omega)
    if not len(nodes):
        raise EmptyDomain("Omega_1 is empty; no origin can be chosen")
    picks = rng.choice(len(nodes), size=min(sample_size, len(nodes)), replace=False)
    candidates = nodes[picks]
    values = np.atleast_1d(riesz_kernel_integral(f_mag, grid, candidates * grid.h, exponent=2))
    best = int(np.argmin(values))
    return OriginChoice(
        point=candidates[best] * grid.h,
        index=tuple(int(i) for i in candidates[best]),
        value=float(values[best]),
        median=float(np.median(values)),
        total=float(np.sum(np.asarray(f_mag) * grid.weights)),
    )


def _draw_clear(
    propose: Callable[[int], NDArray],
    accept: Callable[[NDArray], NDArray],
    count: int,
    max_draws: int,
) -> NDArray:
    parts = []
    filled = 0
    draws = 0
    while filled < count:
        if draws >= max_draws:
            raise SamplingExhausted(f"only {filled} of {count} paths clear the singular set after {draws} draws", draws=draws)
        batch = propose(count - filled)
        draws += len(batch)
        batch = batch[accept(batch)][: count - filled]
        parts.append(batch)
        filled += len(batch)
    return np.concatenate(parts)


def _path_clearance(singular: SingularSetModel | None, h: float, vertices: NDArray) -> NDArray[np.bool_]:
    if singular is None or singular.is_empty:
        return np.ones(len(vertices), dtype=bool)
    clear = np.ones(len(vertices), dtype=bool)
    for corner in range(vertices.shape[1] - 1):
        clear &= singular.segment_rho(vertices[:, corner], vertices[:, corner + 1]) > h
    return clear


def _node_rng(seed: int, level: int, grid: Grid, index: NDArray) -> np.random.Generator:
    flat = int(np.ravel_multi_index(tuple(int(i) for i in index), grid.shape))
    return np.random.default_rng([seed, level, flat])


def _average_nodes(
    group: LieGroup,
    transports: NDArray,
    count: int,
) -> tuple[NDArray, NDArray, NDArray]:
    values = np.empty((len(transports) // count, group.N, group.N), dtype=complex)
    stats = np.empty(len(values))
    ok = np.ones(len(values), dtype=bool)
    for node in range(len(values)):
        samples = WeightedSamples.uniform(transports[node * count : (node + 1) * count])
        stats[node] = clustering_statistic(samples)
        try:
            values[node] = group.average(samples)
        except (ClusteringViolated, OutsideTubularNeighbourhood):
            values[node] = np.eye(group.N)
            ok[node] = False
    return values, stats, ok


def _assemble(
    grid: Grid,
    group: LieGroup,
    nodes: NDArray,
    results: list[tuple[NDArray, NDArray, NDArray]],
    level: int,
    drop_fraction: float,
) -> tuple[NodeMask, GroupElement, ScalarField, int]:
    values = np.concatenate([part[0] for part in results])
    stats = np.concatenate([part[1] for part in results])
    ok = np.concatenate([part[2] for part in results])
    dropped = int(np.sum(~ok))
    if dropped > drop_fraction * len(nodes):
        raise ClusteringViolated(
            f"averaging failed at {dropped} of {len(nodes)} level-{level} nodes",
            dropped=dropped,
            total=len(nodes),
            max_statistic=float(np.max(stats)),
        )
    index = tuple(nodes.T)
    mask = np.zeros(grid.shape, dtype=bool)
    mask[index] = ok
    gauge = group.identity(grid.shape)
    gauge[index] = values
    statistics = np.full(grid.shape, np.nan)
    statistics[index] = stats
    if dropped:
        _logger.warning(f"level {level}: dropped {dropped} of {len(nodes)} nodes whose samples do not cluster")
    return mask, gauge, statistics, dropped


def base_gauge(
    connection: ConnectionField,
    omega: NodeMask,
    origin: NDArray,
    singular: SingularSetModel | None = None,
    sampling: SamplingConfig | None = None,
    integrator: IntegratorConfig | None = None,
    seed: int = 0,
    threads: int = 1,
) -> PartialGauge:
    """Averaged radial gauge on `Omega_1`.

    For each node `x`, samples `x1` uniformly in the cube (rejecting paths
    within `h` of the singular set), transports `f(x1) = A[[x* -> x1 -> x]]`
    and averages the samples on the group.

    Args:
        connection: The connection.
        omega: The `Omega_1` mask.
        origin: The origin `x*`.
        singular: Singular set the paths must clear.
        sampling: Sample sizes.
        integrator: Transport settings.
        seed: Root seed; node `x` draws from `default_rng([seed, 1, flat(x)])`.
        threads: Worker count.

    Returns:
        The level-1 partial gauge.

    Raises:
        EmptyDomain: If `Omega_1` is empty.
        ClusteringViolated: If more than the admissible fraction of nodes is dropped.
    """
    sampling = sampling or SamplingConfig()
    integrator = integrator or IntegratorConfig()
    grid, group = connection.grid, connection.group
    nodes = np.argwhere(omega)
    if not len(nodes):
        raise EmptyDomain("Omega_1 is empty")
    origin = np.asarray(origin, dtype=float)
    count = sampling.base_paths

    def _chunk(part: slice) -> tuple[NDArray, NDArray, NDArray]:
        vertices = []
        for index in nodes[part]:
            rng = _node_rng(seed, 1, grid, index)
            x = index * grid.h

            def _propose(size: int, rng: np.random.Generator = rng, x: NDArray = x) -> NDArray:
                x1 = rng.uniform(0.0, 1.0, size=(size, grid.n))
                return np.stack([np.broadcast_to(origin, x1.shape), x1, np.broadcast_to(x, x1.shape)], axis=1)

            vertices.append(
                _draw_clear(_propose, lambda v: _path_clearance(singular, grid.h, v), count, sampling.max_draws),
            )
        transports = transport_paths(connection, np.concatenate(vertices), integrator.tol, integrator.max_doublings)
        return _average_nodes(group, transports, count)

    results = map_chunks(_chunk, len(nodes), _NODE_CHUNK, threads)
    mask, values, statistics, dropped = _assemble(grid, group, nodes, results, 1, sampling.drop_fraction)
    _logger.info(
        f"level 1 gauge: {int(mask.sum())} nodes, {dropped} dropped, "
        f"max clustering statistic {np.nanmax(statistics):.3g}",
    )
    return PartialGauge(grid, group, mask, values, 1, statistics, dropped=dropped, origin=origin)


def inductive_step(
    connection: ConnectionField,
    previous: PartialGauge,
    omega: NodeMask,
    cfg: StratConfig,
    singular: SingularSetModel | None = None,
    sampling: SamplingConfig | None = None,
    integrator: IntegratorConfig | None = None,
    seed: int = 0,
    threads: int = 1,
    f_mag: ScalarField | None = None,
) -> PartialGauge:
    """Extend a level-`m` gauge to `Omega_(m+1)`.

    Each node `x` draws sample points `x1` with density proportional to
    `psi((y - x)/R)` on the nodes of `Omega_m` (jittered inside their cells)
    and averages `f(x1) = sigma_m(node) A[[node -> x1 -> x]]`. The averaging
    radius is `R = max(R_m, h)`.

    Args:
        connection: The connection.
        previous: The level-`m` gauge.
        omega: The `Omega_(m+1)` mask.
        cfg: Stratification constants.
        singular: Singular set the paths must clear.
        sampling: Sample sizes.
        integrator: Transport settings.
        seed: Root seed.
        threads: Worker count.
        f_mag: Curvature magnitude; when given, the decaying kernel bound is stored as `reference`.

    Returns:
        The level-`(m+1)` partial gauge.

    Raises:
        EmptyDomain: If either domain is empty.
        WeightMassTooSmall: If some node sees too little weight on `Omega_m`.
        ClusteringViolated: If more than the admissible fraction of nodes is dropped.
    """
    sampling = sampling or SamplingConfig()
    integrator = integrator or IntegratorConfig()
    grid, group = connection.grid, connection.group
    level = previous.level + 1
    radius = max(cfg.radius(previous.level), grid.h)
    sources = np.argwhere(previous.mask)
    targets = np.argwhere(omega)
    if not len(sources) or not len(targets):
        raise EmptyDomain(f"cannot build level {level}: empty domain")
    source_points = sources * grid.h
    source_weights = grid.weights[tuple(sources.T)]
    source_values = previous.values[tuple(sources.T)]
    tree = spatial.cKDTree(source_points)
    floor = sampling.psi_mass_floor * radius**grid.n
    count = sampling.inductive_paths

    def _chunk(part: slice) -> tuple[NDArray, NDArray, NDArray]:
        vertices = []
        anchors = []
        for index in targets[part]:
            x = index * grid.h
            near = np.asarray(tree.query_ball_point(x, 2.0 * radius), dtype=np.intp)
            psi = bump(np.linalg.norm(source_points[near] - x, axis=1) / radius) if len(near) else np.zeros(0)
            mass = float(np.sum(source_weights[near] * psi))
            if mass < floor:
                raise WeightMassTooSmall(
                    f"weight mass {mass:.3g} below {floor:.3g} at node {tuple(int(i) for i in index)}",
                    mass=mass,
                    floor=floor,
                    level=level,
                )
            probabilities = source_weights[near] * psi / mass
            rng = _node_rng(seed, level, grid, index)

            def _propose(
                size: int,
                rng: np.random.Generator = rng,
                x: NDArray = x,
                near: NDArray = near,
                probabilities: NDArray = probabilities,
            ) -> NDArray:
                picks = near[rng.choice(len(near), size=size, p=probabilities)]
                start = source_points[picks]
                x1 = np.clip(start + rng.uniform(-grid.h / 2, grid.h / 2, size=start.shape), 0.0, 1.0)
                return np.stack([start, x1, np.broadcast_to(x, x1.shape)], axis=1)

            drawn = _draw_clear(_propose, lambda v: _path_clearance(singular, grid.h, v), count, sampling.max_draws)
            vertices.append(drawn)
            anchors.append(_match_anchors(drawn[:, 0], tree))
        transports = transport_paths(connection, np.concatenate(vertices), integrator.tol, integrator.max_doublings)
        transports = source_values[np.concatenate(anchors)] @ transports
        return _average_nodes(group, transports, count)

    results = map_chunks(_chunk, len(targets), _NODE_CHUNK, threads)
    mask, values, statistics, dropped = _assemble(grid, group, targets, results, level, sampling.drop_fraction)
    reference = None
    if f_mag is not None:
        reference = np.where(omega, riesz_potential(f_mag, grid, 2, "decay", radius, cfg.kappa), np.nan)
    _logger.info(
        f"level {level} gauge: {int(mask.sum())} nodes, {dropped} dropped, "
        f"max clustering statistic {np.nanmax(statistics):.3g}",
    )
    return PartialGauge(grid, group, mask, values, level, statistics, reference, dropped, previous.origin)


def _match_anchors(points: NDArray, tree: spatial.cKDTree) -> NDArray[np.intp]:
    _, index = tree.query(points)
    return np.asarray(index, dtype=np.intp)


# Audits of the construction.


@dataclass(frozen=True, eq=False)
class LipschitzReport:
    """Measured constants of the Lipschitz property of a partial gauge."""

    constants: NDArray[np.float64]
    """One constant per sampled pair."""
    pointwise: NDArray[np.float64]
    """`|sigma_m(A)(x)| / T_m(x)` on interior masked nodes."""

    @property
    def max_constant(self) -> float:
        """Largest pair constant."""
        return float(np.max(self.constants, initial=0.0))

    @property
    def max_pointwise(self) -> float:
        """Largest pointwise ratio."""
        return float(np.max(self.pointwise, initial=0.0))


def _ratio(numerator: NDArray, denominator: NDArray, tol: float) -> NDArray[np.float64]:
    numerator = np.asarray(numerator, dtype=float)
    denominator = np.asarray(denominator, dtype=float)
    out = np.zeros_like(numerator)
    positive = denominator > 0
    out[positive] = numerator[positive] / denominator[positive]
    out[~positive & (numerator > tol)] = np.inf
    return out


def lipschitz_audit(
    connection: ConnectionField,
    gauge: PartialGauge,
    f_mag: ScalarField,
    cfg: StratConfig,
    rng: np.random.Generator,
    sampling: SamplingConfig | None = None,
    integrator: IntegratorConfig | None = None,
    singular: SingularSetModel | None = None,
) -> LipschitzReport:
    """Measure the Lipschitz property of `sigma_m` along short broken paths.

    For pairs `x0, x1` of masked nodes with `|x0 - x1| <= r <= 10 R`, averages
    `|sigma(x0) A[[x0 -> x2 -> x1]] sigma(x1)^-1 - 1|` over `x2` in `B(x0, r)`,
    scales by `|B(x0, r) ∩ cube| / r^n` and divides by `r (T_m(x0) + T_m(x1))`.

    Args:
        connection: The connection.
        gauge: The partial gauge.
        f_mag: Curvature magnitude.
        cfg: Stratification constants.
        rng: Random generator.
        sampling: Pair and point counts.
        integrator: Transport settings.
        singular: Singular set the paths must clear.

    Returns:
        The report.
    """
    sampling = sampling or SamplingConfig()
    integrator = integrator or IntegratorConfig()
    grid = gauge.grid
    radius = max(cfg.radius(gauge.level), grid.h)
    t_field = t_m_field(f_mag, grid, cfg, gauge.level)
    nodes = np.argwhere(gauge.mask)
    if not len(nodes):
        return LipschitzReport(np.zeros(0), np.zeros(0))
    tree = spatial.cKDTree(nodes * grid.h)
    constants = []
    for _ in range(sampling.lipschitz_pairs):
        r = float(rng.uniform(grid.h, 10.0 * radius))
        first = nodes[rng.integers(len(nodes))]
        x0 = first * grid.h
        partners = tree.query_ball_point(x0, r)
        second = nodes[partners[rng.integers(len(partners))]]
        x1 = second * grid.h

        def _propose(size: int, x0: NDArray = x0, x1: NDArray = x1, r: float = r) -> NDArray:
            direction = rng.normal(size=(size, grid.n))
            direction /= np.linalg.norm(direction, axis=1, keepdims=True)
            x2 = x0 + r * rng.uniform(size=(size, 1)) ** (1.0 / grid.n) * direction
            return np.stack([np.broadcast_to(x0, x2.shape), x2, np.broadcast_to(x1, x2.shape)], axis=1)

        def _accept(vertices: NDArray) -> NDArray:
            inside = np.all((vertices[:, 1] >= 0) & (vertices[:, 1] <= 1), axis=1)
            return inside & _path_clearance(singular, grid.h, vertices)

        try:
            vertices = _draw_clear(_propose, _accept, sampling.lipschitz_points, sampling.max_draws)
        except SamplingExhausted:
            continue
        holonomy = transport_paths(connection, vertices, integrator.tol, integrator.max_doublings)
        conjugated = gauge.values[tuple(first)] @ holonomy @ np.conj(gauge.values[tuple(second)]).T
        defect = float(np.mean(operator_norm(conjugated - np.eye(gauge.group.N))))
        volume = _cube_ball_volume(grid, x0, r)
        scale = r * (t_field[tuple(first)] + t_field[tuple(second)])
        constants.append(float(_ratio(np.array([defect * volume / r**grid.n]), np.array([scale]), integrator.tol * 10)[0]))
    pointwise = pointwise_bound_ratio(gauge.gauged(connection), t_field, gauge.mask, integrator.tol * 10)
    report = LipschitzReport(np.array(constants), pointwise)
    _logger.info(
        f"level {gauge.level} Lipschitz audit: max constant {report.max_constant:.3g}, "
        f"max pointwise ratio {report.max_pointwise:.3g}",
    )
    return report


def _cube_ball_volume(grid: Grid, x: NDArray, radius: float) -> float:
    distance2 = np.sum((grid.points - x) ** 2, axis=-1)
    return float(np.sum(grid.weights[distance2 < radius**2]))


def _interior_of(mask: NodeMask, grid: Grid) -> NodeMask:
    return ndimage.binary_erosion(mask, iterations=2) & grid.interior_mask(2)


def pointwise_bound_ratio(gauged: ConnectionField, t_field: ScalarField, mask: NodeMask, tol: float = 1e-12) -> NDArray[np.float64]:
    """`|sigma_m(A)(x)| / T_m(x)` on the interior nodes of `mask`.

    Args:
        gauged: The gauge-transformed connection.
        t_field: The field `T_m`.
        mask: Nodes where the gauge is defined.
        tol: Numerators below this count as zero when `T_m` vanishes.

    Returns:
        One ratio per interior masked node.
    """
    interior = _interior_of(mask, gauged.grid)
    return _ratio(connection_magnitude(gauged)[interior], np.asarray(t_field)[interior], tol)


def gauge_potential_ratio(gauged: ConnectionField, f_mag: ScalarField, mask: NodeMask, tol: float = 1e-12) -> float:
    """Largest `|sigma(A)(x)| / integral |F(y)| |x - y|^(1-n) dy` on interior masked nodes.

    Args:
        gauged: A gauge-transformed connection.
        f_mag: Curvature magnitude.
        mask: Nodes where the gauge is defined.
        tol: Numerators below this count as zero.

    Returns:
        The measured constant.
    """
    grid = gauged.grid
    interior = _interior_of(mask, grid)
    potential = riesz_potential(f_mag, grid, 1)
    ratios = _ratio(connection_magnitude(gauged)[interior], potential[interior], tol)
    return float(np.max(ratios, initial=0.0))


# Covering and truncation.


@dataclass(frozen=True, eq=False)
class BallCover:
    """Disjoint balls whose 5-fold dilates cover the complement of `Omega_m`."""

    centers: NDArray[np.float64]
    """Ball centres, shape `(k, n)`."""
    radii: NDArray[np.float64]
    """Ball radii, shape `(k,)`."""
    ball_def_failures: int = 0
    """Complement nodes whose chosen radius misses half the level threshold."""

    @classmethod
    def empty(cls, n: int) -> BallCover:
        """The empty cover.

        Args:
            n: Dimension.

        Returns:
            A cover without balls.
        """
        return cls(np.zeros((0, n)), np.zeros(0))

    def __len__(self) -> int:
        return len(self.radii)

    def is_disjoint(self) -> bool:
        """Whether all balls are pairwise disjoint."""
        if len(self) < 2:  # noqa: PLR2004
            return True
        distance = spatial.distance.cdist(self.centers, self.centers)
        limits = self.radii[:, None] + self.radii[None, :]
        np.fill_diagonal(distance, np.inf)
        return bool(np.all(distance >= limits * (1.0 - 1e-12)))

    def covers(self, points: NDArray, factor: float = _INNER_FACTOR) -> bool:
        """Whether every point lies in some dilated ball `B(x_j, factor r_j)`.

        Args:
            points: Shape `(k, n)`.
            factor: Dilation.

        Returns:
            The verdict.
        """
        points = np.asarray(points, dtype=float).reshape(-1, self.centers.shape[1])
        if not len(points):
            return True
        if not len(self):
            return False
        distance = spatial.distance.cdist(points, self.centers)
        return bool(np.all(np.any(distance < factor * self.radii[None, :], axis=1)))

    def cutoff(self, grid: Grid) -> ScalarField:
        """`psi = max_j bump(|y - x_j| / (5 r_j))`: 1 on the 5-fold dilates, 0 outside the 10-fold ones.

        Args:
            grid: The grid.

        Returns:
            The cutoff at the nodes.
        """
        psi = np.zeros(grid.shape)
        for centre, radius in zip(self.centers, self.radii):
            distance = np.linalg.norm(grid.points - centre, axis=-1)
            psi = np.maximum(psi, bump(distance / (_INNER_FACTOR * radius)))
        return psi


def vitali_cover(
    f_mag: ScalarField,
    grid: Grid,
    omega: NodeMask,
    cfg: StratConfig,
    level: int,
    radii: RadiusSet | None = None,
) -> BallCover:
    """Greedy Vitali cover of the nodes outside `Omega_m`.

    Each complement node gets the smallest ladder radius whose `Q`-quantity
    reaches half its supremum; balls are selected by decreasing radius while
    they stay disjoint from the selected ones.

    Args:
        f_mag: Curvature magnitude.
        grid: The grid.
        omega: The `Omega_m` mask.
        cfg: Stratification constants.
        level: The level `m`.
        radii: Radius ladder (up to the cube diameter by default).

    Returns:
        The cover; empty when `Omega_m` is the whole grid.

    Raises:
        ConstraintViolated: If disjointness or the covering property fails.
    """
    complement = np.argwhere(~omega)
    if not len(complement):
        return BallCover.empty(grid.n)
    radii = RadiusSet.ladder(grid) if radii is None else radii
    squared = np.asarray(f_mag, dtype=float) ** 2
    index = tuple(complement.T)
    profile = np.stack(
        [r ** (-grid.n / 2.0 + 1.0 + cfg.kappa) * np.sqrt(ball_sums(squared, grid, r))[index] for r in radii],
        axis=1,
    )
    supremum = profile.max(axis=1)
    reaches = profile >= 0.5 * supremum[:, None]
    chosen = np.argmax(reaches, axis=1)
    node_radii = radii.radii[chosen]
    ball_def_failures = int(np.sum(profile[np.arange(len(chosen)), chosen] < 0.5 * cfg.threshold(level)))
    points = complement * grid.h
    order = np.lexsort((np.arange(len(points)), -node_radii))
    selected: list[int] = []
    for candidate in order:
        if selected:
            gaps = np.linalg.norm(points[selected] - points[candidate], axis=1)
            if np.any(gaps < node_radii[selected] + node_radii[candidate]):
                continue
        selected.append(int(candidate))
    cover = BallCover(points[selected], node_radii[selected], ball_def_failures)
    if not cover.is_disjoint() or not cover.covers(points):
        raise ConstraintViolated("Vitali selection lost disjointness or the covering property")
    _logger.info(
        f"level {level} cover: {len(cover)} balls for {len(points)} nodes, "
        f"largest radius {float(np.max(cover.radii)):.3g}",
    )
    return cover


@dataclass(frozen=True)
class TruncationReport:
    """Diagnostics of the truncated connection `A~_m = (1 - psi) sigma_m(A)`."""

    curvature_norm: float
    """`||F(A~_m)||` in the scale-invariant Morrey space."""
    ratio_to_epsilon: float
    """`curvature_norm / epsilon`."""
    far_region_nodes: int
    """Nodes with `rho >= 20 R_m`."""
    far_region_defect: float
    """Largest `|A~_m - sigma_m(A)|` on those nodes."""
    bound_ratio: float
    """Largest `|F(A~_m)| / (|F(A)| + |grad psi| |sigma_m(A)|)`."""
    invariance_defect: float
    """Largest `||F(sigma_m(A))| - |F(A)||` on interior masked nodes."""
    cutoff_nodes: int
    """Nodes where `psi > 0`."""


def truncate(
    connection: ConnectionField,
    gauge: PartialGauge,
    cover: BallCover,
    cfg: StratConfig,
    rho: ScalarField | None = None,
) -> tuple[ConnectionField, TruncationReport]:
    """Cut the gauged connection off near the covering balls.

    Args:
        connection: The connection.
        gauge: The level-`m` partial gauge.
        cover: The cover of the complement of its domain.
        cfg: Stratification constants.
        rho: Distance to the singular set at the nodes, for the far-region check.

    Returns:
        `A~_m` and its report.

    Raises:
        MaskMismatch: If `1 - psi` is nonzero at a node outside the gauge's domain.
    """
    grid = connection.grid
    psi = cover.cutoff(grid)
    outside = ~gauge.mask & (psi < 1.0)
    if np.any(outside):
        raise MaskMismatch(f"1 - psi is nonzero at {int(outside.sum())} nodes outside Omega_{gauge.level}", nodes=int(outside.sum()))
    gauged = gauge.gauged(connection)
    keep = (1.0 - psi)[None, ..., None, None]
    truncated = gauged.with_data(gauged.data * keep)
    before = curvature_magnitude(curvature(connection))
    after = curvature_magnitude(curvature(truncated))
    params = MorreyParams.scale_invariant(grid.n)
    norm = morrey_norm(after, params, grid)
    far_nodes, far_defect = 0, 0.0
    if rho is not None:
        far = np.asarray(rho) >= _FAR_FACTOR * cfg.radius(gauge.level)
        far_nodes = int(far.sum())
        if far_nodes:
            far_defect = float(np.max(operator_norm(truncated.data - gauged.data)[:, far]))
    psi_gradient = np.sqrt(np.sum(gradient(psi, grid.h, grid.n) ** 2, axis=0))
    denominator = before + psi_gradient * connection_magnitude(gauged)
    bound = _ratio(after, denominator, 1e-12)
    interior = _interior_of(gauge.mask, grid)
    gauged_magnitude = curvature_magnitude(curvature(gauged))
    invariance = float(np.max(np.abs(gauged_magnitude - before)[interior], initial=0.0))
    report = TruncationReport(
        curvature_norm=norm,
        ratio_to_epsilon=norm / cfg.epsilon,
        far_region_nodes=far_nodes,
        far_region_defect=far_defect,
        bound_ratio=float(np.max(bound, initial=0.0)),
        invariance_defect=invariance,
        cutoff_nodes=int(np.sum(psi > 0)),
    )
    _logger.info(f"level {gauge.level} truncation: ||F|| = {norm:.3g} ({report.ratio_to_epsilon:.3g} epsilon)")
    return truncated, report
