from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np
from numpy.typing import NDArray
from scipy import fft
from scipy.sparse.linalg import LinearOperator, cg

from gfrg._internal.config import CoulombConfig, IntegratorConfig
from gfrg._internal.errors import ConfigError, ConstraintViolated, IterationDiverged, LogarithmBranchCut, NoConvergence
from gfrg._internal.field import (
    ConnectionField,
    GaugeField,
    Grid,
    ScalarField,
    apply_gauge,
    connection_magnitude,
    curvature,
    curvature_magnitude,
    derivative,
)
from gfrg._internal.lie import GroupElement, LieGroup, dagger, operator_norm
from gfrg._internal.morrey import MorreyParams, RadiusSet, morrey_norm, morrey_sobolev_norm
from gfrg._internal.transport import transport_segments

_logger = logging.getLogger("gfrg.coulomb")

_CG_MAXITER = 100_000
_DIVERGENCE_PATIENCE = 3
_RESIDUAL_EVERY = 10
_STALL = 1e-3

SolverMethod = Literal["auto", "cosine", "cg"]
"""Neumann solver: cosine diagonalisation, conjugate gradients, or pick by the flux data."""


# Neumann problems.


@dataclass(frozen=True, eq=False)
class NeumannProblem:
    """`Laplace u = f` in the cube with `d_n u = g . n` on the faces.

    `f` is scalar (`grid.shape`) or matrix valued (`(*grid.shape, N, N)`);
    `g` carries one more leading axis of length `n`.
    """

    grid: Grid
    """The grid."""
    f: NDArray
    """Source."""
    g: NDArray | None = None
    """Boundary flux field; only its normal component on each face is used."""
    mean_zero: bool = True
    """Normalise to `integral u = 0`; otherwise `u` vanishes at the origin node."""

    def __post_init__(self) -> None:
        if np.shape(self.f)[: self.grid.n] != self.grid.shape:
            raise ConfigError(f"source of shape {np.shape(self.f)} does not live on {self.grid}")
        if self.g is not None and np.shape(self.g) != (self.grid.n, *np.shape(self.f)):
            raise ConfigError(f"flux of shape {np.shape(self.g)} does not match the source")

    @property
    def has_flux(self) -> bool:
        """Whether the boundary data is nonzero."""
        return self.g is not None and bool(np.any(self.g != 0))


@dataclass(frozen=True, eq=False)
class NeumannSolution:
    """A solution of a `NeumannProblem`."""

    u: NDArray
    """The solution, shaped like the source."""
    compatibility_defect: float
    """Weighted mean removed from the data to make it compatible."""
    method: str
    """Solver used."""
    iterations: int = 0
    """Conjugate-gradient iterations (0 for the cosine solver)."""


def _face_factors(grid: Grid, ndim: int) -> list[NDArray[np.float64]]:
    factors = []
    for axis in range(grid.n):
        c = np.ones(grid.m)
        c[0] = c[-1] = 0.5
        shape = [1] * ndim
        shape[axis] = grid.m
        factors.append(c.reshape(shape))
    return factors


def fv_divergence(flows: tuple[NDArray, ...] | list[NDArray], grid: Grid) -> NDArray:
    """Finite-volume divergence of link flows with zero flux through the faces.

    `flows[a]` holds one value per link `x -> x + h e_a` (length `m - 1` along
    axis `a`). Face nodes own half cells along their normal.

    Args:
        flows: One array per axis.
        grid: The grid.

    Returns:
        One value per node, with the trailing shape of the flows.
    """
    trailing = np.shape(flows[0])[grid.n :]
    out = np.zeros((*grid.shape, *trailing), dtype=np.result_type(*flows))
    factors = _face_factors(grid, out.ndim)
    for axis, flow in enumerate(flows):
        pad = [(0, 0)] * np.ndim(flow)
        pad[axis] = (1, 1)
        out = out + np.diff(np.pad(flow, pad), axis=axis) / (grid.h * factors[axis])
    return out


def fv_laplacian(values: NDArray, grid: Grid) -> NDArray:
    """Second-order Laplacian with ghost-node Neumann faces (`fv_divergence` of the link differences).

    Args:
        values: Array whose leading axes are the grid axes.
        grid: The grid.

    Returns:
        Array of the same shape.
    """
    return fv_divergence([np.diff(values, axis=axis) / grid.h for axis in range(grid.n)], grid)


def _adjusted_source(problem: NeumannProblem) -> NDArray:
    grid = problem.grid
    source = np.array(problem.f, dtype=np.result_type(problem.f, float))
    if problem.g is None:
        return source
    source = source.astype(np.result_type(source, problem.g))
    for axis in range(grid.n):
        normal = np.moveaxis(problem.g[axis], axis, 0)
        np.moveaxis(source, axis, 0)[0] += 2.0 / grid.h * normal[0]
        np.moveaxis(source, axis, 0)[-1] -= 2.0 / grid.h * normal[-1]
    return source


def _weighted_mean(values: NDArray, grid: Grid) -> NDArray:
    weights = grid.weights.reshape(grid.shape + (1,) * (np.ndim(values) - grid.n))
    return np.sum(values * weights, axis=tuple(range(grid.n)))


def _cosine_solve(source: NDArray, grid: Grid) -> NDArray:
    axes = tuple(range(grid.n))
    k = np.arange(grid.m)
    eigen = np.zeros(grid.shape)
    for axis in axes:
        shape = [1] * grid.n
        shape[axis] = grid.m
        eigen = eigen + ((2.0 * np.cos(np.pi * k / (grid.m - 1)) - 2.0) / grid.h**2).reshape(shape)
    origin = (0,) * grid.n
    eigen[origin] = 1.0
    eigen = eigen.reshape(grid.shape + (1,) * (source.ndim - grid.n))
    coefficients = fft.dctn(source, type=1, axes=axes) / eigen
    coefficients[origin] = 0.0
    return fft.idctn(coefficients, type=1, axes=axes)


def _cg_solve(source: NDArray, grid: Grid, tol: float) -> tuple[NDArray, int]:
    weights = grid.weights.ravel()
    size = grid.size

    def _apply(vector: NDArray) -> NDArray:
        return -weights * fv_laplacian(vector.reshape(grid.shape), grid).ravel()

    operator = LinearOperator((size, size), matvec=_apply, dtype=float)
    components = source.reshape(size, -1)
    out = np.empty_like(components)
    iterations = 0
    for column in range(components.shape[1]):
        count = 0

        def _count(_: NDArray) -> None:
            nonlocal count
            count += 1

        solution, info = cg(
            operator,
            -weights * components[:, column],
            rtol=tol,
            atol=0.0,
            maxiter=_CG_MAXITER,
            callback=_count,
        )
        if info:
            raise NoConvergence(f"conjugate gradients did not reach {tol:g} in {_CG_MAXITER} iterations", info=info)
        out[:, column] = solution
        iterations = max(iterations, count)
    return out.reshape(source.shape), iterations


def neumann_solve(problem: NeumannProblem, tol: float = 1e-12, method: SolverMethod = "auto") -> NeumannSolution:
    """Solve a Neumann problem with the second-order ghost-node scheme.

    Incompatible data is made compatible by removing its weighted mean; the
    removed amount is reported. Matrix-valued data is solved entrywise.

    Args:
        problem: The problem.
        tol: Relative residual of the conjugate-gradient solver.
        method: `cosine` (exact, separable), `cg`, or `auto` (cosine unless there is flux data).

    Returns:
        The solution.

    Raises:
        NoConvergence: If conjugate gradients exhaust their iteration budget.
    """
    grid = problem.grid
    source = _adjusted_source(problem)
    mean = _weighted_mean(source, grid)
    source = source - mean
    defect = float(np.max(np.abs(mean), initial=0.0))
    if defect > 1e-8:  # noqa: PLR2004
        _logger.debug(f"Neumann data projected to compatibility (defect {defect:.3g})")
    chosen = ("cg" if problem.has_flux else "cosine") if method == "auto" else method
    parts = [source.real, source.imag] if np.iscomplexobj(source) else [source]
    solved = []
    iterations = 0
    for part in parts:
        if chosen == "cosine":
            solved.append(_cosine_solve(part, grid))
        elif chosen == "cg":
            values, count = _cg_solve(part, grid, tol)
            solved.append(values)
            iterations = max(iterations, count)
        else:
            raise ConfigError(f"unknown Neumann solver {method!r}")
    u = solved[0] + 1j * solved[1] if len(solved) == 2 else solved[0]  # noqa: PLR2004
    u = u - _weighted_mean(u, grid) if problem.mean_zero else u - u[(0,) * grid.n]
    return NeumannSolution(u, defect, chosen, iterations)


def _as_stack(values: NDArray, grid: Grid) -> NDArray:
    values = np.asarray(values)
    return values[None] if values.ndim == grid.n + 2 else values  # noqa: PLR2004


def neumann_estimate_ratio(problem: NeumannProblem, solution: NeumannSolution, params: MorreyParams | None = None) -> float:
    """Measured constant `||u||_{2,2} / (||f||_2 + ||g||_{2,1})` of the Neumann estimate.

    Args:
        problem: The problem.
        solution: Its solution.
        params: Scaling exponents (scale invariant by default).

    Returns:
        The ratio, 0 when everything vanishes.
    """
    grid = problem.grid
    params = params or MorreyParams.scale_invariant(grid.n)
    numerator = morrey_sobolev_norm(_as_stack(solution.u, grid), params.with_order(2), grid)
    denominator = morrey_norm(_as_stack(problem.f, grid), params.with_order(0), grid)
    if problem.g is not None:
        denominator += morrey_sobolev_norm(problem.g, params.with_order(1), grid)
    if denominator == 0:
        return 0.0
    return numerator / denominator


# Lattice form of the Coulomb conditions.


def link_variables(
    connection: ConnectionField,
    tol: float = 1e-9,
    max_doublings: int = 20,
    threads: int = 1,
) -> list[GroupElement]:
    """Transports `L_a(x) = A[[x -> x + h e_a]]` along every lattice link.

    Args:
        connection: The connection.
        tol: Transport tolerance.
        max_doublings: Transport refinement budget.
        threads: Worker count.

    Returns:
        One array per axis, with `m - 1` links along that axis.
    """
    grid = connection.grid
    size = connection.group.N
    links = []
    for axis in range(grid.n):
        index = [slice(None)] * grid.n
        index[axis] = slice(0, -1)
        starts = grid.points[tuple(index)]
        ends = starts.copy()
        ends[..., axis] += grid.h
        values = transport_segments(connection, starts.reshape(-1, grid.n), ends.reshape(-1, grid.n), tol, max_doublings, threads)
        links.append(values.reshape(*starts.shape[:-1], size, size))
    return links


def gauge_links(links: list[GroupElement], gauge: GaugeField) -> list[GroupElement]:
    """Links of `sigma(A)`: `sigma(x) L_a(x) sigma(x + h e_a)^-1`.

    Args:
        links: Links of `A`.
        gauge: The gauge transformation.

    Returns:
        The transformed links.
    """
    sigma = gauge.values
    out = []
    for axis, link in enumerate(links):
        low = [slice(None)] * gauge.grid.n
        high = [slice(None)] * gauge.grid.n
        low[axis], high[axis] = slice(0, -1), slice(1, None)
        out.append(sigma[tuple(low)] @ link @ dagger(sigma[tuple(high)]))
    return out


@dataclass(frozen=True, eq=False)
class CoulombResidual:
    """Lattice Coulomb conditions evaluated on a set of links."""

    divergence: NDArray[np.complex128]
    """`d_* A` per node, from the link logarithms."""
    interior: float
    """Largest divergence on nodes off the faces."""
    boundary: float
    """Largest implied normal component `(h/2) |d_* A|` on face nodes."""

    @property
    def maximum(self) -> float:
        """Largest divergence anywhere."""
        return float(np.max(operator_norm(self.divergence), initial=0.0))


def coulomb_residual(links: list[GroupElement], grid: Grid, group: LieGroup) -> CoulombResidual:
    """Evaluate `d_* A = 0` inside and `A . n = 0` on the faces.

    The link logarithms `log L_a / h` are the midpoint components of `A`;
    their finite-volume divergence with zero face flux vanishes exactly when
    both conditions hold.

    Args:
        links: Lattice links.
        grid: The grid.
        group: Structure group.

    Returns:
        The residual.

    Raises:
        LogarithmBranchCut: If some link has eigenvalue -1.
    """
    flows = [group.log(link) / grid.h for link in links]
    divergence = fv_divergence(flows, grid)
    magnitude = operator_norm(divergence)
    inner = grid.interior_mask(1)
    return CoulombResidual(
        divergence=divergence,
        interior=float(np.max(magnitude[inner], initial=0.0)),
        boundary=float(np.max(magnitude[~inner], initial=0.0)) * grid.h / 2.0,
    )


def stencil_normal_defect(connection: ConnectionField) -> float:
    """Largest nodal normal component `|A_a|` on the faces orthogonal to `e_a`.

    Args:
        connection: The connection.

    Returns:
        The defect.
    """
    worst = 0.0
    for axis in range(connection.n):
        component = np.moveaxis(operator_norm(connection.data[axis]), axis, 0)
        worst = max(worst, float(np.max(component[0])), float(np.max(component[-1])))
    return worst


@dataclass
class CoulombReport:
    """Diagnostics of a Coulomb gauge fixing run."""

    method: str
    """`iteration` or `relaxation`."""
    residual_history: list[float] = field(default_factory=list)
    """Largest `|d_* sigma(A)|` per recorded step."""
    update_history: list[float] = field(default_factory=list)
    """Morrey-Sobolev norm of each update (iteration only)."""
    converged: bool = False
    """Whether the stopping criterion was met."""
    interior_residual: float = 0.0
    """Final interior divergence, relative to `max |A|`."""
    boundary_defect: float = 0.0
    """Final implied normal component on the faces."""
    stencil_normal_defect: float = 0.0
    """Final nodal normal component on the faces."""
    connection_norm: float = 0.0
    """`||sigma(A)||_{M^{n/2}_{2,1}}`."""
    curvature_norm: float = 0.0
    """`||F(A)||_{M^{n/2}_2}`."""
    overrelaxation_skips: int = 0
    """Colour sweeps left unrelaxed because the update crossed the logarithm branch cut."""

    @property
    def iterations(self) -> int:
        """Recorded steps."""
        return len(self.residual_history)

    @property
    def norm_ratio(self) -> float:
        """`connection_norm / curvature_norm` (0 when both vanish)."""
        if self.curvature_norm == 0:
            return 0.0 if self.connection_norm == 0 else float("inf")
        return self.connection_norm / self.curvature_norm

    def to_dict(self) -> dict[str, Any]:
        """JSON-compatible form.

        Returns:
            The mapping.
        """
        return {
            "method": self.method,
            "converged": self.converged,
            "iterations": self.iterations,
            "residual_history": list(self.residual_history),
            "update_history": list(self.update_history),
            "interior_residual": self.interior_residual,
            "boundary_defect": self.boundary_defect,
            "stencil_normal_defect": self.stencil_normal_defect,
            "connection_norm": self.connection_norm,
            "curvature_norm": self.curvature_norm,
            "norm_ratio": self.norm_ratio,
            "overrelaxation_skips": self.overrelaxation_skips,
        }


def _finish(report: CoulombReport, connection: ConnectionField, gauge: GaugeField, links: list[GroupElement]) -> None:
    grid = connection.grid
    residual = coulomb_residual(gauge_links(links, gauge), grid, connection.group)
    scale = float(np.max(connection_magnitude(connection), initial=0.0))
    report.interior_residual = residual.interior / scale if scale > 0 else residual.interior
    report.boundary_defect = residual.boundary
    gauged = apply_gauge(gauge, connection)
    report.stencil_normal_defect = stencil_normal_defect(gauged)
    params = MorreyParams.scale_invariant(grid.n)
    report.connection_norm = morrey_sobolev_norm(gauged.data, params.with_order(1), grid)
    report.curvature_norm = morrey_norm(curvature(connection).data, params, grid)


def coulomb_fix(
    connection: ConnectionField,
    cfg: CoulombConfig | None = None,
    links: list[GroupElement] | None = None,
    initial: GaugeField | None = None,
    integrator: IntegratorConfig | None = None,
    threads: int = 1,
) -> tuple[GaugeField, CoulombReport]:
    """Fixed-point iteration towards the Coulomb gauge.

    Each step solves the Neumann problem `Laplace U = d_* sigma(A)` with zero
    flux and updates `sigma <- exp(U) sigma`. The iteration stops when the
    `M^{n/2}_{2,2}` norm of `U` drops below `cfg.tol`.

    Args:
        connection: The connection.
        cfg: Fixing settings.
        links: Precomputed links of `A`.
        initial: Starting gauge (identity by default).
        integrator: Transport settings for the links.
        threads: Worker count for the links.

    Returns:
        The gauge `sigma` and the report.

    Raises:
        IterationDiverged: If the residual grows for three consecutive steps.
    """
    cfg = cfg or CoulombConfig()
    integrator = integrator or IntegratorConfig()
    grid, group = connection.grid, connection.group
    if links is None:
        links = link_variables(connection, integrator.tol, integrator.max_doublings, threads)
    gauge = initial or GaugeField.identity(grid, group)
    report = CoulombReport("iteration")
    curvature_size = morrey_norm(curvature(connection).data, MorreyParams.scale_invariant(grid.n), grid)
    if curvature_size > cfg.smallness:
        _logger.warning(f"curvature norm {curvature_size:.3g} exceeds the perturbative threshold {cfg.smallness:g}")
    params = MorreyParams.scale_invariant(grid.n, k=2)
    growth = 0
    for step in range(cfg.max_iter):
        residual = coulomb_residual(gauge_links(links, gauge), grid, group)
        report.residual_history.append(residual.maximum)
        if step and report.residual_history[-1] > report.residual_history[-2]:
            growth += 1
            if growth >= _DIVERGENCE_PATIENCE:
                raise IterationDiverged(
                    f"Coulomb residual grew for {growth} consecutive steps",
                    residual_history=report.residual_history,
                )
        else:
            growth = 0
        update = group.to_algebra(neumann_solve(NeumannProblem(grid, residual.divergence), cfg.solver_tol).u)
        size = morrey_sobolev_norm(update[None], params, grid)
        report.update_history.append(size)
        _logger.debug(f"Coulomb step {step}: residual {residual.maximum:.3g}, update {size:.3g}")
        gauge = GaugeField(grid, group, group.project(group.exp(cfg.step * update) @ gauge.values, check=False))
        if size < cfg.tol:
            report.converged = True
            break
    _finish(report, connection, gauge, links)
    _logger.info(
        f"Coulomb iteration: {report.iterations} steps, converged={report.converged}, "
        f"relative residual {report.interior_residual:.3g}",
    )
    return gauge, report


def _link_weights(grid: Grid) -> list[NDArray[np.float64]]:
    factors = _face_factors(grid, grid.n)
    weights = []
    for axis in range(grid.n):
        weight = np.ones(grid.shape)
        for other, factor in enumerate(factors):
            if other != axis:
                weight = weight * factor
        index = [slice(None)] * grid.n
        index[axis] = slice(0, -1)
        weights.append(weight[tuple(index)][..., None, None])
    return weights


def _relaxation_target(links: list[GroupElement], weights: list[NDArray], sigma: GroupElement, grid: Grid) -> NDArray:
    target = np.zeros_like(sigma)
    for axis, (link, weight) in enumerate(zip(links, weights)):
        low = [slice(None)] * grid.n
        high = [slice(None)] * grid.n
        low[axis], high[axis] = slice(0, -1), slice(1, None)
        low, high = tuple(low), tuple(high)
        target[low] += weight * (link @ dagger(sigma[high]))
        target[high] += weight * (dagger(link) @ dagger(sigma[low]))
    return target


def relaxation_fix(
    connection: ConnectionField,
    cfg: CoulombConfig | None = None,
    links: list[GroupElement] | None = None,
    initial: GaugeField | None = None,
    integrator: IntegratorConfig | None = None,
    threads: int = 1,
) -> tuple[GaugeField, CoulombReport]:
    """Local relaxation maximising `sum w Re tr sigma(x) L_a(x) sigma(x + h e_a)^-1`.

    Red-black sweeps set each node to the maximiser `polar(M)^-1` of its local
    term; link weights are the transverse face factors so that the fixed point
    satisfies the same finite-volume conditions as `coulomb_fix`.

    Args:
        connection: The connection.
        cfg: Sweep budget, tolerance and overrelaxation.
        links: Precomputed links of `A`.
        initial: Starting gauge.
        integrator: Transport settings for the links.
        threads: Worker count for the links.

    Returns:
        The gauge and the report.
    """
    cfg = cfg or CoulombConfig()
    integrator = integrator or IntegratorConfig()
    grid, group = connection.grid, connection.group
    if links is None:
        links = link_variables(connection, integrator.tol, integrator.max_doublings, threads)
    sigma = (initial or GaugeField.identity(grid, group)).values.copy()
    weights = _link_weights(grid)
    parity = np.indices(grid.shape).sum(axis=0) % 2
    colors = [parity == 0, parity == 1]
    scale = float(np.max(connection_magnitude(connection), initial=0.0))
    report = CoulombReport("relaxation")
    for sweep in range(cfg.relaxation_sweeps):
        for color in colors:
            target = _relaxation_target(links, weights, sigma, grid)[color]
            best = dagger(group.project(target, check=False))
            if cfg.overrelaxation != 1.0:
                try:
                    best = group.exp(cfg.overrelaxation * group.log(best @ dagger(sigma[color]))) @ sigma[color]
                except LogarithmBranchCut:
                    report.overrelaxation_skips += 1
                    _logger.debug(f"relaxation sweep {sweep + 1}: update hits the logarithm branch cut, not overrelaxed")
            sigma[color] = best
        if (sweep + 1) % _RESIDUAL_EVERY:
            continue
        current = coulomb_residual(gauge_links(links, GaugeField(grid, group, sigma)), grid, group).maximum
        history = report.residual_history
        stalled = bool(history) and current > (1.0 - _STALL) * history[-1]
        history.append(current)
        _logger.debug(f"relaxation sweep {sweep + 1}: residual {current:.3g}")
        if current <= cfg.tol * max(scale, 1.0):
            report.converged = True
            break
        if stalled:
            break
    gauge = GaugeField(grid, group, group.project(sigma, check=False))
    _finish(report, connection, gauge, links)
    _logger.info(f"relaxation: {report.iterations} checkpoints, relative residual {report.interior_residual:.3g}")
    return gauge, report


# Estimates.


@dataclass(frozen=True, eq=False)
class BootstrapReport:
    """Measured quantities of the bootstrap estimate for a Coulomb connection."""

    connection_norm: float
    """`||A||_{M^{n/2}_{2,1}}`."""
    curvature_norm: float
    """`||F(A)||_{M^{n/2}_2}`."""
    contraction: float
    """`||A||^2 / ||F||`: the quadratic term relative to the linear one."""
    bound_ratio: float
    """`||A|| / (||F|| + ||A||^2)`."""
    laplacian_ratio: float
    """Largest `|Laplace A| / (|A| |grad A| + |A|^3)` on interior nodes."""
    decay_ratios: NDArray[np.float64] = field(repr=False)
    """`||A||_{2,1}` on `B(x, r/4)` over the same on `B(x, r)`, per sampled ball."""

    @property
    def max_decay(self) -> float:
        """Largest interior decay ratio."""
        return float(np.max(self.decay_ratios, initial=0.0))


def _safe_ratio(numerator: float, denominator: float) -> float:
    if denominator > 0:
        return numerator / denominator
    return 0.0 if numerator == 0 else float("inf")


def bootstrap_audit(connection: ConnectionField, rng: np.random.Generator, balls: int = 8, tol: float = 1e-12) -> BootstrapReport:
    """Measure the bootstrap and interior decay estimates of a Coulomb connection.

    Args:
        connection: A connection in Coulomb gauge.
        rng: Random generator for the sampled balls.
        balls: Number of sampled balls.
        tol: Pointwise numerators below this count as zero.

    Returns:
        The report.
    """
    grid = connection.grid
    data = connection.data
    params = MorreyParams.scale_invariant(grid.n)
    a_norm = morrey_sobolev_norm(data, params.with_order(1), grid)
    f_norm = morrey_norm(curvature(connection).data, params, grid)
    laplacian = np.zeros_like(data)
    gradient_squared = np.zeros(grid.shape)
    for a in range(grid.n):
        for b in range(grid.n):
            first = derivative(data[a], b, grid.h)
            gradient_squared += operator_norm(first) ** 2
            laplacian[a] += derivative(first, b, grid.h)
    magnitude = connection_magnitude(connection)
    lap_magnitude = np.sqrt(np.sum(operator_norm(laplacian) ** 2, axis=0))
    denominator = magnitude * np.sqrt(gradient_squared) + magnitude**3
    interior = grid.interior_mask(4)
    numerators, denominators = lap_magnitude[interior], denominator[interior]
    ratios = np.zeros_like(numerators)
    positive = denominators > 0
    ratios[positive] = numerators[positive] / denominators[positive]
    ratios[~positive & (numerators > tol)] = np.inf
    decay = []
    candidates = np.argwhere(interior)
    if a_norm > 0 and len(candidates):
        for _ in range(balls):
            centre = candidates[rng.integers(len(candidates))] * grid.h
            radius = float(rng.uniform(4.0 * grid.h, 0.5))
            distance = np.linalg.norm(grid.points - centre, axis=-1)
            radii = RadiusSet.ladder(grid, radius)
            outer = morrey_sobolev_norm(data, params.with_order(1), grid, radii=radii, support=distance < radius)
            inner = morrey_sobolev_norm(data, params.with_order(1), grid, radii=radii, support=distance < radius / 4.0)
            decay.append(_safe_ratio(inner, outer))
    return BootstrapReport(
        connection_norm=a_norm,
        curvature_norm=f_norm,
        contraction=_safe_ratio(a_norm**2, f_norm),
        bound_ratio=_safe_ratio(a_norm, f_norm + a_norm**2),
        laplacian_ratio=float(np.max(ratios, initial=0.0)),
        decay_ratios=np.array(decay),
    )


def divergence_free_field(grid: Grid, rng: np.random.Generator, band: int = 2, amplitude: float = 1.0) -> NDArray[np.float64]:
    """A real 1-form with `d_* u = 0` inside and `u . n = 0` on the faces.

    Builds `u_a = sum_b D_b phi_ab` from an antisymmetric `phi` whose entries
    are sine series vanishing on the boundary; `D` is the nodal stencil, so
    both conditions hold to rounding.

    Args:
        grid: The grid.
        rng: Random generator.
        band: Sine modes per axis.
        amplitude: Scale of the coefficients.

    Returns:
        Array of shape `(n, *grid.shape)`.
    """
    coordinates = grid.coordinates
    modes = np.arange(1, band + 1)
    sines = np.sin(np.pi * modes[:, None] * coordinates[None, :])
    phi = np.zeros((grid.n, grid.n, *grid.shape))
    for a in range(grid.n):
        for b in range(a + 1, grid.n):
            coefficients = amplitude * rng.normal(size=(band,) * grid.n)
            scale = np.zeros((band,) * grid.n)
            for axis in range(grid.n):
                shape = [1] * grid.n
                shape[axis] = band
                scale = scale + (modes.astype(float) ** 2).reshape(shape)
            coefficients = coefficients / scale
            value = coefficients
            for _ in range(grid.n):
                value = np.tensordot(value, sines, axes=([0], [0]))
            phi[a, b] = value
            phi[b, a] = -value
    return np.stack([sum(derivative(phi[a, b], b, grid.h) for b in range(grid.n)) for a in range(grid.n)])


@dataclass(frozen=True)
class HodgeReport:
    """Measured constants of the Hodge estimate `||u||_{2,1} <= C ||du||_2`."""

    ratios: dict[str, float]
    """Ratio per scaling exponent label."""
    skipped: bool = False
    """Set when `u = 0`."""


def hodge_estimate_audit(u: NDArray, grid: Grid, tol: float = 1e-6) -> HodgeReport:
    """Measure `||u||_{M^q_{2,1}} / ||du||_{M^q_2}` for `q = 2` and `q = n/2`.

    Args:
        u: Real 1-form of shape `(n, *grid.shape)`.
        grid: The grid.
        tol: Admissible constraint defect, relative to `max |u|`.

    Returns:
        The report.

    Raises:
        ConstraintViolated: If `d_* u` or `u . n` exceed the tolerance.
    """
    u = np.asarray(u, dtype=float)
    size = float(np.max(np.abs(u), initial=0.0))
    if size == 0:
        return HodgeReport({"2": 0.0, "n/2": 0.0}, skipped=True)
    divergence = sum(derivative(u[a], a, grid.h) for a in range(grid.n))
    normal = max(float(np.max(np.abs(np.moveaxis(u[a], a, 0)[[0, -1]]))) for a in range(grid.n))
    if float(np.max(np.abs(divergence))) > tol * max(size, 1.0) or normal > tol * max(size, 1.0):
        raise ConstraintViolated(
            "1-form is not divergence free with vanishing normal component",
            divergence=float(np.max(np.abs(divergence))),
            normal=normal,
        )
    curl = np.stack(
        [
            derivative(u[b], a, grid.h) - derivative(u[a], b, grid.h)
            for a in range(grid.n)
            for b in range(a + 1, grid.n)
        ],
    )
    ratios = {}
    for label, exponent in (("2", 2.0), ("n/2", grid.n / 2.0)):
        params = MorreyParams(max(exponent, 2.0), 2.0, relaxed=exponent < 2.0)  # noqa: PLR2004
        ratios[label] = _safe_ratio(morrey_sobolev_norm(u, params.with_order(1), grid), morrey_norm(curl, params, grid))
    return HodgeReport(ratios)


def gauged_curvature_defect(connection: ConnectionField, gauge: GaugeField, width: int = 2) -> float:
    """Largest `||F(sigma(A))| - |F(A)||` on interior nodes after fixing.

    Args:
        connection: The connection.
        gauge: The fixing gauge.
        width: Boundary layers excluded.

    Returns:
        The defect.
    """
    before = curvature_magnitude(curvature(connection))
    after = curvature_magnitude(curvature(apply_gauge(gauge, connection)))
    interior = connection.grid.interior_mask(width)
    return float(np.max(np.abs(after - before)[interior], initial=0.0))


def poisson_gauge(connection: ConnectionField, links: list[GroupElement] | None = None, tol: float = 1e-12) -> tuple[GaugeField, ScalarField]:
    """Abelian Coulomb gauge by one Hodge projection: `Laplace U = d_* A`, `sigma = exp(U)`.

    Args:
        connection: A `U(1)` connection.
        links: Precomputed links.
        tol: Solver tolerance.

    Returns:
        The gauge and the phase `U / i`.

    Raises:
        ConfigError: For non-abelian groups.
    """
    group = connection.group
    if group.N != 1:
        raise ConfigError("the Poisson gauge needs an abelian group")
    links = links if links is not None else link_variables(connection)
    residual = coulomb_residual(links, connection.grid, group)
    phase = neumann_solve(NeumannProblem(connection.grid, residual.divergence[..., 0, 0].imag), tol).u
    values = np.exp(1j * phase)[..., None, None]
    return GaugeField(connection.grid, group, values), phase
