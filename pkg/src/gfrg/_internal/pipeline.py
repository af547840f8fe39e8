from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from gfrg._internal.config import ExperimentConfig
from gfrg._internal.coulomb import (
    NeumannProblem,
    bootstrap_audit,
    coulomb_fix,
    divergence_free_field,
    gauged_curvature_defect,
    hodge_estimate_audit,
    link_variables,
    neumann_estimate_ratio,
    neumann_solve,
    relaxation_fix,
)
from gfrg._internal.errors import AuditFailed, FieldDecodeError, GfrgError, IterationDiverged
from gfrg._internal.field import (
    ConnectionField,
    CurvatureField,
    NodeMask,
    ScalarField,
    apply_gauge,
    connection_magnitude,
    curvature,
    curvature_magnitude,
)
from gfrg._internal.gaugebuild import (
    PartialGauge,
    base_gauge,
    choose_origin,
    gauge_potential_ratio,
    inductive_step,
    lipschitz_audit,
    truncate,
    vitali_cover,
)
from gfrg._internal.generators import GeneratedField, generate
from gfrg._internal.lie import operator_norm
from gfrg._internal.morrey import (
    MorreyParams,
    StratConfig,
    average_bound_ratio,
    cnk_constant,
    density_profile,
    morrey_norm,
    morrey_smallness,
    morrey_sobolev_norm,
    omega_density,
    omega_m,
    q_function,
    radial_curvature_integral,
    smallest_workable_cr,
)
from gfrg._internal.storage import check_artifacts, save_cover, save_field, save_nodal, save_singular_set, write_json
from gfrg._internal.transport import (
    PolyPath,
    SingularSetModel,
    StokesResult,
    Triangle,
    curvature_from_loops,
    generic_sample,
    stokes_check,
    transport,
)

_logger = logging.getLogger("gfrg.pipeline")

PipelineStage = Literal["generate", "stratify", "gauge-build", "truncate", "coulomb", "audit"]
"""Stages of a run, in execution order."""

PIPELINE_STAGES: tuple[PipelineStage, ...] = ("generate", "stratify", "gauge-build", "truncate", "coulomb", "audit")
"""Every stage, in execution order."""

FAILURE_MANIFEST = "failure.json"
"""File name of the machine-readable failure manifest."""

AuditBound = Literal["upper", "lower"]
"""Whether an audit threshold bounds the measured value from above or from below."""

VerifySuite = Literal["smoke", "full"]
"""Property suites run by `verify`."""

_ORIGIN_STAGE = 2
_LIPSCHITZ_STAGE = 3
_BOOTSTRAP_STAGE = 4
_DENSITY_STAGE = 5
_STOKES_STAGE = 6
_LOOP_STAGE = 7
_HODGE_STAGE = 8
_DENSITY_BALLS = 100
_STOKES_TRIANGLES = 200
_STOKES_RTOL = 1e-6
_LOOP_POINTS = 20
_LOOP_TOL = 1e-13
_LOOP_FLOOR = 1e-7
_LOOP_MIN_ORDER = 0.9
_CNK_CASES = ((5, 4, 2.0), (6, 4, np.pi), (6, 5, np.pi / 2.0))

_STATEMENTS: dict[str, str] = {
    "epsilon": "epsilon used for Omega_m: max of the configured value and sup r^(2-n/2) ||F||_L2(B(x,r))",
    "omega_fraction": "share of nodes in Omega_m",
    "nested": "Omega_(m-1) lies in Omega_m",
    "workable_cr": "{rho >= C_R D^-m} lies in Omega_m",
    "density": "|B(x, r) ∩ Omega_m| >= c r^n for r >= R_m",
    "average_bound": "integral_B(x,r) |F| <= C epsilon r^(n-2)",
    "origin_integral": "integral |F(y)| |y - x*|^(2-n) at the origin",
    "clustering": "clustering statistic of the averaged samples",
    "clustering_ratio": "clustering statistic over the decaying kernel bound",
    "lipschitz": "Lipschitz property of sigma_m along broken paths",
    "pointwise_bound": "|sigma_m(A)| <= C T_m",
    "gauge_potential": "|sigma(A)(x)| <= C integral |F(y)| |x - y|^(1-n)",
    "flat_gauge": "sigma_m(A) vanishes for flat A",
    "truncation": "||F(A~_m)|| <= C epsilon",
    "truncation_bound": "|F(A~_m)| <= C (|F(A)| + |grad psi| |sigma_m(A)|)",
    "far_region": "A~_m = sigma_m(A) where rho >= 20 R_m",
    "partial_invariance": "|F(sigma_m(A))| = |F(A)| on Omega_m",
    "cover_balls": "balls selected by the Vitali cover",
    "coulomb_converged": "Coulomb iteration met its stopping criterion",
    "coulomb_residual": "d_* A = 0 in the interior",
    "coulomb_boundary": "A . n = 0 on the faces",
    "coulomb_ratio": "||A||_(2,1) <= C ||F||_2",
    "gauge_invariance": "|F(sigma(A))| = |F(A)|",
    "bootstrap_bound": "||A|| <= C (||F|| + ||A||^2)",
    "bootstrap_contraction": "||A||^2 / ||F||",
    "laplacian_ratio": "|Laplace A| <= C (|A| |grad A| + |A|^3)",
    "interior_decay": "||A||_B(x,r/4) over ||A||_B(x,r)",
    "stokes": "|A[[loop]] - 1| <= C integral_triangle |F|",
    "loop_curvature": "|F from loops - stencil F| <= C h^4 + 1e-7 at 20 nodes",
    "loop_order": "observed first-order convergence of the loop estimates",
    "neumann": "||u||_(2,2) <= C (||f||_2 + ||g||_(2,1))",
    "neumann_error": "Neumann solution against the cosine eigenfunction",
    "hodge_2": "||u||_(2,1) <= C ||du||_2 at q = 2",
    "hodge_n/2": "||u||_(2,1) <= C ||du||_2 at q = n/2",
    "cnk": "c_(n,k) against its closed form",
    "monotonicity": "r^(4-n) integral_B |F|^2 is non-decreasing",
    "density_theta": "extrapolated density at the singular set",
    "radial_curvature": "integral |F . (x - y)/|x - y||^2 |x - y|^(4-n)",
}


@dataclass(frozen=True)
class AuditRow:
    """One measured quantity of a run, with its verdict when a threshold is enabled."""

    audit: str
    """Audit name."""
    level: int
    """Stratification level, 0 when the audit is level independent."""
    measured: float
    """Measured value."""
    threshold: float | None = None
    """Limit, `None` when the row only reports."""
    bound: AuditBound = "upper"
    """Direction of the limit."""

    @property
    def statement(self) -> str:
        """The audited inequality in words."""
        return _STATEMENTS.get(self.audit, self.audit)

    @property
    def passed(self) -> bool | None:
        """Verdict, `None` for report-only rows."""
        if self.threshold is None:
            return None
        if np.isnan(self.measured):
            return False
        if self.bound == "upper":
            return bool(self.measured <= self.threshold)
        return bool(self.measured >= self.threshold)

    def to_dict(self) -> dict[str, Any]:
        """Flat mapping used for CSV and JSON tables.

        Returns:
            The mapping.
        """
        return {
            "audit": self.audit,
            "statement": self.statement,
            "level": self.level,
            "measured": self.measured,
            "threshold": self.threshold,
            "bound": self.bound,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class PipelineResult:
    """Outcome of a successful run."""

    output: Path
    """Artifact directory."""
    rows: list[AuditRow]
    """Every measured quantity, in execution order."""

    @property
    def failures(self) -> list[str]:
        """Names of the failed audits, with their level."""
        return [f"{row.audit}[{row.level}]" for row in self.rows if row.passed is False]

    def table(self) -> pd.DataFrame:
        """The audit rows as a data frame.

        Returns:
            One row per audit.
        """
        return pd.DataFrame([row.to_dict() for row in self.rows], columns=_AUDIT_COLUMNS)


_AUDIT_COLUMNS = ["audit", "statement", "level", "measured", "threshold", "bound", "passed"]


@dataclass
class _RunState:
    cfg: ExperimentConfig
    logger: logging.Logger
    stage: str = "setup"
    rows: list[AuditRow] = field(default_factory=list)
    strat: StratConfig | None = None

    @property
    def out(self) -> Path:
        return self.cfg.output

    def enter(self, stage: str) -> None:
        self.stage = stage
        self.logger.info(f"[{stage}] starting")

    def add(self, audit: str, level: int, measured: float, threshold: float | None = None, bound: AuditBound = "upper") -> None:
        row = AuditRow(audit, level, float(measured), threshold, bound)
        self.rows.append(row)
        if row.passed is False:
            self.logger.warning(f"audit {audit} (level {level}) failed: {row.measured:.4g} vs {threshold:.4g}")
        else:
            self.logger.debug(f"audit {audit} (level {level}): {row.measured:.4g}")


def _finite_max(values: NDArray) -> float:
    values = np.asarray(values, dtype=float)
    finite = values[np.isfinite(values)]
    return float(np.max(finite, initial=0.0))


def _prepare_output(cfg: ExperimentConfig) -> None:
    cfg.output.mkdir(parents=True, exist_ok=True)
    (cfg.output / FAILURE_MANIFEST).unlink(missing_ok=True)
    write_json(cfg.output / "config.json", cfg.to_dict())
    pd.DataFrame(cfg.provenance(), columns=["key", "value", "source"]).to_csv(cfg.output / "provenance.csv", index=False)


def _write_failure(output: Path, error: GfrgError, stage: str) -> None:
    write_json(output / FAILURE_MANIFEST, {**error.to_manifest(), "stage": stage})


# Stages.


def _stage_generate(state: _RunState) -> GeneratedField:
    cfg = state.cfg
    state.enter("generate")
    generated = generate(cfg.generator, cfg.grid, cfg.lie_group, cfg.seed)
    connection = dataclasses.replace(generated.connection, interpolation_order=cfg.integrator.interpolation_order)
    generated = dataclasses.replace(generated, connection=connection)
    save_field(state.out / "connection.gfrg", connection, {"generator": cfg.generator.kind, "seed": cfg.seed})
    save_singular_set(state.out / "singular_set.json", generated.singular)
    if generated.gauge is not None:
        save_field(state.out / "generator_gauge.gfrg", generated.gauge)
    return generated


def _density_floor(mask: NodeMask, state: _RunState, level: int, rng: np.random.Generator) -> float | None:
    grid, strat = state.cfg.grid, state.cfg.strat
    nodes = np.argwhere(mask)
    if not len(nodes):
        return None
    centers = nodes[rng.choice(len(nodes), size=min(_DENSITY_BALLS, len(nodes)), replace=False)]
    radius = max(strat.radius(level), grid.h)
    radii = [radius * 2.0**j for j in range(4) if radius * 2.0**j <= 1.0] or [radius]
    return float(min(np.min(omega_density(mask, grid, centers, r)) for r in radii))


def _stage_stratify(
    state: _RunState,
    connection: ConnectionField,
    singular: SingularSetModel,
) -> tuple[CurvatureField, ScalarField, ScalarField, list[NodeMask]]:
    cfg = state.cfg
    grid, strat, audits = cfg.grid, cfg.strat, cfg.audits
    state.enter("stratify")
    curv = curvature(connection)
    f_mag = curvature_magnitude(curv)
    save_field(state.out / "curvature.gfrg", curv)
    rho = singular.rho(grid.points)
    resolved_rho = np.where(rho > grid.h, rho, 0.0)
    q = q_function(f_mag, grid, strat.kappa)
    save_nodal(state.out / "q.gfrg", q, grid)
    smallness = morrey_smallness(f_mag, grid)
    strat = state.strat = strat.calibrated(smallness)
    if strat.epsilon > cfg.strat.epsilon:
        state.logger.info(f"[stratify] curvature smallness {smallness:.4g} exceeds epsilon {cfg.strat.epsilon:.4g}")
    state.add("epsilon", 0, strat.epsilon)
    rng = np.random.default_rng([cfg.seed, _DENSITY_STAGE])
    masks: list[NodeMask] = []
    for level in range(1, cfg.levels + 1):
        mask = omega_m(q, strat, level, rho) & (rho > grid.h)
        save_nodal(state.out / f"omega_{level}.gfrg", mask, grid)
        state.add("omega_fraction", level, float(np.mean(mask)))
        if masks:
            state.add("nested", level, float(np.sum(masks[-1] & ~mask)), 0.0)
        state.add("workable_cr", level, smallest_workable_cr(mask, resolved_rho, strat, level), audits.workable_cr)
        density = _density_floor(mask, state, level, rng)
        if density is not None:
            state.add("density", level, density, audits.density_floor, "lower")
        masks.append(mask)
    state.add("average_bound", 0, average_bound_ratio(f_mag, grid, strat.epsilon))
    state.logger.info(f"[stratify] Omega_m sizes: {[int(mask.sum()) for mask in masks]}")
    return curv, f_mag, rho, masks


def _stage_gauges(
    state: _RunState,
    connection: ConnectionField,
    singular: SingularSetModel,
    f_mag: ScalarField,
    masks: list[NodeMask],
) -> list[PartialGauge]:
    cfg = state.cfg
    grid, strat, sampling, integrator = cfg.grid, cfg.strat, cfg.sampling, cfg.integrator
    state.enter("gauge-build")
    origin = choose_origin(f_mag, grid, masks[0], np.random.default_rng([cfg.seed, _ORIGIN_STAGE]), sampling.origin_candidates)
    write_json(
        state.out / "origin.json",
        {"point": origin.point.tolist(), "index": list(origin.index), "value": origin.value, "median": origin.median, "total": origin.total},
    )
    state.add("origin_integral", 1, origin.value)
    gauges = [base_gauge(connection, masks[0], origin.point, singular, sampling, integrator, cfg.seed, cfg.threads)]
    for mask in masks[1:]:
        gauges.append(
            inductive_step(connection, gauges[-1], mask, strat, singular, sampling, integrator, cfg.seed, cfg.threads, f_mag),
        )
    flat = cfg.generator.kind in ("zero", "pure_gauge")
    for gauge in gauges:
        level = gauge.level
        save_field(state.out / f"gauge_{level}.gfrg", gauge)
        state.add("clustering", level, _finite_max(gauge.statistics))
        if gauge.reference is not None:
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(gauge.reference > 0, gauge.statistics / gauge.reference, np.nan)
            state.add("clustering_ratio", level, _finite_max(ratio))
        rng = np.random.default_rng([cfg.seed, _LIPSCHITZ_STAGE, level])
        lipschitz = lipschitz_audit(connection, gauge, f_mag, strat, rng, sampling, integrator, singular)
        state.add("lipschitz", level, lipschitz.max_constant, cfg.audits.lipschitz_constant)
        state.add("pointwise_bound", level, lipschitz.max_pointwise)
        gauged = gauge.gauged(connection)
        state.add("gauge_potential", level, gauge_potential_ratio(gauged, f_mag, gauge.mask))
        if flat:
            size = float(np.max(connection_magnitude(gauged)[gauge.mask], initial=0.0))
            state.add("flat_gauge", level, size, cfg.audits.flat_gauge)
    return gauges


def _stage_truncate(
    state: _RunState,
    connection: ConnectionField,
    gauges: list[PartialGauge],
    f_mag: ScalarField,
    rho: ScalarField,
) -> ConnectionField:
    cfg = state.cfg
    state.enter("truncate")
    truncated = connection
    for gauge in gauges:
        level = gauge.level
        cover = vitali_cover(f_mag, cfg.grid, gauge.mask, state.strat or cfg.strat, level)
        truncated, report = truncate(connection, gauge, cover, cfg.strat, rho)
        save_cover(state.out / f"cover_{level}.json", cover)
        save_field(state.out / f"truncated_{level}.gfrg", truncated)
        state.add("cover_balls", level, len(cover))
        state.add("truncation", level, report.ratio_to_epsilon, cfg.audits.truncation_ratio)
        state.add("truncation_bound", level, report.bound_ratio)
        state.add("far_region", level, report.far_region_defect)
        state.add("partial_invariance", level, report.invariance_defect)
    return truncated


def _stage_coulomb(state: _RunState, connection: ConnectionField) -> ConnectionField:
    cfg = state.cfg
    integrator, audits = cfg.integrator, cfg.audits
    state.enter("coulomb")
    links = link_variables(connection, integrator.tol, integrator.max_doublings, cfg.threads)
    try:
        gauge, report = coulomb_fix(connection, cfg.coulomb, links, integrator=integrator, threads=cfg.threads)
    except IterationDiverged as exc:
        state.logger.warning(f"{exc}; restarting the iteration from a relaxation gauge")
        start, _ = relaxation_fix(connection, cfg.coulomb, links, integrator=integrator, threads=cfg.threads)
        gauge, report = coulomb_fix(connection, cfg.coulomb, links, initial=start, integrator=integrator, threads=cfg.threads)
    fixed = apply_gauge(gauge, connection)
    save_field(state.out / "coulomb_gauge.gfrg", gauge)
    save_field(state.out / "coulomb_connection.gfrg", fixed)
    write_json(state.out / "coulomb.json", report.to_dict())
    steps = len(report.residual_history)
    updates = report.update_history + [np.nan] * (steps - len(report.update_history))
    pd.DataFrame(
        {"step": np.arange(steps), "residual": report.residual_history, "update": updates[:steps], "method": report.method},
    ).to_csv(state.out / "coulomb_residuals.csv", index=False)
    converged_floor = None if audits.coulomb_residual is None else 1.0
    state.add("coulomb_converged", 0, 1.0 if report.converged else 0.0, converged_floor, "lower")
    state.add("coulomb_residual", 0, report.interior_residual, audits.coulomb_residual)
    state.add("coulomb_boundary", 0, report.boundary_defect, audits.coulomb_residual)
    state.add("coulomb_ratio", 0, report.norm_ratio, audits.coulomb_ratio)
    state.add("gauge_invariance", 0, gauged_curvature_defect(connection, gauge), audits.gauge_invariance)
    bootstrap = bootstrap_audit(fixed, np.random.default_rng([cfg.seed, _BOOTSTRAP_STAGE]))
    state.add("bootstrap_bound", 0, bootstrap.bound_ratio)
    state.add("bootstrap_contraction", 0, bootstrap.contraction)
    state.add("laplacian_ratio", 0, bootstrap.laplacian_ratio)
    state.add("interior_decay", 0, bootstrap.max_decay)
    return fixed


# Property audits of the model field.


def _stokes_triangles(singular: SingularSetModel, state: _RunState, count: int) -> list[Triangle]:
    grid = state.cfg.grid
    h = grid.h
    lower, upper = np.full(grid.n, 2.0 * h), np.full(grid.n, 1.0 - 2.0 * h)
    if np.any(upper - lower < 4.0 * h):
        return []
    rng = np.random.default_rng([state.cfg.seed, _STOKES_STAGE])
    triangles: list[Triangle] = []
    for _ in range(50 * count):
        if len(triangles) == count:
            break
        sample = generic_sample(singular, "triangle", rng, h, (lower, upper), max_draws=state.cfg.sampling.max_draws)
        tri = Triangle(sample.vertices)
        if tri.diameter >= 4.0 * h and tri.area > h * h:
            triangles.append(tri)
    return triangles


def _stokes_results(
    connection: ConnectionField,
    curv: CurvatureField,
    singular: SingularSetModel,
    state: _RunState,
    triangles: list[Triangle],
) -> list[StokesResult]:
    tol = state.cfg.integrator.tol
    return [stokes_check(connection, tri, tol, singular, curv, rtol=_STOKES_RTOL) for tri in triangles]


def _loop_rows(state: _RunState, connection: ConnectionField, curv: CurvatureField, singular: SingularSetModel) -> None:
    grid, audits = state.cfg.grid, state.cfg.audits
    h = grid.h
    lower, upper = np.full(grid.n, 4.0 * h), np.full(grid.n, 1.0 - 4.0 * h)
    if np.any(upper <= lower):
        return
    rng = np.random.default_rng([state.cfg.seed, _LOOP_STAGE])
    e1, e2 = np.eye(grid.n)[:2]
    sizes = [h / 4.0, h / 8.0, h / 16.0]
    tol = min(state.cfg.integrator.tol, _LOOP_TOL)
    deviations, orders = [], []
    for _ in range(_LOOP_POINTS):
        x0 = generic_sample(singular, "point", rng, h, (lower, upper), 4.0 * h, state.cfg.sampling.max_draws).vertices[0]
        x0 = np.rint(x0 / h) * h
        loops = curvature_from_loops(connection, x0, e1, e2, sizes, tol, singular)
        stencil = curv.sample(x0[None])[0, 0]
        deviations.append(float(operator_norm(loops.limit - stencil)))
        if np.isfinite(loops.order) and float(operator_norm(loops.estimates[0] - loops.estimates[1])) > _LOOP_FLOOR:
            orders.append(loops.order)
    threshold = None if audits.loop_curvature is None else audits.loop_curvature * h**4 + _LOOP_FLOOR
    state.add("loop_curvature", 0, max(deviations), threshold)
    if orders:
        state.add("loop_order", 0, min(orders), _LOOP_MIN_ORDER, "lower")


def _neumann_rows(state: _RunState) -> None:
    grid = state.cfg.grid
    exact = np.prod(np.cos(np.pi * grid.points), axis=-1)
    problem = NeumannProblem(grid, -grid.n * np.pi**2 * exact)
    solution = neumann_solve(problem, state.cfg.coulomb.solver_tol)
    state.add("neumann", 0, neumann_estimate_ratio(problem, solution), state.cfg.audits.neumann_constant)
    state.add("neumann_error", 0, float(np.max(np.abs(solution.u - exact))))


def _hodge_rows(state: _RunState) -> None:
    grid = state.cfg.grid
    u = divergence_free_field(grid, np.random.default_rng([state.cfg.seed, _HODGE_STAGE]))
    report = hodge_estimate_audit(u, grid)
    for label, ratio in report.ratios.items():
        state.add(f"hodge_{label}", 0, ratio, state.cfg.audits.elliptic_constant)


def _density_rows(state: _RunState, curv: CurvatureField, f_mag: ScalarField, singular: SingularSetModel) -> None:
    if len(singular.points):
        centre = singular.points[0]
    elif singular.planes:
        centre = singular.planes[0][0]
    else:
        return
    grid = state.cfg.grid
    profile = density_profile(f_mag, grid, centre)
    pd.DataFrame({"radius": profile.radii, "value": profile.values}).to_csv(state.out / "density.csv", index=False)
    state.add("monotonicity", 0, 1.0 if profile.monotone else 0.0)
    state.add("density_theta", 0, profile.theta)
    state.add("radial_curvature", 0, radial_curvature_integral(curv, centre))


def _stage_audit(
    state: _RunState,
    connection: ConnectionField,
    curv: CurvatureField,
    f_mag: ScalarField,
    singular: SingularSetModel,
) -> None:
    audits = state.cfg.audits
    state.enter("audit")
    results = _stokes_results(connection, curv, singular, state, _stokes_triangles(singular, state, _STOKES_TRIANGLES))
    if results:
        state.add("stokes", 0, max(result.ratio for result in results), audits.stokes_ratio)
    _loop_rows(state, connection, curv, singular)
    _neumann_rows(state)
    _hodge_rows(state)
    for n, k, expected in _CNK_CASES:
        state.add("cnk", 0, abs(cnk_constant(n, k) - expected), audits.cnk_tolerance)
    _density_rows(state, curv, f_mag, singular)


def _finish(state: _RunState) -> PipelineResult:
    result = PipelineResult(state.out, list(state.rows))
    table = result.table()
    table.to_csv(state.out / "audits.csv", index=False)
    write_json(state.out / "audits.json", [row.to_dict() for row in result.rows])
    failures = result.failures
    if failures:
        error = AuditFailed(f"{len(failures)} audit(s) failed: {', '.join(failures)}", failures=failures)
        _write_failure(state.out, error, "audit")
        raise error
    state.logger.info(f"run finished with {len(result.rows)} audit rows, all enabled assertions pass")
    return result


def run_pipeline(
    cfg: ExperimentConfig,
    logger: Optional[logging.Logger] = None,
    until: PipelineStage = "audit",
) -> PipelineResult:
    """Run the gauge construction end to end and audit every stage.

    Stages run in the order of `PIPELINE_STAGES` up to `until`; every stage
    writes its fields, masks, covers and gauges to `cfg.output`. Audit rows
    are written to `audits.csv` and `audits.json`.

    Args:
        cfg: The experiment configuration.
        logger: Logger for stage progress.
        until: Last stage to run.

    Returns:
        The result, when every enabled assertion passes.

    Raises:
        AuditFailed: If an enabled assertion fails (after writing all artifacts).
        GfrgError: If a stage fails; `failure.json` names the stage.
    """
    if until not in PIPELINE_STAGES:
        msg = f"unknown stage {until!r}; expected one of {', '.join(PIPELINE_STAGES)}"
        raise ValueError(msg)
    state = _RunState(cfg, logger or _logger)
    _prepare_output(cfg)
    last = PIPELINE_STAGES.index(until)
    try:
        generated = _stage_generate(state)
        connection, singular = generated.connection, generated.singular
        if last >= PIPELINE_STAGES.index("stratify"):
            curv, f_mag, rho, masks = _stage_stratify(state, connection, singular)
            if last >= PIPELINE_STAGES.index("gauge-build"):
                gauges = _stage_gauges(state, connection, singular, f_mag, masks)
                if last >= PIPELINE_STAGES.index("truncate"):
                    truncated = _stage_truncate(state, connection, gauges, f_mag, rho)
                    if last >= PIPELINE_STAGES.index("coulomb"):
                        _stage_coulomb(state, truncated)
                        if last >= PIPELINE_STAGES.index("audit"):
                            _stage_audit(state, connection, curv, f_mag, singular)
    except GfrgError as exc:
        _write_failure(cfg.output, exc, state.stage)
        state.logger.error(f"run failed during {state.stage}: {type(exc).__name__}: {exc}")
        raise
    return _finish(state)


def run_audits(cfg: ExperimentConfig, logger: Optional[logging.Logger] = None) -> PipelineResult:
    """Run only the property audits of the model field: Stokes, loops, Neumann, Hodge, `c_(n,k)` and density.

    Args:
        cfg: The experiment configuration.
        logger: Logger for progress.

    Returns:
        The result, when every enabled assertion passes.

    Raises:
        AuditFailed: If an enabled assertion fails.
        GfrgError: If an audit cannot be evaluated.
    """
    state = _RunState(cfg, logger or _logger)
    _prepare_output(cfg)
    try:
        generated = _stage_generate(state)
        curv = curvature(generated.connection)
        _stage_audit(state, generated.connection, curv, curvature_magnitude(curv), generated.singular)
    except GfrgError as exc:
        _write_failure(cfg.output, exc, state.stage)
        raise
    return _finish(state)


# Single measurements.


def transport_report(cfg: ExperimentConfig, vertices: NDArray, logger: Optional[logging.Logger] = None) -> dict[str, Any]:
    """Transport the generated connection along one polygonal path.

    Args:
        cfg: The experiment configuration.
        vertices: Path vertices, shape `(k, n)`.
        logger: Logger for progress.

    Returns:
        The transport as real and imaginary parts and its distance to the identity.
    """
    logger = logger or _logger
    cfg.output.mkdir(parents=True, exist_ok=True)
    generated = generate(cfg.generator, cfg.grid, cfg.lie_group, cfg.seed)
    path = PolyPath(np.asarray(vertices, dtype=float))
    element = transport(generated.connection, path, cfg.integrator.tol, generated.singular, cfg.integrator.max_doublings)
    data = {
        "vertices": path.vertices.tolist(),
        "real": element.real.tolist(),
        "imag": element.imag.tolist(),
        "distance_to_identity": float(operator_norm(element - np.eye(len(element)))),
    }
    write_json(cfg.output / "transport.json", data)
    logger.info(f"transport along {len(path.vertices)} vertices: |U - 1| = {data['distance_to_identity']:.6g}")
    return data


def stokes_report(
    cfg: ExperimentConfig,
    count: int = _STOKES_TRIANGLES,
    logger: Optional[logging.Logger] = None,
    triangles: NDArray | None = None,
) -> pd.DataFrame:
    """Both sides of the Stokes inequality on given or sampled generic triangles.

    Args:
        cfg: The experiment configuration.
        count: Number of sampled triangles when `triangles` is not given.
        logger: Logger for progress.
        triangles: Explicit triangles, shape `(k, 3, n)`.

    Returns:
        One row per triangle with `lhs`, `rhs` and `ratio`.
    """
    state = _RunState(cfg, logger or _logger)
    cfg.output.mkdir(parents=True, exist_ok=True)
    generated = generate(cfg.generator, cfg.grid, cfg.lie_group, cfg.seed)
    if triangles is None:
        shapes = _stokes_triangles(generated.singular, state, count)
    else:
        shapes = [Triangle(vertices) for vertices in np.asarray(triangles, dtype=float).reshape(-1, 3, cfg.n)]
    results = _stokes_results(generated.connection, curvature(generated.connection), generated.singular, state, shapes)
    table = pd.DataFrame([dataclasses.asdict(result) for result in results], columns=["lhs", "rhs", "ratio"])
    table.to_csv(cfg.output / "stokes.csv", index=False)
    state.logger.info(f"Stokes ratios on {len(table)} triangles, max {_finite_max(table['ratio'].to_numpy()):.4g}")
    return table


def morrey_report(cfg: ExperimentConfig, logger: Optional[logging.Logger] = None) -> dict[str, Any]:
    """Scale-invariant Morrey norms of the generated connection and its curvature.

    Args:
        cfg: The experiment configuration.
        logger: Logger for progress.

    Returns:
        The norms, the largest `Q` and the ball-average constant.
    """
    logger = logger or _logger
    cfg.output.mkdir(parents=True, exist_ok=True)
    grid = cfg.grid
    connection = generate(cfg.generator, grid, cfg.lie_group, cfg.seed).connection
    curv = curvature(connection)
    f_mag = curvature_magnitude(curv)
    params = MorreyParams.scale_invariant(grid.n)
    data = {
        "p": params.p,
        "q": params.q,
        "relaxed": params.relaxed,
        "curvature_norm": morrey_norm(curv.data, params, grid),
        "connection_norm": morrey_sobolev_norm(connection.data, params.with_order(1), grid),
        "q_max": float(np.max(q_function(f_mag, grid, cfg.strat.kappa))),
        "average_bound": average_bound_ratio(f_mag, grid, cfg.strat.epsilon),
    }
    write_json(cfg.output / "morrey.json", data)
    logger.info(f"||F||_M = {data['curvature_norm']:.4g}, ||A||_M(2,1) = {data['connection_norm']:.4g}")
    return data


# Verification suites.


@dataclass(frozen=True)
class VerifyResult:
    """Outcome of a verification suite."""

    cases: dict[str, str]
    """Status per case: `pass` or the failing error name."""
    failures: list[str]
    """One line per failed case."""
    exit_code: int
    """0 when every case passes, otherwise the largest case exit code."""


_SMOKE_SAMPLING = {
    "base_paths": 32,
    "inductive_paths": 16,
    "origin_candidates": 16,
    "lipschitz_pairs": 8,
    "lipschitz_points": 8,
}


def verify_cases(suite: VerifySuite, seed: int, output: Path) -> dict[str, ExperimentConfig]:
    """Configurations run by a verification suite.

    Smoke cases use coarse grids, so the stencil-sensitive thresholds are
    widened to match `h^4` errors there.

    Args:
        suite: `smoke` or `full`.
        seed: Root seed.
        output: Parent directory; each case writes to its own subdirectory.

    Returns:
        Configuration per case name.

    Raises:
        ValueError: For unknown suites.
    """
    if suite not in ("smoke", "full"):
        msg = f"unknown suite {suite!r}"
        raise ValueError(msg)
    coarse = {"gauge_invariance": 0.05, "flat_gauge": 0.05, "coulomb_residual": 1e-5}
    specs: dict[str, dict[str, Any]] = {
        "zero-n2": {"group": "u1", "n": 2, "m": 9, "generator": {"kind": "zero"}},
        "zero-n3": {"group": "su2", "n": 3, "m": 9, "generator": {"kind": "zero"}},
        "smooth-n2": {"group": "su2", "n": 2, "m": 17, "generator": {"kind": "random_smooth", "band": 1}, "audits": coarse},
        "flat-n2": {
            "group": "su2",
            "n": 2,
            "m": 17,
            "generator": {"kind": "pure_gauge", "band": 1},
            "audits": {**coarse, "loop_curvature": None},
        },
        "abelian-n3": {"group": "u1", "n": 3, "m": 9, "generator": {"kind": "abelian_model"}, "audits": coarse},
    }
    if suite == "full":
        strict = {**coarse, "gauge_invariance": 1e-3, "coulomb_residual": 1e-6}
        for name in ("smooth-n2", "flat-n2", "abelian-n3"):
            specs[name]["audits"] = {**specs[name]["audits"], **strict}
        specs["smooth-n3"] = {"group": "su2", "n": 3, "m": 17, "generator": {"kind": "random_smooth", "band": 1}, "audits": strict}
        specs["singular-n4"] = {
            "group": "su2",
            "n": 4,
            "m": 13,
            "levels": 3,
            "generator": {"kind": "singular_model", "epsilon": 0.05},
            "audits": {**coarse, "coulomb_residual": 1e-6, "loop_curvature": None},
        }
    cases = {}
    for name, spec in specs.items():
        data = {"seed": seed, "output": str(Path(output) / name), **spec}
        if suite == "smoke":
            data["sampling"] = dict(_SMOKE_SAMPLING)
        cases[name] = ExperimentConfig.from_dict(data)
    return cases


def _recheck(directory: Path) -> None:
    check_artifacts(directory)
    audits = directory / "audits.csv"
    if not audits.exists():
        raise FieldDecodeError(f"{directory} has no audit table", path=str(directory))
    failed = pd.read_csv(audits)
    failed = failed[failed["passed"].astype(str) == "False"]
    if len(failed):
        names = [f"{audit}[{level}]" for audit, level in zip(failed["audit"], failed["level"])]
        raise AuditFailed(f"recorded audit failures: {', '.join(names)}", failures=names)


def verify(
    suite: VerifySuite = "smoke",
    seed: int = 0,
    output: Path = Path("artifacts/verify"),
    logger: Optional[logging.Logger] = None,
    check_only: bool = False,  # noqa: FBT001, FBT002
) -> VerifyResult:
    """Run a verification suite, or re-check the artifacts of an earlier one.

    Each case runs the full pipeline in `output/<case>` and then decodes
    every field file it wrote.

    Args:
        suite: `smoke` (two- and three-dimensional cases) or `full` (adds the four-dimensional singular model).
        seed: Root seed.
        output: Parent artifact directory.
        logger: Logger for progress.
        check_only: Skip the runs; decode and re-read the existing case directories.

    Returns:
        Per-case status and the failure list.
    """
    logger = logger or _logger
    output = Path(output)
    cases: dict[str, str] = {}
    failures: list[str] = []
    codes: list[int] = []
    if check_only:
        targets = {path.name: path for path in sorted(output.iterdir()) if path.is_dir()} if output.is_dir() else {}
        if not targets:
            targets = {output.name: output}
        for name, directory in targets.items():
            try:
                _recheck(directory)
                cases[name] = "pass"
            except GfrgError as exc:
                cases[name] = type(exc).__name__
                failures.append(f"{name}: {type(exc).__name__}: {exc}")
                codes.append(exc.exit_code)
    else:
        for name, cfg in verify_cases(suite, seed, output).items():
            logger.info(f"verify case {name}")
            try:
                run_pipeline(cfg, logger)
                check_artifacts(cfg.output)
                cases[name] = "pass"
            except GfrgError as exc:
                cases[name] = type(exc).__name__
                failures.append(f"{name}: {type(exc).__name__}: {exc}")
                codes.append(exc.exit_code)
    output.mkdir(parents=True, exist_ok=True)
    write_json(output / "verify.json", {"suite": suite, "seed": seed, "cases": cases, "failures": failures})
    return VerifyResult(cases, failures, max(codes, default=0))
