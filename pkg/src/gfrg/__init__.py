"""gfrg package.

Gauge fixing and regularity audits for Yang-Mills connections with small
scale-invariant curvature, discretised on uniform lattices over the unit cube.
"""

from __future__ import annotations

from gfrg._internal.cli import app
from gfrg._internal.config import (
    AuditThresholds,
    CoulombConfig,
    ExperimentConfig,
    GeneratorKind,
    GeneratorSpec,
    IntegratorConfig,
    SamplingConfig,
)
from gfrg._internal.coulomb import (
    BootstrapReport,
    CoulombReport,
    CoulombResidual,
    HodgeReport,
    NeumannProblem,
    NeumannSolution,
    SolverMethod,
    bootstrap_audit,
    coulomb_fix,
    coulomb_residual,
    divergence_free_field,
    fv_divergence,
    fv_laplacian,
    gauge_links,
    gauged_curvature_defect,
    hodge_estimate_audit,
    link_variables,
    neumann_estimate_ratio,
    neumann_solve,
    poisson_gauge,
    relaxation_fix,
    stencil_normal_defect,
)
from gfrg._internal.errors import (
    AuditFailed,
    ClusteringViolated,
    ConfigError,
    ConstraintViolated,
    EmptyDomain,
    FieldDecodeError,
    GfrgError,
    GridMismatch,
    IterationDiverged,
    LogarithmBranchCut,
    MaskMismatch,
    MissingArtifacts,
    NoConvergence,
    OutsideTubularNeighbourhood,
    PathHitsSingularSet,
    SamplingExhausted,
    TriangleHitsSingularSet,
    UnsupportedSpec,
    WeightMassTooSmall,
)
from gfrg._internal.field import (
    ConnectionField,
    CurvatureField,
    Evaluator,
    GaugeField,
    Grid,
    NodeMask,
    ScalarField,
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
from gfrg._internal.gaugebuild import (
    BallCover,
    LipschitzReport,
    OriginChoice,
    PartialGauge,
    TruncationReport,
    base_gauge,
    bump,
    choose_origin,
    gauge_potential_ratio,
    inductive_step,
    lipschitz_audit,
    pointwise_bound_ratio,
    truncate,
    vitali_cover,
)
from gfrg._internal.generators import (
    GeneratedField,
    abelian_direction,
    generate,
)
from gfrg._internal.lie import (
    DEFAULT_TUBULAR_RADIUS,
    SU2,
    U1,
    AlgebraElement,
    GroupElement,
    LieGroup,
    WeightedSamples,
    clustering_statistic,
    dagger,
    group_from_tag,
    operator_norm,
)
from gfrg._internal.morrey import (
    DensityProfile,
    MorreyParams,
    RadiusSet,
    StratConfig,
    WeightKind,
    average_bound_ratio,
    ball_sum_at,
    ball_sums,
    cell_correction,
    cnk_constant,
    density_profile,
    fractional_weighted_integral,
    maximal_function,
    morrey_norm,
    morrey_smallness,
    morrey_sobolev_norm,
    omega_density,
    omega_m,
    q_function,
    radial_curvature_integral,
    riesz_kernel_integral,
    riesz_potential,
    smallest_workable_cr,
    t_m_field,
    triangle_average_ratio,
)
from gfrg._internal.parallel import (
    THREADS_ENV,
    chunk_slices,
    map_chunks,
    resolve_threads,
)
from gfrg._internal.pipeline import (
    FAILURE_MANIFEST,
    PIPELINE_STAGES,
    AuditBound,
    AuditRow,
    PipelineResult,
    PipelineStage,
    VerifyResult,
    VerifySuite,
    morrey_report,
    run_audits,
    run_pipeline,
    stokes_report,
    transport_report,
    verify,
    verify_cases,
)
from gfrg._internal.report import (
    ReportResult,
    build_report,
    plot_density_profile,
    plot_measured_constants,
    plot_residual_history,
)
from gfrg._internal.storage import (
    FIELD_MAGIC,
    FieldKind,
    StoredField,
    check_artifacts,
    load_cover,
    load_field,
    load_nodal,
    load_singular_set,
    read_json,
    save_cover,
    save_field,
    save_nodal,
    save_singular_set,
    sidecar_path,
    write_json,
)
from gfrg._internal.transport import (
    GenericSample,
    LoopCurvature,
    PolyPath,
    ShapeKind,
    SingularSetModel,
    StokesResult,
    Triangle,
    curvature_from_loops,
    generic_sample,
    monodromy,
    planar_curvature,
    stokes_check,
    transport,
    transport_paths,
    transport_segments,
    triangle_integral,
)

__all__: list[str] = [
    "DEFAULT_TUBULAR_RADIUS",
    "FAILURE_MANIFEST",
    "FIELD_MAGIC",
    "PIPELINE_STAGES",
    "SU2",
    "THREADS_ENV",
    "U1",
    "AlgebraElement",
    "AuditBound",
    "AuditFailed",
    "AuditRow",
    "AuditThresholds",
    "BallCover",
    "BootstrapReport",
    "ClusteringViolated",
    "ConfigError",
    "ConnectionField",
    "ConstraintViolated",
    "CoulombConfig",
    "CoulombReport",
    "CoulombResidual",
    "CurvatureField",
    "DensityProfile",
    "EmptyDomain",
    "Evaluator",
    "ExperimentConfig",
    "FieldDecodeError",
    "FieldKind",
    "GaugeField",
    "GeneratedField",
    "GeneratorKind",
    "GeneratorSpec",
    "GenericSample",
    "GfrgError",
    "Grid",
    "GridMismatch",
    "GroupElement",
    "HodgeReport",
    "IntegratorConfig",
    "IterationDiverged",
    "LieGroup",
    "LipschitzReport",
    "LogarithmBranchCut",
    "LoopCurvature",
    "MaskMismatch",
    "MissingArtifacts",
    "MorreyParams",
    "NeumannProblem",
    "NeumannSolution",
    "NoConvergence",
    "NodeMask",
    "OriginChoice",
    "OutsideTubularNeighbourhood",
    "PartialGauge",
    "PathHitsSingularSet",
    "PipelineResult",
    "PipelineStage",
    "PolyPath",
    "RadiusSet",
    "ReportResult",
    "SamplingConfig",
    "SamplingExhausted",
    "ScalarField",
    "ShapeKind",
    "SingularSetModel",
    "SolverMethod",
    "StokesResult",
    "StoredField",
    "StratConfig",
    "Triangle",
    "TriangleHitsSingularSet",
    "TruncationReport",
    "UnsupportedSpec",
    "VerifyResult",
    "VerifySuite",
    "WeightKind",
    "WeightMassTooSmall",
    "WeightedSamples",
    "abelian_direction",
    "app",
    "apply_gauge",
    "average_bound_ratio",
    "ball_sum_at",
    "ball_sums",
    "base_gauge",
    "bootstrap_audit",
    "build_report",
    "bump",
    "cell_correction",
    "check_artifacts",
    "choose_origin",
    "chunk_slices",
    "clustering_statistic",
    "cnk_constant",
    "connection_magnitude",
    "coulomb_fix",
    "coulomb_residual",
    "curvature",
    "curvature_from_loops",
    "curvature_magnitude",
    "dagger",
    "density_profile",
    "derivative",
    "divergence_free_field",
    "fractional_weighted_integral",
    "fv_divergence",
    "fv_laplacian",
    "gauge_invariance_defect",
    "gauge_links",
    "gauge_potential_ratio",
    "gauged_curvature_defect",
    "generate",
    "generic_sample",
    "gradient",
    "group_from_tag",
    "hodge_estimate_audit",
    "inductive_step",
    "link_variables",
    "lipschitz_audit",
    "load_cover",
    "load_field",
    "load_nodal",
    "load_singular_set",
    "map_chunks",
    "maximal_function",
    "monodromy",
    "morrey_norm",
    "morrey_report",
    "morrey_smallness",
    "morrey_sobolev_norm",
    "neumann_estimate_ratio",
    "neumann_solve",
    "omega_density",
    "omega_m",
    "operator_norm",
    "planar_curvature",
    "plot_density_profile",
    "plot_measured_constants",
    "plot_residual_history",
    "pointwise_bound_ratio",
    "poisson_gauge",
    "q_function",
    "radial_curvature_integral",
    "read_json",
    "relaxation_fix",
    "resolve_threads",
    "restrict",
    "riesz_kernel_integral",
    "riesz_potential",
    "run_audits",
    "run_pipeline",
    "save_cover",
    "save_field",
    "save_nodal",
    "save_singular_set",
    "sidecar_path",
    "smallest_workable_cr",
    "stencil_normal_defect",
    "stokes_check",
    "stokes_report",
    "t_m_field",
    "transport",
    "transport_paths",
    "transport_report",
    "transport_segments",
    "triangle_average_ratio",
    "triangle_integral",
    "truncate",
    "verify",
    "verify_cases",
    "vitali_cover",
    "write_json",
    "ym_residual",
]
