"""Quantile production frontiers and planner reallocation counterfactuals.

The package estimates concavity-constrained quantile production
functions on a city panel, groups cities into efficiency deciles,
solves social-planner reallocation programs against the estimated
technologies, and reports aggregate output gains with bootstrap
uncertainty.  All optimization runs on the deterministic embedded
solver in :mod:`cityalloc.solver`.
"""
from cityalloc.cqr import (
    DEFAULT_QUANTILES,
    DecileAssignment,
    QuantileFit,
    assign_deciles,
    dedup_hyperplanes,
    fit_all_quantiles,
    fit_cqr,
    fit_linear_qr,
    fits_from_csv,
    fits_to_csv,
)
from cityalloc.gains import (
    BootstrapConfig,
    GainError,
    GainResult,
    PipelineAudit,
    PipelineError,
    ScenarioTemplate,
    bootstrap_gain,
    compute_gain,
    gains_to_csv,
    gains_to_plot_json,
    run_pipeline,
)
from cityalloc.panel import (
    CapitalRule,
    Panel,
    PanelError,
    build_capital_stock,
    deflate_series,
    fixed_effect_inputs,
    human_capital,
    load_panel,
    panel_to_csv,
)
from cityalloc.planner import (
    MODES,
    AllocationSolution,
    DecileTechnology,
    PlannerError,
    PlannerScenario,
    allocations_to_csv,
    default_big_m,
    solve_entry_exit,
    solve_imperfect,
    solve_local,
    solve_perfect,
    solve_scenario,
    solve_single_factor,
    summary_to_csv,
    technology_from_fit,
)
from cityalloc.solver import (
    BASIS_AT_LOWER,
    BASIS_AT_UPPER,
    BASIS_BASIC,
    BASIS_FREE,
    BasisStart,
    LE,
    EQ,
    GE,
    LinearProgram,
    MixedIntegerProgram,
    SolveResult,
    SolverError,
    solve_integer,
    solve_lp,
    solve_milp,
    write_lp_text,
)
from cityalloc.synth import (
    NOISY_COVERAGE_SPEC,
    GroundTruth,
    SyntheticSpec,
    analytic_efficient_output,
    brute_force_allocate,
    generate,
    rows_to_csv,
    truth_from_json,
    truth_to_json,
)

__version__ = "0.1.0"

__all__ = [
    "BootstrapConfig",
    "GainError",
    "GainResult",
    "PipelineAudit",
    "PipelineError",
    "ScenarioTemplate",
    "bootstrap_gain",
    "compute_gain",
    "gains_to_csv",
    "gains_to_plot_json",
    "run_pipeline",
    "CapitalRule",
    "Panel",
    "PanelError",
    "build_capital_stock",
    "deflate_series",
    "fixed_effect_inputs",
    "human_capital",
    "load_panel",
    "panel_to_csv",
    "DEFAULT_QUANTILES",
    "DecileAssignment",
    "QuantileFit",
    "assign_deciles",
    "dedup_hyperplanes",
    "fit_all_quantiles",
    "fit_cqr",
    "fit_linear_qr",
    "fits_from_csv",
    "fits_to_csv",
    "MODES",
    "AllocationSolution",
    "DecileTechnology",
    "PlannerError",
    "PlannerScenario",
    "allocations_to_csv",
    "default_big_m",
    "solve_entry_exit",
    "solve_imperfect",
    "solve_local",
    "solve_perfect",
    "solve_scenario",
    "solve_single_factor",
    "summary_to_csv",
    "technology_from_fit",
    "BASIS_AT_LOWER",
    "BASIS_AT_UPPER",
    "BASIS_BASIC",
    "BASIS_FREE",
    "BasisStart",
    "LE",
    "EQ",
    "GE",
    "LinearProgram",
    "MixedIntegerProgram",
    "SolveResult",
    "SolverError",
    "solve_lp",
    "solve_integer",
    "solve_milp",
    "write_lp_text",
    "NOISY_COVERAGE_SPEC",
    "GroundTruth",
    "SyntheticSpec",
    "analytic_efficient_output",
    "brute_force_allocate",
    "generate",
    "rows_to_csv",
    "truth_from_json",
    "truth_to_json",
    "__version__",
]
