"""Estimand selection for causal inference under limited overlap.

Evaluate the family of weighted estimands h(e) = e^c (1-e)^d over a
(c, d) grid, test each member for estimand mismatch and for residual
statistical bias with weighted-energy permutation tests, attach
bootstrap standard errors, and select estimands by intersecting contour
bands of the smoothed diagnostic surfaces.
"""

from .data import BalanceReport, ColumnSchema, Dataset, compute_smd, ingest_csv
from .energy import (
    DistanceMatrix,
    MismatchResult,
    MismatchTester,
    PermutationTestResult,
    StatBiasTester,
    covariate_distances,
    energy_group_vs_pooled,
    energy_treated_vs_control,
    mismatch_pvalue,
    pairwise_distances,
    score_distances,
    statbias_pvalue,
)
from .errors import (
    ConfigError,
    DataError,
    EstselError,
    NumericalError,
    SeparationError,
    SingularDesignError,
)
from .estimands import (
    BootstrapEngine,
    EffectEstimate,
    EstimandSpec,
    WeightSet,
    bootstrap_se,
    build_grid,
    compute_weights,
    estimate_tau,
    h_value,
    weight_matrix,
)
from .evaluate import GridEvaluation, evaluate_grid, read_grid_csv
from .propensity import DesignSpec, PropensityModel, fit_propensity, predict_scores
from .simulate import (
    ScenarioResult,
    SimConfig,
    SimulatedDraw,
    TruthRecord,
    VarianceVerification,
    run_scenario,
    simulate_dataset,
    solve_alpha0,
    true_estimand,
    verify_min_variance,
)
from .surfaces import (
    ContourBand,
    SelectionEntry,
    SelectionResult,
    Surface,
    default_levels,
    extract_bands,
    interpolate_lattice,
    krige_se,
    raw_surface,
    select_estimands,
    smooth_pvalues,
)

__all__ = [
    "BalanceReport",
    "BootstrapEngine",
    "ColumnSchema",
    "ConfigError",
    "ContourBand",
    "DataError",
    "Dataset",
    "DesignSpec",
    "DistanceMatrix",
    "EffectEstimate",
    "EstimandSpec",
    "EstselError",
    "GridEvaluation",
    "MismatchResult",
    "MismatchTester",
    "NumericalError",
    "PermutationTestResult",
    "PropensityModel",
    "ScenarioResult",
    "SelectionEntry",
    "SelectionResult",
    "SeparationError",
    "SimConfig",
    "SimulatedDraw",
    "SingularDesignError",
    "StatBiasTester",
    "Surface",
    "TruthRecord",
    "VarianceVerification",
    "WeightSet",
    "bootstrap_se",
    "build_grid",
    "compute_smd",
    "compute_weights",
    "covariate_distances",
    "default_levels",
    "energy_group_vs_pooled",
    "energy_treated_vs_control",
    "estimate_tau",
    "evaluate_grid",
    "extract_bands",
    "fit_propensity",
    "h_value",
    "ingest_csv",
    "interpolate_lattice",
    "krige_se",
    "mismatch_pvalue",
    "pairwise_distances",
    "predict_scores",
    "raw_surface",
    "read_grid_csv",
    "run_scenario",
    "score_distances",
    "select_estimands",
    "simulate_dataset",
    "smooth_pvalues",
    "solve_alpha0",
    "statbias_pvalue",
    "true_estimand",
    "verify_min_variance",
    "weight_matrix",
]
