"""Critical branching process in i.i.d. random environment with one
immigrant per generation: exact environment-conditional clan probabilities,
a direct population oracle, associated random-walk functionals, and Monte
Carlo verification of their scaling regimes.
"""
from ._engine import EstimatorResult, VectorResult
from ._rng import make_stream
from .asymptotics import (
    DecompositionReport,
    DualityReport,
    FixedGap,
    FixedI,
    Proportional,
    ScalingSeries,
    SeriesRow,
    SlopeFit,
    decomposition_check,
    duality_check,
    estimate_event_prob,
    estimate_event_prob_reversed,
    fit_log_slope,
    scaling_sweep,
    sparre_andersen_prob,
    tau_window_contribution,
    tau_window_profile,
    walk_functional_series,
)
from .conditioned import (
    NoSampleError,
    RenewalTable,
    TiltedMeasureSpec,
    conditional_expectation,
    estimate_U,
    estimate_V,
    harmonicity_residual,
    mu_nu_normalizers,
    plus_measure_expectation,
)
from .env import (
    HypothesisReport,
    IncrementLaw,
    InvalidLawError,
    degenerate,
    gaussian,
    laplace,
    offspring_params,
    sample_increment,
    two_point_lattice,
    uniform,
    validate_hypotheses,
)
from .gfalgebra import (
    CONVENTIONS,
    ClanProbability,
    FracLinCoef,
    clan_prob,
    clan_prob_all,
    flin_compose,
    flin_eval,
    flin_fold,
    flin_from_increment,
    no_survivor_prob,
    reversed_rep_weight,
)
from .popsim import (
    ClanOverflowError,
    ClanVector,
    OracleTable,
    event_indicator,
    oracle_event_frequencies,
    oracle_event_frequency,
    simulate_population,
    simulate_population_block,
    step_generation,
)
from .walk import (
    LogExpFunctional,
    PathSummary,
    WalkPath,
    log_exp_functionals,
    path_summary,
    simulate_path,
)

__version__ = "0.1.0"

__all__ = [
    "CONVENTIONS",
    "ClanOverflowError",
    "ClanProbability",
    "ClanVector",
    "DecompositionReport",
    "DualityReport",
    "EstimatorResult",
    "FixedGap",
    "FixedI",
    "FracLinCoef",
    "HypothesisReport",
    "IncrementLaw",
    "InvalidLawError",
    "LogExpFunctional",
    "NoSampleError",
    "OracleTable",
    "PathSummary",
    "Proportional",
    "RenewalTable",
    "ScalingSeries",
    "SeriesRow",
    "SlopeFit",
    "TiltedMeasureSpec",
    "VectorResult",
    "WalkPath",
    "clan_prob",
    "clan_prob_all",
    "conditional_expectation",
    "decomposition_check",
    "degenerate",
    "duality_check",
    "estimate_U",
    "estimate_V",
    "estimate_event_prob",
    "estimate_event_prob_reversed",
    "event_indicator",
    "fit_log_slope",
    "flin_compose",
    "flin_eval",
    "flin_fold",
    "flin_from_increment",
    "gaussian",
    "harmonicity_residual",
    "laplace",
    "log_exp_functionals",
    "make_stream",
    "mu_nu_normalizers",
    "no_survivor_prob",
    "offspring_params",
    "oracle_event_frequencies",
    "oracle_event_frequency",
    "path_summary",
    "plus_measure_expectation",
    "reversed_rep_weight",
    "sample_increment",
    "scaling_sweep",
    "simulate_path",
    "simulate_population",
    "simulate_population_block",
    "sparre_andersen_prob",
    "step_generation",
    "tau_window_contribution",
    "tau_window_profile",
    "two_point_lattice",
    "uniform",
    "validate_hypotheses",
    "walk_functional_series",
]
