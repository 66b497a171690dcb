"""Multi-sigmoidal Gompertz diffusion: simulation, ML estimation, degree selection."""

__version__ = "0.1.0"

from .polycurve import (
    CurveParams,
    DomainError,
    InflectionSet,
    NumericError,
    Polynomial,
    carrying_capacity,
    curve_value,
    find_inflections,
    growth_rate,
    inflection_residual,
    poly_derivative,
    poly_eval,
    shift_time_origin,
)
from .diffusion import (
    InitialLaw,
    ProcessParams,
    SamplePathSet,
    big_h,
    conditional_mean,
    cross_sectional_means,
    fdd_params,
    mean,
    simulate,
    subsample,
    transition_logpdf,
)
from .mle import (
    FitError,
    MleResult,
    SolverOptions,
    estimate_initial_law,
    fit,
    initial_guess,
    loglik,
    phi,
    score_jacobian,
    score_residuals,
    summary_stats,
    v_transform,
)
from .selection import (
    DegreeReport,
    SelectionResult,
    aic_bic,
    dra_series,
    forward_select,
    kl_model_vs_sample,
    kl_sample_vs_model,
    rae,
    resistor_average,
    sample_inflections,
    smooth_sample_mean,
)

__all__ = [
    "CurveParams",
    "DomainError",
    "InflectionSet",
    "NumericError",
    "Polynomial",
    "carrying_capacity",
    "curve_value",
    "find_inflections",
    "growth_rate",
    "inflection_residual",
    "poly_derivative",
    "poly_eval",
    "shift_time_origin",
    "InitialLaw",
    "ProcessParams",
    "SamplePathSet",
    "big_h",
    "conditional_mean",
    "cross_sectional_means",
    "fdd_params",
    "mean",
    "simulate",
    "subsample",
    "transition_logpdf",
    "FitError",
    "MleResult",
    "SolverOptions",
    "estimate_initial_law",
    "fit",
    "initial_guess",
    "loglik",
    "phi",
    "score_jacobian",
    "score_residuals",
    "summary_stats",
    "v_transform",
    "DegreeReport",
    "SelectionResult",
    "aic_bic",
    "dra_series",
    "forward_select",
    "kl_model_vs_sample",
    "kl_sample_vs_model",
    "rae",
    "resistor_average",
    "sample_inflections",
    "smooth_sample_mean",
]
