"""Empirical Bayes confidence regions pooled across related populations."""

from .errors import NumericalError
from .estimator import EmpiricalBayesRegion, as_summaries
from .gaussian import (
    GaussianParams,
    normal_pdf_cdf,
    normal_quantile,
    tv_upper_bound,
    two_sided_z,
)
from .grid import GridDensity, grid_for_gaussian, grid_from_function
from .linear import (
    EstimateSummary,
    OlsFit,
    PopulationData,
    anova_variance_components,
    debiased_lasso,
    debiased_lasso_batch,
    default_lasso_lambda,
    lasso_cd,
    ols_fit,
    smooth_estimate,
)
from .priors import (
    GaussianPrior,
    GridPrior,
    KernelMixturePrior,
    deconvolution_char,
    deconvolution_density,
    default_deconv_bandwidth,
    default_zeta_sq,
    fit_deconv_prior,
    fit_gaussian_prior,
    fit_kde_prior,
    silverman_bandwidth_sq,
    tabulate_prior,
)
from .regions import (
    GaussianPosterior,
    GridPosterior,
    HybridResult,
    MixturePosterior,
    Region,
    TauResult,
    TauSolveConfig,
    anova_case_posteriors,
    classical_interval,
    compute_posterior,
    eb_gaussian_interval,
    expected_region_measure,
    extract_region,
    hybrid_select,
    region_for_target,
    solve_tau,
)
from .simulate import (
    ExperimentConfig,
    MethodResult,
    PriorSpec,
    ReplicationRecord,
    generate_replication,
    iter_replications,
    run_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "EmpiricalBayesRegion",
    "EstimateSummary",
    "ExperimentConfig",
    "GaussianParams",
    "GaussianPosterior",
    "GaussianPrior",
    "GridDensity",
    "GridPosterior",
    "GridPrior",
    "HybridResult",
    "KernelMixturePrior",
    "MethodResult",
    "MixturePosterior",
    "NumericalError",
    "OlsFit",
    "PopulationData",
    "PriorSpec",
    "Region",
    "ReplicationRecord",
    "TauResult",
    "TauSolveConfig",
    "anova_case_posteriors",
    "anova_variance_components",
    "as_summaries",
    "classical_interval",
    "compute_posterior",
    "debiased_lasso",
    "debiased_lasso_batch",
    "deconvolution_char",
    "deconvolution_density",
    "default_deconv_bandwidth",
    "default_lasso_lambda",
    "default_zeta_sq",
    "eb_gaussian_interval",
    "expected_region_measure",
    "extract_region",
    "fit_deconv_prior",
    "fit_gaussian_prior",
    "fit_kde_prior",
    "generate_replication",
    "grid_for_gaussian",
    "grid_from_function",
    "hybrid_select",
    "iter_replications",
    "lasso_cd",
    "normal_pdf_cdf",
    "normal_quantile",
    "ols_fit",
    "region_for_target",
    "run_experiment",
    "silverman_bandwidth_sq",
    "smooth_estimate",
    "solve_tau",
    "tabulate_prior",
    "tv_upper_bound",
    "two_sided_z",
]
