"""Conditional Gaussian mixture modelling with fractional imputation.

Fit mixtures of Gaussian regression experts with covariate-dependent mixing
weights by EM under item nonresponse, impute missing responses fractionally,
and quantify estimator uncertainty by a delete-a-group jackknife.  A
lasso-penalized variant handles high-dimensional covariates, and a joint
Gaussian mixture baseline plus simulation models support benchmarking.
"""

from .model import (CgmmParams, DataError, Dataset, DesignSpec, FitError,
                    Responsibilities, conditional_gaussian, gate_prob_matrix,
                    gate_probs, gaussian_logpdf)
from .em import (FitConfig, FitReport, bic, e_step, fit_em, fit_em_warm,
                 m_step_experts, m_step_gate, observed_loglik, select_g)
from .penalized import (PenalizedParams, PenaltyConfig, cv_select_lambda,
                        fit_penalized_em, penalized_impute, penalized_path,
                        penalized_predict, soft_threshold)
from .imputation import (FractionalRecord, ImputationResult, JackknifeReport,
                         estimate_mean, impute, jackknife,
                         solve_estimating_equation)
from .simulate import (GmmBaselineFit, KlReport, MetricReport, SimModelSpec,
                       cgmm_conditional_logpdf, compute_metrics,
                       fit_gmm_baseline, fit_gmm_select, generate,
                       gmm_conditional_logpdf, khies_design, kl_diagnostic,
                       monte_carlo, per_replicate_rmspe, true_conditional)
from .io import (load_csv, load_params, save_csv, save_fractional_csv,
                 save_params)

__version__ = "0.1.0"

__all__ = [
    "CgmmParams", "DataError", "Dataset", "DesignSpec", "FitError",
    "Responsibilities", "conditional_gaussian", "gate_prob_matrix",
    "gate_probs", "gaussian_logpdf",
    "FitConfig", "FitReport", "bic", "e_step", "fit_em", "fit_em_warm",
    "m_step_experts", "m_step_gate", "observed_loglik", "select_g",
    "PenalizedParams", "PenaltyConfig", "cv_select_lambda",
    "fit_penalized_em", "penalized_impute", "penalized_path",
    "penalized_predict", "soft_threshold",
    "FractionalRecord", "ImputationResult", "JackknifeReport",
    "estimate_mean", "impute", "jackknife", "solve_estimating_equation",
    "GmmBaselineFit", "KlReport", "MetricReport", "SimModelSpec",
    "cgmm_conditional_logpdf", "compute_metrics", "fit_gmm_baseline",
    "fit_gmm_select", "generate", "gmm_conditional_logpdf", "khies_design",
    "kl_diagnostic", "monte_carlo", "per_replicate_rmspe", "true_conditional",
    "load_csv", "load_params", "save_csv", "save_fractional_csv",
    "save_params",
]
