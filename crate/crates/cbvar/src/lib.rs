//! Coarsened Bayesian vector autoregressions.
//!
//! A BVAR whose likelihood is tempered by a learning rate
//! zeta = alpha / (alpha + T) stays in the natural-conjugate family, so
//! the posterior, its marginal likelihood, and one-step predictive
//! densities all keep closed forms. Lowering alpha coarsens the fit:
//! the data's weight shrinks as if the sample were zeta * T observations,
//! which buys robustness when the VAR is mis-specified. This crate
//! provides the exact tempered posterior, Minnesota-style conjugate
//! priors with dummy observations, automatic selection of both the prior
//! tightness (marginal likelihood) and the coarsening level (fit versus
//! complexity knee), posterior simulation for forecasts and impulse
//! responses, recursive backtesting, and the mis-specification Monte
//! Carlo study that maps when coarsening pays off.

pub mod cli;
pub mod dataio;
pub mod design;
pub mod error;
mod linalg;
pub mod montecarlo;
pub mod posterior;
pub mod prior;
pub mod rng;
pub mod selection;
pub mod simstudy;

pub use dataio::{Dataset, LoadOptions, ModelSizeSpec, MonthDate, Transform};
pub use design::{build_design, learning_rate, LearningRate, VarDesign};
pub use error::{Error, Result};
pub use posterior::{
    coarsened_posterior, fit_complexity, log_marginal_likelihood, CoarsenedPosterior,
    FitComplexity,
};
pub use montecarlo::{
    forecast, irf, median_irf_all_shocks, sample_posterior, score_forecasts, ForecastResult,
    ForecastScores, IrfSet, PosteriorDraws,
};
pub use prior::{apply_dummies, minnesota_prior, optimize_lambda, PriorBuilder, PriorSpec};
pub use selection::{
    default_alpha_grid, evaluate_alpha_grid, select_alpha_knee, validate_alpha_grid, AlphaGrid,
    EvaluatedAlpha, DEFAULT_TAU,
};
pub use simstudy::{
    all_dgps, default_table_alpha_grid, run_study, simulate_dgp, true_irf, DgpSpec, MeanFamily,
    ShockFamily, StudyConfig, StudyResult,
};
