//! Temporal Wasserstein imputation (TWI) for time series with missing data.
//!
//! TWI fills the missing entries of a series so that the empirical
//! distributions of its delay embeddings before and after a cut-off index
//! look alike: it minimizes the optimal-transport cost between the two
//! embedded marginals over all admissible imputations, by alternating
//! between an exact transport solve (for the plan) and a constrained
//! quadratic solve (for the values). The crate also ships the multi-cut-off
//! refinement (`k_twi`), classical baselines, the simulation models and
//! missing-data patterns used to benchmark them, evaluation metrics, and an
//! analytic treatment of the two-state Markov identification question.
//!
//! Entry points:
//! - [`solver::twi`] / [`solver::k_twi`]: the imputation algorithms;
//! - [`baselines::impute_baseline`]: linear/LOCF/mean/scalar-filter;
//! - [`dgp::generate`] / [`dgp::apply_pattern`]: simulation data;
//! - [`metrics::benchmark`]: Monte Carlo evaluation sweeps;
//! - [`theory::solve_identification`]: the Markov marginal analysis.

pub use nalgebra;

pub mod baselines;
pub mod config;
pub mod constraints;
pub mod dgp;
pub mod embed;
pub mod error;
pub mod metrics;
pub mod objective;
pub mod ot;
pub mod panel;
pub mod seeding;
pub mod solver;
pub mod theory;

pub use config::{OtMethod, SubproblemMethod, TwiConfig};
pub use constraints::ConstraintSet;
pub use error::{Result, TwiError};
pub use panel::{read_csv, write_csv, TimeSeriesPanel};
pub use solver::{
    em_identity_check, k_twi, solve_subproblem, twi, EmIdentityReport, ImputationResult,
    InitStrategy,
};
pub use theory::{implied_marginal, solve_identification, IdentificationOutcome, MarkovScenario};
