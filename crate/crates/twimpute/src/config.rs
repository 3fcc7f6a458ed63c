//! Solver configuration: cut-off, lag order, regularization, cost order,
//! transport backend, and iteration/tolerance controls.

use crate::error::{Result, TwiError};

/// Backend used for the optimal-transport step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OtMethod {
    /// Exact linear-programming optimum via network simplex (default).
    Exact,
    /// Entropic regularization with log-domain Sinkhorn iterations, rounded
    /// back to exact marginal feasibility.
    Sinkhorn { epsilon: f64 },
}

/// How the w-subproblem (step (b)) is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubproblemMethod {
    /// Direct linear-algebra solve (reduced PSD system or KKT). Requires the
    /// squared-norm cost; falls back to proximal gradient when the constraint
    /// set is not affine.
    Direct,
    /// Projected/proximal gradient descent.
    Proximal,
}

/// Configuration for temporal Wasserstein imputation.
#[derive(Debug, Clone, PartialEq)]
pub struct TwiConfig {
    /// Cut-off index n1 splitting the series into pre/post marginals; must
    /// satisfy p−1 < n1 < n−p. `None` means ⌊0.4·n⌋.
    pub n1: Option<usize>,
    /// Embedding lag order p ≥ 1.
    pub p: usize,
    /// Ridge regularization λ ≥ 0 on the whole imputed series.
    pub lambda: f64,
    /// Ground-cost exponent k ≥ 1; the norm cost is ‖v_i − v_j‖^k.
    pub cost_order: f64,
    pub ot_method: OtMethod,
    pub max_outer_iters: usize,
    /// Relative objective-decrease threshold for convergence.
    pub tol_rel: f64,
    pub subproblem_method: SubproblemMethod,
}

impl Default for TwiConfig {
    fn default() -> Self {
        Self {
            n1: None,
            p: 6,
            lambda: 0.0,
            cost_order: 2.0,
            ot_method: OtMethod::Exact,
            max_outer_iters: 100,
            tol_rel: 1e-6,
            subproblem_method: SubproblemMethod::Direct,
        }
    }
}

impl TwiConfig {
    /// Default configuration with an explicit cut-off.
    pub fn with_n1(n1: usize) -> Self {
        Self { n1: Some(n1), ..Self::default() }
    }

    /// The effective cut-off for a series of length `n`: the configured value
    /// or ⌊0.4·n⌋.
    pub fn resolved_n1(&self, n: usize) -> usize {
        self.n1.unwrap_or(2 * n / 5)
    }

    /// Number of pre-cut-off embedding vectors, r = n1−p+2.
    pub fn n_pre(&self, n: usize) -> usize {
        self.resolved_n1(n) - self.p + 2
    }

    /// Number of post-cut-off embedding vectors, c = n−n1−1.
    pub fn n_post(&self, n: usize) -> usize {
        n - self.resolved_n1(n) - 1
    }

    /// Validates the configuration against a series length.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.p < 1 {
            return Err(TwiError::Config("lag order p must be at least 1".into()));
        }
        let n1 = self.resolved_n1(n);
        // p−1 < n1 < n−p keeps both marginals non-empty.
        if !(self.p - 1 < n1 && n1 + self.p < n) {
            return Err(TwiError::Config(format!(
                "cut-off n1={n1} must satisfy p-1 < n1 < n-p for p={}, n={n}",
                self.p
            )));
        }
        if !(self.lambda >= 0.0) {
            return Err(TwiError::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.cost_order >= 1.0) {
            return Err(TwiError::Config(format!(
                "cost order k must be >= 1, got {}",
                self.cost_order
            )));
        }
        if !(self.tol_rel > 0.0) {
            return Err(TwiError::Config(format!("tol_rel must be > 0, got {}", self.tol_rel)));
        }
        if self.max_outer_iters == 0 {
            return Err(TwiError::Config("max_outer_iters must be positive".into()));
        }
        if let OtMethod::Sinkhorn { epsilon } = self.ot_method {
            if !(epsilon > 0.0) {
                return Err(TwiError::Config(format!(
                    "sinkhorn epsilon must be > 0, got {epsilon}"
                )));
            }
        }
        Ok(())
    }
}
