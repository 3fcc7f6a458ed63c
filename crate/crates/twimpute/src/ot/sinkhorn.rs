//! Entropically regularized transport with log-domain stabilization.
//!
//! Iterates the dual (f, g) updates
//!
//! ```text
//! f_i ← ε·log a_i − ε·logsumexp_j((g_j − C_ij)/ε)
//! g_j ← ε·log b_j − ε·logsumexp_i((f_i − C_ij)/ε)
//! ```
//!
//! entirely in the log domain, so small ε does not underflow the kernel.
//! The returned plan is rounded back onto the transport polytope (row and
//! column rescaling capped at 1, residual mass spread rank-one), so its
//! marginals are exact regardless of where the iteration stopped.

use nalgebra::DMatrix;

use super::TransportPlan;
use crate::error::{Result, TwiError};

fn logsumexp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = terms.map(|t| (t - max).exp()).sum();
    max + sum.ln()
}

/// Solves the ε-regularized uniform transport problem and rounds the result
/// to exact marginal feasibility. Returns the plan and ⟨Π, C⟩.
///
/// Errors when ε is so small that the dual updates leave the finite range;
/// the fix is a larger ε.
pub fn solve_sinkhorn(
    cost: &DMatrix<f64>,
    epsilon: f64,
    max_iters: usize,
    tol: f64,
) -> Result<(TransportPlan, f64)> {
    let (r, c) = cost.shape();
    if r == 0 || c == 0 {
        return Err(TwiError::Shape("cost matrix must be nonempty".into()));
    }
    if cost.iter().any(|x| !x.is_finite()) {
        return Err(TwiError::Config("cost matrix contains non-finite entries".into()));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(TwiError::Config(format!("sinkhorn epsilon must be positive, got {epsilon}")));
    }
    let a = 1.0 / r as f64;
    let b = 1.0 / c as f64;
    let log_a = a.ln();
    let log_b = b.ln();

    let mut f = vec![0.0f64; r];
    let mut g = vec![0.0f64; c];
    for iter in 0..max_iters {
        for i in 0..r {
            let lse = logsumexp((0..c).map(|j| (g[j] - cost[(i, j)]) / epsilon));
            f[i] = epsilon * (log_a - lse);
        }
        for j in 0..c {
            let lse = logsumexp((0..r).map(|i| (f[i] - cost[(i, j)]) / epsilon));
            g[j] = epsilon * (log_b - lse);
        }
        if f.iter().chain(g.iter()).any(|x| !x.is_finite()) {
            return Err(TwiError::Numerical(format!(
                "sinkhorn dual update left the finite range at epsilon={epsilon}; use a larger epsilon"
            )));
        }
        // After the g update the column marginals hold by construction;
        // track the worst row violation.
        if iter % 5 == 4 || iter + 1 == max_iters {
            let mut worst = 0.0f64;
            for i in 0..r {
                let row: f64 =
                    (0..c).map(|j| ((f[i] + g[j] - cost[(i, j)]) / epsilon).exp()).sum();
                worst = worst.max((row - a).abs());
            }
            if worst < tol {
                break;
            }
        }
    }

    let mut plan = DMatrix::from_fn(r, c, |i, j| ((f[i] + g[j] - cost[(i, j)]) / epsilon).exp());
    if plan.iter().any(|x| !x.is_finite()) {
        return Err(TwiError::Numerical(format!(
            "sinkhorn kernel overflowed at epsilon={epsilon}; use a larger epsilon"
        )));
    }
    round_to_polytope(&mut plan, a, b);
    let value = plan.iter().zip(cost.iter()).map(|(&p, &co)| p * co).sum();
    Ok((TransportPlan::from_matrix(plan), value))
}

/// Rounds a nonnegative matrix onto the uniform transport polytope: scale
/// rows down to their target mass, then columns, then distribute the
/// remaining deficit as a rank-one nonnegative correction.
fn round_to_polytope(plan: &mut DMatrix<f64>, a: f64, b: f64) {
    let (r, c) = plan.shape();
    for i in 0..r {
        let row: f64 = plan.row(i).sum();
        if row > a {
            let s = a / row;
            for j in 0..c {
                plan[(i, j)] *= s;
            }
        }
    }
    for j in 0..c {
        let col: f64 = plan.column(j).sum();
        if col > b {
            let s = b / col;
            for i in 0..r {
                plan[(i, j)] *= s;
            }
        }
    }
    let err_a: Vec<f64> = (0..r).map(|i| a - plan.row(i).sum()).collect();
    let err_b: Vec<f64> = (0..c).map(|j| b - plan.column(j).sum()).collect();
    let deficit: f64 = err_a.iter().sum();
    if deficit > 0.0 {
        for i in 0..r {
            for j in 0..c {
                plan[(i, j)] += err_a[i] * err_b[j] / deficit;
            }
        }
    }
}
