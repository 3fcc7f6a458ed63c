//! The imputation objective and its quadratic form.
//!
//! For a series w and a transport plan Π between the pre- and post-cut-off
//! embedding families, the objective is
//!
//! ```text
//! F(w, Π) = Σ_ij π_ij ‖v_i(w) − v_j(w)‖^k + (λ/2) ‖w‖²_F,
//! ```
//!
//! where v_i(w) stacks the last p values of each column at time i. For the
//! squared-Euclidean ground cost (k = 2) the objective is separable across
//! columns and each column contributes w_lᵀ H(Π) w_l, where H(Π) sums one
//! shifted block matrix per lag h = 0..p−1 plus the ridge term (λ/2)·I.
//! [`QuadraticForm`] represents H implicitly and supports matrix-free
//! products, individual entry queries for reduced systems, and a dense
//! realization for moderate n.

use nalgebra::{DMatrix, DVector};

use crate::config::TwiConfig;
use crate::embed::EmbeddingView;
use crate::error::{Result, TwiError};
use crate::ot::TransportPlan;

/// Neumaier compensated accumulator; keeps long sums accurate to a few ulps.
#[derive(Default)]
struct Accumulator {
    sum: f64,
    comp: f64,
}

impl Accumulator {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn check_dims(w: &DMatrix<f64>, plan: &TransportPlan, cfg: &TwiConfig) -> Result<EmbeddingView> {
    let view = EmbeddingView::new(w.nrows(), w.ncols(), cfg)?;
    if plan.nrows() != view.n_pre() || plan.ncols() != view.n_post() {
        return Err(TwiError::Shape(format!(
            "plan is {}x{} but the embedding families have sizes {}x{}",
            plan.nrows(),
            plan.ncols(),
            view.n_pre(),
            view.n_post()
        )));
    }
    Ok(view)
}

/// Squared Euclidean distance between the time-i and time-j embeddings.
fn embed_sq_dist(w: &DMatrix<f64>, i: usize, j: usize, p: usize) -> f64 {
    let d = w.ncols();
    let mut sq = 0.0;
    for l in 0..d {
        for h in 0..p {
            let diff = w[(i - h, l)] - w[(j - h, l)];
            sq += diff * diff;
        }
    }
    sq
}

/// Evaluates F(w, Π): the plan-weighted sum of embedding distances to the
/// power k plus the ridge term (λ/2)‖w‖²_F. Zero-weight plan entries are
/// skipped, so evaluation is cheap on the sparse plans produced by the exact
/// solver.
pub fn eval_f(w: &DMatrix<f64>, plan: &TransportPlan, cfg: &TwiConfig) -> Result<f64> {
    let view = check_dims(w, plan, cfg)?;
    let p = cfg.p;
    let k = cfg.cost_order;
    let i0 = p - 1;
    let j0 = *view.indices_post().start();
    let mut acc = Accumulator::default();
    for a in 0..plan.nrows() {
        for b in 0..plan.ncols() {
            let pi = plan.matrix[(a, b)];
            if pi == 0.0 {
                continue;
            }
            let sq = embed_sq_dist(w, i0 + a, j0 + b, p);
            let cost = if k == 2.0 { sq } else { sq.powf(k / 2.0) };
            acc.add(pi * cost);
        }
    }
    if cfg.lambda > 0.0 {
        let mut ridge = Accumulator::default();
        for x in w.iter() {
            ridge.add(x * x);
        }
        acc.add(0.5 * cfg.lambda * ridge.value());
    }
    Ok(acc.value())
}

/// Gradient of F(w, Π) in w, as an n×d matrix. Defined for any cost order
/// k ≥ 1; pairs with coincident embeddings contribute zero (the minimal-norm
/// subgradient when k ≤ 2 makes the cost non-smooth at zero).
pub fn grad_f(w: &DMatrix<f64>, plan: &TransportPlan, cfg: &TwiConfig) -> Result<DMatrix<f64>> {
    let view = check_dims(w, plan, cfg)?;
    let (n, d) = w.shape();
    let p = cfg.p;
    let k = cfg.cost_order;
    let i0 = p - 1;
    let j0 = *view.indices_post().start();
    let mut grad = DMatrix::zeros(n, d);
    for a in 0..plan.nrows() {
        for b in 0..plan.ncols() {
            let pi = plan.matrix[(a, b)];
            if pi == 0.0 {
                continue;
            }
            let (i, j) = (i0 + a, j0 + b);
            let sq = embed_sq_dist(w, i, j, p);
            if sq == 0.0 {
                continue;
            }
            // d/du (u²)^{k/2} applied through the chain rule gives the
            // per-coordinate factor k·‖v_i−v_j‖^{k−2}.
            let factor = if k == 2.0 { 2.0 * pi } else { k * pi * sq.powf(k / 2.0 - 1.0) };
            for l in 0..d {
                for h in 0..p {
                    let diff = w[(i - h, l)] - w[(j - h, l)];
                    grad[(i - h, l)] += factor * diff;
                    grad[(j - h, l)] -= factor * diff;
                }
            }
        }
    }
    if cfg.lambda > 0.0 {
        grad += cfg.lambda * w;
    }
    Ok(grad)
}

/// The matrix H(Π) of the quadratic form F(w, Π) = Σ_l w_lᵀ H w_l for the
/// squared-Euclidean ground cost, represented implicitly through the plan.
///
/// H sums, over lags h = 0..p−1, a block matrix with diagonal weight 1/r on
/// the pre-embedding rows shifted by h, diagonal weight 1/c on the post
/// rows shifted by h, and −Π/−Πᵀ coupling the two, plus the ridge term
/// (λ/2)·I_n. Entry queries, matrix-free products, and a dense realization
/// are all derived from that structure.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    plan: DMatrix<f64>,
    /// (row, col, weight) triples of the nonzero plan entries.
    support: Vec<(u32, u32, f64)>,
    n: usize,
    p: usize,
    n1: usize,
    lambda: f64,
}

/// Builds the quadratic form H(Π) for the given plan and configuration.
/// Only the squared-Euclidean ground cost admits one; other cost orders are
/// rejected.
pub fn assemble_h(plan: &TransportPlan, n: usize, cfg: &TwiConfig) -> Result<QuadraticForm> {
    if cfg.cost_order != 2.0 {
        return Err(TwiError::Config(format!(
            "the quadratic form exists only for cost order 2 (got {})",
            cfg.cost_order
        )));
    }
    cfg.validate(n)?;
    if plan.nrows() != cfg.n_pre(n) || plan.ncols() != cfg.n_post(n) {
        return Err(TwiError::Shape(format!(
            "plan is {}x{} but the embedding families have sizes {}x{}",
            plan.nrows(),
            plan.ncols(),
            cfg.n_pre(n),
            cfg.n_post(n)
        )));
    }
    let mut support = Vec::new();
    for a in 0..plan.nrows() {
        for b in 0..plan.ncols() {
            let pi = plan.matrix[(a, b)];
            if pi != 0.0 {
                support.push((a as u32, b as u32, pi));
            }
        }
    }
    Ok(QuadraticForm {
        plan: plan.matrix.clone(),
        support,
        n,
        p: cfg.p,
        n1: cfg.resolved_n1(n),
        lambda: cfg.lambda,
    })
}

impl QuadraticForm {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Number of lags h for which time s falls in the shifted pre-embedding
    /// diagonal block, i.e. |{i ∈ [max(s, p−1), min(s+p−1, n1)]}|.
    fn pre_hits(&self, s: usize) -> usize {
        let lo = s.max(self.p - 1);
        let hi = (s + self.p - 1).min(self.n1);
        (hi + 1).saturating_sub(lo)
    }

    /// Same for the post-embedding block: |{j ∈ [max(s, n1+1), min(s+p−1, n−1)]}|.
    fn post_hits(&self, s: usize) -> usize {
        let lo = s.max(self.n1 + 1);
        let hi = (s + self.p - 1).min(self.n - 1);
        (hi + 1).saturating_sub(lo)
    }

    fn inv_r(&self) -> f64 {
        1.0 / (self.n1 - self.p + 2) as f64
    }

    fn inv_c(&self) -> f64 {
        1.0 / (self.n - self.n1 - 1) as f64
    }

    /// H[s,s]: diagonal hits from both blocks plus the ridge term.
    pub fn diag_entry(&self, s: usize) -> f64 {
        self.pre_hits(s) as f64 * self.inv_r()
            + self.post_hits(s) as f64 * self.inv_c()
            + 0.5 * self.lambda
    }

    /// H[s,t] for any pair; off-diagonal entries sum −π over the lags at
    /// which (s+h, t+h) lands in the pre × post coupling block.
    pub fn entry(&self, s: usize, t: usize) -> f64 {
        if s == t {
            return self.diag_entry(s);
        }
        let (lo, hi) = (s.min(t) as i64, s.max(t) as i64);
        let (p1, n1) = ((self.p - 1) as i64, self.n1 as i64);
        // With lo < hi, only lo+h in the pre range and hi+h in the post
        // range can coincide for some lag h.
        let h_lo = (p1 - lo).max(n1 + 1 - hi).max(0);
        let h_hi = (n1 - lo).min(self.n as i64 - 1 - hi).min(p1);
        let mut sum = 0.0;
        for h in h_lo..=h_hi {
            let a = (lo + h - p1) as usize;
            let b = (hi + h - n1 - 1) as usize;
            sum += self.plan[(a, b)];
        }
        -sum
    }

    /// Matrix-free product H·w for a single column.
    pub fn apply_vec(&self, w: &DVector<f64>) -> DVector<f64> {
        assert_eq!(w.len(), self.n, "vector length must match the series length");
        let mut y = DVector::zeros(self.n);
        let inv_r = self.inv_r();
        let inv_c = self.inv_c();
        for s in 0..self.n {
            y[s] = (self.pre_hits(s) as f64 * inv_r
                + self.post_hits(s) as f64 * inv_c
                + 0.5 * self.lambda)
                * w[s];
        }
        let i0 = self.p - 1;
        let j0 = self.n1 + 1;
        for h in 0..self.p {
            for &(a, b, pi) in &self.support {
                let s = i0 + a as usize - h;
                let t = j0 + b as usize - h;
                y[s] -= pi * w[t];
                y[t] -= pi * w[s];
            }
        }
        y
    }

    /// H applied to each column of an n×d matrix.
    pub fn apply_mat(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(w.nrows(), self.n, "row count must match the series length");
        let mut out = DMatrix::zeros(w.nrows(), w.ncols());
        for l in 0..w.ncols() {
            let col = self.apply_vec(&DVector::from_column_slice(w.column(l).as_slice()));
            out.set_column(l, &col);
        }
        out
    }

    /// Σ_l w_lᵀ H w_l, the quadratic part of the objective.
    pub fn quad(&self, w: &DMatrix<f64>) -> f64 {
        let hw = self.apply_mat(w);
        let mut acc = Accumulator::default();
        for (x, y) in w.iter().zip(hw.iter()) {
            acc.add(x * y);
        }
        acc.value()
    }

    /// Dense n×n realization of H. Guarded to moderate sizes; the implicit
    /// form serves everything larger.
    pub fn dense(&self) -> Result<DMatrix<f64>> {
        if self.n > 2000 {
            return Err(TwiError::Shape(format!(
                "dense quadratic form is limited to n <= 2000 (got {})",
                self.n
            )));
        }
        let mut m = DMatrix::zeros(self.n, self.n);
        for s in 0..self.n {
            m[(s, s)] = self.diag_entry(s);
        }
        let i0 = self.p - 1;
        let j0 = self.n1 + 1;
        for h in 0..self.p {
            for &(a, b, pi) in &self.support {
                let s = i0 + a as usize - h;
                let t = j0 + b as usize - h;
                m[(s, t)] -= pi;
                m[(t, s)] -= pi;
            }
        }
        Ok(m)
    }

    /// Upper bound on the largest eigenvalue from the row-sum (Gershgorin)
    /// disc radii; cheap and deterministic.
    pub fn gershgorin_upper(&self) -> f64 {
        let inv_r = self.inv_r();
        let inv_c = self.inv_c();
        let mut worst = 0.0f64;
        for s in 0..self.n {
            let diag = self.pre_hits(s) as f64 * inv_r + self.post_hits(s) as f64 * inv_c;
            // The absolute off-diagonal row sum is at most the same block
            // mass again, because each shifted plan row/column sums to at
            // most the uniform mass.
            worst = worst.max(2.0 * diag);
        }
        worst + 0.5 * self.lambda
    }

    /// Power-iteration estimate of the largest eigenvalue, from a fixed
    /// non-constant start vector (the constant vector is an exact eigenvector
    /// of the ridge-only part, so it would stall).
    pub fn max_eigenvalue_estimate(&self, iters: usize) -> f64 {
        let mut v = DVector::from_fn(self.n, |s, _| (1.0 + s as f64).sin());
        let norm = v.norm();
        v /= norm;
        let mut estimate = 0.0;
        for _ in 0..iters {
            let hv = self.apply_vec(&v);
            let norm = hv.norm();
            if norm == 0.0 {
                return 0.0;
            }
            estimate = v.dot(&hv);
            v = hv / norm;
        }
        estimate.max(0.0)
    }
}
