//! Delay embeddings and the transport ground-cost matrix.
//!
//! The embedding of an n×d panel at time i with lag p is the p·d vector
//! (w_{i,1}, …, w_{i−p+1,1}, w_{i,2}, …, w_{i−p+1,d}): each series
//! contributes its p most recent values, series stacked one after another.
//! The cut-off n1 splits the embeddings into a "pre" family indexed
//! i ∈ [p−1, n1] and a "post" family indexed j ∈ [n1+1, n−1]; the ground
//! cost between two embeddings is ‖v_i − v_j‖^k.

use std::ops::RangeInclusive;

use nalgebra::{DMatrix, DVector};

use crate::config::TwiConfig;
use crate::error::{Result, TwiError};

/// Index bookkeeping for the pre/post embedding families of one panel.
#[derive(Debug, Clone)]
pub struct EmbeddingView {
    n: usize,
    d: usize,
    p: usize,
    n1: usize,
}

impl EmbeddingView {
    pub fn new(n: usize, d: usize, cfg: &TwiConfig) -> Result<Self> {
        cfg.validate(n)?;
        Ok(Self { n, d, p: cfg.p, n1: cfg.resolved_n1(n) })
    }

    /// Time indices of the pre-cut-off embeddings, [p−1, n1].
    pub fn indices_pre(&self) -> RangeInclusive<usize> {
        self.p - 1..=self.n1
    }

    /// Time indices of the post-cut-off embeddings, [n1+1, n−1].
    pub fn indices_post(&self) -> RangeInclusive<usize> {
        self.n1 + 1..=self.n - 1
    }

    /// Number of pre embeddings, n1−p+2.
    pub fn n_pre(&self) -> usize {
        self.n1 - self.p + 2
    }

    /// Number of post embeddings, n−n1−1.
    pub fn n_post(&self) -> usize {
        self.n - self.n1 - 1
    }

    pub fn embed_dim(&self) -> usize {
        self.p * self.d
    }
}

/// The delay-embedding vector v_i(w) of length p·d.
///
/// Errors when `i < p−1` (the window would run off the front) or when the
/// window exceeds the panel length.
pub fn embed_vector(w: &DMatrix<f64>, i: usize, p: usize) -> Result<DVector<f64>> {
    if p < 1 {
        return Err(TwiError::Config("lag order p must be at least 1".into()));
    }
    if i + 1 < p {
        return Err(TwiError::Shape(format!("embedding at i={i} needs i >= p-1 (p={p})")));
    }
    if i >= w.nrows() {
        return Err(TwiError::Shape(format!("embedding index {i} out of range for n={}", w.nrows())));
    }
    let d = w.ncols();
    let mut v = DVector::zeros(p * d);
    for l in 0..d {
        for h in 0..p {
            v[l * p + h] = w[(i - h, l)];
        }
    }
    Ok(v)
}

/// Dense ground-cost matrix between the pre and post embedding families.
///
/// Entry (a, b) is ‖v_{p−1+a}(w) − v_{n1+1+b}(w)‖^k for the embedding norm
/// on the stacked p·d coordinates.
pub fn cost_matrix(w: &DMatrix<f64>, cfg: &TwiConfig) -> Result<DMatrix<f64>> {
    let n = w.nrows();
    cfg.validate(n)?;
    let view = EmbeddingView::new(n, w.ncols(), cfg)?;
    let (r, c) = (view.n_pre(), view.n_post());
    let (p, n1, d) = (cfg.p, cfg.resolved_n1(n), w.ncols());
    let k = cfg.cost_order;
    let half_k = k / 2.0;
    let squared = k == 2.0;

    let mut cost = DMatrix::zeros(r, c);
    for b in 0..c {
        let j = n1 + 1 + b;
        for a in 0..r {
            let i = p - 1 + a;
            let mut sq = 0.0;
            for l in 0..d {
                for h in 0..p {
                    let diff = w[(i - h, l)] - w[(j - h, l)];
                    sq += diff * diff;
                }
            }
            cost[(a, b)] = if squared { sq } else { sq.powf(half_k) };
        }
    }
    Ok(cost)
}
