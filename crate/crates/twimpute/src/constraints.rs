//! Admissible sets for the imputation variable and Euclidean projections
//! onto them.
//!
//! A [`ConstraintSet`] is an intersection of primitives: observed-cell
//! equality, a scalar box on every cell, row sums equal to one (the
//! compositional constraint), and general linear equalities Kw = b. The
//! combinations used by the solvers project exactly:
//!
//! * observed equality, box, and row-sum constraints compose cellwise and
//!   rowwise in closed form (the box + row-sum case is the capped-simplex
//!   projection, solved exactly by breakpoint search);
//! * a linear equality on its own projects affinely through a factorization
//!   of KKᵀ.
//!
//! Any other mixture falls back to Dykstra's alternating projections with a
//! hard iteration cap, which converges to the exact projection for closed
//! convex sets but is approximate at the cap.
//!
//! Cumulative-sum anchors for integrated series are expressed as linear
//! equalities over the differenced series via [`build_cumsum_constraints`].

use nalgebra::{DMatrix, DVector, Dyn};

use crate::error::{Result, TwiError};
use crate::panel::TimeSeriesPanel;

#[derive(Debug, Clone)]
pub(crate) struct ObservedCells {
    /// True marks a missing cell (the panel convention); observed cells are
    /// the false entries.
    pub missing: DMatrix<bool>,
    pub values: DMatrix<f64>,
}

enum GramFactor {
    Chol(nalgebra::linalg::Cholesky<f64, Dyn>),
    /// Pseudo-inverse of K, for rank-deficient but consistent systems.
    Pinv(DMatrix<f64>),
}

impl std::fmt::Debug for GramFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GramFactor::Chol(_) => f.write_str("Chol"),
            GramFactor::Pinv(_) => f.write_str("Pinv"),
        }
    }
}

impl Clone for GramFactor {
    fn clone(&self) -> Self {
        match self {
            // nalgebra's Cholesky is not Clone; refactoring is cheap at the
            // sizes involved.
            GramFactor::Chol(c) => GramFactor::Chol(
                nalgebra::linalg::Cholesky::new(c.l() * c.l().transpose())
                    .expect("re-factorizing a PD Gram matrix"),
            ),
            GramFactor::Pinv(p) => GramFactor::Pinv(p.clone()),
        }
    }
}

/// Kw = b with a prefactored projection.
#[derive(Debug, Clone)]
pub struct LinearEquality {
    coeffs: DMatrix<f64>,
    rhs: DVector<f64>,
    factor: GramFactor,
}

impl LinearEquality {
    fn new(coeffs: DMatrix<f64>, rhs: DVector<f64>) -> Result<Self> {
        if coeffs.nrows() != rhs.len() {
            return Err(TwiError::Shape(format!(
                "constraint matrix has {} rows but the right-hand side has {}",
                coeffs.nrows(),
                rhs.len()
            )));
        }
        if coeffs.nrows() == 0 {
            return Err(TwiError::Config("linear equality needs at least one row".into()));
        }
        let gram = &coeffs * coeffs.transpose();
        let factor = match nalgebra::linalg::Cholesky::new(gram) {
            Some(chol) => GramFactor::Chol(chol),
            None => {
                let svd = coeffs.clone().svd(true, true);
                let pinv = svd
                    .pseudo_inverse(1e-12)
                    .map_err(|e| TwiError::Numerical(format!("pseudo-inverse failed: {e}")))?;
                let residual = (&coeffs * &pinv * &rhs - &rhs).norm();
                if residual > 1e-8 * (1.0 + rhs.norm()) {
                    return Err(TwiError::Infeasible(format!(
                        "linear equality system is inconsistent (residual {residual:.3e})"
                    )));
                }
                GramFactor::Pinv(pinv)
            }
        };
        Ok(Self { coeffs, rhs, factor })
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    /// w − Kᵀ(KKᵀ)⁻¹(Kw − b), the Euclidean projection onto {Kw = b}.
    fn project_vec(&self, w: &DVector<f64>) -> DVector<f64> {
        let violation = &self.coeffs * w - &self.rhs;
        match &self.factor {
            GramFactor::Chol(chol) => w - self.coeffs.transpose() * chol.solve(&violation),
            GramFactor::Pinv(pinv) => w - pinv * violation,
        }
    }
}

/// An intersection of constraint primitives over an n×d panel.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    n: usize,
    d: usize,
    observed: Option<ObservedCells>,
    box_bounds: Option<(f64, f64)>,
    simplex: bool,
    linear: Option<LinearEquality>,
}

/// Which subproblem solver a constraint set admits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SolverPath {
    /// Observed-equality only: reduced linear system on the missing cells.
    ObservedDirect,
    /// Pure linear equalities: closed form or KKT system.
    LinearDirect,
    /// Anything involving boxes or row sums: proximal gradient.
    Proximal,
}

impl ConstraintSet {
    /// The whole space; useful as a base for composition.
    pub fn unconstrained(n: usize, d: usize) -> Self {
        Self { n, d, observed: None, box_bounds: None, simplex: false, linear: None }
    }

    /// Fixes every observed cell of the panel at its observed value.
    pub fn observed_equality(panel: &TimeSeriesPanel) -> Self {
        Self {
            n: panel.n(),
            d: panel.dim(),
            observed: Some(ObservedCells {
                missing: panel.mask().clone(),
                values: panel.values().clone(),
            }),
            box_bounds: None,
            simplex: false,
            linear: None,
        }
    }

    /// General linear equalities Kw = b over a single-column panel of
    /// length n. K must have consistent equations (validated here).
    pub fn linear_equality(n: usize, coeffs: DMatrix<f64>, rhs: DVector<f64>) -> Result<Self> {
        if coeffs.ncols() != n {
            return Err(TwiError::Shape(format!(
                "constraint matrix has {} columns but the series has length {n}",
                coeffs.ncols()
            )));
        }
        Ok(Self {
            n,
            d: 1,
            observed: None,
            box_bounds: None,
            simplex: false,
            linear: Some(LinearEquality::new(coeffs, rhs)?),
        })
    }

    /// Adds the scalar box lower ≤ w ≤ upper on every cell. Fails if an
    /// observed value lies outside the box.
    pub fn with_box(mut self, lower: f64, upper: f64) -> Result<Self> {
        if !(lower <= upper) {
            return Err(TwiError::Config(format!(
                "box bounds are inverted: [{lower}, {upper}]"
            )));
        }
        self.box_bounds = Some((lower, upper));
        self.validate()?;
        Ok(self)
    }

    /// Adds the row-sum-one constraint for multi-column panels.
    pub fn with_simplex(mut self) -> Result<Self> {
        if self.d < 2 {
            return Err(TwiError::Config(
                "row-sum constraint needs at least two columns".into(),
            ));
        }
        self.simplex = true;
        self.validate()?;
        Ok(self)
    }

    /// The compositional-data set: observed equality, every cell in [0, 1],
    /// and unit row sums.
    pub fn compositional(panel: &TimeSeriesPanel) -> Result<Self> {
        Self::observed_equality(panel).with_box(0.0, 1.0)?.with_simplex()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub(crate) fn observed(&self) -> Option<&ObservedCells> {
        self.observed.as_ref()
    }

    pub(crate) fn linear(&self) -> Option<&LinearEquality> {
        self.linear.as_ref()
    }

    pub(crate) fn solver_path(&self) -> SolverPath {
        if self.box_bounds.is_some() || self.simplex {
            SolverPath::Proximal
        } else if self.linear.is_some() {
            SolverPath::LinearDirect
        } else {
            SolverPath::ObservedDirect
        }
    }

    fn validate(&self) -> Result<()> {
        if let (Some(obs), Some((lo, hi))) = (&self.observed, self.box_bounds) {
            for l in 0..self.d {
                for s in 0..self.n {
                    if !obs.missing[(s, l)] {
                        let v = obs.values[(s, l)];
                        if v < lo - 1e-12 || v > hi + 1e-12 {
                            return Err(TwiError::Infeasible(format!(
                                "observed value {v} at row {s}, column {l} lies outside the box [{lo}, {hi}]"
                            )));
                        }
                    }
                }
            }
        }
        if self.simplex {
            for s in 0..self.n {
                let (n_obs, sum_obs) = self.row_observed(s);
                if n_obs == self.d && (sum_obs - 1.0).abs() > 1e-8 {
                    return Err(TwiError::Infeasible(format!(
                        "fully observed row {s} sums to {sum_obs}, not 1"
                    )));
                }
                if let Some((lo, hi)) = self.box_bounds {
                    let m = (self.d - n_obs) as f64;
                    let target = 1.0 - sum_obs;
                    if n_obs < self.d && (target < m * lo - 1e-9 || target > m * hi + 1e-9) {
                        return Err(TwiError::Infeasible(format!(
                            "row {s}: missing cells must sum to {target} but the box allows [{}, {}]",
                            m * lo,
                            m * hi
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Count and sum of observed entries in row s (0 and 0.0 when no
    /// observed-equality constraint is present).
    fn row_observed(&self, s: usize) -> (usize, f64) {
        match &self.observed {
            None => (0, 0.0),
            Some(obs) => {
                let mut count = 0;
                let mut sum = 0.0;
                for l in 0..self.d {
                    if !obs.missing[(s, l)] {
                        count += 1;
                        sum += obs.values[(s, l)];
                    }
                }
                (count, sum)
            }
        }
    }

    /// Euclidean projection of `point` onto the set.
    pub fn project(&self, point: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if point.shape() != (self.n, self.d) {
            return Err(TwiError::Shape(format!(
                "point is {}x{} but the constraint set is over {}x{}",
                point.nrows(),
                point.ncols(),
                self.n,
                self.d
            )));
        }
        match &self.linear {
            None => Ok(self.project_separable(point)),
            Some(lin) => {
                if self.observed.is_none() && self.box_bounds.is_none() && !self.simplex {
                    let w = DVector::from_column_slice(point.column(0).as_slice());
                    let projected = lin.project_vec(&w);
                    Ok(DMatrix::from_column_slice(self.n, 1, projected.as_slice()))
                } else {
                    self.dykstra(point)
                }
            }
        }
    }

    /// Exact projection for the observed/box/row-sum combinations, which
    /// separate across cells (and across rows for the sum constraint).
    fn project_separable(&self, point: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = point.clone();
        if self.simplex {
            let mut free = Vec::with_capacity(self.d);
            for s in 0..self.n {
                free.clear();
                let mut sum_obs = 0.0;
                for l in 0..self.d {
                    match &self.observed {
                        Some(obs) if !obs.missing[(s, l)] => {
                            out[(s, l)] = obs.values[(s, l)];
                            sum_obs += obs.values[(s, l)];
                        }
                        _ => free.push(l),
                    }
                }
                if free.is_empty() {
                    continue;
                }
                let target = 1.0 - sum_obs;
                match self.box_bounds {
                    None => {
                        let sum_free: f64 = free.iter().map(|&l| out[(s, l)]).sum();
                        let shift = (sum_free - target) / free.len() as f64;
                        for &l in &free {
                            out[(s, l)] -= shift;
                        }
                    }
                    Some((lo, hi)) => {
                        let mut y: Vec<f64> = free.iter().map(|&l| out[(s, l)]).collect();
                        project_capped_simplex(&mut y, lo, hi, target);
                        for (&l, &z) in free.iter().zip(&y) {
                            out[(s, l)] = z;
                        }
                    }
                }
            }
        } else {
            for l in 0..self.d {
                for s in 0..self.n {
                    let observed = self
                        .observed
                        .as_ref()
                        .map(|obs| !obs.missing[(s, l)])
                        .unwrap_or(false);
                    if observed {
                        out[(s, l)] = self.observed.as_ref().unwrap().values[(s, l)];
                    } else if let Some((lo, hi)) = self.box_bounds {
                        out[(s, l)] = out[(s, l)].clamp(lo, hi);
                    }
                }
            }
        }
        out
    }

    /// Dykstra's alternating projections between the linear part and the
    /// separable part. Converges to the projection onto the intersection;
    /// capped at 100 sweeps.
    fn dykstra(&self, point: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if self.d != 1 {
            return Err(TwiError::Config(
                "linear equalities compose with other constraints only for single-column panels"
                    .into(),
            ));
        }
        let lin = self.linear.as_ref().unwrap();
        let mut x = point.clone();
        let mut inc_lin = DMatrix::zeros(self.n, 1);
        let mut inc_sep = DMatrix::zeros(self.n, 1);
        for _ in 0..100 {
            let before = x.clone();
            let y = &x + &inc_lin;
            let w = DVector::from_column_slice(y.column(0).as_slice());
            let projected = lin.project_vec(&w);
            let px = DMatrix::from_column_slice(self.n, 1, projected.as_slice());
            inc_lin = y - &px;
            let y = &px + &inc_sep;
            x = self.project_separable(&y);
            inc_sep = y - &x;
            if (&x - before).norm() < 1e-12 {
                break;
            }
        }
        Ok(x)
    }
}

/// Exact projection of y onto {z ∈ [lo, hi]^m : Σ z = target} by breakpoint
/// search on the piecewise-linear function τ ↦ Σ clamp(y_i − τ). Assumes
/// m·lo ≤ target ≤ m·hi (validated by the constraint set).
fn project_capped_simplex(y: &mut [f64], lo: f64, hi: f64, target: f64) {
    let m = y.len();
    debug_assert!(m > 0);
    let target = target.clamp(m as f64 * lo, m as f64 * hi);
    let eval = |tau: f64, y: &[f64]| -> f64 {
        y.iter().map(|&v| (v - tau).clamp(lo, hi)).sum::<f64>() - target
    };
    let mut bps: Vec<f64> = Vec::with_capacity(2 * m);
    for &v in y.iter() {
        bps.push(v - lo);
        bps.push(v - hi);
    }
    bps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // The residual is ≥ 0 at the smallest breakpoint and ≤ 0 at the largest;
    // scan for the sign change and interpolate on the linear piece.
    let mut tau = bps[bps.len() - 1];
    let mut prev_bp = bps[0];
    let mut prev_f = eval(prev_bp, y);
    for &bp in &bps[1..] {
        let f = eval(bp, y);
        if f <= 0.0 {
            tau = if f == prev_f || bp == prev_bp {
                bp
            } else {
                prev_bp + prev_f * (bp - prev_bp) / (prev_f - f)
            };
            break;
        }
        prev_bp = bp;
        prev_f = f;
    }
    for v in y.iter_mut() {
        *v = (*v - tau).clamp(lo, hi);
    }
}

/// Differences a panel: row s of the result is x_{s+1} − x_s, observed only
/// when both raw values are observed.
pub fn difference_panel(raw: &TimeSeriesPanel) -> Result<TimeSeriesPanel> {
    let (n, d) = (raw.n(), raw.dim());
    if n < 2 {
        return Err(TwiError::Shape("differencing needs at least two rows".into()));
    }
    let mut values = DMatrix::zeros(n - 1, d);
    let mut mask = DMatrix::from_element(n - 1, d, false);
    for l in 0..d {
        for s in 0..n - 1 {
            if !raw.is_missing(s, l) && !raw.is_missing(s + 1, l) {
                values[(s, l)] = raw.values()[(s + 1, l)] - raw.values()[(s, l)];
                mask[(s, l)] = true;
            }
        }
    }
    TimeSeriesPanel::new(values, mask)
}

/// Rebuilds a level series from imputed differences, anchored at the first
/// observed raw value; observed raw cells are restored exactly.
pub fn integrate_differences(raw: &TimeSeriesPanel, diffs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, d) = (raw.n(), raw.dim());
    if diffs.shape() != (n - 1, d) {
        return Err(TwiError::Shape(format!(
            "difference matrix is {}x{} but the raw panel implies {}x{}",
            diffs.nrows(),
            diffs.ncols(),
            n - 1,
            d
        )));
    }
    let mut out = DMatrix::zeros(n, d);
    for l in 0..d {
        let t0 = (0..n)
            .find(|&s| !raw.is_missing(s, l))
            .ok_or_else(|| TwiError::Infeasible(format!("column {l} has no observed value")))?;
        out[(t0, l)] = raw.values()[(t0, l)];
        for s in t0 + 1..n {
            out[(s, l)] = out[(s - 1, l)] + diffs[(s - 1, l)];
        }
        for s in (0..t0).rev() {
            out[(s, l)] = out[(s + 1, l)] - diffs[(s, l)];
        }
        for s in 0..n {
            if !raw.is_missing(s, l) {
                out[(s, l)] = raw.values()[(s, l)];
            }
        }
    }
    Ok(out)
}

/// Builds the linear equalities tying the differenced-series imputation to
/// the observed values of an integrated series: for the first observed index
/// t0 and each later observed t, Σ_{s=t0+1}^{t} w_s = x_t − x_{t0}, where
/// w_s (s ≥ 1) are the differenced variables.
pub fn build_cumsum_constraints(raw: &TimeSeriesPanel) -> Result<ConstraintSet> {
    if raw.dim() != 1 {
        return Err(TwiError::Shape(
            "cumulative-sum constraints support single-column panels".into(),
        ));
    }
    let n = raw.n();
    let observed: Vec<usize> = (0..n).filter(|&s| !raw.is_missing(s, 0)).collect();
    if observed.len() < 2 {
        return Err(TwiError::Infeasible(
            "cumulative-sum constraints need at least two observed values".into(),
        ));
    }
    let t0 = observed[0];
    let base = raw.values()[(t0, 0)];
    let rows = observed.len() - 1;
    let mut coeffs = DMatrix::zeros(rows, n - 1);
    let mut rhs = DVector::zeros(rows);
    for (row, &t) in observed[1..].iter().enumerate() {
        for s in t0 + 1..=t {
            coeffs[(row, s - 1)] = 1.0;
        }
        rhs[row] = raw.values()[(t, 0)] - base;
    }
    ConstraintSet::linear_equality(n - 1, coeffs, rhs)
}
