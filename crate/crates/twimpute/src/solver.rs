//! Alternating-minimization drivers for transport-based imputation.
//!
//! [`twi`] alternates (a) an optimal-transport solve between the pre- and
//! post-cut-off embedding families of the current imputation and (b) a
//! constrained minimization of the objective in the series variable, until
//! the objective stops decreasing. [`k_twi`] chains several cut-offs,
//! warm-starting each run from the previous imputation.
//!
//! Step (b) dispatches on the constraint set and cost order:
//! * observed-cell equality with squared-Euclidean cost solves the reduced
//!   positive-semidefinite system on the missing coordinates, column by
//!   column;
//! * pure linear equalities use the closed form H⁻¹Kᵀ(KH⁻¹Kᵀ)⁻¹b when the
//!   ridge weight is positive and a KKT solve otherwise;
//! * boxes, row-sum constraints, and non-quadratic cost orders run proximal
//!   gradient descent with exact projections.

use nalgebra::{DMatrix, DVector};

use crate::baselines::{impute_baseline, BaselineMethod};
use crate::config::{OtMethod, SubproblemMethod, TwiConfig};
use crate::constraints::{ConstraintSet, SolverPath};
use crate::embed::cost_matrix;
use crate::error::{Result, TwiError};
use crate::objective::{assemble_h, eval_f, grad_f, QuadraticForm};
use crate::ot::{solve_exact, solve_sinkhorn, TransportPlan};
use crate::panel::TimeSeriesPanel;

const SINKHORN_MAX_ITERS: usize = 10_000;
const SINKHORN_TOL: f64 = 1e-9;
const PROX_MAX_ITERS: usize = 100_000;
const PROX_TOL: f64 = 1e-8;
const RIDGE_RETRY: f64 = 1e-8;

/// How the imputation variable is initialized before the first iteration.
/// Whatever the strategy produces is projected into the constraint set.
#[derive(Debug, Clone)]
pub enum InitStrategy {
    LinearInterpolation,
    Locf,
    Mean,
    Provided(DMatrix<f64>),
}

/// Outcome of a [`twi`] or [`k_twi`] run.
#[derive(Debug, Clone)]
pub struct ImputationResult {
    /// Completed n×d series.
    pub imputed: DMatrix<f64>,
    /// Transport plan from the final outer iteration.
    pub plan: TransportPlan,
    /// Objective values, two per outer iteration: after the transport
    /// update and after the series update.
    pub objective_trace: Vec<f64>,
    /// Start offsets of each cut-off's segment inside `objective_trace`
    /// (a single 0 for plain runs).
    pub segment_starts: Vec<usize>,
    /// Total outer iterations performed.
    pub iterations: usize,
    /// Whether the relative-decrease criterion was met.
    pub converged: bool,
    /// Non-fatal notes, e.g. a singular reduced system retried with a tiny
    /// ridge.
    pub warnings: Vec<String>,
}

fn initial_point(panel: &TimeSeriesPanel, init: &InitStrategy) -> Result<DMatrix<f64>> {
    match init {
        InitStrategy::LinearInterpolation => impute_baseline(panel, BaselineMethod::Linear),
        InitStrategy::Locf => impute_baseline(panel, BaselineMethod::Locf),
        InitStrategy::Mean => impute_baseline(panel, BaselineMethod::Mean),
        InitStrategy::Provided(w) => {
            if w.shape() != (panel.n(), panel.dim()) {
                return Err(TwiError::Shape(format!(
                    "provided initialization is {}x{} but the panel is {}x{}",
                    w.nrows(),
                    w.ncols(),
                    panel.n(),
                    panel.dim()
                )));
            }
            Ok(w.clone())
        }
    }
}

fn solve_plan(cost: &DMatrix<f64>, cfg: &TwiConfig) -> Result<(TransportPlan, f64)> {
    match cfg.ot_method {
        OtMethod::Exact => solve_exact(cost),
        OtMethod::Sinkhorn { epsilon } => {
            solve_sinkhorn(cost, epsilon, SINKHORN_MAX_ITERS, SINKHORN_TOL)
        }
    }
}

fn check_set_against_panel(panel: &TimeSeriesPanel, set: &ConstraintSet) -> Result<()> {
    if set.n() != panel.n() || set.dim() != panel.dim() {
        return Err(TwiError::Shape(format!(
            "constraint set is over {}x{} but the panel is {}x{}",
            set.n(),
            set.dim(),
            panel.n(),
            panel.dim()
        )));
    }
    if let Some(obs) = set.observed() {
        if &obs.missing != panel.mask() {
            return Err(TwiError::Config(
                "constraint set was built from a panel with a different missing mask".into(),
            ));
        }
        for l in 0..panel.dim() {
            for t in 0..panel.n() {
                if !panel.is_missing(t, l) && obs.values[(t, l)] != panel.values()[(t, l)] {
                    return Err(TwiError::Config(format!(
                        "constraint set disagrees with the panel at observed cell ({t}, {l})"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Alternating minimization: transport solve, then constrained series
/// update, until the objective's relative decrease falls below
/// `cfg.tol_rel` or `cfg.max_outer_iters` is reached.
pub fn twi(
    panel: &TimeSeriesPanel,
    set: &ConstraintSet,
    cfg: &TwiConfig,
    init: InitStrategy,
) -> Result<ImputationResult> {
    let n = panel.n();
    cfg.validate(n)?;
    check_set_against_panel(panel, set)?;

    if panel.is_fully_observed() {
        let cost = cost_matrix(panel.values(), cfg)?;
        let (plan, _) = solve_plan(&cost, cfg)?;
        let f = eval_f(panel.values(), &plan, cfg)?;
        return Ok(ImputationResult {
            imputed: panel.values().clone(),
            plan,
            objective_trace: vec![f],
            segment_starts: vec![0],
            iterations: 0,
            converged: true,
            warnings: Vec::new(),
        });
    }

    let mut warnings = Vec::new();
    let mut w = set.project(&initial_point(panel, &init)?)?;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut prev_objective: Option<f64> = None;
    let mut plan: Option<TransportPlan> = None;

    for t in 1..=cfg.max_outer_iters {
        let cost = cost_matrix(&w, cfg)?;
        let (new_plan, _) = solve_plan(&cost, cfg)?;
        trace.push(eval_f(&w, &new_plan, cfg)?);
        w = solve_subproblem_inner(&new_plan, set, cfg, &w, &mut warnings)?;
        let objective = eval_f(&w, &new_plan, cfg)?;
        trace.push(objective);
        plan = Some(new_plan);
        iterations = t;
        if let Some(prev) = prev_objective {
            if (prev - objective) / prev.max(1e-12) < cfg.tol_rel {
                converged = true;
                break;
            }
        }
        prev_objective = Some(objective);
    }

    warnings.dedup();
    Ok(ImputationResult {
        imputed: w,
        plan: plan.expect("at least one outer iteration"),
        objective_trace: trace,
        segment_starts: vec![0],
        iterations,
        converged,
        warnings,
    })
}

/// Multi-cut-off variant: runs [`twi`] once per cut-off, each run warm
/// started from the previous imputation; the result carries the final
/// run's plan and the concatenated trace with per-cut-off segment offsets.
pub fn k_twi(
    panel: &TimeSeriesPanel,
    set: &ConstraintSet,
    cfg: &TwiConfig,
    cutoffs: &[usize],
    init: InitStrategy,
) -> Result<ImputationResult> {
    if cutoffs.is_empty() {
        return Err(TwiError::Config("at least one cut-off is required".into()));
    }
    for &cutoff in cutoffs {
        TwiConfig { n1: Some(cutoff), ..cfg.clone() }.validate(panel.n())?;
    }
    let mut trace = Vec::new();
    let mut segment_starts = Vec::new();
    let mut iterations = 0;
    let mut warnings = Vec::new();
    let mut current: Option<DMatrix<f64>> = None;
    let mut last: Option<ImputationResult> = None;
    for &cutoff in cutoffs {
        let cfg_h = TwiConfig { n1: Some(cutoff), ..cfg.clone() };
        let init_h = match &current {
            None => init.clone(),
            Some(w) => InitStrategy::Provided(w.clone()),
        };
        let result = twi(panel, set, &cfg_h, init_h)?;
        segment_starts.push(trace.len());
        trace.extend_from_slice(&result.objective_trace);
        iterations += result.iterations;
        warnings.extend_from_slice(&result.warnings);
        current = Some(result.imputed.clone());
        last = Some(result);
    }
    let last = last.expect("cutoffs nonempty");
    Ok(ImputationResult {
        imputed: last.imputed,
        plan: last.plan,
        objective_trace: trace,
        segment_starts,
        iterations,
        converged: last.converged,
        warnings: {
            let mut w = warnings;
            w.dedup();
            w
        },
    })
}

/// Minimizes F(·, Π) over the constraint set from the point `current`.
/// Exposed for diagnostics and cross-checking; [`twi`] calls this once per
/// outer iteration.
pub fn solve_subproblem(
    plan: &TransportPlan,
    set: &ConstraintSet,
    cfg: &TwiConfig,
    current: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let mut warnings = Vec::new();
    solve_subproblem_inner(plan, set, cfg, current, &mut warnings)
}

fn solve_subproblem_inner(
    plan: &TransportPlan,
    set: &ConstraintSet,
    cfg: &TwiConfig,
    current: &DMatrix<f64>,
    warnings: &mut Vec<String>,
) -> Result<DMatrix<f64>> {
    if current.shape() != (set.n(), set.dim()) {
        return Err(TwiError::Shape(format!(
            "current point is {}x{} but the constraint set is over {}x{}",
            current.nrows(),
            current.ncols(),
            set.n(),
            set.dim()
        )));
    }
    let direct = cfg.subproblem_method == SubproblemMethod::Direct && cfg.cost_order == 2.0;
    match set.solver_path() {
        SolverPath::ObservedDirect if direct => {
            solve_observed_direct(plan, set, cfg, current, warnings)
        }
        SolverPath::LinearDirect if direct => solve_linear_direct(plan, set, cfg, warnings),
        _ => solve_proximal(plan, set, cfg, current),
    }
}

/// Reduced solve on the missing coordinates: with observed cells fixed,
/// minimizing wᵀHw sets H_mm w_m = −(H w̃)_m per column, where w̃ carries
/// the observed values and zeros elsewhere.
fn solve_observed_direct(
    plan: &TransportPlan,
    set: &ConstraintSet,
    cfg: &TwiConfig,
    current: &DMatrix<f64>,
    warnings: &mut Vec<String>,
) -> Result<DMatrix<f64>> {
    let (n, d) = (set.n(), set.dim());
    let qf = assemble_h(plan, n, cfg)?;
    let mut bumped: Option<QuadraticForm> = None;
    let mut out = current.clone();
    for l in 0..d {
        let (missing, fixed): (Vec<usize>, DVector<f64>) = match set.observed() {
            Some(obs) => {
                let missing: Vec<usize> = (0..n).filter(|&s| obs.missing[(s, l)]).collect();
                let fixed = DVector::from_fn(n, |s, _| {
                    if obs.missing[(s, l)] {
                        0.0
                    } else {
                        obs.values[(s, l)]
                    }
                });
                (missing, fixed)
            }
            None => ((0..n).collect(), DVector::zeros(n)),
        };
        if missing.is_empty() {
            out.set_column(l, &fixed);
            continue;
        }
        let solution = match solve_reduced(&qf, &missing, &fixed) {
            Some(x) => x,
            None if cfg.lambda == 0.0 => {
                let qf2 = bumped.get_or_insert_with(|| {
                    warnings.push(format!(
                        "reduced system is singular at lambda = 0; retrying with lambda = {RIDGE_RETRY}"
                    ));
                    assemble_h(plan, n, &TwiConfig { lambda: RIDGE_RETRY, ..cfg.clone() })
                        .expect("same shape as the original assembly")
                });
                solve_reduced(qf2, &missing, &fixed).ok_or_else(|| {
                    TwiError::Numerical(
                        "reduced system stayed singular after a ridge retry; set lambda > 0"
                            .into(),
                    )
                })?
            }
            None => {
                return Err(TwiError::Numerical(
                    "reduced system is singular although lambda > 0".into(),
                ))
            }
        };
        let mut column = fixed;
        for (a, &s) in missing.iter().enumerate() {
            column[s] = solution[a];
        }
        out.set_column(l, &column);
    }
    Ok(out)
}

/// One column's reduced solve; None signals a singular or unreliable
/// factorization.
fn solve_reduced(qf: &QuadraticForm, missing: &[usize], fixed: &DVector<f64>) -> Option<DVector<f64>> {
    let m = missing.len();
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = qf.entry(missing[i], missing[j]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let hv = qf.apply_vec(fixed);
    let rhs = DVector::from_fn(m, |i, _| -hv[missing[i]]);
    let chol = nalgebra::linalg::Cholesky::new(a.clone())?;
    // A nearly singular matrix can slip through the factorization with a
    // tiny positive pivot; reject those instead of returning garbage.
    let mut pivot_min = f64::INFINITY;
    let mut pivot_max = 0.0f64;
    for i in 0..m {
        let v = chol.l_dirty()[(i, i)];
        pivot_min = pivot_min.min(v);
        pivot_max = pivot_max.max(v);
    }
    if !(pivot_min > 1e-6 * pivot_max) {
        return None;
    }
    let x = chol.solve(&rhs);
    let residual = (&a * &x - &rhs).norm();
    let scale = rhs.norm().max(x.norm()).max(1.0);
    if residual.is_finite() && residual <= 1e-6 * scale {
        Some(x)
    } else {
        None
    }
}

/// Equality-constrained quadratic minimization: closed form through H⁻¹
/// when the ridge weight makes H positive definite, otherwise a KKT solve.
fn solve_linear_direct(
    plan: &TransportPlan,
    set: &ConstraintSet,
    cfg: &TwiConfig,
    warnings: &mut Vec<String>,
) -> Result<DMatrix<f64>> {
    let n = set.n();
    if n > 2000 {
        return Err(TwiError::Config(
            "direct equality-constrained solves are limited to n <= 2000; use the proximal method"
                .into(),
        ));
    }
    let lin = set.linear().expect("linear path implies a linear constraint");
    let qf = assemble_h(plan, n, cfg)?;
    if cfg.lambda > 0.0 {
        let w = solve_equality_ridge(&qf, lin.coeffs(), lin.rhs())?;
        return Ok(DMatrix::from_column_slice(n, 1, w.as_slice()));
    }
    match solve_equality_kkt(&qf, lin.coeffs(), lin.rhs()) {
        Some(w) => Ok(DMatrix::from_column_slice(n, 1, w.as_slice())),
        None => {
            warnings.push(format!(
                "equality-constrained system is singular at lambda = 0; retrying with lambda = {RIDGE_RETRY}"
            ));
            let qf2 = assemble_h(plan, n, &TwiConfig { lambda: RIDGE_RETRY, ..cfg.clone() })?;
            let w = solve_equality_ridge(&qf2, lin.coeffs(), lin.rhs()).map_err(|_| {
                TwiError::Numerical(
                    "equality-constrained system stayed singular after a ridge retry; set lambda > 0"
                        .into(),
                )
            })?;
            Ok(DMatrix::from_column_slice(n, 1, w.as_slice()))
        }
    }
}

/// ŵ = H⁻¹Kᵀ(KH⁻¹Kᵀ)⁻¹b, valid for positive-definite H.
fn solve_equality_ridge(
    qf: &QuadraticForm,
    coeffs: &DMatrix<f64>,
    rhs: &DVector<f64>,
) -> Result<DVector<f64>> {
    let h = qf.dense()?;
    let chol = nalgebra::linalg::Cholesky::new(h).ok_or_else(|| {
        TwiError::Numerical("quadratic form is not positive definite despite the ridge".into())
    })?;
    let hinv_kt = chol.solve(&coeffs.transpose());
    let gram = coeffs * &hinv_kt;
    let gram_chol = nalgebra::linalg::Cholesky::new(gram).ok_or_else(|| {
        TwiError::Numerical("constraint Gram matrix is singular; remove dependent equalities".into())
    })?;
    let multipliers = gram_chol.solve(rhs);
    Ok(hinv_kt * multipliers)
}

/// Stationarity system for minimizing wᵀHw subject to Kw = b:
/// [2H Kᵀ; K 0][w; ν] = [0; b]. None when the factorization fails or the
/// solution does not satisfy the system.
fn solve_equality_kkt(
    qf: &QuadraticForm,
    coeffs: &DMatrix<f64>,
    rhs: &DVector<f64>,
) -> Option<DVector<f64>> {
    let n = qf.n();
    let m = coeffs.nrows();
    let h = qf.dense().ok()?;
    let mut kkt = DMatrix::zeros(n + m, n + m);
    kkt.view_mut((0, 0), (n, n)).copy_from(&(2.0 * &h));
    kkt.view_mut((0, n), (n, m)).copy_from(&coeffs.transpose());
    kkt.view_mut((n, 0), (m, n)).copy_from(coeffs);
    let mut full_rhs = DVector::zeros(n + m);
    full_rhs.rows_mut(n, m).copy_from(rhs);
    let lu = nalgebra::linalg::LU::new(kkt);
    let sol = lu.solve(&full_rhs)?;
    if sol.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let w = DVector::from_column_slice(&sol.as_slice()[..n]);
    let nu = DVector::from_column_slice(&sol.as_slice()[n..]);
    let stationarity = (2.0 * &h * &w + coeffs.transpose() * &nu).norm();
    let feasibility = (coeffs * &w - rhs).norm();
    let scale = w.norm().max(rhs.norm()).max(1.0);
    if stationarity <= 1e-6 * scale && feasibility <= 1e-6 * scale {
        Some(w)
    } else {
        None
    }
}

/// Proximal gradient descent on the smooth objective with exact projection
/// onto the constraint set. Fixed step 1/(2λ_max(H)) when the quadratic
/// form exists; backtracking otherwise.
fn solve_proximal(
    plan: &TransportPlan,
    set: &ConstraintSet,
    cfg: &TwiConfig,
    current: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let mut w = set.project(current)?;
    let quadratic = cfg.cost_order == 2.0;
    let mut step = if quadratic {
        let qf = assemble_h(plan, set.n(), cfg)?;
        let lip = 2.0 * qf.max_eigenvalue_estimate(20) * 1.05;
        1.0 / lip.max(1e-12)
    } else {
        1.0
    };
    let mut objective = eval_f(&w, plan, cfg)?;
    let mut mapping_norm = f64::INFINITY;
    for _ in 0..PROX_MAX_ITERS {
        let grad = grad_f(&w, plan, cfg)?;
        let (candidate, cand_objective, used_step) = if quadratic {
            let candidate = set.project(&(&w - step * &grad))?;
            let value = eval_f(&candidate, plan, cfg)?;
            (candidate, value, step)
        } else {
            // Backtracking: shrink until the quadratic upper model at the
            // current step majorizes the objective.
            let mut trial = step;
            loop {
                let candidate = set.project(&(&w - trial * &grad))?;
                let value = eval_f(&candidate, plan, cfg)?;
                let diff = &candidate - &w;
                let model = objective
                    + grad.iter().zip(diff.iter()).map(|(g, d)| g * d).sum::<f64>()
                    + diff.norm_squared() / (2.0 * trial);
                if value <= model + 1e-12 * model.abs().max(1.0) || trial < 1e-14 {
                    break (candidate, value, trial);
                }
                trial *= 0.5;
            }
        };
        mapping_norm = (&w - &candidate).norm() / used_step;
        w = candidate;
        objective = cand_objective;
        if !quadratic {
            step = (used_step * 1.2).min(1e3);
        }
        if mapping_norm <= PROX_TOL {
            return Ok(w);
        }
    }
    Err(TwiError::Numerical(format!(
        "proximal gradient did not converge in {PROX_MAX_ITERS} steps (gradient mapping norm {mapping_norm:.3e}, step {step:.3e}); try a larger tolerance or the direct solver"
    )))
}

/// Fixed-point diagnostic for converged runs at lambda = 0 with squared
/// cost: at interior missing indices the imputation must equal the average
/// over covering embeddings of the plan-conditional expectations.
#[derive(Debug, Clone, Copy)]
pub struct EmIdentityReport {
    /// Largest absolute deviation from the identity (0 when nothing
    /// qualified).
    pub max_violation: f64,
    /// Number of (index, column) pairs checked.
    pub checked: usize,
}

pub fn em_identity_check(
    result: &ImputationResult,
    panel: &TimeSeriesPanel,
    cfg: &TwiConfig,
) -> Result<EmIdentityReport> {
    if cfg.lambda != 0.0 || cfg.cost_order != 2.0 {
        return Err(TwiError::Config(
            "the fixed-point identity holds only for lambda = 0 and squared cost".into(),
        ));
    }
    let n = panel.n();
    cfg.validate(n)?;
    let n1 = cfg.resolved_n1(n);
    let p = cfg.p;
    let r = cfg.n_pre(n) as f64;
    let plan = &result.plan.matrix;
    let w = &result.imputed;
    if w.shape() != (n, panel.dim()) {
        return Err(TwiError::Shape("result does not match the panel".into()));
    }
    let mut max_violation = 0.0f64;
    let mut checked = 0;
    for l in 0..panel.dim() {
        for s in panel.missing_in_column(l) {
            if s < p - 1 || s + p - 1 > n1 {
                continue;
            }
            let mut average = 0.0;
            for h in 0..p {
                let row = s + h - (p - 1);
                let mut conditional = 0.0;
                for b in 0..plan.ncols() {
                    conditional += plan[(row, b)] * w[(n1 + 1 + b - h, l)];
                }
                average += r * conditional;
            }
            average /= p as f64;
            max_violation = max_violation.max((w[(s, l)] - average).abs());
            checked += 1;
        }
    }
    Ok(EmIdentityReport { max_violation, checked })
}
