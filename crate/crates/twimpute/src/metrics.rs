//! Evaluation machinery: Wasserstein loss between empirical embedding
//! marginals, autocovariance and partial-autocorrelation estimators,
//! downstream parameter fits for the simulation models, and the Monte
//! Carlo benchmark harness that ties them together.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{impute_baseline, BaselineMethod};
use crate::config::TwiConfig;
use crate::constraints::{
    build_cumsum_constraints, difference_panel, integrate_differences, ConstraintSet,
};
use crate::dgp::{apply_pattern, generate, DgpSpec, MissingPattern, Model};
use crate::error::{Result, TwiError};
use crate::ot::solve_exact;
use crate::panel::TimeSeriesPanel;
use crate::seeding::derive_seed;
use crate::solver::{k_twi, twi, InitStrategy};

/// Autocovariance lags scored by the benchmark.
const ACF_LAGS: usize = 2;

/// W_k distance between the uniform empirical measures on the
/// `embed_p`-lag delay embeddings of two equally sized panels: the k-th
/// root of the optimal transport cost under the ‖·‖^k ground cost.
pub fn marginal_wasserstein(
    imputed: &DMatrix<f64>,
    truth: &DMatrix<f64>,
    embed_p: usize,
    k: f64,
) -> Result<f64> {
    if imputed.shape() != truth.shape() {
        return Err(TwiError::Shape(format!(
            "imputed is {}x{} but the reference is {}x{}",
            imputed.nrows(),
            imputed.ncols(),
            truth.nrows(),
            truth.ncols()
        )));
    }
    if embed_p == 0 || k < 1.0 {
        return Err(TwiError::Config(
            "embedding depth must be positive and the cost order at least 1".into(),
        ));
    }
    let (n, d) = imputed.shape();
    if n < embed_p {
        return Err(TwiError::Shape(format!(
            "series of length {n} cannot form {embed_p}-lag embeddings"
        )));
    }
    let m = n - embed_p + 1;
    let mut cost = DMatrix::zeros(m, m);
    for a in 0..m {
        let ta = a + embed_p - 1;
        for b in 0..m {
            let tb = b + embed_p - 1;
            let mut sq = 0.0;
            for l in 0..d {
                for h in 0..embed_p {
                    let diff = imputed[(ta - h, l)] - truth[(tb - h, l)];
                    sq += diff * diff;
                }
            }
            cost[(a, b)] = if k == 2.0 { sq } else { sq.powf(k / 2.0) };
        }
    }
    let (_, value) = solve_exact(&cost)?;
    Ok(value.max(0.0).powf(1.0 / k))
}

/// Autocovariances γ(0..=max_lag) with divisor n−h and the grand mean.
pub fn autocovariances(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n <= max_lag {
        return Err(TwiError::Shape(format!(
            "need more than {max_lag} points, got {n}"
        )));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let mut out = Vec::with_capacity(max_lag + 1);
    for h in 0..=max_lag {
        let mut acc = 0.0;
        for t in h..n {
            acc += (series[t] - mean) * (series[t - h] - mean);
        }
        out.push(acc / (n - h) as f64);
    }
    Ok(out)
}

/// Autocorrelations ρ(h) = γ(h)/γ(0) for h = 0..=max_lag.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let gammas = autocovariances(series, max_lag)?;
    let g0 = gammas[0];
    if g0 <= 0.0 {
        return Err(TwiError::Numerical(
            "autocorrelation is undefined for a constant series".into(),
        ));
    }
    Ok(gammas.into_iter().map(|g| g / g0).collect())
}

/// Partial autocorrelations φ_hh for h = 1..=max_lag via Durbin-Levinson
/// on the sample autocorrelations.
pub fn pacf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let rho = acf(series, max_lag)?;
    let mut out = Vec::with_capacity(max_lag);
    let mut phi_prev: Vec<f64> = Vec::new();
    let mut variance = 1.0;
    for h in 1..=max_lag {
        let mut num = rho[h];
        for (j, &phi) in phi_prev.iter().enumerate() {
            num -= phi * rho[h - 1 - j];
        }
        if variance <= 1e-14 {
            return Err(TwiError::Numerical(
                "partial autocorrelation recursion degenerated".into(),
            ));
        }
        let phi_hh = num / variance;
        let mut phi_new = Vec::with_capacity(h);
        for j in 0..h - 1 {
            phi_new.push(phi_prev[j] - phi_hh * phi_prev[h - 2 - j]);
        }
        phi_new.push(phi_hh);
        variance *= 1.0 - phi_hh * phi_hh;
        phi_prev = phi_new;
        out.push(phi_hh);
    }
    Ok(out)
}

/// Least squares through the normal equations; errors on singular designs.
fn ols(design: &DMatrix<f64>, target: &DVector<f64>) -> Result<DVector<f64>> {
    let gram = design.transpose() * design;
    let moment = design.transpose() * target;
    nalgebra::linalg::Cholesky::new(gram)
        .map(|chol| chol.solve(&moment))
        .ok_or_else(|| TwiError::Numerical("singular regression design".into()))
}

fn lagged_design(series: &[f64], order: usize) -> (DMatrix<f64>, DVector<f64>) {
    let n = series.len();
    let rows = n - order;
    let design = DMatrix::from_fn(rows, order, |r, c| series[r + order - 1 - c]);
    let target = DVector::from_fn(rows, |r, _| series[r + order]);
    (design, target)
}

/// Hannan-Rissanen two-stage fit of an ARMA(1,1): residuals from a long
/// autoregression, then least squares on (x_{t−1}, ε̂_{t−1}). Returns
/// (ar coefficient, ma coefficient).
fn fit_arma11(series: &[f64]) -> Result<(f64, f64)> {
    let n = series.len();
    let long_order = (2.0 * (n as f64).ln()).ceil() as usize;
    if n < long_order + 3 {
        return Err(TwiError::Shape(format!(
            "series of length {n} is too short for a long autoregression of order {long_order}"
        )));
    }
    let (design, target) = lagged_design(series, long_order);
    let coefs = ols(&design, &target)?;
    let residuals = &target - design * coefs;
    // residuals[r] estimates ε at time r + long_order.
    let rows = residuals.len() - 1;
    let design2 = DMatrix::from_fn(rows, 2, |r, c| {
        let t = r + long_order + 1;
        if c == 0 {
            series[t - 1]
        } else {
            residuals[r]
        }
    });
    let target2 = DVector::from_fn(rows, |r, _| series[r + long_order + 1]);
    let coefs2 = ols(&design2, &target2)?;
    Ok((coefs2[0], coefs2[1]))
}

fn quantile(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    let pos = level * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Grid-search least squares for the threshold autoregression: thresholds
/// are 200 quantiles of the series between the 10% and 90% levels, each
/// regime fit by no-intercept least squares, pooled squared error decides.
fn fit_tar(series: &[f64]) -> Result<(f64, f64, f64)> {
    let n = series.len();
    if n < 20 {
        return Err(TwiError::Shape("threshold fit needs at least 20 points".into()));
    }
    let mut sorted = series.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let steps = 200;
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for step in 0..steps {
        let level = 0.1 + 0.8 * step as f64 / (steps - 1) as f64;
        let tau = quantile(&sorted, level);
        let mut s_xx = [0.0f64; 2];
        let mut s_xy = [0.0f64; 2];
        let mut s_yy = [0.0f64; 2];
        let mut counts = [0usize; 2];
        for t in 1..n {
            let regime = usize::from(series[t - 1] > tau);
            s_xx[regime] += series[t - 1] * series[t - 1];
            s_xy[regime] += series[t - 1] * series[t];
            s_yy[regime] += series[t] * series[t];
            counts[regime] += 1;
        }
        if counts[0] < 2 || counts[1] < 2 || s_xx[0] <= 0.0 || s_xx[1] <= 0.0 {
            continue;
        }
        let phi1 = s_xy[0] / s_xx[0];
        let phi2 = s_xy[1] / s_xx[1];
        let sse = (s_yy[0] - phi1 * s_xy[0]) + (s_yy[1] - phi2 * s_xy[1]);
        if best.map_or(true, |(_, _, _, b)| sse < b) {
            best = Some((phi1, phi2, tau, sse));
        }
    }
    best.map(|(phi1, phi2, tau, _)| (phi1, phi2, tau))
        .ok_or_else(|| TwiError::Numerical("no threshold admitted a two-regime fit".into()))
}

/// Estimates the generating model's parameters from a completed panel.
/// The map keys name the coefficients of the corresponding process.
pub fn fit_downstream(imputed: &DMatrix<f64>, model: &Model) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    match model {
        Model::Ar { .. } => {
            let x: Vec<f64> = imputed.column(0).iter().copied().collect();
            let (design, target) = lagged_design(&x, 1);
            let coef = ols(&design, &target)?;
            out.insert("phi".into(), coef[0]);
        }
        Model::Arma { .. } => {
            let x: Vec<f64> = imputed.column(0).iter().copied().collect();
            let (phi1, phi2) = fit_arma11(&x)?;
            out.insert("phi1".into(), phi1);
            out.insert("phi2".into(), phi2);
        }
        Model::Tar { .. } => {
            let x: Vec<f64> = imputed.column(0).iter().copied().collect();
            let (phi1, phi2, tau) = fit_tar(&x)?;
            out.insert("phi1".into(), phi1);
            out.insert("phi2".into(), phi2);
            out.insert("tau".into(), tau);
        }
        Model::I1 { .. } => {
            let x: Vec<f64> = imputed.column(0).iter().copied().collect();
            let diffs: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
            let (phi, _) = fit_arma11(&diffs)?;
            out.insert("phi".into(), phi);
        }
        Model::Nlvar { .. } => {
            let sigmoid = |z: f64| 1.0 / (1.0 + (-z).exp()) - 0.5;
            let n = imputed.nrows();
            let rows = n - 1;
            let design1 = DMatrix::from_fn(rows, 2, |r, c| {
                if c == 0 {
                    imputed[(r, 0)]
                } else {
                    sigmoid(3.0 * imputed[(r, 1)])
                }
            });
            let target1 = DVector::from_fn(rows, |r, _| imputed[(r + 1, 0)]);
            let coef1 = ols(&design1, &target1)?;
            let design2 = DMatrix::from_fn(rows, 2, |r, c| imputed[(r, c)]);
            let target2 = DVector::from_fn(rows, |r, _| imputed[(r + 1, 1)]);
            let coef2 = ols(&design2, &target2)?;
            out.insert("phi11".into(), coef1[0]);
            out.insert("phi12".into(), coef1[1]);
            out.insert("phi21".into(), coef2[0]);
            out.insert("phi22".into(), coef2[1]);
        }
        Model::Al => {
            let n = imputed.nrows();
            if imputed.ncols() != 3 {
                return Err(TwiError::Shape("compositional fit expects 3 columns".into()));
            }
            let mut latent = DMatrix::zeros(n, 2);
            for t in 0..n {
                let base = imputed[(t, 2)];
                if base <= 0.0 || imputed[(t, 0)] <= 0.0 || imputed[(t, 1)] <= 0.0 {
                    return Err(TwiError::Numerical(
                        "inverse logistic transform needs strictly positive compositions".into(),
                    ));
                }
                latent[(t, 0)] = (imputed[(t, 0)] / base).ln();
                latent[(t, 1)] = (imputed[(t, 1)] / base).ln();
            }
            let rows = n - 1;
            let design = DMatrix::from_fn(rows, 3, |r, c| match c {
                0 => 1.0,
                _ => latent[(r, c - 1)],
            });
            for (eq, names) in [("1", ["c1", "a11", "a12"]), ("2", ["c2", "a21", "a22"])] {
                let col = if eq == "1" { 0 } else { 1 };
                let target = DVector::from_fn(rows, |r, _| latent[(r + 1, col)]);
                let coef = ols(&design, &target)?;
                for (name, value) in names.iter().zip(coef.iter()) {
                    out.insert((*name).into(), *value);
                }
            }
        }
        Model::Cyc => {
            return Err(TwiError::Config(
                "the cyclic model has no downstream parameter estimator".into(),
            ));
        }
    }
    Ok(out)
}

/// True coefficient values of a model spec, keyed like [`fit_downstream`].
pub fn true_parameters(model: &Model) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    match model {
        Model::Ar { phi } => {
            out.insert("phi".into(), *phi);
        }
        Model::Arma { phi1, phi2 } => {
            out.insert("phi1".into(), *phi1);
            out.insert("phi2".into(), *phi2);
        }
        Model::Tar { phi1, phi2, tau } => {
            out.insert("phi1".into(), *phi1);
            out.insert("phi2".into(), *phi2);
            out.insert("tau".into(), *tau);
        }
        Model::I1 { phi } => {
            out.insert("phi".into(), *phi);
        }
        Model::Nlvar { phi11, phi12, phi21, phi22 } => {
            out.insert("phi11".into(), *phi11);
            out.insert("phi12".into(), *phi12);
            out.insert("phi21".into(), *phi21);
            out.insert("phi22".into(), *phi22);
        }
        Model::Al => {
            out.insert("c1".into(), 0.1);
            out.insert("a11".into(), 0.7);
            out.insert("a12".into(), -0.5);
            out.insert("c2".into(), 0.1);
            out.insert("a21".into(), 0.0);
            out.insert("a22".into(), -0.7);
        }
        Model::Cyc => {}
    }
    out
}

/// An imputation method under evaluation.
#[derive(Debug, Clone)]
pub enum EvalMethod {
    Baseline(BaselineMethod),
    /// Alternating imputation initialized from the given baseline.
    Twi { cfg: TwiConfig, init: BaselineMethod },
    /// Multi-cut-off variant; None uses {n/4, n/2, 3n/4}.
    KTwi { cfg: TwiConfig, cutoffs: Option<Vec<usize>>, init: BaselineMethod },
}

impl EvalMethod {
    pub fn label(&self) -> String {
        fn base(b: &BaselineMethod) -> &'static str {
            match b {
                BaselineMethod::Linear => "linear",
                BaselineMethod::Locf => "locf",
                BaselineMethod::Mean => "mean",
                BaselineMethod::ScalarFilter { .. } => "scalar-filter",
            }
        }
        match self {
            EvalMethod::Baseline(b) => base(b).to_string(),
            EvalMethod::Twi { init, .. } => format!("twi-{}", base(init)),
            EvalMethod::KTwi { init, .. } => format!("ktwi-{}", base(init)),
        }
    }
}

/// Aggregated scores for one (model, pattern, method) cell.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub model: String,
    pub pattern: String,
    pub method: String,
    pub n_reps: usize,
    /// Replicates in which this method returned an error.
    pub failures: usize,
    /// Mean Wasserstein loss over successful replicates.
    pub wasserstein_loss: f64,
    /// Standard error of the loss over successful replicates.
    pub wasserstein_stderr: f64,
    /// Root mean square error of the autocovariance estimate per lag
    /// (0..=2), against the replicate-averaged full-data value; empty for
    /// multivariate models.
    pub acf_rmse: Vec<f64>,
    /// Root mean square error per model parameter; empty when the model
    /// has no downstream estimator.
    pub parameter_errors: BTreeMap<String, f64>,
}

fn pattern_label(pattern: &MissingPattern) -> String {
    match pattern {
        MissingPattern::PatternI { count } => format!("random-{count}"),
        MissingPattern::PatternII { block, run, offset } => {
            format!("blocks-{run}of{block}at{offset}")
        }
        MissingPattern::Custom { .. } => "custom".into(),
        MissingPattern::ProtectTail { m, inner } => {
            format!("{}-tail{m}", pattern_label(inner))
        }
        MissingPattern::PerColumn(inner) => format!("{}-percolumn", pattern_label(inner)),
    }
}

fn model_label(model: &Model) -> &'static str {
    match model {
        Model::Ar { .. } => "ar",
        Model::Arma { .. } => "arma",
        Model::Tar { .. } => "tar",
        Model::I1 { .. } => "i1",
        Model::Cyc => "cyc",
        Model::Nlvar { .. } => "nlvar",
        Model::Al => "al",
    }
}

fn init_strategy(panel: &TimeSeriesPanel, init: &BaselineMethod) -> Result<InitStrategy> {
    Ok(InitStrategy::Provided(impute_baseline(panel, init.clone())?))
}

/// Runs one method on one masked replicate, returning the completed raw
/// panel values. Unit-root series are differenced, imputed under
/// cumulative-sum constraints, and integrated back.
pub fn run_method(
    masked: &TimeSeriesPanel,
    method: &EvalMethod,
    model: &Model,
) -> Result<DMatrix<f64>> {
    match method {
        EvalMethod::Baseline(b) => impute_baseline(masked, b.clone()),
        EvalMethod::Twi { cfg, init } | EvalMethod::KTwi { cfg, init, .. } => {
            let cutoffs = match method {
                EvalMethod::KTwi { cutoffs, .. } => Some(cutoffs.clone()),
                _ => None,
            };
            if matches!(model, Model::I1 { .. }) {
                let diffs = difference_panel(masked)?;
                let set = build_cumsum_constraints(masked)?;
                let init = init_strategy(&diffs, init)?;
                let result = run_twi(&diffs, &set, cfg, cutoffs, init)?;
                integrate_differences(masked, &result)
            } else {
                let set = if matches!(model, Model::Al) {
                    ConstraintSet::compositional(masked)?
                } else {
                    ConstraintSet::observed_equality(masked)
                };
                let init = init_strategy(masked, init)?;
                run_twi(masked, &set, cfg, cutoffs, init)
            }
        }
    }
}

fn run_twi(
    panel: &TimeSeriesPanel,
    set: &ConstraintSet,
    cfg: &TwiConfig,
    cutoffs: Option<Option<Vec<usize>>>,
    init: InitStrategy,
) -> Result<DMatrix<f64>> {
    match cutoffs {
        None => Ok(twi(panel, set, cfg, init)?.imputed),
        Some(cuts) => {
            let n = panel.n();
            let cuts = cuts.unwrap_or_else(|| vec![n / 4, n / 2, 3 * n / 4]);
            Ok(k_twi(panel, set, cfg, &cuts, init)?.imputed)
        }
    }
}

struct RepOutcome {
    reference_gammas: Option<Vec<f64>>,
    per_method: Vec<MethodOutcome>,
}

enum MethodOutcome {
    Failed,
    Scored {
        loss: f64,
        gammas: Option<Vec<f64>>,
        params: BTreeMap<String, f64>,
    },
}

/// Monte Carlo sweep: for each replicate the model is simulated, masked,
/// imputed with every method, and scored against the full data. Replicate
/// seeds are derived from `seed`, so reports are reproducible and methods
/// see identical data. Replicates run in parallel.
pub fn benchmark(
    spec: &DgpSpec,
    pattern: &MissingPattern,
    methods: &[EvalMethod],
    n_reps: usize,
    seed: u64,
) -> Result<Vec<EvalReport>> {
    if n_reps == 0 {
        return Err(TwiError::Config("at least one replicate is required".into()));
    }
    let unit_root = matches!(spec.model, Model::I1 { .. });
    let univariate = spec.model.dim() == 1;
    let has_params = !matches!(spec.model, Model::Cyc);

    let outcomes: Vec<Result<RepOutcome>> = (0..n_reps)
        .into_par_iter()
        .map(|rep| -> Result<RepOutcome> {
            let gen_seed = derive_seed(seed, 2 * rep as u64);
            let mask_seed = derive_seed(seed, 2 * rep as u64 + 1);
            let full = generate(&DgpSpec { seed: gen_seed, ..spec.clone() })?;
            let masked = apply_pattern(&full, pattern, mask_seed)?;
            let score_target = if unit_root {
                column_differences(full.values())
            } else {
                full.values().clone()
            };
            let reference_gammas = if univariate {
                let x: Vec<f64> = score_target.column(0).iter().copied().collect();
                Some(autocovariances(&x, ACF_LAGS)?)
            } else {
                None
            };
            let per_method = methods
                .iter()
                .map(|method| {
                    let imputed = match run_method(&masked, method, &spec.model) {
                        Ok(m) => m,
                        Err(_) => return MethodOutcome::Failed,
                    };
                    let scored = if unit_root {
                        column_differences(&imputed)
                    } else {
                        imputed.clone()
                    };
                    let loss = match marginal_wasserstein(&scored, &score_target, 3, 2.0) {
                        Ok(v) => v,
                        Err(_) => return MethodOutcome::Failed,
                    };
                    let gammas = if univariate {
                        let x: Vec<f64> = scored.column(0).iter().copied().collect();
                        match autocovariances(&x, ACF_LAGS) {
                            Ok(g) => Some(g),
                            Err(_) => return MethodOutcome::Failed,
                        }
                    } else {
                        None
                    };
                    let params = if has_params {
                        match fit_downstream(&imputed, &spec.model) {
                            Ok(p) => p,
                            Err(_) => return MethodOutcome::Failed,
                        }
                    } else {
                        BTreeMap::new()
                    };
                    MethodOutcome::Scored { loss, gammas, params }
                })
                .collect();
            Ok(RepOutcome { reference_gammas, per_method })
        })
        .collect();
    let outcomes: Vec<RepOutcome> = outcomes.into_iter().collect::<Result<_>>()?;

    // Reference autocovariances averaged over replicates.
    let reference_gamma: Option<Vec<f64>> = if univariate {
        let mut acc = vec![0.0; ACF_LAGS + 1];
        for outcome in &outcomes {
            for (a, g) in acc.iter_mut().zip(outcome.reference_gammas.as_ref().unwrap()) {
                *a += g;
            }
        }
        Some(acc.into_iter().map(|a| a / n_reps as f64).collect())
    } else {
        None
    };

    let truth = true_parameters(&spec.model);
    let mut reports = Vec::with_capacity(methods.len());
    for (m_idx, method) in methods.iter().enumerate() {
        let mut losses = Vec::new();
        let mut gamma_sq = vec![0.0; ACF_LAGS + 1];
        let mut param_sq: BTreeMap<String, f64> = BTreeMap::new();
        let mut failures = 0;
        for outcome in &outcomes {
            match &outcome.per_method[m_idx] {
                MethodOutcome::Failed => failures += 1,
                MethodOutcome::Scored { loss, gammas, params } => {
                    losses.push(*loss);
                    if let (Some(g), Some(reference)) = (gammas, &reference_gamma) {
                        for h in 0..=ACF_LAGS {
                            gamma_sq[h] += (g[h] - reference[h]).powi(2);
                        }
                    }
                    for (name, value) in params {
                        let truth_value = truth.get(name).copied().unwrap_or(f64::NAN);
                        *param_sq.entry(name.clone()).or_insert(0.0) +=
                            (value - truth_value).powi(2);
                    }
                }
            }
        }
        let successes = losses.len();
        let (loss_mean, loss_stderr) = if successes == 0 {
            (f64::NAN, f64::NAN)
        } else {
            let mean = losses.iter().sum::<f64>() / successes as f64;
            let var = losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>()
                / (successes.max(2) - 1) as f64;
            (mean, (var / successes as f64).sqrt())
        };
        let acf_rmse = if univariate && successes > 0 {
            gamma_sq.iter().map(|s| (s / successes as f64).sqrt()).collect()
        } else {
            Vec::new()
        };
        let parameter_errors = param_sq
            .into_iter()
            .map(|(name, s)| (name, (s / successes.max(1) as f64).sqrt()))
            .collect();
        reports.push(EvalReport {
            model: model_label(&spec.model).to_string(),
            pattern: pattern_label(pattern),
            method: method.label(),
            n_reps,
            failures,
            wasserstein_loss: loss_mean,
            wasserstein_stderr: loss_stderr,
            acf_rmse,
            parameter_errors,
        });
    }
    Ok(reports)
}

fn column_differences(values: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = values.shape();
    DMatrix::from_fn(n - 1, d, |t, l| values[(t + 1, l)] - values[(t, l)])
}
