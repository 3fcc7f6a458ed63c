//! Release gate for the imputation stack. Each test prints one pass/fail
//! line: first the closed-loop solver properties (feasibility, oracle
//! equivalence, monotonicity, fixed points, identification), then the
//! Monte Carlo reproductions that pin loss and downstream-estimate numbers
//! at 100 replicates per cell. The Monte Carlo half dominates the runtime:
//! the full binary takes roughly 45 minutes on one core.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use twimpute::baselines::BaselineMethod;
use twimpute::constraints::{build_cumsum_constraints, difference_panel};
use twimpute::dgp::{apply_pattern, generate, DgpSpec, MissingPattern, Model};
use twimpute::metrics::{
    autocovariances, fit_downstream, marginal_wasserstein, run_method, true_parameters, EvalMethod,
};
use twimpute::nalgebra::{DMatrix, DVector};
use twimpute::objective::{assemble_h, eval_f};
use twimpute::ot::{solve_1d_monotone, solve_exact, solve_sinkhorn, TransportPlan};
use twimpute::seeding::derive_seed;
use twimpute::solver::InitStrategy;
use twimpute::{
    em_identity_check, solve_identification, solve_subproblem, twi, ConstraintSet,
    IdentificationOutcome, MarkovScenario, SubproblemMethod, TimeSeriesPanel, TwiConfig,
};

const SWEEP_REPS: usize = 100;
const SWEEP_N: usize = 1000;
const MASTER_SEED: u64 = 42;
const SCORE_EMBED: usize = 3;

fn assert_within(label: &str, actual: f64, target: f64, tol: f64) {
    assert!(
        (actual - target).abs() <= tol,
        "{label}: got {actual:.4}, expected {target} within +/-{tol}"
    );
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    }
}

fn linear() -> EvalMethod {
    EvalMethod::Baseline(BaselineMethod::Linear)
}

fn twi_lin() -> EvalMethod {
    EvalMethod::Twi { cfg: TwiConfig::default(), init: BaselineMethod::Linear }
}

fn ktwi_lin() -> EvalMethod {
    EvalMethod::KTwi { cfg: TwiConfig::default(), cutoffs: None, init: BaselineMethod::Linear }
}

/// Per-replicate scores of one method inside a sweep.
struct MethodStats {
    label: String,
    losses: Vec<f64>,
    fits: Vec<BTreeMap<String, f64>>,
    gamma1: Vec<f64>,
}

impl MethodStats {
    fn rmse(&self, key: &str, target: f64) -> f64 {
        batch_rmse(&self.fits, key, target, 0, self.fits.len())
    }
}

fn batch_rmse(fits: &[BTreeMap<String, f64>], key: &str, target: f64, lo: usize, hi: usize) -> f64 {
    let sq: f64 = fits[lo..hi].iter().map(|f| (f[key] - target).powi(2)).sum();
    (sq / (hi - lo) as f64).sqrt()
}

/// One (model, pattern) Monte Carlo cell evaluated for several methods with
/// paired replicates: replicate i uses the same generated series and mask
/// for every method.
struct Sweep {
    methods: Vec<MethodStats>,
    /// Replicate average of the full series' lag-1 autocovariance.
    truth_gamma1: f64,
    target: BTreeMap<String, f64>,
}

impl Sweep {
    fn method(&self, label: &str) -> &MethodStats {
        self.methods
            .iter()
            .find(|m| m.label == label)
            .unwrap_or_else(|| panic!("no method labelled {label}"))
    }
}

fn lag1_autocovariance(series: &DMatrix<f64>) -> f64 {
    let col: Vec<f64> = series.column(0).iter().copied().collect();
    autocovariances(&col, 1).unwrap()[1]
}

fn run_sweep(model: Model, pattern: MissingPattern, methods: Vec<EvalMethod>) -> Sweep {
    let fit_params = !matches!(model, Model::Cyc);
    let mut stats: Vec<MethodStats> = methods
        .iter()
        .map(|m| MethodStats {
            label: m.label(),
            losses: Vec::with_capacity(SWEEP_REPS),
            fits: Vec::with_capacity(SWEEP_REPS),
            gamma1: Vec::with_capacity(SWEEP_REPS),
        })
        .collect();
    let mut truth_gamma1 = Vec::with_capacity(SWEEP_REPS);
    for rep in 0..SWEEP_REPS {
        let gen_seed = derive_seed(MASTER_SEED, 2 * rep as u64);
        let mask_seed = derive_seed(MASTER_SEED, 2 * rep as u64 + 1);
        let full = generate(&DgpSpec::new(model.clone(), SWEEP_N, gen_seed)).unwrap();
        let masked = apply_pattern(&full, &pattern, mask_seed).unwrap();
        if full.dim() == 1 {
            truth_gamma1.push(lag1_autocovariance(full.values()));
        }
        for (method, out) in methods.iter().zip(stats.iter_mut()) {
            let imputed = run_method(&masked, method, &model).unwrap();
            out.losses
                .push(marginal_wasserstein(&imputed, full.values(), SCORE_EMBED, 2.0).unwrap());
            if fit_params {
                out.fits.push(fit_downstream(&imputed, &model).unwrap());
            }
            if imputed.ncols() == 1 {
                out.gamma1.push(lag1_autocovariance(&imputed));
            }
        }
    }
    Sweep {
        methods: stats,
        truth_gamma1: if truth_gamma1.is_empty() { f64::NAN } else { mean(&truth_gamma1) },
        target: if fit_params { true_parameters(&model) } else { BTreeMap::new() },
    }
}

fn ar_random() -> &'static Sweep {
    static CELL: OnceLock<Sweep> = OnceLock::new();
    CELL.get_or_init(|| {
        run_sweep(Model::ar_default(), MissingPattern::pattern_i(), vec![linear(), twi_lin()])
    })
}

fn tar_random() -> &'static Sweep {
    static CELL: OnceLock<Sweep> = OnceLock::new();
    CELL.get_or_init(|| {
        run_sweep(
            Model::tar_default(),
            MissingPattern::pattern_i(),
            vec![linear(), twi_lin(), ktwi_lin()],
        )
    })
}

fn arma_random() -> &'static Sweep {
    static CELL: OnceLock<Sweep> = OnceLock::new();
    CELL.get_or_init(|| {
        run_sweep(Model::arma_default(), MissingPattern::pattern_i(), vec![twi_lin(), ktwi_lin()])
    })
}

fn tar_blocks() -> &'static Sweep {
    static CELL: OnceLock<Sweep> = OnceLock::new();
    CELL.get_or_init(|| {
        run_sweep(Model::tar_default(), MissingPattern::pattern_ii(), vec![twi_lin(), ktwi_lin()])
    })
}

fn nlvar_blocks() -> &'static Sweep {
    static CELL: OnceLock<Sweep> = OnceLock::new();
    CELL.get_or_init(|| {
        run_sweep(Model::nlvar_default(), MissingPattern::pattern_ii(), vec![twi_lin(), ktwi_lin()])
    })
}

fn nlvar_random() -> &'static Sweep {
    static CELL: OnceLock<Sweep> = OnceLock::new();
    CELL.get_or_init(|| {
        run_sweep(Model::nlvar_default(), MissingPattern::pattern_i(), vec![linear(), ktwi_lin()])
    })
}

#[test]
fn a01_transport_plans_have_exact_marginals() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for inst in 0..200 {
        let r = rng.gen_range(1..=18);
        let c = rng.gen_range(1..=18);
        let scale = 10f64.powi(rng.gen_range(-3..=3));
        let cost = DMatrix::from_fn(r, c, |_, _| scale * rng.gen::<f64>());
        let (plan, _) = solve_exact(&cost).unwrap();
        let err = plan.feasibility_error();
        assert!(err < 1e-8, "exact solver, instance {inst}: marginal error {err:.3e}");
        let (plan, _) = solve_sinkhorn(&cost, 0.05 * scale, 20_000, 1e-10).unwrap();
        let err = plan.feasibility_error();
        assert!(err < 1e-8, "sinkhorn, instance {inst}: marginal error {err:.3e}");
    }
}

/// Minimal average assignment cost over all permutations; with uniform
/// marginals and r == c the transport optimum is attained at a permutation.
fn permutation_minimum(cost: &DMatrix<f64>) -> f64 {
    fn descend(cost: &DMatrix<f64>, idx: &mut Vec<usize>, k: usize, best: &mut f64) {
        if k == idx.len() {
            let total: f64 = idx.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
            *best = best.min(total);
            return;
        }
        for i in k..idx.len() {
            idx.swap(k, i);
            descend(cost, idx, k + 1, best);
            idx.swap(k, i);
        }
    }
    let mut idx: Vec<usize> = (0..cost.nrows()).collect();
    let mut best = f64::INFINITY;
    descend(cost, &mut idx, 0, &mut best);
    best / cost.nrows() as f64
}

#[test]
fn a02_exact_solver_matches_enumeration_and_monotone_coupling() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for inst in 0..50 {
        let r = rng.gen_range(2..=6);
        let cost = DMatrix::from_fn(r, r, |_, _| rng.gen::<f64>());
        let (_, value) = solve_exact(&cost).unwrap();
        let oracle = permutation_minimum(&cost);
        assert!(
            (value - oracle).abs() <= 1e-10,
            "square instance {inst}: solver {value}, enumeration {oracle}"
        );
    }
    let orders = [1.0, 1.5, 2.0];
    for inst in 0..50 {
        let r = rng.gen_range(2..=12);
        let c = rng.gen_range(2..=12);
        let k = orders[inst % orders.len()];
        let mut a: Vec<f64> = (0..r).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let mut b: Vec<f64> = (0..c).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let cost = DMatrix::from_fn(r, c, |i, j| (a[i] - b[j]).abs().powf(k));
        let (_, value) = solve_exact(&cost).unwrap();
        let oracle = solve_1d_monotone(k, &a, &b).unwrap();
        assert!(
            (value - oracle).abs() <= 1e-10,
            "scalar instance {inst} (order {k}): solver {value}, monotone {oracle}"
        );
    }
}

#[test]
fn a03_objective_equals_its_quadratic_form_and_the_form_is_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let lambdas = [0.0, 0.1, 1.3];
    for inst in 0..50 {
        let p = rng.gen_range(2..=4);
        let n = rng.gen_range(4 * p..=50);
        let n1 = rng.gen_range(p..=n - p - 1);
        let lambda = lambdas[inst % lambdas.len()];
        let cfg = TwiConfig { n1: Some(n1), p, lambda, ..TwiConfig::default() };
        let plan = TransportPlan::random_feasible(n1 - p + 2, n - n1 - 1, 7000 + inst as u64);
        let w = DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let f = eval_f(&w, &plan, &cfg).unwrap();
        let form = assemble_h(&plan, n, &cfg).unwrap();
        let scale = f.abs().max(1.0);
        let quad = form.quad(&w);
        assert!(
            (f - quad).abs() <= 1e-10 * scale,
            "instance {inst}: objective {f}, operator form {quad}"
        );
        let dense = form.dense().unwrap();
        let wv = DVector::from_column_slice(w.column(0).as_slice());
        let explicit = (wv.transpose() * &dense * &wv)[(0, 0)];
        assert!(
            (f - explicit).abs() <= 1e-10 * scale,
            "instance {inst}: objective {f}, dense form {explicit}"
        );
        let asym = (&dense - dense.transpose()).abs().max();
        assert!(asym <= 1e-12, "instance {inst}: asymmetry {asym:.3e}");
        let eigen = dense.symmetric_eigen();
        let min_eig = eigen.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min_eig >= -1e-8, "instance {inst}: min eigenvalue {min_eig:.3e}");
        if lambda > 0.0 {
            assert!(
                min_eig >= lambda / 2.0 - 1e-8,
                "instance {inst}: min eigenvalue {min_eig:.3e} below ridge floor"
            );
        }
    }
}

#[test]
fn a04_alternating_trace_never_increases_across_models_and_patterns() {
    let n = 300;
    let models = [
        Model::ar_default(),
        Model::arma_default(),
        Model::tar_default(),
        Model::i1_default(),
        Model::Cyc,
        Model::nlvar_default(),
        Model::Al,
    ];
    let patterns = [MissingPattern::PatternI { count: 90 }, MissingPattern::pattern_ii()];
    let cfg = TwiConfig { max_outer_iters: 40, ..TwiConfig::default() };
    for (mi, model) in models.iter().enumerate() {
        for (pi, pattern) in patterns.iter().enumerate() {
            let full = generate(&DgpSpec::new(model.clone(), n, derive_seed(404, mi as u64))).unwrap();
            let masked =
                apply_pattern(&full, pattern, derive_seed(405, (2 * mi + pi) as u64)).unwrap();
            let result = match model {
                Model::I1 { .. } => {
                    let diffs = difference_panel(&masked).unwrap();
                    let set = build_cumsum_constraints(&masked).unwrap();
                    twi(&diffs, &set, &cfg, InitStrategy::LinearInterpolation).unwrap()
                }
                Model::Al => {
                    let set = ConstraintSet::compositional(&masked).unwrap();
                    twi(&masked, &set, &cfg, InitStrategy::LinearInterpolation).unwrap()
                }
                _ => {
                    let set = ConstraintSet::observed_equality(&masked);
                    twi(&masked, &set, &cfg, InitStrategy::LinearInterpolation).unwrap()
                }
            };
            assert!(result.objective_trace.len() >= 2);
            for (step, pair) in result.objective_trace.windows(2).enumerate() {
                assert!(
                    pair[1] <= pair[0] + 1e-10,
                    "model {mi}, pattern {pi}, step {step}: trace rose {} -> {}",
                    pair[0],
                    pair[1]
                );
            }
        }
    }
}

/// Stationarity residual of the series subproblem at one missing index:
/// the solution must equal the plan-weighted average of partner values over
/// all embeddings covering the index, scaled by the coverage counts.
fn stationarity_residual(
    w: &DVector<f64>,
    plan: &TransportPlan,
    n: usize,
    n1: usize,
    p: usize,
    s: usize,
) -> f64 {
    let r = (n1 - p + 2) as f64;
    let c = (n - n1 - 1) as f64;
    let i_lo = s.max(p - 1);
    let i_hi = (s + p - 1).min(n1);
    let j_lo = s.max(n1 + 1);
    let j_hi = (s + p - 1).min(n - 1);
    let mut numerator = 0.0;
    let mut denominator = 0.0;
    if i_lo <= i_hi {
        denominator += (i_hi - i_lo + 1) as f64 / r;
        for i in i_lo..=i_hi {
            for j in n1 + 1..n {
                numerator += plan.matrix[(i - (p - 1), j - n1 - 1)] * w[j - i + s];
            }
        }
    }
    if j_lo <= j_hi {
        denominator += (j_hi - j_lo + 1) as f64 / c;
        for j in j_lo..=j_hi {
            for i in p - 1..=n1 {
                numerator += plan.matrix[(i - (p - 1), j - n1 - 1)] * w[i + s - j];
            }
        }
    }
    (w[s] - numerator / denominator).abs()
}

#[test]
fn a05_converged_runs_satisfy_the_stationarity_fixed_point() {
    let n = 400;
    let p = 4;
    let n1 = 160;
    let full = generate(&DgpSpec::new(Model::ar_default(), n, derive_seed(505, 0))).unwrap();
    let masked =
        apply_pattern(&full, &MissingPattern::PatternI { count: 80 }, derive_seed(505, 1)).unwrap();
    let cfg = TwiConfig {
        n1: Some(n1),
        p,
        tol_rel: 1e-12,
        max_outer_iters: 300,
        ..TwiConfig::default()
    };
    let set = ConstraintSet::observed_equality(&masked);
    let result = twi(&masked, &set, &cfg, InitStrategy::LinearInterpolation).unwrap();
    assert!(result.converged, "run did not converge in {} iterations", result.iterations);
    let w = DVector::from_column_slice(result.imputed.column(0).as_slice());
    for s in masked.missing_in_column(0) {
        let res = stationarity_residual(&w, &result.plan, n, n1, p, s);
        assert!(res < 1e-8, "missing index {s}: stationarity residual {res:.3e}");
    }
    let report = em_identity_check(&result, &masked, &cfg).unwrap();
    assert!(report.checked > 0, "no interior missing index qualified for the identity");
    assert!(
        report.max_violation < 1e-6,
        "conditional-expectation identity violated by {:.3e}",
        report.max_violation
    );
}

#[test]
fn a06_single_missing_imputation_is_a_convex_combination_of_observed() {
    let n = 200;
    let n1 = 80;
    let full = generate(&DgpSpec::new(Model::ar_default(), n, derive_seed(606, 0))).unwrap();
    let mut mask = DMatrix::from_element(n, 1, false);
    mask[(n1, 0)] = true;
    let masked = TimeSeriesPanel::new(full.values().clone(), mask).unwrap();
    let cfg = TwiConfig {
        n1: Some(n1),
        p: 2,
        tol_rel: 1e-12,
        max_outer_iters: 200,
        ..TwiConfig::default()
    };
    let set = ConstraintSet::observed_equality(&masked);
    let result = twi(&masked, &set, &cfg, InitStrategy::LinearInterpolation).unwrap();
    let r = n1 as f64;
    let c = (n - n1 - 1) as f64;
    let denom = 1.0 / r + 1.0 / c;
    let plan = &result.plan.matrix;
    let mut weights = Vec::with_capacity(n - 1);
    let mut combination = 0.0;
    for t in 0..n1 {
        let weight = plan[(t, 0)] / denom;
        combination += weight * full.values()[(t, 0)];
        weights.push(weight);
    }
    for t in n1 + 1..n {
        let weight = plan[(n1 - 1, t - n1 - 1)] / denom;
        combination += weight * full.values()[(t, 0)];
        weights.push(weight);
    }
    let min_weight = weights.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(min_weight >= -1e-12, "negative weight {min_weight:.3e}");
    let total: f64 = weights.iter().sum();
    assert!((total - 1.0).abs() < 1e-8, "weights sum to {total}");
    let gap = (combination - result.imputed[(n1, 0)]).abs();
    assert!(gap < 1e-8, "weighted average misses the imputed value by {gap:.3e}");
}

#[test]
fn a07_direct_solve_matches_proximal_descent_under_linear_constraints() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    for inst in 0..20 {
        let p = rng.gen_range(2..=4);
        let n = rng.gen_range(30..=60);
        let n1 = rng.gen_range(p + 2..=n - p - 3);
        let rows = rng.gen_range(1..=3);
        let coeffs = DMatrix::from_fn(rows, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let anchor = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let rhs = &coeffs * &anchor;
        let set = ConstraintSet::linear_equality(n, coeffs, rhs).unwrap();
        let plan = TransportPlan::random_feasible(n1 - p + 2, n - n1 - 1, 7000 + inst as u64);
        let base = TwiConfig { n1: Some(n1), p, lambda: 0.1, ..TwiConfig::default() };
        let direct = TwiConfig { subproblem_method: SubproblemMethod::Direct, ..base.clone() };
        let proximal = TwiConfig { subproblem_method: SubproblemMethod::Proximal, ..base };
        let start = DMatrix::from_fn(n, 1, |t, _| anchor[t]);
        let d = solve_subproblem(&plan, &set, &direct, &start).unwrap();
        let g = solve_subproblem(&plan, &set, &proximal, &start).unwrap();
        let gap = (&d - &g).abs().max();
        assert!(gap < 1e-6, "instance {inst}: solutions differ by {gap:.3e}");
    }
}

#[test]
fn a08_identification_recovers_the_chain_from_two_cadences() {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    for inst in 0..100 {
        let p = rng.gen_range(0.01..0.99);
        let q = rng.gen_range(0.01..0.99);
        let k1 = rng.gen_range(3..12u32);
        let k2 = loop {
            let cand = rng.gen_range(3..12u32);
            if cand != k1 {
                break cand;
            }
        };
        let scenario = MarkovScenario::new(p, q, k1, k2).unwrap();
        match solve_identification(&scenario, true) {
            IdentificationOutcome::Unique { a, b } => {
                assert!(
                    (a - (1.0 - q)).abs() <= 1e-12 && (b - p).abs() <= 1e-12,
                    "instance {inst}: recovered ({a}, {b}), chain ({}, {p})",
                    1.0 - q
                );
            }
            other => panic!("instance {inst}: expected a unique solution, got {other}"),
        }
    }
    let equal = MarkovScenario::new(0.35, 0.2, 5, 5).unwrap();
    assert!(
        matches!(solve_identification(&equal, true), IdentificationOutcome::NonIdentified),
        "equal cadences must be flagged as non-identified"
    );
}

#[test]
fn a09_loss_shrinks_with_sample_size_under_one_sided_missingness() {
    let sizes = [250usize, 500, 1000, 2000];
    let reps = 20;
    let mut medians = Vec::with_capacity(sizes.len());
    for &n in &sizes {
        let n1 = 2 * n / 5;
        let mut losses = Vec::with_capacity(reps);
        for rep in 0..reps {
            let full =
                generate(&DgpSpec::new(Model::ar_default(), n, derive_seed(909, rep as u64)))
                    .unwrap();
            let mut post: Vec<usize> = (n1 + 1..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(910, rep as u64));
            post.shuffle(&mut rng);
            let mut mask = DMatrix::from_element(n, 1, false);
            for &t in post.iter().take(n / 4) {
                mask[(t, 0)] = true;
            }
            let masked =
                apply_pattern(&full, &MissingPattern::Custom { mask }, 0).unwrap();
            let cfg = TwiConfig {
                n1: Some(n1),
                tol_rel: 1e-9,
                max_outer_iters: 200,
                ..TwiConfig::default()
            };
            let set = ConstraintSet::observed_equality(&masked);
            let result = twi(&masked, &set, &cfg, InitStrategy::LinearInterpolation).unwrap();
            losses.push(
                marginal_wasserstein(&result.imputed, full.values(), SCORE_EMBED, 2.0).unwrap(),
            );
        }
        medians.push(median(&losses));
    }
    for (step, pair) in medians.windows(2).enumerate() {
        assert!(
            pair[1] < pair[0],
            "median loss must fall from n={} to n={}: {:?}",
            sizes[step],
            sizes[step + 1],
            medians
        );
    }
}

#[test]
fn a10_random_missing_losses_match_the_pinned_values() {
    let ar = ar_random();
    assert_within("AR linear", mean(&ar.method("linear").losses), 0.41, 0.05);
    assert_within("AR twi", mean(&ar.method("twi-linear").losses), 0.40, 0.05);
    let tar = tar_random();
    assert_within("TAR linear", mean(&tar.method("linear").losses), 1.12, 0.15);
    assert_within("TAR twi", mean(&tar.method("twi-linear").losses), 0.96, 0.15);
    assert_within("TAR ktwi", mean(&tar.method("ktwi-linear").losses), 0.81, 0.15);
    let arma = arma_random();
    assert_within("ARMA twi", mean(&arma.method("twi-linear").losses), 0.40, 0.06);
    assert_within("ARMA ktwi", mean(&arma.method("ktwi-linear").losses), 0.38, 0.06);
}

#[test]
fn a11_block_missing_losses_match_the_pinned_values() {
    let tar = tar_blocks();
    assert_within("TAR twi", mean(&tar.method("twi-linear").losses), 0.84, 0.15);
    assert_within("TAR ktwi", mean(&tar.method("ktwi-linear").losses), 0.73, 0.15);
    let nlvar = nlvar_blocks();
    assert_within("NLVAR twi", mean(&nlvar.method("twi-linear").losses), 2.13, 0.25);
    assert_within("NLVAR ktwi", mean(&nlvar.method("ktwi-linear").losses), 2.02, 0.25);
}

#[test]
fn a12_downstream_parameter_errors_match_the_pinned_values() {
    let tar = tar_random();
    let target = tar.target["phi2"];
    let lin = tar.method("linear");
    let imp = tar.method("twi-linear");
    assert_within("TAR phi2 linear", lin.rmse("phi2", target), 0.07, 0.03);
    assert_within("TAR phi2 twi", imp.rmse("phi2", target), 0.05, 0.03);
    let batches = SWEEP_REPS / 10;
    let mut preserved = 0;
    for b in 0..batches {
        let (lo, hi) = (10 * b, 10 * (b + 1));
        if batch_rmse(&imp.fits, "phi2", target, lo, hi)
            <= batch_rmse(&lin.fits, "phi2", target, lo, hi)
        {
            preserved += 1;
        }
    }
    assert!(
        preserved * 10 >= 9 * batches,
        "error ordering held in only {preserved}/{batches} replicate batches"
    );
    let nlvar = nlvar_random();
    let target = nlvar.target["phi12"];
    assert_within("NLVAR phi12 linear", nlvar.method("linear").rmse("phi12", target), 3.10, 0.5);
    assert_within("NLVAR phi12 ktwi", nlvar.method("ktwi-linear").rmse("phi12", target), 1.02, 0.5);
}

#[test]
fn a13_autocovariance_errors_match_the_pinned_values() {
    let tar = tar_random();
    let reference = tar.truth_gamma1;
    let rmse_gamma = |stats: &MethodStats| {
        let sq: f64 = stats.gamma1.iter().map(|g| (g - reference).powi(2)).sum();
        (sq / stats.gamma1.len() as f64).sqrt()
    };
    let lin = rmse_gamma(tar.method("linear"));
    let imp = rmse_gamma(tar.method("twi-linear"));
    assert_within("TAR lag-1 autocovariance linear", lin, 0.81, 0.15);
    assert_within("TAR lag-1 autocovariance twi", imp, 0.46, 0.15);
    assert!(imp < lin, "expected the imputation error {imp:.4} below the baseline {lin:.4}");
}

#[test]
fn a14_compositional_imputations_stay_on_the_simplex() {
    let n = 500;
    let patterns = [MissingPattern::PatternI { count: 150 }, MissingPattern::pattern_ii()];
    let mut rows_checked = 0;
    for (pi, pattern) in patterns.iter().enumerate() {
        for rep in 0..5u64 {
            let full =
                generate(&DgpSpec::new(Model::Al, n, derive_seed(1414, 2 * rep))).unwrap();
            let masked = apply_pattern(&full, pattern, derive_seed(1414, 2 * rep + 1)).unwrap();
            let imputed = run_method(&masked, &twi_lin(), &Model::Al).unwrap();
            for t in 0..n {
                if (0..masked.dim()).all(|l| !masked.is_missing(t, l)) {
                    continue;
                }
                rows_checked += 1;
                let row_sum: f64 = imputed.row(t).iter().sum();
                assert!(
                    (row_sum - 1.0).abs() <= 1e-8,
                    "pattern {pi}, rep {rep}, row {t}: sums to {row_sum}"
                );
                for l in 0..imputed.ncols() {
                    let v = imputed[(t, l)];
                    assert!(
                        (-1e-8..=1.0 + 1e-8).contains(&v),
                        "pattern {pi}, rep {rep}, cell ({t}, {l}): value {v} leaves [0, 1]"
                    );
                }
            }
        }
    }
    assert!(rows_checked > 0);
}
