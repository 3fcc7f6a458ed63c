//! Command-line front end: simulate benchmark data, impute CSV files, run
//! Monte Carlo method comparisons, score imputations against the truth,
//! and print the Markov identification analysis. Every subcommand is a
//! deterministic function of its flags, seed, and input files, and each
//! payload can be replayed from JSON via `run --config`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use twimpute::baselines::{impute_baseline, BaselineMethod};
use twimpute::dgp::{apply_pattern, generate, DgpSpec, MissingPattern, Model};
use twimpute::metrics::{
    autocovariances, benchmark, fit_downstream, marginal_wasserstein, true_parameters, EvalMethod,
    EvalReport,
};
use twimpute::nalgebra::{DMatrix, DVector};
use twimpute::seeding::derive_seed;
use twimpute::theory::{solve_identification, MarkovScenario};
use twimpute::{
    k_twi, read_csv, twi, write_csv, ConstraintSet, InitStrategy, OtMethod, Result,
    SubproblemMethod, TimeSeriesPanel, TwiConfig, TwiError,
};

/// Cell spellings treated as missing when reading CSV input.
const MISSING_TOKENS: &[&str] = &["NaN", "nan", "NA", ""];

#[derive(Parser)]
#[command(
    name = "twimpute",
    version,
    about = "Temporal Wasserstein imputation for time series with missing values"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a model, apply a missing pattern, and write full/masked CSVs.
    Simulate(SimulateArgs),
    /// Fill the missing cells of a CSV file; writes the completed series and
    /// a JSON run report.
    Impute(ImputeArgs),
    /// Monte Carlo comparison of imputation methods over models and patterns.
    Benchmark(BenchmarkArgs),
    /// Score an imputed CSV against the complete reference series.
    Evaluate(EvaluateArgs),
    /// Closed-form identification analyses.
    Theory(TheoryArgs),
    /// Replay a subcommand payload from a JSON config file.
    Run(RunArgs),
}

/// One serialized subcommand payload; reports embed it so any run can be
/// reproduced with `run --config`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "snake_case")]
enum RunConfig {
    Simulate(SimulateArgs),
    Impute(ImputeArgs),
    Benchmark(BenchmarkArgs),
    Evaluate(EvaluateArgs),
    Theory(TheoryArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct SimulateArgs {
    /// Model tag: ar, arma, tar, i1, cyc, nlvar, or al.
    #[arg(long)]
    model: String,
    /// Series length.
    #[arg(long, default_value_t = 1000)]
    #[serde(default = "default_n")]
    n: usize,
    /// Missing pattern: "1" (300 random rows), "1:<count>", "2" (6-in-20
    /// periodic blocks), "2:<block>,<run>,<offset>", or "none".
    #[arg(long, default_value = "1")]
    #[serde(default = "default_pattern")]
    pattern: String,
    /// Master seed; generation and masking use derived streams, matching
    /// the first benchmark replicate.
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    seed: u64,
    /// Output stem: writes <out>.full.csv and <out>.masked.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct ImputeArgs {
    /// Input CSV; cells reading NaN, nan, NA, or empty are missing.
    #[arg(long = "in")]
    #[serde(rename = "in")]
    input: PathBuf,
    /// Method: twi, ktwi, linear, locf, mean, or scalar-filter.
    #[arg(long, default_value = "twi")]
    #[serde(default = "default_method")]
    method: String,
    /// Embedding lag order.
    #[arg(long, default_value_t = 6)]
    #[serde(default = "default_p")]
    p: usize,
    /// Cut-off: an absolute index ("400") or a fraction of n ("0.4");
    /// defaults to 0.4n.
    #[arg(long)]
    #[serde(default)]
    n1: Option<String>,
    /// Ridge penalty on the imputed series.
    #[arg(long, default_value_t = 0.0)]
    #[serde(default)]
    lambda: f64,
    /// Ground-cost exponent.
    #[arg(long, default_value_t = 2.0)]
    #[serde(default = "default_k")]
    k: f64,
    /// Comma-separated ktwi cut-offs, absolute or fractional; defaults to
    /// 0.25,0.5,0.75.
    #[arg(long)]
    #[serde(default)]
    cutoffs: Option<String>,
    /// JSON constraint specification file; when omitted the observed cells
    /// are pinned at their values.
    #[arg(long)]
    #[serde(default)]
    constraints: Option<PathBuf>,
    /// Initialization of the missing cells: linear, locf, or mean.
    #[arg(long, default_value = "linear")]
    #[serde(default = "default_init")]
    init: String,
    /// Entropic-regularization strength; exact transport when omitted.
    #[arg(long)]
    #[serde(default)]
    sinkhorn: Option<f64>,
    /// Outer iteration cap.
    #[arg(long, default_value_t = 100)]
    #[serde(default = "default_max_iters")]
    max_iters: usize,
    /// Relative objective-decrease tolerance.
    #[arg(long, default_value_t = 1e-6)]
    #[serde(default = "default_tol_rel")]
    tol_rel: f64,
    /// Output stem: writes <out>.imputed.csv and <out>.report.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct BenchmarkArgs {
    /// Comma-separated model tags (ar, arma, tar, i1, cyc, nlvar, al).
    #[arg(long, default_value = "ar")]
    #[serde(default = "default_models")]
    models: String,
    /// Comma-separated pattern tags (same syntax as simulate, sans "none").
    #[arg(long, default_value = "1")]
    #[serde(default = "default_pattern")]
    patterns: String,
    /// Comma-separated method tags: linear, locf, mean, scalar-filter, twi,
    /// ktwi; twi/ktwi take an init suffix, e.g. twi_lin, ktwi_locf.
    #[arg(long, default_value = "linear,twi")]
    #[serde(default = "default_methods")]
    methods: String,
    /// Monte Carlo replicates per cell.
    #[arg(long, default_value_t = 100)]
    #[serde(default = "default_reps")]
    reps: usize,
    /// Series length.
    #[arg(long, default_value_t = 1000)]
    #[serde(default = "default_n")]
    n: usize,
    /// Master seed; replicate streams are derived from it.
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    seed: u64,
    /// Output stem: writes <out>.csv and <out>.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct EvaluateArgs {
    /// Completed series CSV.
    #[arg(long)]
    imputed: PathBuf,
    /// Reference series CSV.
    #[arg(long)]
    truth: PathBuf,
    /// Embedding length for the Wasserstein metric.
    #[arg(long, default_value_t = 3)]
    #[serde(default = "default_embed")]
    embed: usize,
    /// Wasserstein order.
    #[arg(long, default_value_t = 2.0)]
    #[serde(default = "default_k")]
    k: f64,
    /// Model tag; adds downstream parameter fits and scores differences
    /// instead of levels for i1.
    #[arg(long)]
    #[serde(default)]
    model: Option<String>,
    /// Output JSON path; stdout when omitted.
    #[arg(long)]
    #[serde(default)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct TheoryArgs {
    #[command(subcommand)]
    command: TheoryCommand,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TheoryCommand {
    /// Two-state Markov chain under periodic missingness on both sides of
    /// the cut-off.
    Markov(MarkovArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct MarkovArgs {
    /// Transition probability P(x_t = 1 | x_{t-1} = 0).
    #[arg(long)]
    p: f64,
    /// Transition probability P(x_t = 0 | x_{t-1} = 1).
    #[arg(long)]
    q: f64,
    /// Missing cadence before the cut-off (> 2).
    #[arg(long)]
    k1: u32,
    /// Missing cadence after the cut-off (> 2).
    #[arg(long)]
    k2: u32,
    /// Print the unconstrained solution family instead of imposing the
    /// stable imputation rule.
    #[arg(long)]
    #[serde(default)]
    no_stability: bool,
}

#[derive(Debug, Clone, Args)]
struct RunArgs {
    /// JSON file holding one subcommand payload; reports written by the
    /// other subcommands embed a compatible `config` object.
    #[arg(long)]
    config: PathBuf,
}

fn default_n() -> usize {
    1000
}
fn default_pattern() -> String {
    "1".into()
}
fn default_method() -> String {
    "twi".into()
}
fn default_p() -> usize {
    6
}
fn default_k() -> f64 {
    2.0
}
fn default_init() -> String {
    "linear".into()
}
fn default_max_iters() -> usize {
    100
}
fn default_tol_rel() -> f64 {
    1e-6
}
fn default_models() -> String {
    "ar".into()
}
fn default_methods() -> String {
    "linear,twi".into()
}
fn default_reps() -> usize {
    100
}
fn default_embed() -> usize {
    3
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 2 for configuration/input problems, 3 for solver failures.
fn exit_code(err: &TwiError) -> u8 {
    match err {
        TwiError::Io { .. }
        | TwiError::Parse { .. }
        | TwiError::Shape(_)
        | TwiError::Config(_) => 2,
        TwiError::Infeasible(_) | TwiError::Numerical(_) => 3,
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Impute(args) => cmd_impute(&args),
        Command::Benchmark(args) => cmd_benchmark(&args),
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::Theory(args) => cmd_theory(&args),
        Command::Run(args) => {
            let text = read_text(&args.config)?;
            let config: RunConfig = serde_json::from_str(&text)
                .map_err(|e| TwiError::Config(format!("bad run config: {e}")))?;
            match config {
                RunConfig::Simulate(a) => cmd_simulate(&a),
                RunConfig::Impute(a) => cmd_impute(&a),
                RunConfig::Benchmark(a) => cmd_benchmark(&a),
                RunConfig::Evaluate(a) => cmd_evaluate(&a),
                RunConfig::Theory(a) => cmd_theory(&a),
            }
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| TwiError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| TwiError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// `<stem>.<suffix>` without touching any existing extension in the stem.
fn path_with(stem: &Path, suffix: &str) -> PathBuf {
    let mut name = stem.as_os_str().to_os_string();
    name.push(".");
    name.push(suffix);
    PathBuf::from(name)
}

fn parse_model(tag: &str) -> Result<Model> {
    match tag.trim().to_ascii_lowercase().as_str() {
        "ar" => Ok(Model::ar_default()),
        "arma" => Ok(Model::arma_default()),
        "tar" => Ok(Model::tar_default()),
        "i1" => Ok(Model::i1_default()),
        "cyc" => Ok(Model::Cyc),
        "nlvar" => Ok(Model::nlvar_default()),
        "al" => Ok(Model::Al),
        other => Err(TwiError::Config(format!("unknown model tag {other:?}"))),
    }
}

/// `None` means "leave everything observed" (tag "none").
fn parse_pattern(tag: &str) -> Result<Option<MissingPattern>> {
    let tag = tag.trim();
    if tag.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    let (head, detail) = match tag.split_once(':') {
        Some((h, d)) => (h, Some(d)),
        None => (tag, None),
    };
    match head {
        "1" => {
            let count = match detail {
                Some(text) => text.parse().map_err(|_| {
                    TwiError::Config(format!("bad pattern count in {tag:?}"))
                })?,
                None => 300,
            };
            Ok(Some(MissingPattern::PatternI { count }))
        }
        "2" => match detail {
            Some(text) => {
                let parts: Vec<&str> = text.split(',').collect();
                if parts.len() != 3 {
                    return Err(TwiError::Config(format!(
                        "pattern 2 detail must be <block>,<run>,<offset>, got {tag:?}"
                    )));
                }
                let mut nums = [0usize; 3];
                for (slot, part) in nums.iter_mut().zip(&parts) {
                    *slot = part.trim().parse().map_err(|_| {
                        TwiError::Config(format!("bad pattern number in {tag:?}"))
                    })?;
                }
                Ok(Some(MissingPattern::PatternII {
                    block: nums[0],
                    run: nums[1],
                    offset: nums[2],
                }))
            }
            None => Ok(Some(MissingPattern::pattern_ii())),
        },
        other => Err(TwiError::Config(format!("unknown pattern tag {other:?}"))),
    }
}

/// An index flag: integers are absolute, values in (0, 1) are fractions of
/// n, floored.
fn parse_index(token: &str, n: usize) -> Result<usize> {
    let token = token.trim();
    if let Ok(index) = token.parse::<usize>() {
        return Ok(index);
    }
    let fraction: f64 = token
        .parse()
        .map_err(|_| TwiError::Config(format!("cannot parse index {token:?}")))?;
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(TwiError::Config(format!(
            "fractional index must lie in (0, 1), got {token}"
        )));
    }
    Ok((fraction * n as f64).floor() as usize)
}

fn parse_index_list(text: &str, n: usize) -> Result<Vec<usize>> {
    text.split(',').map(|token| parse_index(token, n)).collect()
}

fn parse_init(tag: &str) -> Result<InitStrategy> {
    match tag.trim().to_ascii_lowercase().as_str() {
        "linear" | "lin" => Ok(InitStrategy::LinearInterpolation),
        "locf" => Ok(InitStrategy::Locf),
        "mean" => Ok(InitStrategy::Mean),
        other => Err(TwiError::Config(format!("unknown init tag {other:?}"))),
    }
}

fn parse_baseline(tag: &str) -> Result<BaselineMethod> {
    match tag {
        "linear" | "lin" => Ok(BaselineMethod::Linear),
        "locf" => Ok(BaselineMethod::Locf),
        "mean" => Ok(BaselineMethod::Mean),
        "sf" | "scalarf" | "scalar_filter" => Ok(BaselineMethod::scalar_filter_default()),
        other => Err(TwiError::Config(format!("unknown method tag {other:?}"))),
    }
}

fn parse_eval_method(tag: &str) -> Result<EvalMethod> {
    let norm = tag.trim().to_ascii_lowercase().replace('-', "_");
    let init_of = |rest: &str| -> Result<BaselineMethod> {
        let rest = rest.trim_start_matches('_');
        if rest.is_empty() {
            Ok(BaselineMethod::Linear)
        } else {
            parse_baseline(rest)
        }
    };
    if let Some(rest) = norm.strip_prefix("ktwi") {
        return Ok(EvalMethod::KTwi {
            cfg: TwiConfig::default(),
            cutoffs: None,
            init: init_of(rest)?,
        });
    }
    if let Some(rest) = norm.strip_prefix("twi") {
        return Ok(EvalMethod::Twi { cfg: TwiConfig::default(), init: init_of(rest)? });
    }
    Ok(EvalMethod::Baseline(parse_baseline(&norm)?))
}

fn split_tags(text: &str) -> Vec<&str> {
    text.split(',').map(str::trim).filter(|t| !t.is_empty()).collect()
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let model = parse_model(&args.model)?;
    let spec = DgpSpec::new(model, args.n, derive_seed(args.seed, 0));
    let full = generate(&spec)?;
    let masked = match parse_pattern(&args.pattern)? {
        Some(pattern) => apply_pattern(&full, &pattern, derive_seed(args.seed, 1))?,
        None => full.clone(),
    };
    let full_path = path_with(&args.out, "full.csv");
    let masked_path = path_with(&args.out, "masked.csv");
    write_csv(&full, &full_path)?;
    write_csv(&masked, &masked_path)?;
    println!(
        "wrote {} and {} ({} rows x {} columns, {} missing cells)",
        full_path.display(),
        masked_path.display(),
        full.n(),
        full.dim(),
        masked.n_missing()
    );
    Ok(())
}

/// How the impute subcommand treats its method tag.
enum ImputeMethod {
    Baseline(BaselineMethod),
    Twi,
    KTwi,
}

fn parse_impute_method(tag: &str) -> Result<ImputeMethod> {
    let norm = tag.trim().to_ascii_lowercase().replace('-', "_");
    match norm.as_str() {
        "twi" => Ok(ImputeMethod::Twi),
        "ktwi" => Ok(ImputeMethod::KTwi),
        other => Ok(ImputeMethod::Baseline(parse_baseline(other)?)),
    }
}

#[derive(Serialize)]
struct ImputeReport {
    method: String,
    n: usize,
    dim: usize,
    n_missing: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    n1: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cutoffs: Option<Vec<usize>>,
    iterations: usize,
    converged: bool,
    /// Objective values per cut-off segment, two per outer iteration.
    segments: Vec<Vec<f64>>,
    warnings: Vec<String>,
    config: RunConfig,
}

fn split_segments(trace: &[f64], starts: &[usize]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(starts.len());
    for (idx, &start) in starts.iter().enumerate() {
        let end = starts.get(idx + 1).copied().unwrap_or(trace.len());
        out.push(trace[start..end].to_vec());
    }
    out
}

fn build_twi_config(args: &ImputeArgs, n: usize) -> Result<TwiConfig> {
    let n1 = match &args.n1 {
        Some(token) => Some(parse_index(token, n)?),
        None => None,
    };
    let ot_method = match args.sinkhorn {
        Some(epsilon) => OtMethod::Sinkhorn { epsilon },
        None => OtMethod::Exact,
    };
    Ok(TwiConfig {
        n1,
        p: args.p,
        lambda: args.lambda,
        cost_order: args.k,
        ot_method,
        max_outer_iters: args.max_iters,
        tol_rel: args.tol_rel,
        subproblem_method: SubproblemMethod::Direct,
    })
}

/// Constraint specification read from `--constraints <file>`: any of
/// `observed` (default true unless `linear` is given), `box: [lo, hi]`,
/// `simplex: true`, and `linear: {coeffs: [[...]], rhs: [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConstraintSpec {
    #[serde(default)]
    observed: Option<bool>,
    #[serde(rename = "box", default)]
    box_bounds: Option<[f64; 2]>,
    #[serde(default)]
    simplex: bool,
    #[serde(default)]
    linear: Option<LinearSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LinearSpec {
    coeffs: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

fn build_constraints(
    spec_path: Option<&PathBuf>,
    panel: &TimeSeriesPanel,
) -> Result<ConstraintSet> {
    let path = match spec_path {
        None => return Ok(ConstraintSet::observed_equality(panel)),
        Some(path) => path,
    };
    let spec: ConstraintSpec = serde_json::from_str(&read_text(path)?)
        .map_err(|e| TwiError::Config(format!("bad constraint spec: {e}")))?;
    let observed = spec.observed.unwrap_or(spec.linear.is_none());
    let mut set = match (&spec.linear, observed) {
        (Some(_), true) => {
            return Err(TwiError::Config(
                "observed-cell pins and a general linear system cannot be combined".into(),
            ));
        }
        (Some(linear), false) => {
            if panel.dim() != 1 {
                return Err(TwiError::Config(
                    "linear constraints are supported for univariate series only".into(),
                ));
            }
            let n = panel.n();
            let m = linear.coeffs.len();
            for (i, row) in linear.coeffs.iter().enumerate() {
                if row.len() != n {
                    return Err(TwiError::Shape(format!(
                        "constraint row {i} has {} coefficients for a series of length {n}",
                        row.len()
                    )));
                }
            }
            let coeffs = DMatrix::from_fn(m, n, |i, j| linear.coeffs[i][j]);
            let rhs = DVector::from_vec(linear.rhs.clone());
            ConstraintSet::linear_equality(n, coeffs, rhs)?
        }
        (None, true) => ConstraintSet::observed_equality(panel),
        (None, false) => ConstraintSet::unconstrained(panel.n(), panel.dim()),
    };
    if let Some([lower, upper]) = spec.box_bounds {
        set = set.with_box(lower, upper)?;
    }
    if spec.simplex {
        set = set.with_simplex()?;
    }
    Ok(set)
}

fn cmd_impute(args: &ImputeArgs) -> Result<()> {
    let panel = read_csv(&args.input, MISSING_TOKENS)?;
    let n = panel.n();
    let config = RunConfig::Impute(args.clone());
    let (values, report) = match parse_impute_method(&args.method)? {
        ImputeMethod::Baseline(method) => {
            let values = impute_baseline(&panel, method)?;
            let report = ImputeReport {
                method: args.method.clone(),
                n,
                dim: panel.dim(),
                n_missing: panel.n_missing(),
                n1: None,
                cutoffs: None,
                iterations: 0,
                converged: true,
                segments: Vec::new(),
                warnings: Vec::new(),
                config,
            };
            (values, report)
        }
        method @ (ImputeMethod::Twi | ImputeMethod::KTwi) => {
            let cfg = build_twi_config(args, n)?;
            let set = build_constraints(args.constraints.as_ref(), &panel)?;
            let init = parse_init(&args.init)?;
            let (result, n1, cutoffs) = match method {
                ImputeMethod::Twi => {
                    let result = twi(&panel, &set, &cfg, init)?;
                    (result, Some(cfg.resolved_n1(n)), None)
                }
                _ => {
                    let cuts = match &args.cutoffs {
                        Some(text) => parse_index_list(text, n)?,
                        None => vec![n / 4, n / 2, 3 * n / 4],
                    };
                    let result = k_twi(&panel, &set, &cfg, &cuts, init)?;
                    (result, None, Some(cuts))
                }
            };
            let report = ImputeReport {
                method: args.method.clone(),
                n,
                dim: panel.dim(),
                n_missing: panel.n_missing(),
                n1,
                cutoffs,
                iterations: result.iterations,
                converged: result.converged,
                segments: split_segments(&result.objective_trace, &result.segment_starts),
                warnings: result.warnings.clone(),
                config,
            };
            (result.imputed, report)
        }
    };
    let out_panel = TimeSeriesPanel::fully_observed(values)?;
    let csv_path = path_with(&args.out, "imputed.csv");
    let report_path = path_with(&args.out, "report.json");
    write_csv(&out_panel, &csv_path)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| TwiError::Config(format!("report serialization: {e}")))?;
    write_text(&report_path, &format!("{json}\n"))?;
    println!(
        "wrote {} and {} ({} cells imputed, {} iterations, converged: {})",
        csv_path.display(),
        report_path.display(),
        report.n_missing,
        report.iterations,
        report.converged
    );
    Ok(())
}

/// Builds the worker pool for benchmark sweeps; TWIMPUTE_THREADS caps it.
fn build_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(text) = std::env::var("TWIMPUTE_THREADS") {
        let threads: usize = text.trim().parse().ok().filter(|t| *t > 0).ok_or_else(|| {
            TwiError::Config(format!(
                "TWIMPUTE_THREADS must be a positive integer, got {text:?}"
            ))
        })?;
        builder = builder.num_threads(threads);
    }
    builder
        .build()
        .map_err(|e| TwiError::Config(format!("cannot build the worker pool: {e}")))
}

fn push_row(text: &mut String, report: &EvalReport, metric: &str, value: &str) {
    text.push_str(&format!(
        "{},{},{},{},{}\n",
        report.model, report.pattern, report.method, metric, value
    ));
}

fn render_benchmark_csv(reports: &[EvalReport]) -> String {
    let mut text = String::from("model,pattern,method,metric,value\n");
    for report in reports {
        push_row(&mut text, report, "n_reps", &report.n_reps.to_string());
        push_row(&mut text, report, "failures", &report.failures.to_string());
        push_row(
            &mut text,
            report,
            "wasserstein_loss",
            &format!("{}", report.wasserstein_loss),
        );
        push_row(
            &mut text,
            report,
            "wasserstein_stderr",
            &format!("{}", report.wasserstein_stderr),
        );
        for (lag, value) in report.acf_rmse.iter().enumerate() {
            push_row(&mut text, report, &format!("acf_rmse_lag{lag}"), &format!("{value}"));
        }
        for (name, value) in &report.parameter_errors {
            push_row(&mut text, report, &format!("param_rmse_{name}"), &format!("{value}"));
        }
    }
    text
}

fn cmd_benchmark(args: &BenchmarkArgs) -> Result<()> {
    let models = split_tags(&args.models)
        .into_iter()
        .map(parse_model)
        .collect::<Result<Vec<_>>>()?;
    let patterns = split_tags(&args.patterns)
        .into_iter()
        .map(|tag| {
            parse_pattern(tag)?.ok_or_else(|| {
                TwiError::Config("pattern \"none\" leaves nothing to benchmark".into())
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let methods = split_tags(&args.methods)
        .into_iter()
        .map(parse_eval_method)
        .collect::<Result<Vec<_>>>()?;
    if models.is_empty() || patterns.is_empty() || methods.is_empty() {
        return Err(TwiError::Config(
            "benchmark needs at least one model, pattern, and method".into(),
        ));
    }
    let pool = build_pool()?;
    let mut reports = Vec::new();
    for model in &models {
        for pattern in &patterns {
            let spec = DgpSpec::new(model.clone(), args.n, args.seed);
            let cell =
                pool.install(|| benchmark(&spec, pattern, &methods, args.reps, args.seed))?;
            reports.extend(cell);
        }
    }
    let csv_path = path_with(&args.out, "csv");
    let json_path = path_with(&args.out, "json");
    write_text(&csv_path, &render_benchmark_csv(&reports))?;
    let json = serde_json::to_string_pretty(&reports)
        .map_err(|e| TwiError::Config(format!("report serialization: {e}")))?;
    write_text(&json_path, &format!("{json}\n"))?;
    for report in &reports {
        println!(
            "{} / {} / {}: loss {:.4} (se {:.4}), failures {}/{}",
            report.model,
            report.pattern,
            report.method,
            report.wasserstein_loss,
            report.wasserstein_stderr,
            report.failures,
            report.n_reps
        );
    }
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

#[derive(Serialize)]
struct EvaluateReport {
    wasserstein_loss: f64,
    /// Per-lag absolute difference of the autocovariances (lags 0..=2);
    /// univariate series only.
    #[serde(skip_serializing_if = "Option::is_none")]
    acf_abs_error: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    parameters: Option<ParameterComparison>,
    config: RunConfig,
}

#[derive(Serialize)]
struct ParameterComparison {
    fitted_imputed: BTreeMap<String, f64>,
    fitted_truth: BTreeMap<String, f64>,
    target: BTreeMap<String, f64>,
}

fn column_differences(values: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if values.nrows() < 2 {
        return Err(TwiError::Shape(
            "differencing needs at least two rows".into(),
        ));
    }
    Ok(DMatrix::from_fn(values.nrows() - 1, values.ncols(), |t, j| {
        values[(t + 1, j)] - values[(t, j)]
    }))
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let imputed = read_csv(&args.imputed, MISSING_TOKENS)?;
    let truth = read_csv(&args.truth, MISSING_TOKENS)?;
    if !imputed.is_fully_observed() {
        return Err(TwiError::Config(
            "the imputed series still has missing cells".into(),
        ));
    }
    if !truth.is_fully_observed() {
        return Err(TwiError::Config(
            "the reference series has missing cells".into(),
        ));
    }
    let model = match &args.model {
        Some(tag) => Some(parse_model(tag)?),
        None => None,
    };
    let unit_root = matches!(model, Some(Model::I1 { .. }));
    let (scored_imputed, scored_truth) = if unit_root {
        (
            column_differences(imputed.values())?,
            column_differences(truth.values())?,
        )
    } else {
        (imputed.values().clone(), truth.values().clone())
    };
    let wasserstein_loss = marginal_wasserstein(&scored_imputed, &scored_truth, args.embed, args.k)?;
    let acf_abs_error = if imputed.dim() == 1 {
        let series_imputed: Vec<f64> = scored_imputed.column(0).iter().copied().collect();
        let series_truth: Vec<f64> = scored_truth.column(0).iter().copied().collect();
        let gamma_imputed = autocovariances(&series_imputed, 2)?;
        let gamma_truth = autocovariances(&series_truth, 2)?;
        Some(
            gamma_imputed
                .iter()
                .zip(&gamma_truth)
                .map(|(a, b)| (a - b).abs())
                .collect(),
        )
    } else {
        None
    };
    let parameters = match &model {
        Some(Model::Cyc) | None => None,
        Some(m) => Some(ParameterComparison {
            fitted_imputed: fit_downstream(imputed.values(), m)?,
            fitted_truth: fit_downstream(truth.values(), m)?,
            target: true_parameters(m),
        }),
    };
    let report = EvaluateReport {
        wasserstein_loss,
        acf_abs_error,
        parameters,
        config: RunConfig::Evaluate(args.clone()),
    };
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| TwiError::Config(format!("report serialization: {e}")))?;
    match &args.out {
        Some(path) => write_text(path, &format!("{json}\n"))?,
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_theory(args: &TheoryArgs) -> Result<()> {
    match &args.command {
        TheoryCommand::Markov(m) => {
            let scenario = MarkovScenario::new(m.p, m.q, m.k1, m.k2)?;
            println!(
                "two-state chain: p = {}, q = {} (stationary P(0) = {}, P(1) = {})",
                scenario.p,
                scenario.q,
                scenario.lambda1(),
                scenario.lambda2()
            );
            println!("missing cadences: k1 = {}, k2 = {}", scenario.k1, scenario.k2);
            let marginal = scenario.true_marginal();
            println!(
                "true pair marginal [(1,1), (1,0), (0,1), (0,0)]: [{}, {}, {}, {}]",
                marginal[0], marginal[1], marginal[2], marginal[3]
            );
            println!("{}", solve_identification(&scenario, !m.no_stability));
            Ok(())
        }
    }
}
