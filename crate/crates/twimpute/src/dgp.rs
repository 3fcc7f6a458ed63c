//! Synthetic data generators and missing-data patterns for benchmarking.
//!
//! Seven generating processes are provided: linear AR and ARMA recursions,
//! a threshold AR with regime-dependent noise, a unit-root process driven
//! by a stationary AR component, a noisy two-frequency cyclic trend, a
//! two-dimensional VAR with a sigmoid nonlinearity, and a three-component
//! compositional series obtained by pushing a latent VAR through the
//! additive-logistic map.
//!
//! Everything is a pure function of its inputs: the same spec and seed
//! reproduce the same panel bit for bit.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, TwiError};
use crate::panel::TimeSeriesPanel;
use crate::seeding::derive_seed;

/// Generating process with its coefficients.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    /// x_t = φ x_{t−1} + ε_t.
    Ar { phi: f64 },
    /// (1 − φ₁B) x_t = (1 + φ₂B) ε_t.
    Arma { phi1: f64, phi2: f64 },
    /// x_t = φ₁ x_{t−1} + ε_t when x_{t−1} ≤ τ, else φ₂ x_{t−1} + 0.5 ε_t.
    Tar { phi1: f64, phi2: f64, tau: f64 },
    /// x_t = x_{t−1} + z_t + ε_{t,2} with z_t = φ z_{t−1} + 0.5 ε_{t,1}.
    I1 { phi: f64 },
    /// x_t = 10 cos(0.23πt) + 6 cos(0.17πt) + 0.5 ε_t.
    Cyc,
    /// x_{t,1} = φ₁₁ x_{t−1,1} + φ₁₂ 𝔰(3 x_{t−1,2}) + 0.25 ε_{t,1},
    /// x_{t,2} = φ₂₁ x_{t−1,1} + φ₂₂ x_{t−1,2} + 3 ε_{t,2},
    /// with the centered sigmoid 𝔰(z) = 1/(1+e^{−z}) − 1/2.
    Nlvar { phi11: f64, phi12: f64, phi21: f64, phi22: f64 },
    /// Latent y_{t,1} = 0.1 + 0.7 y_{t−1,1} − 0.5 y_{t−1,2} + 0.2 ε_{t,1},
    /// y_{t,2} = 0.1 − 0.7 y_{t−1,2} + 0.2 ε_{t,2}, mapped to the
    /// 3-simplex by x_j = e^{y_j}/(1+e^{y_1}+e^{y_2}), x_3 = 1/(1+…).
    Al,
}

impl Model {
    /// Standard coefficient choices, one constructor per process.
    pub fn ar_default() -> Self {
        Model::Ar { phi: 0.8 }
    }

    pub fn arma_default() -> Self {
        Model::Arma { phi1: 0.8, phi2: -0.6 }
    }

    pub fn tar_default() -> Self {
        Model::Tar { phi1: -2.0, phi2: 0.7, tau: 1.0 }
    }

    pub fn i1_default() -> Self {
        Model::I1 { phi: -0.7 }
    }

    pub fn nlvar_default() -> Self {
        Model::Nlvar { phi11: 0.3, phi12: 8.0, phi21: 0.0, phi22: 0.4 }
    }

    /// Number of columns the process emits.
    pub fn dim(&self) -> usize {
        match self {
            Model::Nlvar { .. } => 2,
            Model::Al => 3,
            _ => 1,
        }
    }

    /// Burn-in used when the spec does not override it: 200 for the
    /// stationary recursions, none for the unit-root and the deterministic
    /// cycle.
    pub fn default_burn_in(&self) -> usize {
        match self {
            Model::I1 { .. } | Model::Cyc => 0,
            _ => 200,
        }
    }
}

/// Complete description of one simulated panel.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpSpec {
    pub model: Model,
    pub n: usize,
    pub seed: u64,
    /// None uses the model's default burn-in.
    pub burn_in: Option<usize>,
    /// Test hook: false replaces every innovation with zero.
    pub noise: bool,
}

impl DgpSpec {
    pub fn new(model: Model, n: usize, seed: u64) -> Self {
        DgpSpec { model, n, seed, burn_in: None, noise: true }
    }
}

/// Simulates the process and returns a fully observed panel.
pub fn generate(spec: &DgpSpec) -> Result<TimeSeriesPanel> {
    if spec.n < 10 {
        return Err(TwiError::Config(format!(
            "simulated series need n >= 10, got {}",
            spec.n
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let burn = spec.burn_in.unwrap_or_else(|| spec.model.default_burn_in());
    let n = spec.n;
    let draw = |rng: &mut ChaCha8Rng| -> f64 {
        if spec.noise {
            rng.sample(StandardNormal)
        } else {
            let _: f64 = rng.sample(StandardNormal);
            0.0
        }
    };
    let values = match &spec.model {
        Model::Ar { phi } => {
            let mut x = 0.0;
            let mut out = Vec::with_capacity(n);
            for t in 0..burn + n {
                x = phi * x + draw(&mut rng);
                if t >= burn {
                    out.push(x);
                }
            }
            DMatrix::from_column_slice(n, 1, &out)
        }
        Model::Arma { phi1, phi2 } => {
            let mut x = 0.0;
            let mut prev_eps = 0.0;
            let mut out = Vec::with_capacity(n);
            for t in 0..burn + n {
                let eps = draw(&mut rng);
                x = phi1 * x + eps + phi2 * prev_eps;
                prev_eps = eps;
                if t >= burn {
                    out.push(x);
                }
            }
            DMatrix::from_column_slice(n, 1, &out)
        }
        Model::Tar { phi1, phi2, tau } => {
            let mut x = 0.0;
            let mut out = Vec::with_capacity(n);
            for t in 0..burn + n {
                let eps = draw(&mut rng);
                x = if x <= *tau { phi1 * x + eps } else { phi2 * x + 0.5 * eps };
                if t >= burn {
                    out.push(x);
                }
            }
            DMatrix::from_column_slice(n, 1, &out)
        }
        Model::I1 { phi } => {
            let mut z = 0.0;
            let mut x = 0.0;
            let mut out = Vec::with_capacity(n);
            for t in 0..burn + n {
                let e1 = draw(&mut rng);
                let e2 = draw(&mut rng);
                z = phi * z + 0.5 * e1;
                x = x + z + e2;
                if t >= burn {
                    out.push(x);
                }
            }
            DMatrix::from_column_slice(n, 1, &out)
        }
        Model::Cyc => {
            // The cycle is a deterministic function of the time index, so
            // burn-in does not apply; t runs from 0.
            let mut out = Vec::with_capacity(n);
            for t in 0..n {
                let t = t as f64;
                let trend = 10.0 * (t * 0.23 * std::f64::consts::PI).cos()
                    + 6.0 * (t * 0.17 * std::f64::consts::PI).cos();
                out.push(trend + 0.5 * draw(&mut rng));
            }
            DMatrix::from_column_slice(n, 1, &out)
        }
        Model::Nlvar { phi11, phi12, phi21, phi22 } => {
            let sigmoid = |z: f64| 1.0 / (1.0 + (-z).exp()) - 0.5;
            let (mut x1, mut x2) = (0.0, 0.0);
            let mut out = DMatrix::zeros(n, 2);
            for t in 0..burn + n {
                let e1 = draw(&mut rng);
                let e2 = draw(&mut rng);
                let new1 = phi11 * x1 + phi12 * sigmoid(3.0 * x2) + 0.25 * e1;
                let new2 = phi21 * x1 + phi22 * x2 + 3.0 * e2;
                x1 = new1;
                x2 = new2;
                if t >= burn {
                    out[(t - burn, 0)] = x1;
                    out[(t - burn, 1)] = x2;
                }
            }
            out
        }
        Model::Al => {
            let (mut y1, mut y2) = (0.0, 0.0);
            let mut out = DMatrix::zeros(n, 3);
            for t in 0..burn + n {
                let e1 = draw(&mut rng);
                let e2 = draw(&mut rng);
                let new1 = 0.1 + 0.7 * y1 - 0.5 * y2 + 0.2 * e1;
                let new2 = 0.1 - 0.7 * y2 + 0.2 * e2;
                y1 = new1;
                y2 = new2;
                if t >= burn {
                    let denom = 1.0 + y1.exp() + y2.exp();
                    out[(t - burn, 0)] = y1.exp() / denom;
                    out[(t - burn, 1)] = y2.exp() / denom;
                    out[(t - burn, 2)] = 1.0 / denom;
                }
            }
            out
        }
    };
    TimeSeriesPanel::fully_observed(values)
}

/// Which time indices to hide, and how.
#[derive(Debug, Clone, PartialEq)]
pub enum MissingPattern {
    /// `count` distinct time indices drawn uniformly without replacement;
    /// each selected row is masked in every column.
    PatternI { count: usize },
    /// Within every window of `block` consecutive indices, the `run`
    /// indices starting at `offset` are masked (in every column).
    PatternII { block: usize, run: usize, offset: usize },
    /// Use this mask verbatim (united with any mask already on the panel).
    Custom { mask: DMatrix<bool> },
    /// Apply the inner pattern but keep the last `m` rows fully observed.
    ProtectTail { m: usize, inner: Box<MissingPattern> },
    /// Apply the inner pattern independently per column (each column gets
    /// its own derived seed) instead of masking whole rows.
    PerColumn(Box<MissingPattern>),
}

impl MissingPattern {
    /// 300 rows hidden uniformly at random.
    pub fn pattern_i() -> Self {
        MissingPattern::PatternI { count: 300 }
    }

    /// 6 consecutive rows hidden out of every 20, starting at offset 7.
    pub fn pattern_ii() -> Self {
        MissingPattern::PatternII { block: 20, run: 6, offset: 7 }
    }
}

/// Masks cells of `panel` according to `pattern`. Already-missing cells
/// stay missing.
pub fn apply_pattern(
    panel: &TimeSeriesPanel,
    pattern: &MissingPattern,
    seed: u64,
) -> Result<TimeSeriesPanel> {
    let n = panel.n();
    let d = panel.dim();
    let extra = build_mask(pattern, n, d, seed, 0)?;
    let mask = DMatrix::from_fn(n, d, |t, l| panel.is_missing(t, l) || extra[(t, l)]);
    TimeSeriesPanel::new(panel.values().clone(), mask)
}

fn build_mask(
    pattern: &MissingPattern,
    n: usize,
    d: usize,
    seed: u64,
    protected_tail: usize,
) -> Result<DMatrix<bool>> {
    let eligible = n.saturating_sub(protected_tail);
    match pattern {
        MissingPattern::PatternI { count } => {
            if *count > eligible {
                return Err(TwiError::Config(format!(
                    "pattern asks for {count} missing rows but only {eligible} are eligible"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows = rand::seq::index::sample(&mut rng, eligible, *count);
            let mut mask = DMatrix::from_element(n, d, false);
            for t in rows.iter() {
                for l in 0..d {
                    mask[(t, l)] = true;
                }
            }
            Ok(mask)
        }
        MissingPattern::PatternII { block, run, offset } => {
            if *block == 0 || *run == 0 {
                return Err(TwiError::Config("block and run must be positive".into()));
            }
            if offset + run > *block {
                return Err(TwiError::Config(format!(
                    "a run of {run} at offset {offset} does not fit in a block of {block}"
                )));
            }
            let mut mask = DMatrix::from_element(n, d, false);
            let mut start = 0;
            while start < eligible {
                for t in start + offset..(start + offset + run).min(eligible) {
                    for l in 0..d {
                        mask[(t, l)] = true;
                    }
                }
                start += block;
            }
            Ok(mask)
        }
        MissingPattern::Custom { mask } => {
            if mask.shape() != (n, d) {
                return Err(TwiError::Shape(format!(
                    "custom mask is {}x{} but the panel is {n}x{d}",
                    mask.nrows(),
                    mask.ncols()
                )));
            }
            let mut out = mask.clone();
            for t in n - protected_tail.min(n)..n {
                for l in 0..d {
                    out[(t, l)] = false;
                }
            }
            Ok(out)
        }
        MissingPattern::ProtectTail { m, inner } => {
            build_mask(inner, n, d, seed, protected_tail.max(*m))
        }
        MissingPattern::PerColumn(inner) => {
            let mut mask = DMatrix::from_element(n, d, false);
            for l in 0..d {
                let column = build_mask(inner, n, 1, derive_seed(seed, l as u64), protected_tail)?;
                for t in 0..n {
                    mask[(t, l)] = column[(t, 0)];
                }
            }
            Ok(mask)
        }
    }
}
