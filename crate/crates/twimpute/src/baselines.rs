//! Reference imputers: linear interpolation, last observation carried
//! forward, column-mean fill, and the scalar-filter intervention method
//! (fit an autoregression with one indicator regressor per missing index
//! and read the imputations off the negated intervention effects).

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TwiError};
use crate::panel::TimeSeriesPanel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineMethod {
    /// Piecewise-linear between nearest observed neighbours; flat
    /// extrapolation past the first/last observed value.
    Linear,
    /// Last observed value carried forward; a leading gap is backfilled
    /// from the first observed value.
    Locf,
    /// Column mean of the observed cells.
    Mean,
    /// Intervention analysis on an autoregression: missing cells start at
    /// zero, an AR(`ar_order`) with per-missing-index indicators is fitted
    /// by ridge-regularized least squares, and each missing cell becomes
    /// minus its indicator coefficient. `passes` repeats the procedure from
    /// the updated series.
    ScalarFilter { ar_order: usize, ridge: f64, passes: usize },
}

impl BaselineMethod {
    /// Scalar filter with the default order, penalty, and a single pass.
    pub fn scalar_filter_default() -> Self {
        BaselineMethod::ScalarFilter { ar_order: 6, ridge: 1e-4, passes: 1 }
    }
}

/// Imputes every missing cell, returning the completed n×d array. Observed
/// cells are preserved exactly.
pub fn impute_baseline(panel: &TimeSeriesPanel, method: BaselineMethod) -> Result<DMatrix<f64>> {
    let (n, d) = (panel.n(), panel.dim());
    let mut out = DMatrix::zeros(n, d);
    for l in 0..d {
        let observed = panel.observed_in_column(l);
        if observed.is_empty() {
            return Err(TwiError::Infeasible(format!("column {l} has no observed values")));
        }
        let column = match method {
            BaselineMethod::Linear => linear_column(panel, l, &observed)?,
            BaselineMethod::Locf => locf_column(panel, l, &observed),
            BaselineMethod::Mean => mean_column(panel, l, &observed),
            BaselineMethod::ScalarFilter { ar_order, ridge, passes } => {
                scalar_filter_column(panel, l, ar_order, ridge, passes)?
            }
        };
        out.set_column(l, &column);
    }
    Ok(out)
}

fn linear_column(panel: &TimeSeriesPanel, l: usize, observed: &[usize]) -> Result<DVector<f64>> {
    if observed.len() < 2 {
        return Err(TwiError::Infeasible(format!(
            "linear interpolation needs at least two observed values in column {l}"
        )));
    }
    let n = panel.n();
    let v = panel.values();
    let mut out = DVector::zeros(n);
    let mut seg = 0;
    for t in 0..n {
        if !panel.is_missing(t, l) {
            out[t] = v[(t, l)];
            continue;
        }
        if t < observed[0] {
            out[t] = v[(observed[0], l)];
        } else if t > *observed.last().unwrap() {
            out[t] = v[(*observed.last().unwrap(), l)];
        } else {
            while observed[seg + 1] < t {
                seg += 1;
            }
            let (t0, t1) = (observed[seg], observed[seg + 1]);
            let frac = (t - t0) as f64 / (t1 - t0) as f64;
            out[t] = v[(t0, l)] + frac * (v[(t1, l)] - v[(t0, l)]);
        }
    }
    Ok(out)
}

fn locf_column(panel: &TimeSeriesPanel, l: usize, observed: &[usize]) -> DVector<f64> {
    let n = panel.n();
    let v = panel.values();
    let mut out = DVector::zeros(n);
    let mut last = v[(observed[0], l)];
    for t in 0..n {
        if !panel.is_missing(t, l) {
            last = v[(t, l)];
        }
        out[t] = last;
    }
    out
}

fn mean_column(panel: &TimeSeriesPanel, l: usize, observed: &[usize]) -> DVector<f64> {
    let v = panel.values();
    let mean = observed.iter().map(|&t| v[(t, l)]).sum::<f64>() / observed.len() as f64;
    DVector::from_fn(panel.n(), |t, _| if panel.is_missing(t, l) { mean } else { v[(t, l)] })
}

fn scalar_filter_column(
    panel: &TimeSeriesPanel,
    l: usize,
    ar_order: usize,
    ridge: f64,
    passes: usize,
) -> Result<DVector<f64>> {
    let n = panel.n();
    if ar_order == 0 || ar_order >= n {
        return Err(TwiError::Config(format!(
            "scalar filter order must be in [1, {}] (got {ar_order})",
            n - 1
        )));
    }
    let missing = panel.missing_in_column(l);
    let v = panel.values();
    let mut w = DVector::from_fn(n, |t, _| if panel.is_missing(t, l) { 0.0 } else { v[(t, l)] });
    if missing.is_empty() {
        return Ok(w);
    }
    let rows = n - ar_order;
    let cols = ar_order + missing.len();
    for _ in 0..passes.max(1) {
        let mut x = DMatrix::zeros(rows, cols);
        let mut y = DVector::zeros(rows);
        for (row, t) in (ar_order..n).enumerate() {
            for i in 0..ar_order {
                x[(row, i)] = w[t - 1 - i];
            }
            y[row] = w[t];
        }
        for (j, &s) in missing.iter().enumerate() {
            if s >= ar_order {
                x[(s - ar_order, ar_order + j)] = 1.0;
            }
        }
        let mut gram = x.transpose() * &x;
        for i in 0..cols {
            gram[(i, i)] += ridge;
        }
        let rhs = x.transpose() * &y;
        let beta = nalgebra::linalg::Cholesky::new(gram)
            .ok_or_else(|| {
                TwiError::Numerical(
                    "scalar filter normal equations are singular; increase the ridge penalty"
                        .into(),
                )
            })?
            .solve(&rhs);
        for (j, &s) in missing.iter().enumerate() {
            w[s] -= beta[ar_order + j];
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn panel_from(values: &[f64], missing: &[usize]) -> TimeSeriesPanel {
        let n = values.len();
        let vals = DMatrix::from_column_slice(n, 1, values);
        let mut mask = DMatrix::from_element(n, 1, false);
        for &s in missing {
            mask[(s, 0)] = true;
        }
        TimeSeriesPanel::new(vals, mask).unwrap()
    }

    #[test]
    fn linear_fills_the_midpoint() {
        let panel = panel_from(&[1.0, 0.0, 3.0], &[1]);
        let out = impute_baseline(&panel, BaselineMethod::Linear).unwrap();
        assert_eq!(out.as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn linear_is_exact_on_linear_series() {
        let values: Vec<f64> = (0..20).map(|t| 0.5 * t as f64 - 3.0).collect();
        let panel = panel_from(&values, &[3, 4, 5, 11, 17]);
        let out = impute_baseline(&panel, BaselineMethod::Linear).unwrap();
        for (t, &v) in values.iter().enumerate() {
            assert!((out[(t, 0)] - v).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_extrapolates_flat_at_the_ends() {
        let panel = panel_from(&[0.0, 2.0, 4.0, 0.0], &[0, 3]);
        let out = impute_baseline(&panel, BaselineMethod::Linear).unwrap();
        assert_eq!(out.as_slice(), &[2.0, 2.0, 4.0, 4.0]);
    }

    #[test]
    fn mean_fills_the_column_average() {
        let panel = panel_from(&[2.0, 0.0, 4.0], &[1]);
        let out = impute_baseline(&panel, BaselineMethod::Mean).unwrap();
        assert_eq!(out.as_slice(), &[2.0, 3.0, 4.0]);
    }

    #[test]
    fn locf_carries_forward_and_backfills_leading_gaps() {
        let panel = panel_from(&[0.0, 5.0, 0.0, 7.0], &[0, 2]);
        let out = impute_baseline(&panel, BaselineMethod::Locf).unwrap();
        assert_eq!(out.as_slice(), &[5.0, 5.0, 5.0, 7.0]);
    }

    #[test]
    fn observed_cells_are_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let values: Vec<f64> = (0..60).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let missing: Vec<usize> = (0..60).filter(|_| rng.gen_bool(0.3)).collect();
        let panel = panel_from(&values, &missing);
        for method in [
            BaselineMethod::Linear,
            BaselineMethod::Locf,
            BaselineMethod::Mean,
            BaselineMethod::scalar_filter_default(),
        ] {
            let out = impute_baseline(&panel, method).unwrap();
            for t in 0..60 {
                if !panel.is_missing(t, 0) {
                    assert!(out[(t, 0)] == values[t], "{method:?} moved an observed cell");
                }
            }
        }
    }

    #[test]
    fn all_missing_column_is_rejected() {
        let panel = panel_from(&[0.0, 0.0], &[0, 1]);
        assert!(matches!(
            impute_baseline(&panel, BaselineMethod::Mean),
            Err(TwiError::Infeasible(_))
        ));
    }

    #[test]
    fn scalar_filter_matches_the_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200;
        let mut series = vec![0.0f64; n];
        for t in 1..n {
            let eps: f64 = rng.sample(StandardNormal);
            series[t] = 0.8 * series[t - 1] + eps;
        }
        let s = 100;
        let panel = panel_from(&series, &[s]);
        let ridge = 1e-10;
        let method = BaselineMethod::ScalarFilter { ar_order: 1, ridge, passes: 1 };
        let out = impute_baseline(&panel, method).unwrap();

        // Independent two-regressor solve: y_t on (w_{t-1}, 1{t=s}) with the
        // missing cell zeroed out.
        let mut w0 = series.clone();
        w0[s] = 0.0;
        let rows = n - 1;
        let x = DMatrix::from_fn(rows, 2, |row, col| {
            let t = row + 1;
            match col {
                0 => w0[t - 1],
                _ => {
                    if t == s {
                        1.0
                    } else {
                        0.0
                    }
                }
            }
        });
        let y = DVector::from_fn(rows, |row, _| w0[row + 1]);
        let mut gram = x.transpose() * &x;
        gram[(0, 0)] += ridge;
        gram[(1, 1)] += ridge;
        let beta = gram.try_inverse().unwrap() * x.transpose() * y;
        assert!((out[(s, 0)] - (-beta[1])).abs() < 1e-9);
    }
}
