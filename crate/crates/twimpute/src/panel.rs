//! Time-series panels: an n×d value array plus a boolean missing mask,
//! with CSV reading and writing.
//!
//! Rows index time 0..n−1, columns index component series. A `true` mask
//! entry marks a missing cell; whatever number sits behind a masked cell is
//! ignored by every operation in this crate (readers store NaN there).

use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Result, TwiError};

/// Default tokens recognised as missing cells when reading CSV.
pub const DEFAULT_MISSING_TOKENS: [&str; 3] = ["", "NaN", "NA"];

/// A (possibly multivariate) time series with missing entries.
///
/// Storage is column-major by series, matching the per-column subproblem
/// structure of the solver.
#[derive(Debug, Clone)]
pub struct TimeSeriesPanel {
    values: DMatrix<f64>,
    mask: DMatrix<bool>,
}

impl TimeSeriesPanel {
    /// Builds a panel from values and a missing mask of the same shape.
    ///
    /// Values behind `true` mask cells are normalised to NaN so they cannot
    /// leak into downstream computations.
    pub fn new(values: DMatrix<f64>, mask: DMatrix<bool>) -> Result<Self> {
        if values.shape() != mask.shape() {
            return Err(TwiError::Shape(format!(
                "values are {}x{} but mask is {}x{}",
                values.nrows(),
                values.ncols(),
                mask.nrows(),
                mask.ncols()
            )));
        }
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(TwiError::Shape("panel must have at least one row and one column".into()));
        }
        let mut values = values;
        for j in 0..values.ncols() {
            for t in 0..values.nrows() {
                if mask[(t, j)] {
                    values[(t, j)] = f64::NAN;
                }
            }
        }
        Ok(Self { values, mask })
    }

    /// Builds a fully observed panel (all-false mask).
    pub fn fully_observed(values: DMatrix<f64>) -> Result<Self> {
        let mask = DMatrix::from_element(values.nrows(), values.ncols(), false);
        Self::new(values, mask)
    }

    /// Builds a univariate panel from a slice, with no missing values.
    pub fn from_column(values: &[f64]) -> Result<Self> {
        Self::fully_observed(DMatrix::from_column_slice(values.len(), 1, values))
    }

    /// Number of time points.
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Number of component series.
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    pub fn is_missing(&self, t: usize, j: usize) -> bool {
        self.mask[(t, j)]
    }

    /// Total number of masked cells.
    pub fn n_missing(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Sorted time indices with a masked cell in column `j`.
    pub fn missing_in_column(&self, j: usize) -> Vec<usize> {
        (0..self.n()).filter(|&t| self.mask[(t, j)]).collect()
    }

    /// Sorted time indices with an observed cell in column `j`.
    pub fn observed_in_column(&self, j: usize) -> Vec<usize> {
        (0..self.n()).filter(|&t| !self.mask[(t, j)]).collect()
    }

    /// Replaces the value array, keeping the mask. Shapes must agree.
    pub fn with_values(&self, values: DMatrix<f64>) -> Result<Self> {
        if values.shape() != self.values.shape() {
            return Err(TwiError::Shape(format!(
                "replacement values are {}x{}, panel is {}x{}",
                values.nrows(),
                values.ncols(),
                self.n(),
                self.dim()
            )));
        }
        Ok(Self { values, mask: self.mask.clone() })
    }

    /// True when no cell is masked.
    pub fn is_fully_observed(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }
}

/// Reads a rectangular CSV file into a panel.
///
/// Cells whose trimmed text matches one of `missing_tokens` become masked;
/// every other cell must parse as a floating-point number. There is no
/// header row. A blank line in a one-column file is a missing cell.
pub fn read_csv(path: impl AsRef<Path>, missing_tokens: &[&str]) -> Result<TimeSeriesPanel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| TwiError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv_str(&text, missing_tokens)
}

/// Parses CSV text; see [`read_csv`].
pub fn read_csv_str(text: &str, missing_tokens: &[&str]) -> Result<TimeSeriesPanel> {
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    let mut width = None;
    for (row_idx, line) in text.lines().enumerate() {
        let mut row = Vec::new();
        for cell in line.split(',') {
            let cell = cell.trim();
            if missing_tokens.contains(&cell) {
                row.push(None);
            } else {
                let v: f64 = cell.parse().map_err(|_| TwiError::Parse {
                    row: row_idx,
                    msg: format!("cannot parse {cell:?} as a number"),
                })?;
                row.push(Some(v));
            }
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(TwiError::Parse {
                    row: row_idx,
                    msg: format!("ragged row: expected {w} fields, found {}", row.len()),
                });
            }
            Some(_) => {}
        }
        rows.push(row);
    }
    let n = rows.len();
    let d = width.unwrap_or(0);
    if n == 0 || d == 0 {
        return Err(TwiError::Shape("CSV has no rows or no columns".into()));
    }
    let mut values = DMatrix::zeros(n, d);
    let mut mask = DMatrix::from_element(n, d, false);
    for (t, row) in rows.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            match cell {
                Some(v) => values[(t, j)] = *v,
                None => mask[(t, j)] = true,
            }
        }
    }
    TimeSeriesPanel::new(values, mask)
}

/// Writes a panel as CSV, emitting `NaN` for masked cells.
///
/// Observed values are printed in the shortest form that parses back to the
/// identical float, so `read_csv(write_csv(p))` round-trips exactly.
pub fn write_csv(panel: &TimeSeriesPanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| TwiError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = std::io::BufWriter::new(file);
    let text = to_csv_string(panel);
    out.write_all(text.as_bytes()).map_err(|source| TwiError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Renders a panel as CSV text; see [`write_csv`].
pub fn to_csv_string(panel: &TimeSeriesPanel) -> String {
    let mut text = String::new();
    for t in 0..panel.n() {
        for j in 0..panel.dim() {
            if j > 0 {
                text.push(',');
            }
            if panel.is_missing(t, j) {
                text.push_str("NaN");
            } else {
                let v = panel.values()[(t, j)];
                if v.is_nan() {
                    text.push_str("NaN");
                } else {
                    text.push_str(&format!("{v}"));
                }
            }
        }
        text.push('\n');
    }
    text
}
