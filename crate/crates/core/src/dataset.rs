//! Sample-matrix container, CSV ingestion, and studentization.
//!
//! A [`Dataset`] is an immutable N x d matrix of finite reals with unique
//! column labels. Rows are samples, columns are variables. All estimators in
//! this crate read datasets concurrently without synchronization.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Immutable N x d sample matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<f64>, // row-major, n * d
    column_names: Vec<String>,
    n: usize,
    d: usize,
    seed: Option<u64>,
}

impl Dataset {
    /// Builds a dataset from rows, validating shape and finiteness.
    pub fn from_rows(rows: Vec<Vec<f64>>, column_names: Vec<String>) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::TooFewRows { found: n });
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(Error::RaggedRow {
                row: 1,
                expected: 1,
                found: 0,
            });
        }
        if column_names.len() != d {
            return Err(Error::InvalidConfig(format!(
                "{} column names for {} columns",
                column_names.len(),
                d
            )));
        }
        for (idx, name) in column_names.iter().enumerate() {
            if column_names[..idx].contains(name) {
                return Err(Error::InvalidConfig(format!("duplicate column name {name:?}")));
            }
        }
        let mut samples = Vec::with_capacity(n * d);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::RaggedRow {
                    row: r + 1,
                    expected: d,
                    found: row.len(),
                });
            }
            for (c, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::BadCell {
                        row: r + 1,
                        col: c + 1,
                        value: format!("{v}"),
                    });
                }
                samples.push(v);
            }
        }
        Ok(Dataset {
            samples,
            column_names,
            n,
            d,
            seed: None,
        })
    }

    /// Default column names `x1..xd`.
    pub fn default_names(d: usize) -> Vec<String> {
        (1..=d).map(|i| format!("x{i}")).collect()
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Value of sample `row` at variable `col` (both 0-based).
    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.samples[row * self.d + col]
    }

    /// One sample as a slice of its d coordinates.
    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.samples[row * self.d..(row + 1) * self.d]
    }

    /// Copies variable `col` into a contiguous vector.
    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n).map(|r| self.value(r, col)).collect()
    }

    /// Sample standard deviation of a column (N-1 divisor).
    pub fn column_std(&self, col: usize) -> f64 {
        let n = self.n as f64;
        let mean = (0..self.n).map(|r| self.value(r, col)).sum::<f64>() / n;
        let ss = (0..self.n)
            .map(|r| {
                let dv = self.value(r, col) - mean;
                dv * dv
            })
            .sum::<f64>();
        (ss / (n - 1.0)).sqrt()
    }

    /// New dataset with the rows at `indices` (used by bootstrap resampling).
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        let mut samples = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            samples.extend_from_slice(self.row(i));
        }
        Dataset {
            samples,
            column_names: self.column_names.clone(),
            n: indices.len(),
            d: self.d,
            seed: None,
        }
    }

    /// Divides every column by its sample standard deviation.
    ///
    /// Columns keep their sign pattern and order; the result has unit sample
    /// standard deviation per column up to rounding. Fails on a
    /// zero-variance column.
    pub fn studentize(&self) -> Result<Dataset> {
        let mut scales = Vec::with_capacity(self.d);
        for c in 0..self.d {
            let sd = self.column_std(c);
            if sd == 0.0 {
                return Err(Error::ZeroVarianceColumn {
                    name: self.column_names[c].clone(),
                });
            }
            scales.push(sd);
        }
        let mut samples = Vec::with_capacity(self.n * self.d);
        for r in 0..self.n {
            for c in 0..self.d {
                samples.push(self.value(r, c) / scales[c]);
            }
        }
        Ok(Dataset {
            samples,
            column_names: self.column_names.clone(),
            n: self.n,
            d: self.d,
            seed: self.seed,
        })
    }
}

/// Loads a dataset from a comma-separated file of decimal reals.
///
/// With `has_header` the first row supplies column names; otherwise names
/// are generated as `x1..xd`. Rows must have equal length and every cell
/// must parse as a finite real. Row/column positions in errors are 1-based
/// and count data rows only.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::FileRead {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let mut names: Option<Vec<String>> = None;
    if has_header {
        match lines.next() {
            Some(header) => {
                names = Some(header.split(',').map(|s| s.trim().to_string()).collect());
            }
            None => return Err(Error::TooFewRows { found: 0 }),
        }
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (r, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        let expected = *width.get_or_insert(cells.len());
        if cells.len() != expected {
            return Err(Error::RaggedRow {
                row: r + 1,
                expected,
                found: cells.len(),
            });
        }
        let mut row = Vec::with_capacity(expected);
        for (c, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::BadCell {
                row: r + 1,
                col: c + 1,
                value: cell.trim().to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::BadCell {
                    row: r + 1,
                    col: c + 1,
                    value: cell.trim().to_string(),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    let names = names.unwrap_or_else(|| Dataset::default_names(width.unwrap_or(0)));
    Dataset::from_rows(rows, names)
}

/// Writes a dataset as CSV with a header row.
///
/// Values are formatted with the shortest representation that parses back
/// to the identical `f64`, so `load_csv(save_csv(x))` is an exact identity.
pub fn save_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&data.column_names().join(","));
    out.push('\n');
    for r in 0..data.n_samples() {
        for c in 0..data.dim() {
            if c > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", data.value(r, c));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| Error::FileWrite {
        path: path.to_path_buf(),
        source,
    })
}
