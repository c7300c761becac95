//! Input data: loading, validation, and the dataset constants (precision and
//! maximum pairwise distance) that every code length depends on.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// N×d matrix of finite reals, one row per object.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::TooFewObjects(values.nrows()));
        }
        if values.ncols() < 1 {
            return Err(Error::InvalidArgument("dataset needs d >= 1".into()));
        }
        for c in 0..values.ncols() {
            for r in 0..values.nrows() {
                if !values[(r, c)].is_finite() {
                    return Err(Error::NonFinite { row: r, col: c });
                }
            }
        }
        Ok(Self { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::TooFewObjects(n));
        }
        let d = rows[0].len();
        if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::MalformedRow {
                row: i + 1,
                msg: format!("expected {d} fields"),
            });
        }
        Self::new(DMatrix::from_fn(n, d, |r, c| rows[r][c]))
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }
}

/// Dataset constants computed once on the raw input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataGeometry {
    pub delta: f64,
    pub max_dist: f64,
    pub feature_min: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxDistMode {
    #[default]
    Exact,
    BboxDiagonal,
}

impl DataGeometry {
    pub fn compute(x: &DataMatrix, mode: MaxDistMode) -> Result<Self> {
        let delta = compute_precision(x)?;
        let max_dist = max_pairwise_distance(x, mode);
        if max_dist <= 0.0 {
            return Err(Error::Degenerate("all objects coincide".into()));
        }
        let feature_min = x
            .values()
            .column_iter()
            .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
            .collect();
        Ok(Self {
            delta,
            max_dist,
            feature_min,
        })
    }
}

/// Parses a comma-separated file. Rows in errors are 1-based file line numbers.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<DataMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, has_header)
}

pub fn parse_csv(text: &str, has_header: bool) -> Result<DataMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if has_header && idx == 0 {
            continue;
        }
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (col, cell) in line.split(',').enumerate() {
            let cell = cell.trim();
            let v: f64 = cell.parse().map_err(|_| Error::MalformedRow {
                row: line_no,
                msg: format!("column {}: non-numeric cell {cell:?}", col + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::MalformedRow {
                    row: line_no,
                    msg: format!("column {}: non-finite value", col + 1),
                });
            }
            row.push(v);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::MalformedRow {
                    row: line_no,
                    msg: format!("expected {w} fields, found {}", row.len()),
                })
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.len() < 2 {
        return Err(Error::TooFewObjects(rows.len()));
    }
    DataMatrix::from_rows(&rows)
}

/// Headerless CSV with shortest round-trip float formatting.
pub fn to_csv(x: &DataMatrix) -> String {
    let mut out = String::new();
    for row in x.values().row_iter() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(x: &DataMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_csv(x)).map_err(|e| Error::io(path, e))
}

/// Mean over features of the smallest nonzero absolute difference between two
/// values of that feature. Constant features are skipped.
pub fn compute_precision(x: &DataMatrix) -> Result<f64> {
    let v = x.values();
    let mut sum = 0.0;
    let mut count = 0usize;
    for c in 0..v.ncols() {
        let mut col: Vec<f64> = v.column(c).iter().copied().collect();
        col.sort_by(f64::total_cmp);
        let min_gap = col
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|g| *g > 0.0)
            .fold(f64::INFINITY, f64::min);
        if min_gap.is_finite() {
            sum += min_gap;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::AllFeaturesConstant);
    }
    Ok(sum / count as f64)
}

pub fn max_pairwise_distance(x: &DataMatrix, mode: MaxDistMode) -> f64 {
    let v = x.values();
    match mode {
        MaxDistMode::BboxDiagonal => v
            .column_iter()
            .map(|c| {
                let (lo, hi) = c
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| {
                        (lo.min(a), hi.max(a))
                    });
                (hi - lo) * (hi - lo)
            })
            .sum::<f64>()
            .sqrt(),
        MaxDistMode::Exact => {
            // Row-major copy keeps the inner loop contiguous.
            let n = v.nrows();
            let d = v.ncols();
            let rows: Vec<f64> = (0..n)
                .flat_map(|r| (0..d).map(move |c| (r, c)))
                .map(|(r, c)| v[(r, c)])
                .collect();
            let best = (0..n)
                .into_par_iter()
                .map(|i| {
                    let a = &rows[i * d..(i + 1) * d];
                    let mut m = 0.0f64;
                    for j in (i + 1)..n {
                        let b = &rows[j * d..(j + 1) * d];
                        let s: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
                        m = m.max(s);
                    }
                    m
                })
                .reduce(|| 0.0, f64::max);
            best.sqrt()
        }
    }
}

pub fn scale_dataset(x: &DataMatrix, f: f64) -> Result<DataMatrix> {
    if !(f > 0.0) || !f.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "scale factor must be positive, got {f}"
        )));
    }
    DataMatrix::new(x.values() * f)
}
