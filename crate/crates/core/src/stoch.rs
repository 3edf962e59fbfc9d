//! Row-stochastic matrices and inverse-CDF sampling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ROW_TOL: f64 = 1e-12;

/// Inverse-CDF draw from a probability row. `u` in [0,1).
/// Falls back to the last positive entry if rounding leaves u above the total.
pub fn sample_row(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

pub fn argmax_lowest(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for (i, v) in values.into_iter().enumerate() {
        if v > best {
            best = v;
            arg = i;
        }
    }
    arg
}

pub fn check_row(row: &[f64], tol: f64) -> std::result::Result<(), String> {
    if let Some(v) = row.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
        return Err(format!("entry {v} outside [0,1]"));
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > tol {
        return Err(format!("row sums to {s}"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct RowStochastic {
    rows: Vec<Vec<f64>>,
}

impl RowStochastic {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_tolerance(rows, 1e-9)
    }

    pub fn with_tolerance(rows: Vec<Vec<f64>>, tol: f64) -> Result<Self> {
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.is_empty() || cols == 0 {
            return Err(Error::Parameter("empty stochastic matrix".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Dimension {
                    what: "stochastic row",
                    expected: cols,
                    got: r.len(),
                });
            }
            check_row(r, tol).map_err(|e| Error::Parameter(format!("row {i}: {e}")))?;
        }
        Ok(RowStochastic { rows })
    }

    /// Normalizes each row; rows with zero mass become uniform.
    pub fn normalized(mut rows: Vec<Vec<f64>>) -> Result<Self> {
        for r in rows.iter_mut() {
            let s: f64 = r.iter().map(|v| v.max(0.0)).sum();
            if s > 0.0 {
                r.iter_mut().for_each(|v| *v = v.max(0.0) / s);
            } else {
                let n = r.len() as f64;
                r.iter_mut().for_each(|v| *v = 1.0 / n);
            }
        }
        Self::new(rows)
    }

    pub fn identity(n: usize) -> Self {
        RowStochastic {
            rows: (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        }
    }

    pub fn uniform(rows: usize, cols: usize) -> Self {
        RowStochastic {
            rows: vec![vec![1.0 / cols as f64; cols]; rows],
        }
    }

    pub fn point_mass(rows: usize, cols: usize, target: impl Fn(usize) -> usize) -> Self {
        RowStochastic {
            rows: (0..rows)
                .map(|i| {
                    let t = target(i);
                    (0..cols).map(|j| if j == t { 1.0 } else { 0.0 }).collect()
                })
                .collect(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn sample(&self, i: usize, u: f64) -> usize {
        sample_row(&self.rows[i], u)
    }

    /// Mixes every entry toward `floor` and renormalizes.
    pub fn floored(&self, floor: f64) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let f: Vec<f64> = r.iter().map(|v| v.max(floor)).collect();
                let s: f64 = f.iter().sum();
                f.into_iter().map(|v| v / s).collect()
            })
            .collect();
        RowStochastic { rows }
    }
}

impl TryFrom<Vec<Vec<f64>>> for RowStochastic {
    type Error = Error;
    fn try_from(v: Vec<Vec<f64>>) -> Result<Self> {
        RowStochastic::new(v)
    }
}

impl From<RowStochastic> for Vec<Vec<f64>> {
    fn from(m: RowStochastic) -> Self {
        m.rows
    }
}
