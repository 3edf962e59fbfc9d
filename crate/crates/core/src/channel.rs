//! Finite-alphabet memoryless channels.

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stoch::{check_row, sample_row, ROW_TOL};

const INFORMATIVE_TOL: f64 = 1e-12;

/// C over input alphabet [0, |X|) and output alphabet [0, |Y|).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    matrix: Vec<Vec<f64>>,
    #[serde(skip)]
    exact: Option<Vec<Vec<Rational64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsMajorDecomposition {
    pub epsilon: f64,
    pub c0_row: Vec<f64>,
    pub c1: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactDecomposition {
    pub epsilon: Rational64,
    pub c0_row: Vec<Rational64>,
    pub c1: Vec<Vec<Rational64>>,
}

fn to_f64(r: &Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

impl Channel {
    pub fn new(matrix: Vec<Vec<f64>>) -> Result<Self> {
        let cols = matrix.first().map(|r| r.len()).unwrap_or(0);
        if matrix.is_empty() || cols == 0 {
            return Err(Error::Channel("empty matrix".into()));
        }
        for (x, r) in matrix.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Dimension {
                    what: "channel row",
                    expected: cols,
                    got: r.len(),
                });
            }
            check_row(r, ROW_TOL).map_err(|e| Error::Channel(format!("row {x}: {e}")))?;
        }
        Ok(Channel {
            matrix,
            exact: None,
        })
    }

    /// Exact rational entries; rows must sum to exactly one.
    pub fn from_rationals(rows: Vec<Vec<Rational64>>) -> Result<Self> {
        let one = Rational64::from_integer(1);
        let zero = Rational64::from_integer(0);
        for (x, r) in rows.iter().enumerate() {
            if r.iter().any(|v| *v < zero || *v > one) {
                return Err(Error::Channel(format!("row {x}: entry outside [0,1]")));
            }
            let s: Rational64 = r.iter().copied().sum();
            if s != one {
                return Err(Error::Channel(format!("row {x} sums to {s}")));
            }
        }
        let matrix = rows.iter().map(|r| r.iter().map(to_f64).collect()).collect();
        let mut c = Channel::new(matrix)?;
        c.exact = Some(rows);
        Ok(c)
    }

    pub fn identity(n: usize) -> Self {
        let matrix = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Channel {
            matrix,
            exact: None,
        }
    }

    /// Every input sees the same output law.
    pub fn uninformative(row: Vec<f64>, inputs: usize) -> Result<Self> {
        Channel::new(vec![row; inputs])
    }

    /// Diagonal 1 − ε(1 − 1/N), off-diagonal ε/N.
    pub fn symmetric(n: usize, eps: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Parameter(format!("alphabet size {n} < 2")));
        }
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::Parameter(format!("epsilon {eps} outside [0,1]")));
        }
        let off = eps / n as f64;
        let diag = 1.0 - eps * (1.0 - 1.0 / n as f64);
        let matrix = (0..n)
            .map(|i| (0..n).map(|j| if i == j { diag } else { off }).collect())
            .collect();
        Channel::new(matrix)
    }

    pub fn inputs(&self) -> usize {
        self.matrix.len()
    }

    pub fn outputs(&self) -> usize {
        self.matrix[0].len()
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.matrix
    }

    pub fn exact(&self) -> Option<&[Vec<Rational64>]> {
        self.exact.as_deref()
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.matrix[x]
    }

    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.matrix[x][y]
    }

    pub fn sample(&self, x: usize, u: f64) -> usize {
        sample_row(&self.matrix[x], u)
    }

    pub fn is_informative(&self) -> bool {
        let m = &self.matrix;
        (0..m.len()).any(|a| {
            (a + 1..m.len()).any(|b| {
                m[a].iter()
                    .zip(&m[b])
                    .any(|(p, q)| (p - q).abs() > INFORMATIVE_TOL)
            })
        })
    }

    pub fn column_minima(&self) -> Vec<f64> {
        (0..self.outputs())
            .map(|y| {
                self.matrix
                    .iter()
                    .map(|r| r[y])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    /// ε* = Σ_y min_x C_xy, with the canonical decomposition.
    pub fn max_eps_decompose(&self) -> Result<EpsMajorDecomposition> {
        let mins = self.column_minima();
        let eps: f64 = mins.iter().sum();
        if eps <= 0.0 {
            return Err(Error::NotMajorizing);
        }
        if eps >= 1.0 - ROW_TOL || !self.is_informative() {
            return Err(Error::Uninformative);
        }
        let zero_cols: Vec<usize> = (0..mins.len()).filter(|&y| mins[y] <= 0.0).collect();
        if !zero_cols.is_empty() {
            return Err(Error::ZeroColumnMinimum(zero_cols));
        }
        let c0_row: Vec<f64> = mins.iter().map(|m| m / eps).collect();
        let c1 = self
            .matrix
            .iter()
            .map(|r| {
                r.iter()
                    .zip(&mins)
                    .map(|(c, m)| ((c - m) / (1.0 - eps)).max(0.0))
                    .collect()
            })
            .collect();
        Ok(EpsMajorDecomposition {
            epsilon: eps,
            c0_row,
            c1,
        })
    }

    /// Rational version of [`Channel::max_eps_decompose`].
    pub fn max_eps_decompose_exact(&self) -> Result<ExactDecomposition> {
        let exact = self
            .exact
            .as_ref()
            .ok_or_else(|| Error::Channel("channel has no rational form".into()))?;
        let zero = Rational64::from_integer(0);
        let one = Rational64::from_integer(1);
        let mins: Vec<Rational64> = (0..self.outputs())
            .map(|y| exact.iter().map(|r| r[y]).min().unwrap())
            .collect();
        let eps: Rational64 = mins.iter().copied().sum();
        if eps == zero {
            return Err(Error::NotMajorizing);
        }
        if eps == one {
            return Err(Error::Uninformative);
        }
        let zero_cols: Vec<usize> = (0..mins.len()).filter(|&y| mins[y] == zero).collect();
        if !zero_cols.is_empty() {
            return Err(Error::ZeroColumnMinimum(zero_cols));
        }
        Ok(ExactDecomposition {
            epsilon: eps,
            c0_row: mins.iter().map(|m| m / eps).collect(),
            c1: exact
                .iter()
                .map(|r| r.iter().zip(&mins).map(|(c, m)| (c - m) / (one - eps)).collect())
                .collect(),
        })
    }

    /// Lifted channel over Y×{0,1}; output (y, ξ) has index 2y + ξ.
    pub fn augment(&self, dec: &EpsMajorDecomposition) -> Result<Channel> {
        self.check_decomposition(dec)?;
        let eps = dec.epsilon;
        let matrix = (0..self.inputs())
            .map(|x| {
                let mut row = Vec::with_capacity(2 * self.outputs());
                for y in 0..self.outputs() {
                    row.push(eps * dec.c0_row[y]);
                    row.push((1.0 - eps) * dec.c1[x][y]);
                }
                row
            })
            .collect();
        Channel::new(matrix).map_err(|e| Error::Channel(format!("augmented channel: {e}")))
    }

    /// Exact lifted matrix, same layout as [`Channel::augment`].
    pub fn augment_exact(dec: &ExactDecomposition) -> Vec<Vec<Rational64>> {
        let one = Rational64::from_integer(1);
        dec.c1
            .iter()
            .map(|c1row| {
                let mut row = Vec::with_capacity(2 * c1row.len());
                for (y, c1) in c1row.iter().enumerate() {
                    row.push(dec.epsilon * dec.c0_row[y]);
                    row.push((one - dec.epsilon) * c1);
                }
                row
            })
            .collect()
    }

    fn check_decomposition(&self, dec: &EpsMajorDecomposition) -> Result<()> {
        let bad = |m: &str| Err(Error::Channel(format!("inconsistent decomposition: {m}")));
        if !(dec.epsilon > 0.0 && dec.epsilon < 1.0) {
            return bad("epsilon outside (0,1)");
        }
        if dec.c0_row.len() != self.outputs()
            || dec.c1.len() != self.inputs()
            || dec.c1.iter().any(|r| r.len() != self.outputs())
        {
            return bad("shape");
        }
        for x in 0..self.inputs() {
            for y in 0..self.outputs() {
                let r = dec.epsilon * dec.c0_row[y] + (1.0 - dec.epsilon) * dec.c1[x][y];
                if (r - self.matrix[x][y]).abs() > 1e-10 {
                    return bad("does not reconstruct C");
                }
            }
        }
        Ok(())
    }
}

/// Sums out ξ from an augmented matrix laid out as in [`Channel::augment`].
pub fn marginalize_switch<T: Copy + std::iter::Sum<T>>(aug: &[Vec<T>]) -> Vec<Vec<T>> {
    aug.iter()
        .map(|r| r.chunks(2).map(|c| c.iter().copied().sum()).collect())
        .collect()
}
