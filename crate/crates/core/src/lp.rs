//! Dense two-phase simplex for the small linear programs used throughout the
//! crate. Variables are non-negative; constraints are `<=`, `>=` or `=`.

use crate::error::LpFailure;

const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<f64>,
    sense: Sense,
    rhs: f64,
}

/// maximize c.x subject to the added rows and x >= 0.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
}

impl LinearProgram {
    pub fn maximize(objective: Vec<f64>) -> Self {
        LinearProgram {
            objective,
            rows: Vec::new(),
        }
    }

    pub fn vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coeffs: Vec<f64>, sense: Sense, rhs: f64) {
        assert_eq!(coeffs.len(), self.objective.len(), "row length");
        self.rows.push(Row { coeffs, sense, rhs });
    }

    /// Sparse helper: `terms` are (variable, coefficient) pairs.
    pub fn add_sparse(&mut self, terms: &[(usize, f64)], sense: Sense, rhs: f64) {
        let mut coeffs = vec![0.0; self.vars()];
        for &(j, a) in terms {
            coeffs[j] += a;
        }
        self.add(coeffs, sense, rhs);
    }

    pub fn solve(&self) -> Result<LpSolution, LpFailure> {
        Tableau::build(self).run(self)
    }
}

struct Tableau {
    m: usize,
    n: usize,
    width: usize,
    t: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    n_struct: usize,
    artificial_from: usize,
    blocked: Vec<bool>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Tableau {
        let n_struct = lp.vars();
        let m = lp.rows.len();
        let mut n_slack = 0;
        let mut n_art = 0;
        let mut norm: Vec<(Vec<f64>, Sense, f64)> = Vec::with_capacity(m);
        for r in &lp.rows {
            let (c, s, b) = if r.rhs < 0.0 {
                let flipped = match r.sense {
                    Sense::Le => Sense::Ge,
                    Sense::Ge => Sense::Le,
                    Sense::Eq => Sense::Eq,
                };
                (r.coeffs.iter().map(|v| -v).collect(), flipped, -r.rhs)
            } else {
                (r.coeffs.clone(), r.sense, r.rhs)
            };
            match s {
                Sense::Le => n_slack += 1,
                Sense::Ge => {
                    n_slack += 1;
                    n_art += 1
                }
                Sense::Eq => n_art += 1,
            }
            norm.push((c, s, b));
        }
        let n = n_struct + n_slack + n_art;
        let width = n + 1;
        let mut t = vec![0.0; m * width];
        let mut basis = vec![0; m];
        let mut slack = n_struct;
        let artificial_from = n_struct + n_slack;
        let mut art = artificial_from;
        for (i, (c, s, b)) in norm.into_iter().enumerate() {
            let row = &mut t[i * width..(i + 1) * width];
            row[..n_struct].copy_from_slice(&c);
            row[n] = b;
            match s {
                Sense::Le => {
                    row[slack] = 1.0;
                    basis[i] = slack;
                    slack += 1;
                }
                Sense::Ge => {
                    row[slack] = -1.0;
                    slack += 1;
                    row[art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
                Sense::Eq => {
                    row[art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
            }
        }
        Tableau {
            m,
            n,
            width,
            t,
            obj: vec![0.0; width],
            basis,
            n_struct,
            artificial_from,
            blocked: vec![false; n],
        }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width + j]
    }

    // obj[j] holds reduced costs c_j - c_B B^-1 A_j; obj[n] holds -value.
    fn set_costs(&mut self, costs: &[f64]) {
        self.obj.iter_mut().for_each(|v| *v = 0.0);
        self.obj[..self.n].copy_from_slice(costs);
        for i in 0..self.m {
            let cb = costs[self.basis[i]];
            if cb != 0.0 {
                for j in 0..self.width {
                    self.obj[j] -= cb * self.t[i * self.width + j];
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let w = self.width;
        let p = self.t[r * w + e];
        for j in 0..w {
            self.t[r * w + j] /= p;
        }
        let prow: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + e];
            if f != 0.0 {
                let row = &mut self.t[i * w..(i + 1) * w];
                for j in 0..w {
                    row[j] -= f * prow[j];
                }
                row[e] = 0.0;
            }
        }
        let f = self.obj[e];
        if f != 0.0 {
            for j in 0..w {
                self.obj[j] -= f * prow[j];
            }
            self.obj[e] = 0.0;
        }
        self.basis[r] = e;
    }

    fn iterate(&mut self) -> Result<(), LpFailure> {
        let limit = 50_000 + 200 * (self.m + self.n);
        let mut degenerate = 0usize;
        for _ in 0..limit {
            let bland = degenerate > 50;
            let mut enter = None;
            let mut best = OPT_TOL;
            for j in 0..self.n {
                if self.blocked[j] {
                    continue;
                }
                let rc = self.obj[j];
                if rc > best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = rc;
                }
            }
            let Some(e) = enter else { return Ok(()) };
            let mut leave: Option<usize> = None;
            let mut ratio = f64::INFINITY;
            for i in 0..self.m {
                let a = self.at(i, e);
                if a > PIVOT_TOL {
                    let q = self.at(i, self.n) / a;
                    // ties: Bland needs the lowest basis index, otherwise
                    // the largest pivot keeps the tableau well scaled
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            q < ratio - 1e-12
                                || (q <= ratio + 1e-12
                                    && if bland {
                                        self.basis[i] < self.basis[l]
                                    } else {
                                        a > self.at(l, e)
                                    })
                        }
                    };
                    if better {
                        ratio = q;
                        leave = Some(i);
                    }
                }
            }
            let Some(r) = leave else {
                return Err(LpFailure::Unbounded);
            };
            if ratio.abs() < 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, e);
        }
        Err(LpFailure::IterationLimit)
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpSolution, LpFailure> {
        if self.artificial_from < self.n {
            let mut c1 = vec![0.0; self.n];
            for c in c1.iter_mut().skip(self.artificial_from) {
                *c = -1.0;
            }
            self.set_costs(&c1);
            self.iterate()?;
            if -self.obj[self.n] < -FEAS_TOL || self.obj[self.n] > FEAS_TOL {
                return Err(LpFailure::Infeasible);
            }
            // drive remaining artificials out of the basis
            let mut i = 0;
            while i < self.m {
                if self.basis[i] >= self.artificial_from {
                    // the artificial sits at (numerically) zero; pivot on the
                    // largest entry so the swap stays degenerate
                    let col = (0..self.artificial_from)
                        .filter(|&j| !self.blocked[j])
                        .max_by(|&a, &b| self.at(i, a).abs().total_cmp(&self.at(i, b).abs()))
                        .filter(|&j| self.at(i, j).abs() > 1e-9);
                    match col {
                        Some(j) => {
                            let w = self.width;
                            self.t[i * w + self.n] = 0.0;
                            self.pivot(i, j);
                            i += 1;
                        }
                        None => {
                            self.drop_row(i);
                        }
                    }
                } else {
                    i += 1;
                }
            }
            for j in self.artificial_from..self.n {
                self.blocked[j] = true;
            }
        }
        let mut c2 = vec![0.0; self.n];
        c2[..self.n_struct].copy_from_slice(&lp.objective);
        self.set_costs(&c2);
        self.iterate()?;
        let mut x = vec![0.0; self.n_struct];
        for i in 0..self.m {
            if self.basis[i] < self.n_struct {
                x[self.basis[i]] = self.at(i, self.n).max(0.0);
            }
        }
        let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpSolution { value, x })
    }

    fn drop_row(&mut self, i: usize) {
        let w = self.width;
        self.t.drain(i * w..(i + 1) * w);
        self.basis.remove(i);
        self.m -= 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_max() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> 36 at (2, 6)
        let mut lp = LinearProgram::maximize(vec![3.0, 5.0]);
        lp.add(vec![1.0, 0.0], Sense::Le, 4.0);
        lp.add(vec![0.0, 2.0], Sense::Le, 12.0);
        lp.add(vec![3.0, 2.0], Sense::Le, 18.0);
        let s = lp.solve().unwrap();
        assert!((s.value - 36.0).abs() < 1e-9);
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge() {
        // min x + y s.t. x + 2y >= 4, x - y = 1  ->  x = 2, y = 1
        let mut lp = LinearProgram::maximize(vec![-1.0, -1.0]);
        lp.add(vec![1.0, 2.0], Sense::Ge, 4.0);
        lp.add(vec![1.0, -1.0], Sense::Eq, 1.0);
        let s = lp.solve().unwrap();
        assert!((s.value + 3.0).abs() < 1e-9);
        assert!((s.x[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::maximize(vec![1.0]);
        lp.add(vec![1.0], Sense::Le, 1.0);
        lp.add(vec![1.0], Sense::Ge, 2.0);
        assert_eq!(lp.solve().unwrap_err(), LpFailure::Infeasible);

        let mut lp = LinearProgram::maximize(vec![1.0, 0.0]);
        lp.add(vec![-1.0, 1.0], Sense::Le, 1.0);
        assert_eq!(lp.solve().unwrap_err(), LpFailure::Unbounded);
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::maximize(vec![1.0, 2.0]);
        lp.add(vec![1.0, 1.0], Sense::Eq, 1.0);
        lp.add(vec![2.0, 2.0], Sense::Eq, 2.0);
        let s = lp.solve().unwrap();
        assert!((s.value - 2.0).abs() < 1e-9);
    }

    #[test]
    fn negative_rhs_is_flipped() {
        // max -x s.t. -x <= -3  -> x = 3
        let mut lp = LinearProgram::maximize(vec![-1.0]);
        lp.add(vec![-1.0], Sense::Le, -3.0);
        let s = lp.solve().unwrap();
        assert!((s.x[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example; cycles under naive Dantzig without anti-cycling.
        let mut lp = LinearProgram::maximize(vec![0.75, -150.0, 0.02, -6.0]);
        lp.add(vec![0.25, -60.0, -0.04, 9.0], Sense::Le, 0.0);
        lp.add(vec![0.5, -90.0, -0.02, 3.0], Sense::Le, 0.0);
        lp.add(vec![0.0, 0.0, 1.0, 0.0], Sense::Le, 1.0);
        let s = lp.solve().unwrap();
        assert!((s.value - 0.05).abs() < 1e-9);
    }

    #[test]
    fn near_degenerate_occupation_lp() {
        let mut lp = LinearProgram::maximize(vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        lp.add(vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0], Sense::Eq, 1.0);
        lp.add(vec![0.0, -0.13583392480552367, 0.0, 1.0, 0.8641660751944763, 1.0, 0.0, -0.13583392480552367, 0.0, 0.0, -0.13583344016089458, 0.0, 0.0, -0.13583344016089458, 0.0, 0.0, -0.13583344016089458, 0.0, 0.0], Sense::Eq, 0.0);
        lp.add(vec![0.0, 0.0, -0.39490576373019526, 0.0, 0.0, -0.39490576373019526, 1.0, 1.0, 0.6050942362698047, 0.0, 0.0, -0.3949053854448581, 0.0, 0.0, -0.3949053854448581, 0.0, 0.0, -0.3949053854448581, 0.0], Sense::Eq, 0.0);
        lp.add(vec![-0.4920250006559917, 0.0, 0.0, -0.4920250006559917, 0.0, 0.0, -0.4920250006559917, 0.0, 0.0, 0.5079744888475521, 1.0, 1.0, -0.4920255111524478, 0.0, 0.0, -0.4920255111524478, 0.0, 0.0, 0.0], Sense::Eq, 0.0);
        lp.add(vec![0.0, -0.8641660751944762, 0.0, 0.0, -0.8641660751944762, 0.0, 0.0, -0.8641660751944762, 0.0, 0.0, -0.8641665598391053, 0.0, 1.0, 0.13583344016089471, 1.0, 0.0, -0.8641665598391053, 0.0, 0.0], Sense::Eq, 0.0);
        lp.add(vec![0.0, 0.0, -0.6050942362698047, 0.0, 0.0, -0.6050942362698047, 0.0, 0.0, -0.6050942362698047, 0.0, 0.0, -0.6050946145551419, 0.0, 0.0, -0.6050946145551419, 1.0, 1.0, 0.3949053854448581, 0.0], Sense::Eq, 0.0);
        lp.add(vec![0.5671661500884575, 1.0495146462884974, 0.39300555104566065, 0.5671661500884575, 1.0495146462884974, 0.39300555104566065, 0.5671661500884575, 1.0495146462884974, 0.39300555104566065, 0.9974041667701827, 1.7318939370996802, 1.2205673771207592, 0.9974041667701827, 1.7318939370996802, 1.2205673771207592, 0.9974041667701827, 1.7318939370996802, 1.2205673771207592, -2.0], Sense::Ge, 0.0);
        lp.add(vec![1.7164049251056748, 1.4752306770101198, 1.8034852246284303, 1.7164049251056748, 1.4752306770101198, 1.8034852246284303, 1.7164049251056748, 1.4752306770101198, 1.8034852246284303, 1.5012859167648105, 1.1340410316045275, 1.3897043115908796, 1.5012859167648105, 1.1340410316045275, 1.3897043115908796, 1.5012859167648105, 1.1340410316045275, 1.3897043115908796, -1.0], Sense::Ge, 0.0);
        lp.add(vec![0.4607295999826743, 0.4068710985713492, 0.6047228546858884, 0.4607295999826743, 0.4068710985713492, 0.6047228546858884, 0.4607295999826743, 0.4068710985713492, 0.6047228546858884, 0.9999930000874429, 0.9999930000900478, 0.9999930000882344, 0.9999930000874429, 0.9999930000900478, 0.9999930000882344, 0.9999930000874429, 0.9999930000900478, 0.9999930000882344, -1.0], Sense::Ge, 0.0);
        let s = lp.solve().unwrap();
        assert!(s.value > 0.0 && s.value < 10.0);
        for r in &lp.rows {
            let lhs: f64 = r.coeffs.iter().zip(&s.x).map(|(a, x)| a * x).sum();
            match r.sense {
                Sense::Eq => assert!((lhs - r.rhs).abs() < 1e-7),
                Sense::Ge => assert!(lhs >= r.rhs - 1e-7),
                Sense::Le => assert!(lhs <= r.rhs + 1e-7),
            }
        }
    }
}
