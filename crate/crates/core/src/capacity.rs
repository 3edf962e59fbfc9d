//! Capacity factors: closed forms, the eps-majorizing upper bound, the
//! stationary optimization programs, simulation bisection and EMW assembly.

use std::cell::RefCell;

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::Channel;
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, Sense};
use crate::markov::{service_rate, stationary};
use crate::network::ScheduleSet;
use crate::policies::{
    perturb_simple, EmwBank, EmwMember, FiniteMemoryAllocation, MemorylessAllocation, SimpleEncoder,
};
use crate::sim::{point_seed, run_and_classify, ExperimentConfig, Label, PolicyPair};
use crate::stoch::RowStochastic;

pub const ENTRY_FLOOR: f64 = 1e-6;
const MAX_ENUMERATED_STARTS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Optimize,
    Simulate,
    Bound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    None,
    Bound {
        mu0: Vec<f64>,
        weights: Vec<f64>,
    },
    Memoryless {
        theta: Vec<Vec<f64>>,
        signal_dists: Vec<Vec<f64>>,
        rates: Vec<Vec<f64>>,
    },
    FiniteMemory {
        mem_bits: u32,
        g_a: Vec<Vec<f64>>,
        h_a: Vec<Vec<f64>>,
        encoders: Vec<Vec<Vec<f64>>>,
        rates: Vec<Vec<f64>>,
    },
    Simulated(SimEstimate),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub starts: usize,
    pub best_start: usize,
    pub rounds: usize,
    pub evaluations: usize,
    pub start_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapFactorResult {
    pub rho: f64,
    pub method: Method,
    /// Maximal extreme points (schedule indices) the witness is built for.
    pub directions: Vec<usize>,
    pub witness: Witness,
    pub diagnostics: Diagnostics,
}

/// 1 − ε(1 − 1/N).
pub fn closed_form_parallel(n: usize, eps: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Parameter(format!("N = {n} < 2")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Parameter(format!("epsilon {eps} outside (0,1)")));
    }
    Ok(1.0 - eps * (1.0 - 1.0 / n as f64))
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Parameter(format!("epsilon {eps} outside (0,1)")));
    }
    Ok(())
}

fn directions(pi: &ScheduleSet) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let idx = pi.maximal_extreme_points()?;
    let d = idx
        .iter()
        .map(|&i| pi.get(i).iter().map(|&v| v as f64).collect())
        .collect();
    Ok((idx, d))
}

/// ρ(ε, μ0): min over maximal extreme points d of
/// sup{a : a·d ≤ (1−ε)p + εμ0, p ∈ conv Π}.
pub fn rho_eps_mu0(pi: &ScheduleSet, eps: f64, mu0: &[f64]) -> Result<f64> {
    check_eps(eps)?;
    let (_, dirs) = directions(pi)?;
    let k = pi.len();
    let s = pi.service_matrix();
    let mut best = f64::INFINITY;
    for d in &dirs {
        let mut obj = vec![0.0; k + 1];
        obj[k] = 1.0;
        let mut lp = LinearProgram::maximize(obj);
        let mut sum = vec![1.0; k + 1];
        sum[k] = 0.0;
        lp.add(sum, Sense::Eq, 1.0);
        for j in 0..pi.queues() {
            // a d_j − (1−ε) Σ p s_j ≤ ε μ0_j
            let mut row: Vec<f64> = s.iter().map(|r| -(1.0 - eps) * r[j]).collect();
            row.push(d[j]);
            lp.add(row, Sense::Le, eps * mu0[j]);
        }
        best = best.min(lp.solve()?.value);
    }
    Ok(best)
}

/// sup over μ0 ∈ conv Π of ρ(ε, μ0), as one linear program.
pub fn upper_bound_epsmaj(pi: &ScheduleSet, eps: f64) -> Result<CapFactorResult> {
    check_eps(eps)?;
    let (idx, dirs) = directions(pi)?;
    let k = pi.len();
    let f = dirs.len();
    let s = pi.service_matrix();
    // variables: t, q (k), p^(i) (k each)
    let nv = 1 + k + f * k;
    let mut obj = vec![0.0; nv];
    obj[0] = 1.0;
    let mut lp = LinearProgram::maximize(obj);
    let q_terms: Vec<(usize, f64)> = (0..k).map(|c| (1 + c, 1.0)).collect();
    lp.add_sparse(&q_terms, Sense::Eq, 1.0);
    for (i, d) in dirs.iter().enumerate() {
        let base = 1 + k + i * k;
        let p_terms: Vec<(usize, f64)> = (0..k).map(|c| (base + c, 1.0)).collect();
        lp.add_sparse(&p_terms, Sense::Eq, 1.0);
        for j in 0..pi.queues() {
            if d[j] == 0.0 {
                continue;
            }
            let mut terms = vec![(0, d[j])];
            for c in 0..k {
                terms.push((base + c, -(1.0 - eps) * s[c][j]));
                terms.push((1 + c, -eps * s[c][j]));
            }
            lp.add_sparse(&terms, Sense::Le, 0.0);
        }
    }
    let sol = lp.solve()?;
    let weights = sol.x[1..1 + k].to_vec();
    Ok(CapFactorResult {
        rho: sol.value,
        method: Method::Bound,
        directions: idx,
        witness: Witness::Bound {
            mu0: pi.mix(&weights),
            weights,
        },
        diagnostics: Diagnostics::default(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub starts: usize,
    pub seed: u64,
    pub max_rounds: usize,
    pub tol: f64,
    /// Nelder–Mead evaluations per start (memory programs only).
    pub nm_evals: usize,
    /// Alternation rounds inside each Nelder–Mead evaluation.
    pub inner_rounds: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            starts: 20,
            seed: 0,
            max_rounds: 200,
            tol: 1e-10,
            nm_evals: 150,
            inner_rounds: 3,
        }
    }
}

/// μ^(i) ≥ ρ d^(i) as ρ = min_j μ_j / d_j over d_j > 0.
fn achieved(mu: &[Vec<f64>], dirs: &[Vec<f64>]) -> f64 {
    mu.iter()
        .zip(dirs)
        .map(|(m, d)| {
            m.iter()
                .zip(d)
                .filter(|(_, &dj)| dj > 0.0)
                .map(|(a, b)| a / b)
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::INFINITY, f64::min)
}

fn random_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| {
            let r: Vec<f64> = (0..cols).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
            let s: f64 = r.iter().sum();
            r.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

struct V0Problem<'a> {
    pi: &'a ScheduleSet,
    c: &'a Channel,
    dirs: Vec<Vec<f64>>,
}

struct V0Point {
    rho: f64,
    theta: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    rounds: usize,
}

impl V0Problem<'_> {
    // best r^(i) for fixed Θ
    fn signal_step(&self, theta: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)> {
        let rows = MemorylessAllocation::new(
            RowStochastic::with_tolerance(theta.to_vec(), 1e-7)?,
            self.c.outputs(),
            self.pi.len(),
        )?
        .rate_rows(self.c, self.pi);
        let nx = self.c.inputs();
        let mut rho = f64::INFINITY;
        let mut rs = Vec::new();
        for d in &self.dirs {
            let mut obj = vec![0.0; nx + 1];
            obj[nx] = 1.0;
            let mut lp = LinearProgram::maximize(obj);
            let mut sum = vec![1.0; nx + 1];
            sum[nx] = 0.0;
            lp.add(sum, Sense::Eq, 1.0);
            for j in 0..self.pi.queues() {
                if d[j] == 0.0 {
                    continue;
                }
                let mut row: Vec<f64> = rows.iter().map(|r| r[j]).collect();
                row.push(-d[j]);
                lp.add(row, Sense::Ge, 0.0);
            }
            let s = lp.solve()?;
            rho = rho.min(s.value);
            let r = s.x[..nx].to_vec();
            let t: f64 = r.iter().sum();
            rs.push(r.into_iter().map(|v| v / t).collect());
        }
        Ok((rho, rs))
    }

    // best (Θ, ρ) for fixed r^(i)
    fn theta_step(&self, rs: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)> {
        let ny = self.c.outputs();
        let k = self.pi.len();
        let s = self.pi.service_matrix();
        let nv = ny * k + 1;
        let mut obj = vec![0.0; nv];
        obj[nv - 1] = 1.0;
        let mut lp = LinearProgram::maximize(obj);
        for y in 0..ny {
            let terms: Vec<(usize, f64)> = (0..k).map(|c| (y * k + c, 1.0)).collect();
            lp.add_sparse(&terms, Sense::Eq, 1.0);
        }
        for (r, d) in rs.iter().zip(&self.dirs) {
            let w: Vec<f64> = (0..ny)
                .map(|y| (0..self.c.inputs()).map(|x| r[x] * self.c.prob(x, y)).sum())
                .collect();
            for j in 0..self.pi.queues() {
                if d[j] == 0.0 {
                    continue;
                }
                let mut terms = vec![(nv - 1, -d[j])];
                for y in 0..ny {
                    for c in 0..k {
                        if s[c][j] != 0.0 && w[y] != 0.0 {
                            terms.push((y * k + c, w[y] * s[c][j]));
                        }
                    }
                }
                lp.add_sparse(&terms, Sense::Ge, 0.0);
            }
        }
        let sol = lp.solve()?;
        let theta = (0..ny)
            .map(|y| {
                let row: Vec<f64> = sol.x[y * k..(y + 1) * k].iter().map(|v| v.max(0.0)).collect();
                let t: f64 = row.iter().sum();
                row.into_iter().map(|v| v / t).collect()
            })
            .collect();
        Ok((sol.value, theta))
    }

    fn alternate(&self, theta0: Vec<Vec<f64>>, opts: &SolverOptions) -> Result<V0Point> {
        let mut theta = theta0;
        let (mut rho, mut r) = self.signal_step(&theta)?;
        let mut rounds = 0;
        for _ in 0..opts.max_rounds {
            rounds += 1;
            let (_, th) = self.theta_step(&r)?;
            let (rho2, r2) = self.signal_step(&th)?;
            if rho2 > rho + opts.tol {
                rho = rho2;
                theta = th;
                r = r2;
            } else {
                if rho2 >= rho {
                    rho = rho2;
                    theta = th;
                    r = r2;
                }
                break;
            }
        }
        Ok(V0Point { rho, theta, r, rounds })
    }
}

fn v0_starts(pi: &ScheduleSet, c: &Channel, f_idx: &[usize], opts: &SolverOptions) -> Vec<Vec<Vec<f64>>> {
    let ny = c.outputs();
    let k = pi.len();
    let mut starts = vec![RowStochastic::uniform(ny, k).rows().to_vec()];
    let f = f_idx.len();
    // every deterministic map Y -> E' when there are few of them
    match f.checked_pow(ny as u32).filter(|&t| t <= MAX_ENUMERATED_STARTS) {
        Some(total) => {
            for code in 0..total {
                let pick = |y: usize| f_idx[(code / f.pow(y as u32)) % f];
                starts.push(RowStochastic::point_mass(ny, k, pick).rows().to_vec());
            }
        }
        None => starts.push(RowStochastic::point_mass(ny, k, |y| f_idx[y % f]).rows().to_vec()),
    }
    for s in 0..opts.starts {
        let mut rng = ChaCha8Rng::seed_from_u64(point_seed(opts.seed, s as u64));
        starts.push(random_rows(&mut rng, ny, k));
    }
    starts
}

/// Memoryless receiver: maximize ρ s.t. r^(i) C Θ S ≥ ρ d^(i), by
/// alternating linear programs from several starts.
pub fn optimize_v0(pi: &ScheduleSet, c: &Channel, opts: &SolverOptions) -> Result<CapFactorResult> {
    let (idx, dirs) = directions(pi)?;
    let prob = V0Problem { pi, c, dirs };
    let starts = v0_starts(pi, c, &idx, opts);
    let points: Vec<Result<V0Point>> = starts
        .into_par_iter()
        .map(|t| prob.alternate(t, opts))
        .collect();
    let mut best: Option<(usize, V0Point)> = None;
    let mut values = Vec::new();
    let mut rounds = 0;
    for (i, p) in points.into_iter().enumerate() {
        let p = p?;
        values.push(p.rho);
        rounds += p.rounds;
        if best.as_ref().map(|b| p.rho > b.1.rho + 1e-12).unwrap_or(true) {
            best = Some((i, p));
        }
    }
    let (best_start, p) = best.expect("at least one start");
    let theta = MemorylessAllocation::new(RowStochastic::with_tolerance(p.theta.clone(), 1e-7)?, c.outputs(), pi.len())?;
    let rows = theta.rate_rows(c, pi);
    let rates: Vec<Vec<f64>> = p
        .r
        .iter()
        .map(|r| {
            let mut mu = vec![0.0; pi.queues()];
            for (x, row) in rows.iter().enumerate() {
                for (m, v) in mu.iter_mut().zip(row) {
                    *m += r[x] * v;
                }
            }
            mu
        })
        .collect();
    Ok(CapFactorResult {
        rho: achieved(&rates, &prob.dirs).clamp(0.0, 1.0),
        method: Method::Optimize,
        directions: idx,
        witness: Witness::Memoryless {
            theta: p.theta,
            signal_dists: p.r,
            rates,
        },
        diagnostics: Diagnostics {
            starts: values.len(),
            best_start,
            rounds,
            evaluations: rounds,
            start_values: values,
        },
    })
}

/// Witness of a memory program: (G^A, H^A) and one G^E per direction.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryWitness {
    pub mem_bits: u32,
    pub allocation: FiniteMemoryAllocation,
    pub encoders: Vec<SimpleEncoder>,
    pub rates: Vec<Vec<f64>>,
    pub rho: f64,
}

impl MemoryWitness {
    pub fn from_result(res: &CapFactorResult, c: &Channel) -> Result<Self> {
        match &res.witness {
            Witness::FiniteMemory {
                mem_bits,
                g_a,
                h_a,
                encoders,
                rates,
            } => {
                let alloc = FiniteMemoryAllocation::new(
                    *mem_bits,
                    c.outputs(),
                    RowStochastic::with_tolerance(g_a.clone(), 1e-7)?,
                    RowStochastic::with_tolerance(h_a.clone(), 1e-7)?,
                )?;
                let m = alloc.memory_states();
                let encoders = encoders
                    .iter()
                    .map(|g| SimpleEncoder::new(RowStochastic::with_tolerance(g.clone(), 1e-7)?, m, c.inputs()))
                    .collect::<Result<Vec<_>>>()?;
                Ok(MemoryWitness {
                    mem_bits: *mem_bits,
                    allocation: alloc,
                    encoders,
                    rates: rates.clone(),
                    rho: res.rho,
                })
            }
            Witness::Memoryless {
                theta, signal_dists, rates,
            } => {
                let th = MemorylessAllocation::new(
                    RowStochastic::with_tolerance(theta.clone(), 1e-7)?,
                    c.outputs(),
                    theta[0].len(),
                )?;
                let encoders = signal_dists
                    .iter()
                    .map(|r| SimpleEncoder::iid(r, 1))
                    .collect::<Result<Vec<_>>>()?;
                Ok(MemoryWitness {
                    mem_bits: 0,
                    allocation: FiniteMemoryAllocation::from_memoryless(&th),
                    encoders,
                    rates: rates.clone(),
                    rho: res.rho,
                })
            }
            _ => Err(Error::Parameter("result carries no policy witness".into())),
        }
    }

    /// Same policies on 2^bits memory states; the extra states are never entered.
    pub fn embed(&self, bits: u32, c: &Channel) -> Result<Self> {
        if bits < self.mem_bits {
            return Err(Error::Parameter("cannot embed into fewer bits".into()));
        }
        let m_old = 1usize << self.mem_bits;
        let m_new = 1usize << bits;
        let ny = c.outputs();
        let nx = c.inputs();
        let src = |m: usize| m % m_old;
        let g_a = (0..m_new * ny)
            .map(|r| {
                let (m, y) = (r / ny, r % ny);
                let mut row = vec![0.0; m_new];
                for (m2, p) in self.allocation.g_a().row(src(m) * ny + y).iter().enumerate() {
                    row[m2] += p;
                }
                row
            })
            .collect();
        let h_a = (0..m_new * ny)
            .map(|r| self.allocation.h_a().row(src(r / ny) * ny + r % ny).to_vec())
            .collect();
        let alloc = FiniteMemoryAllocation::new(bits, ny, RowStochastic::new(g_a)?, RowStochastic::new(h_a)?)?;
        let encoders = self
            .encoders
            .iter()
            .map(|e| {
                let rows = (0..m_new * nx)
                    .map(|r| e.g_e().row(src(r / nx) * nx + r % nx).to_vec())
                    .collect();
                SimpleEncoder::new(RowStochastic::new(rows)?, m_new, nx)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MemoryWitness {
            mem_bits: bits,
            allocation: alloc,
            encoders,
            rates: self.rates.clone(),
            rho: self.rho,
        })
    }

    /// Recomputes rates and ρ from the stationary laws.
    pub fn evaluate(&mut self, pi: &ScheduleSet, c: &Channel, dirs: &[Vec<f64>]) -> Result<f64> {
        self.rates = self
            .encoders
            .iter()
            .map(|e| crate::markov::service_rate_reduced(e, &self.allocation, c, pi))
            .collect::<Result<Vec<_>>>()?;
        self.rho = achieved(&self.rates, dirs).clamp(0.0, 1.0);
        Ok(self.rho)
    }

    fn into_result(self, idx: Vec<usize>, diagnostics: Diagnostics) -> CapFactorResult {
        CapFactorResult {
            rho: self.rho,
            method: Method::Optimize,
            directions: idx,
            witness: Witness::FiniteMemory {
                mem_bits: self.mem_bits,
                g_a: self.allocation.g_a().rows().to_vec(),
                h_a: self.allocation.h_a().rows().to_vec(),
                encoders: self.encoders.iter().map(|e| e.g_e().rows().to_vec()).collect(),
                rates: self.rates,
            },
            diagnostics,
        }
    }
}

struct VlProblem<'a> {
    pi: &'a ScheduleSet,
    c: &'a Channel,
    dirs: Vec<Vec<f64>>,
    nm: usize,
    s: Vec<Vec<f64>>,
}

/// Inner state of the alternation for a fixed G^A.
#[derive(Clone)]
struct Inner {
    h_a: Vec<Vec<f64>>,
    g_e: Vec<Vec<Vec<f64>>>,
    rho: f64,
}

impl VlProblem<'_> {
    fn nx(&self) -> usize {
        self.c.inputs()
    }

    fn ny(&self) -> usize {
        self.c.outputs()
    }

    // T[m][x'][m'] = Σ_y C[x'][y] G^A[(m,y)][m']
    fn memory_kernel(&self, g_a: &[Vec<f64>]) -> Vec<Vec<Vec<f64>>> {
        let (nm, nx, ny) = (self.nm, self.nx(), self.ny());
        (0..nm)
            .map(|m| {
                (0..nx)
                    .map(|x2| {
                        let mut row = vec![0.0; nm];
                        for y in 0..ny {
                            let cy = self.c.prob(x2, y);
                            for (m2, r) in row.iter_mut().enumerate() {
                                *r += cy * g_a[m * ny + y][m2];
                            }
                        }
                        row
                    })
                    .collect()
            })
            .collect()
    }

    // r(m, x') = Σ_y C[x'][y] H^A[(m,y)] S
    fn rewards(&self, h_a: &[Vec<f64>]) -> Vec<Vec<Vec<f64>>> {
        let (nm, nx, ny) = (self.nm, self.nx(), self.ny());
        (0..nm)
            .map(|m| {
                (0..nx)
                    .map(|x2| {
                        let mut mix = vec![0.0; self.pi.len()];
                        for y in 0..ny {
                            let cy = self.c.prob(x2, y);
                            for (k, v) in mix.iter_mut().enumerate() {
                                *v += cy * h_a[m * ny + y][k];
                            }
                        }
                        self.pi.mix(&mix)
                    })
                    .collect()
            })
            .collect()
    }

    // occupation-measure LP over (m, x) states with action x'
    fn encoder_step(
        &self,
        kernel: &[Vec<Vec<f64>>],
        rewards: &[Vec<Vec<f64>>],
        d: &[f64],
        prev: &[Vec<f64>],
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        let (nm, nx) = (self.nm, self.nx());
        let ns = nm * nx;
        let var = |s: usize, a: usize| s * nx + a;
        let nv = ns * nx + 1;
        let t = nv - 1;
        let mut obj = vec![0.0; nv];
        obj[t] = 1.0;
        let mut lp = LinearProgram::maximize(obj);
        lp.add_sparse(&(0..ns * nx).map(|v| (v, 1.0)).collect::<Vec<_>>(), Sense::Eq, 1.0);
        // inflow into (m', x'') equals outflow; one balance row is redundant
        for target in 1..ns {
            let (m2, x2) = (target / nx, target % nx);
            let mut terms: Vec<(usize, f64)> = (0..nx).map(|a| (var(target, a), 1.0)).collect();
            for s in 0..ns {
                let m = s / nx;
                let p = kernel[m][x2][m2];
                if p != 0.0 {
                    terms.push((var(s, x2), -p));
                }
            }
            lp.add_sparse(&terms, Sense::Eq, 0.0);
        }
        for j in 0..self.pi.queues() {
            if d[j] == 0.0 {
                continue;
            }
            let mut terms = vec![(t, -d[j])];
            for s in 0..ns {
                let m = s / nx;
                for a in 0..nx {
                    let r = rewards[m][a][j];
                    if r != 0.0 {
                        terms.push((var(s, a), r));
                    }
                }
            }
            lp.add_sparse(&terms, Sense::Ge, 0.0);
        }
        let sol = lp.solve()?;
        let g_e = (0..ns)
            .map(|s| {
                let row: Vec<f64> = (0..nx).map(|a| sol.x[var(s, a)].max(0.0)).collect();
                let tot: f64 = row.iter().sum();
                if tot > 1e-12 {
                    row.into_iter().map(|v| v / tot).collect()
                } else {
                    prev[s].clone()
                }
            })
            .collect();
        Ok((sol.value, g_e))
    }

    // stationary law of (m, x) under one encoder
    fn signal_law(&self, kernel: &[Vec<Vec<f64>>], g_e: &[Vec<f64>]) -> Result<Vec<f64>> {
        let (nm, nx) = (self.nm, self.nx());
        let ns = nm * nx;
        let mut p = vec![vec![0.0; ns]; ns];
        for s in 0..ns {
            let m = s / nx;
            for x2 in 0..nx {
                let e = g_e[s][x2];
                if e == 0.0 {
                    continue;
                }
                for m2 in 0..nm {
                    p[s][m2 * nx + x2] += e * kernel[m][x2][m2];
                }
            }
        }
        stationary(&p)
    }

    fn allocation_step(&self, kernel: &[Vec<Vec<f64>>], g_es: &[Vec<Vec<f64>>]) -> Result<(f64, Vec<Vec<f64>>)> {
        let (nm, nx, ny) = (self.nm, self.nx(), self.ny());
        let k = self.pi.len();
        let rows = nm * ny;
        let nv = rows * k + 1;
        let rho = nv - 1;
        let mut obj = vec![0.0; nv];
        obj[rho] = 1.0;
        let mut lp = LinearProgram::maximize(obj);
        for r in 0..rows {
            lp.add_sparse(&(0..k).map(|c| (r * k + c, 1.0)).collect::<Vec<_>>(), Sense::Eq, 1.0);
        }
        for (g_e, d) in g_es.iter().zip(&self.dirs) {
            let law = self.signal_law(kernel, g_e)?;
            // w(m, y) = P(M_r = m, next message = y)
            let mut w = vec![0.0; rows];
            for s in 0..nm * nx {
                let m = s / nx;
                for x2 in 0..nx {
                    let f = law[s] * g_e[s][x2];
                    if f == 0.0 {
                        continue;
                    }
                    for y in 0..ny {
                        w[m * ny + y] += f * self.c.prob(x2, y);
                    }
                }
            }
            for j in 0..self.pi.queues() {
                if d[j] == 0.0 {
                    continue;
                }
                let mut terms = vec![(rho, -d[j])];
                for r in 0..rows {
                    if w[r] == 0.0 {
                        continue;
                    }
                    for c in 0..k {
                        if self.s[c][j] != 0.0 {
                            terms.push((r * k + c, w[r] * self.s[c][j]));
                        }
                    }
                }
                lp.add_sparse(&terms, Sense::Ge, 0.0);
            }
        }
        let sol = lp.solve()?;
        let h_a = (0..rows)
            .map(|r| {
                let row: Vec<f64> = sol.x[r * k..(r + 1) * k].iter().map(|v| v.max(0.0)).collect();
                let t: f64 = row.iter().sum();
                row.into_iter().map(|v| v / t).collect()
            })
            .collect();
        Ok((sol.value, h_a))
    }

    fn floor(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        RowStochastic::normalized(rows.to_vec())
            .map(|m| m.floored(ENTRY_FLOOR).rows().to_vec())
            .unwrap_or_else(|_| rows.to_vec())
    }

    /// Alternates encoder LPs and the allocation LP for fixed G^A.
    fn inner(&self, g_a: &[Vec<f64>], start: &Inner, rounds: usize) -> Result<Inner> {
        let kernel = self.memory_kernel(g_a);
        let mut cur = start.clone();
        cur.rho = self.value(&kernel, &cur.h_a, &cur.g_e)?;
        for _ in 0..rounds {
            let rewards = self.rewards(&cur.h_a);
            let mut g_es = Vec::with_capacity(self.dirs.len());
            for (d, prev) in self.dirs.iter().zip(&cur.g_e) {
                let (_, g) = self.encoder_step(&kernel, &rewards, d, prev)?;
                g_es.push(Self::floor(&g));
            }
            let (_, h) = self.allocation_step(&kernel, &g_es)?;
            let h = Self::floor(&h);
            let v = self.value(&kernel, &h, &g_es)?;
            let gain = v - cur.rho;
            if v > cur.rho {
                cur = Inner { h_a: h, g_e: g_es, rho: v };
            }
            if gain < 1e-9 {
                break;
            }
        }
        Ok(cur)
    }

    /// Exact ρ of the floored policies.
    fn value(&self, kernel: &[Vec<Vec<f64>>], h_a: &[Vec<f64>], g_es: &[Vec<Vec<f64>>]) -> Result<f64> {
        let rewards = self.rewards(h_a);
        let nx = self.nx();
        let mut rates = Vec::with_capacity(g_es.len());
        for g_e in g_es {
            let law = self.signal_law(kernel, g_e)?;
            let mut mu = vec![0.0; self.pi.queues()];
            for (s, &p) in law.iter().enumerate() {
                let m = s / nx;
                for x2 in 0..nx {
                    let f = p * g_e[s][x2];
                    for (j, v) in mu.iter_mut().enumerate() {
                        *v += f * rewards[m][x2][j];
                    }
                }
            }
            rates.push(mu);
        }
        Ok(achieved(&rates, &self.dirs))
    }

    fn softmax_rows(&self, theta: &[f64]) -> Vec<Vec<f64>> {
        let nm = self.nm;
        let rows = nm * self.ny();
        (0..rows)
            .map(|r| {
                let mut z = vec![0.0; nm];
                z[1..].copy_from_slice(&theta[r * (nm - 1)..(r + 1) * (nm - 1)]);
                let mx = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = z.iter().map(|v| (v - mx).exp()).collect();
                let s: f64 = e.iter().sum();
                e.into_iter().map(|v| v / s).collect()
            })
            .map(|r: Vec<f64>| {
                let f: Vec<f64> = r.iter().map(|v| v.max(ENTRY_FLOOR)).collect();
                let s: f64 = f.iter().sum();
                f.into_iter().map(|v| v / s).collect()
            })
            .collect()
    }

    fn logits(&self, g_a: &[Vec<f64>]) -> Vec<f64> {
        let mut out = Vec::new();
        for row in g_a {
            let base = row[0].max(ENTRY_FLOOR).ln();
            for v in &row[1..] {
                out.push((v.max(ENTRY_FLOOR).ln() - base).clamp(-20.0, 20.0));
            }
        }
        out
    }
}

type NmBest = (f64, Vec<Vec<f64>>, Inner);

struct NmCost<'a, 'b> {
    prob: &'a VlProblem<'b>,
    best: &'a RefCell<NmBest>,
    rounds: usize,
    evals: &'a RefCell<usize>,
}

impl CostFunction for NmCost<'_, '_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        *self.evals.borrow_mut() += 1;
        let g_a = self.prob.softmax_rows(p);
        let start = self.best.borrow().2.clone();
        match self.prob.inner(&g_a, &start, self.rounds) {
            Ok(inner) => {
                let v = inner.rho;
                let mut b = self.best.borrow_mut();
                if v > b.0 {
                    *b = (v, g_a, inner);
                }
                Ok(-v)
            }
            Err(_) => Ok(1.0),
        }
    }
}

fn structured_memory_starts(nm: usize, ny: usize) -> Vec<Vec<Vec<f64>>> {
    let det = |f: &dyn Fn(usize, usize) -> usize| -> Vec<Vec<f64>> {
        (0..nm * ny)
            .map(|r| {
                let t = f(r / ny, r % ny);
                (0..nm).map(|m| if m == t { 1.0 } else { 0.0 }).collect()
            })
            .collect()
    };
    vec![
        det(&|_, _| 0),
        det(&|_, y| y % nm),
        det(&|m, y| (m * ny + y) % nm),
        det(&|m, y| if y == 0 { m.saturating_sub(1) } else { (m + 1).min(nm - 1) }),
    ]
}

/// Receiver with `v` bits: maximize ρ s.t. μ(G^E(i), (G^A, H^A)) ≥ ρ d^(i).
/// Nelder–Mead over softmax rows of G^A; for each G^A the encoders come from
/// occupation-measure LPs and H^A from an LP, alternated. Entries are floored.
/// Starts include the embedded v−1 witness, so the value is non-decreasing in v.
pub fn optimize_vl(pi: &ScheduleSet, c: &Channel, v: u32, opts: &SolverOptions) -> Result<CapFactorResult> {
    let base = if v == 0 {
        optimize_v0(pi, c, opts)?
    } else {
        optimize_vl(pi, c, v - 1, opts)?
    };
    if v == 0 {
        return Ok(base);
    }
    let (idx, dirs) = directions(pi)?;
    let nm = 1usize << v;
    let prob = VlProblem {
        pi,
        c,
        dirs: dirs.clone(),
        nm,
        s: pi.service_matrix(),
    };
    let embedded = MemoryWitness::from_result(&base, c)?.embed(v, c)?;
    let floor_rows = |m: &RowStochastic| VlProblem::floor(m.rows());
    let warm = Inner {
        h_a: floor_rows(embedded.allocation.h_a()),
        g_e: embedded.encoders.iter().map(|e| floor_rows(e.g_e())).collect(),
        rho: 0.0,
    };
    let warm_g_a = floor_rows(embedded.allocation.g_a());

    let ny = c.outputs();
    let mut candidates: Vec<Vec<Vec<f64>>> = vec![warm_g_a.clone()];
    candidates.extend(structured_memory_starts(nm, ny).iter().map(|g| VlProblem::floor(g)));
    for s in 0..opts.starts {
        let mut rng = ChaCha8Rng::seed_from_u64(point_seed(opts.seed ^ 0x5eed, (v as u64) << 32 | s as u64));
        candidates.push(random_rows(&mut rng, nm * ny, nm));
    }

    let run = |g0: &Vec<Vec<f64>>| -> Result<(f64, Vec<Vec<f64>>, Inner, usize)> {
        let first = prob.inner(g0, &warm, opts.max_rounds.min(50))?;
        let best = RefCell::new((first.rho, g0.clone(), first));
        let evals = RefCell::new(0usize);
        let cost = NmCost {
            prob: &prob,
            best: &best,
            rounds: opts.inner_rounds,
            evals: &evals,
        };
        let x0 = prob.logits(g0);
        let dim = x0.len();
        let mut simplex = vec![x0.clone()];
        for i in 0..dim {
            let mut p = x0.clone();
            p[i] += if p[i] > 0.0 { -2.0 } else { 2.0 };
            simplex.push(p);
        }
        let iters = (opts.nm_evals as u64).max(1);
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(1e-9)
            .map_err(|e| Error::Parameter(e.to_string()))?;
        let _ = Executor::new(cost, solver)
            .configure(|s| s.max_iters(iters))
            .run();
        let evals = evals.into_inner();
        let (_, g_a, inner) = best.into_inner();
        // polish the best point found
        let polished = prob.inner(&g_a, &inner, opts.max_rounds.min(50))?;
        Ok((polished.rho, g_a, polished, evals))
    };

    let outcomes: Vec<Result<(f64, Vec<Vec<f64>>, Inner, usize)>> = candidates.par_iter().map(run).collect();
    let mut values = Vec::new();
    let mut evaluations = 0;
    let mut best: Option<(usize, Vec<Vec<f64>>, Inner)> = None;
    for (i, o) in outcomes.into_iter().enumerate() {
        let (v_i, g_a, inner, ev) = o?;
        values.push(v_i);
        evaluations += ev;
        if best.as_ref().map(|b| v_i > b.2.rho + 1e-12).unwrap_or(true) {
            best = Some((i, g_a, inner));
        }
    }
    let (best_start, g_a, inner) = best.expect("candidates");
    let allocation = FiniteMemoryAllocation::new(v, ny, RowStochastic::new(g_a)?, RowStochastic::new(inner.h_a)?)?;
    let encoders = inner
        .g_e
        .into_iter()
        .map(|g| SimpleEncoder::new(RowStochastic::new(g)?, nm, c.inputs()))
        .collect::<Result<Vec<_>>>()?;
    let mut w = MemoryWitness {
        mem_bits: v,
        allocation,
        encoders,
        rates: Vec::new(),
        rho: 0.0,
    };
    w.evaluate(pi, c, &dirs)?;
    // the embedded lower-memory witness is exact; keep it when the floors cost more
    let mut emb = embedded;
    emb.evaluate(pi, c, &dirs)?;
    let chosen = if emb.rho > w.rho { emb } else { w };
    Ok(chosen.into_result(
        idx,
        Diagnostics {
            starts: values.len(),
            best_start,
            rounds: 0,
            evaluations,
            start_values: values,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BisectionOptions {
    pub tol: f64,
    pub margin: f64,
    pub horizon: u64,
    pub window: u64,
    pub threshold: f64,
    pub seed: u64,
    /// Extra attempts with doubled horizon when a probe is inconclusive.
    pub retries: u32,
}

impl Default for BisectionOptions {
    fn default() -> Self {
        BisectionOptions {
            tol: 0.01,
            margin: 0.02,
            horizon: crate::sim::DEFAULT_HORIZON,
            window: crate::sim::DEFAULT_WINDOW,
            threshold: crate::sim::DEFAULT_THRESHOLD,
            seed: 0,
            retries: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub rho: f64,
    pub lambda: Vec<f64>,
    pub label: Label,
    pub median_slope: f64,
    pub max_queue: u64,
    pub slots: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionEstimate {
    pub direction: Vec<f64>,
    /// Largest ρ judged stable.
    pub lo: f64,
    /// Smallest ρ judged unstable (or 1 when none was).
    pub hi: f64,
    pub probes: Vec<Probe>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub lo: f64,
    pub hi: f64,
    pub directions: Vec<DirectionEstimate>,
}

impl SimEstimate {
    pub fn point(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// True when the interval is no wider than `tol` (no inconclusive band).
    pub fn is_point(&self, tol: f64) -> bool {
        self.hi - self.lo <= tol + 1e-12
    }
}

fn probe(
    base: &ExperimentConfig,
    d: &[f64],
    rho: f64,
    opts: &BisectionOptions,
    counter: &mut u64,
    dir_id: u64,
) -> Result<Probe> {
    let lambda: Vec<f64> = d.iter().map(|v| (v * rho * (1.0 - opts.margin)).min(1.0)).collect();
    let mut horizon = opts.horizon;
    let mut last = None;
    for _ in 0..=opts.retries {
        let mut cfg = base.clone();
        cfg.arrivals = crate::network::ArrivalRates::new(lambda.clone())?;
        cfg.horizon = horizon;
        cfg.seed = point_seed(opts.seed, (dir_id << 32) | *counter);
        *counter += 1;
        let (_, v) = run_and_classify(&cfg)?;
        let p = Probe {
            rho,
            lambda: lambda.clone(),
            label: v.label,
            median_slope: v.median_slope,
            max_queue: v.max_queue,
            slots: horizon,
            seed: cfg.seed,
        };
        if v.label != Label::Inconclusive {
            return Ok(p);
        }
        last = Some(p);
        horizon *= 2;
    }
    Ok(last.expect("at least one attempt"))
}

fn bisect_direction(base: &ExperimentConfig, d: &[f64], opts: &BisectionOptions, dir_id: u64) -> Result<DirectionEstimate> {
    let mut counter = 0u64;
    let mut probes = Vec::new();
    let mut run = |rho: f64, probes: &mut Vec<Probe>| -> Result<Label> {
        let p = probe(base, d, rho, opts, &mut counter, dir_id)?;
        let l = p.label;
        probes.push(p);
        Ok(l)
    };
    if run(1.0, &mut probes)? == Label::Stable {
        return Ok(DirectionEstimate {
            direction: d.to_vec(),
            lo: 1.0,
            hi: 1.0,
            probes,
        });
    }
    // lo: largest stable; hi: smallest unstable; inconclusive points narrow
    // from whichever side still has room
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut inc_lo = f64::INFINITY;
    let mut inc_hi = f64::NEG_INFINITY;
    if probes[0].label == Label::Inconclusive {
        inc_lo = 1.0;
        inc_hi = 1.0;
    }
    loop {
        let lower_gap = inc_lo.min(hi) - lo;
        let upper_gap = hi - inc_hi.max(lo);
        let mid = if inc_lo.is_infinite() {
            if hi - lo <= opts.tol {
                break;
            }
            0.5 * (lo + hi)
        } else if lower_gap > opts.tol {
            0.5 * (lo + inc_lo)
        } else if upper_gap > opts.tol && hi > inc_hi {
            0.5 * (inc_hi + hi)
        } else {
            break;
        };
        match run(mid, &mut probes)? {
            Label::Stable => lo = mid,
            Label::Unstable => hi = mid,
            Label::Inconclusive => {
                inc_lo = inc_lo.min(mid);
                inc_hi = inc_hi.max(mid);
            }
        }
        if probes.len() > 64 {
            break;
        }
    }
    Ok(DirectionEstimate {
        direction: d.to_vec(),
        lo,
        hi,
        probes,
    })
}

/// Bisection on ρ along every maximal extreme direction; the estimate is the
/// minimum over directions, as an interval when inconclusive probes remain.
pub fn simulate_capfactor(
    pair: &PolicyPair,
    pi: &ScheduleSet,
    c: &Channel,
    opts: &BisectionOptions,
) -> Result<CapFactorResult> {
    let (idx, dirs) = directions(pi)?;
    let mut base = ExperimentConfig::new(pi.clone(), c.clone(), vec![0.0; pi.queues()], pair.clone())?;
    base.window = opts.window;
    base.threshold = opts.threshold;
    base.horizon = opts.horizon;
    base.validate()?;
    let per: Vec<Result<DirectionEstimate>> = dirs
        .par_iter()
        .enumerate()
        .map(|(i, d)| bisect_direction(&base, d, opts, i as u64))
        .collect();
    let per = per.into_iter().collect::<Result<Vec<_>>>()?;
    let lo = per.iter().map(|d| d.lo).fold(f64::INFINITY, f64::min);
    let hi = per.iter().map(|d| d.hi).fold(f64::INFINITY, f64::min);
    let est = SimEstimate {
        lo,
        hi,
        directions: per,
    };
    Ok(CapFactorResult {
        rho: est.point(),
        method: Method::Simulate,
        directions: idx,
        witness: Witness::Simulated(est),
        diagnostics: Diagnostics::default(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmwBuild {
    pub bank: EmwBank,
    pub allocation: FiniteMemoryAllocation,
    pub rho: f64,
    pub delta: f64,
    pub directions: Vec<usize>,
}

impl EmwBuild {
    pub fn policy_pair(&self) -> PolicyPair {
        PolicyPair::new(
            crate::sim::Encoder::Emw(self.bank.clone()),
            crate::sim::Allocator::FiniteMemory(self.allocation.clone()),
            true,
        )
    }
}

/// Optimizes a v-bit witness, makes it lazy with δ = ε_slack/4 and freezes
/// the bank rates from the stationary laws.
pub fn build_emw(
    pi: &ScheduleSet,
    c: &Channel,
    v: u32,
    eps_slack: f64,
    episode_mean: f64,
    opts: &SolverOptions,
) -> Result<EmwBuild> {
    let res = optimize_vl(pi, c, v, opts)?;
    build_emw_from(pi, c, &res, eps_slack, episode_mean)
}

pub fn build_emw_from(
    pi: &ScheduleSet,
    c: &Channel,
    res: &CapFactorResult,
    eps_slack: f64,
    episode_mean: f64,
) -> Result<EmwBuild> {
    if !(eps_slack > 0.0 && eps_slack < 1.0) {
        return Err(Error::Parameter(format!("slack {eps_slack} outside (0,1)")));
    }
    let w = MemoryWitness::from_result(res, c)?;
    let (_, dirs) = directions(pi)?;
    let delta = eps_slack / 4.0;
    let mut members = Vec::new();
    let mut allocation = None;
    for (i, enc) in w.encoders.iter().enumerate() {
        let (e, a) = perturb_simple(enc, &w.allocation, delta)?;
        let mu = service_rate(&e, &a, c, pi)?;
        let need = res.rho - eps_slack;
        if let Some(j) = (0..mu.len()).find(|&j| mu[j] < need * dirs[i][j] - 1e-12) {
            return Err(Error::Shortfall(format!(
                "bank member {i}: rate {mu:?} below ({need:.4})·{:?} at queue {j}",
                dirs[i]
            )));
        }
        members.push(EmwMember { encoder: e, rate: mu });
        allocation = Some(a);
    }
    Ok(EmwBuild {
        bank: EmwBank::new(members, episode_mean)?,
        allocation: allocation.expect("non-empty bank"),
        rho: res.rho,
        delta,
        directions: res.directions.clone(),
    })
}
