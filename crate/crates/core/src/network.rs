//! Queue dynamics, schedule sets and capacity-region geometry.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, Sense};

/// Slack below which a domination is not considered strict.
pub const STRICT_SLACK: f64 = 1e-9;

/// The finite schedule set. Row `d` of the service matrix is schedule `d`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleSet {
    queues: usize,
    schedules: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Some dominated vectors are absent.
    NotMonotone { missing: Vec<Vec<u32>> },
    /// The unit vector for this queue is absent.
    UnservedQueue { queue: usize },
    /// Fewer than two maximal elements.
    TooFewMaximal { count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Requirement {
    Monotone,
    UnitService,
    TwoMaximal,
}

impl Violation {
    pub fn requirement(&self) -> Requirement {
        match self {
            Violation::NotMonotone { .. } => Requirement::Monotone,
            Violation::UnservedQueue { .. } => Requirement::UnitService,
            Violation::TooFewMaximal { .. } => Requirement::TwoMaximal,
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NotMonotone { missing } => {
                write!(f, "not downward closed: missing {:?}", missing)
            }
            Violation::UnservedQueue { queue } => {
                write!(f, "no unit schedule for queue {}", queue)
            }
            Violation::TooFewMaximal { count } => {
                write!(f, "{} maximal element(s), need at least 2", count)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Monotone closure, offered when the set is not downward closed.
    pub closure: Option<ScheduleSet>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violates(&self, req: Requirement) -> bool {
        self.violations.iter().any(|v| v.requirement() == req)
    }
}

fn dominates(a: &[u32], b: &[u32]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y)
}

fn dominated_by(d: &[u32]) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::with_capacity(d.len())];
    for &c in d {
        let mut next = Vec::with_capacity(out.len() * (c as usize + 1));
        for prefix in &out {
            for v in 0..=c {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

impl ScheduleSet {
    /// Takes the schedules as given (order preserved). Checks shape only.
    pub fn new(schedules: Vec<Vec<u32>>) -> Result<Self> {
        let Some(first) = schedules.first() else {
            return Err(Error::Schedules("empty schedule set".into()));
        };
        let queues = first.len();
        if queues == 0 {
            return Err(Error::Schedules("schedules have zero length".into()));
        }
        for s in &schedules {
            if s.len() != queues {
                return Err(Error::Dimension {
                    what: "schedule",
                    expected: queues,
                    got: s.len(),
                });
            }
        }
        let distinct: BTreeSet<&Vec<u32>> = schedules.iter().collect();
        if distinct.len() != schedules.len() {
            return Err(Error::Schedules("duplicate schedules".into()));
        }
        Ok(ScheduleSet { queues, schedules })
    }

    /// All vectors dominated by some generator, sorted lexicographically.
    pub fn monotone_closure(generators: &[Vec<u32>]) -> Result<Self> {
        let mut all = BTreeSet::new();
        for g in generators {
            for v in dominated_by(g) {
                all.insert(v);
            }
        }
        ScheduleSet::new(all.into_iter().collect())
    }

    /// One server shared by `n` queues: {0, e_1, ..., e_n}.
    pub fn single_server(n: usize) -> Self {
        let mut s = vec![vec![0; n]];
        for i in 0..n {
            let mut e = vec![0; n];
            e[i] = 1;
            s.push(e);
        }
        ScheduleSet { queues: n, schedules: s }
    }

    pub fn queues(&self) -> usize {
        self.queues
    }

    pub fn len(&self) -> usize {
        self.schedules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schedules.is_empty()
    }

    pub fn schedules(&self) -> &[Vec<u32>] {
        &self.schedules
    }

    pub fn get(&self, d: usize) -> &[u32] {
        &self.schedules[d]
    }

    pub fn index_of(&self, d: &[u32]) -> Option<usize> {
        self.schedules.iter().position(|s| s.as_slice() == d)
    }

    pub fn zero_index(&self) -> Option<usize> {
        self.schedules.iter().position(|s| s.iter().all(|&v| v == 0))
    }

    /// S as floating point, |Π| x N.
    pub fn service_matrix(&self) -> Vec<Vec<f64>> {
        self.schedules
            .iter()
            .map(|s| s.iter().map(|&v| v as f64).collect())
            .collect()
    }

    /// Σ_d w_d d.
    pub fn mix(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.queues];
        for (w, s) in weights.iter().zip(&self.schedules) {
            for (o, &v) in out.iter_mut().zip(s) {
                *o += w * v as f64;
            }
        }
        out
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let present: BTreeSet<&[u32]> = self.schedules.iter().map(|s| s.as_slice()).collect();
        let mut missing = BTreeSet::new();
        for s in &self.schedules {
            for v in dominated_by(s) {
                if !present.contains(v.as_slice()) {
                    missing.insert(v);
                }
            }
        }
        let closure = if missing.is_empty() {
            None
        } else {
            violations.push(Violation::NotMonotone {
                missing: missing.into_iter().collect(),
            });
            ScheduleSet::monotone_closure(&self.schedules).ok()
        };
        for i in 0..self.queues {
            let mut e = vec![0u32; self.queues];
            e[i] = 1;
            if !present.contains(e.as_slice()) {
                violations.push(Violation::UnservedQueue { queue: i });
            }
        }
        let count = self.maximal_indices().len();
        if count < 2 {
            violations.push(Violation::TooFewMaximal { count });
        }
        ValidationReport {
            violations,
            closure,
        }
    }

    fn maximal_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| {
                !(0..self.len()).any(|j| {
                    j != i && dominates(&self.schedules[j], &self.schedules[i])
                })
            })
            .collect()
    }

    /// Indices of members not dominated by a distinct member.
    pub fn maximal_elements(&self) -> Result<Vec<usize>> {
        let f = self.maximal_indices();
        if f.len() < 2 {
            return Err(Error::TooFewMaximal(f.len()));
        }
        Ok(f)
    }

    /// Maximal elements that are also vertices of conv(Π).
    pub fn maximal_extreme_points(&self) -> Result<Vec<usize>> {
        let f = self.maximal_elements()?;
        let mut out = Vec::new();
        for &i in &f {
            if self.is_extreme(i)? {
                out.push(i);
            }
        }
        Ok(out)
    }

    // d is extreme iff it is not a convex combination of the other members.
    fn is_extreme(&self, i: usize) -> Result<bool> {
        let others: Vec<usize> = (0..self.len()).filter(|&j| j != i).collect();
        if others.is_empty() {
            return Ok(true);
        }
        let mut lp = LinearProgram::maximize(vec![0.0; others.len()]);
        lp.add(vec![1.0; others.len()], Sense::Eq, 1.0);
        for q in 0..self.queues {
            let row = others
                .iter()
                .map(|&j| self.schedules[j][q] as f64)
                .collect();
            lp.add(row, Sense::Eq, self.schedules[i][q] as f64);
        }
        match lp.solve() {
            Ok(_) => Ok(false),
            Err(crate::error::LpFailure::Infeasible) => Ok(true),
            Err(e) => Err(e.into()),
        }
    }

    /// Largest s such that some convex combination dominates target + s·1.
    /// Negative when the target lies outside conv⁻(Π).
    pub fn domination_slack(&self, target: &[f64]) -> Result<f64> {
        check_len("target", self.queues, target.len())?;
        // variables: p_d (|Π|), s+ , s-
        let k = self.len();
        let mut obj = vec![0.0; k + 2];
        obj[k] = 1.0;
        obj[k + 1] = -1.0;
        let mut lp = LinearProgram::maximize(obj);
        let mut sum = vec![1.0; k + 2];
        sum[k] = 0.0;
        sum[k + 1] = 0.0;
        lp.add(sum, Sense::Eq, 1.0);
        for q in 0..self.queues {
            let mut row: Vec<f64> = self.schedules.iter().map(|s| s[q] as f64).collect();
            row.push(-1.0);
            row.push(1.0);
            lp.add(row, Sense::Ge, target[q]);
        }
        // keep the slack bounded so the LP is never unbounded
        let mut cap = vec![0.0; k + 2];
        cap[k] = 1.0;
        lp.add(cap, Sense::Le, 1.0);
        let s = lp.solve()?;
        Ok(s.x[k] - s.x[k + 1])
    }

    /// True iff λ/ρ is strictly dominated by conv(Π).
    pub fn region_membership(&self, lambda: &[f64], rho: f64) -> Result<bool> {
        if rho <= 0.0 {
            return Err(Error::Parameter(format!("rho must be positive, got {rho}")));
        }
        let scaled: Vec<f64> = lambda.iter().map(|l| l / rho).collect();
        Ok(self.domination_slack(&scaled)? >= STRICT_SLACK)
    }

    /// The scale a = sup{ã : ã·x ∈ cl Λ}.
    pub fn boundary_scale(&self, x: &[f64]) -> Result<f64> {
        check_len("direction", self.queues, x.len())?;
        if x.iter().any(|v| *v < 0.0) {
            return Err(Error::Parameter("direction must be non-negative".into()));
        }
        if x.iter().all(|v| *v == 0.0) {
            return Err(Error::Parameter("zero direction".into()));
        }
        let k = self.len();
        let mut obj = vec![0.0; k + 1];
        obj[k] = 1.0;
        let mut lp = LinearProgram::maximize(obj);
        let mut sum = vec![1.0; k + 1];
        sum[k] = 0.0;
        lp.add(sum, Sense::Eq, 1.0);
        for q in 0..self.queues {
            let mut row: Vec<f64> = self.schedules.iter().map(|s| s[q] as f64).collect();
            row.push(-x[q]);
            lp.add(row, Sense::Ge, 0.0);
        }
        Ok(lp.solve()?.value)
    }

    /// a·x with a the boundary scale of x.
    pub fn proj_boundary(&self, x: &[f64]) -> Result<Vec<f64>> {
        let a = self.boundary_scale(x)?;
        Ok(x.iter().map(|v| a * v).collect())
    }

    /// Convex weights over Π whose mixture equals `target` (or dominates it
    /// when exact equality is numerically out of reach).
    pub fn decompose(&self, target: &[f64]) -> Result<Vec<f64>> {
        check_len("target", self.queues, target.len())?;
        let k = self.len();
        let build = |sense: Sense| {
            let mut lp = LinearProgram::maximize(vec![0.0; k]);
            lp.add(vec![1.0; k], Sense::Eq, 1.0);
            for q in 0..self.queues {
                let row = self.schedules.iter().map(|s| s[q] as f64).collect();
                lp.add(row, sense, target[q]);
            }
            lp
        };
        let sol = match build(Sense::Eq).solve() {
            Ok(s) => s,
            Err(_) => build(Sense::Ge)
                .solve()
                .map_err(|e| Error::Schedules(format!("target {target:?} not decomposable: {e}")))?,
        };
        let total: f64 = sol.x.iter().sum();
        Ok(sol.x.iter().map(|v| v / total).collect())
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { what, expected, got });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueueState(pub Vec<u64>);

impl QueueState {
    pub fn empty(n: usize) -> Self {
        QueueState(vec![0; n])
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| v as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalRates(Vec<f64>);

impl ArrivalRates {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if let Some(r) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::Parameter(format!("arrival rate {r} outside [0,1]")));
        }
        Ok(ArrivalRates(rates))
    }

    pub fn rates(&self) -> &[f64] {
        &self.0
    }
}

/// W(t) = (Q, A, M_e, X, M_r).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemState {
    pub queues: QueueState,
    pub last_arrivals: Vec<u8>,
    pub encoder_memory: u64,
    pub last_signal: usize,
    pub receiver_memory: u64,
}

impl SystemState {
    pub fn initial(n: usize) -> Self {
        SystemState {
            queues: QueueState::empty(n),
            last_arrivals: vec![0; n],
            encoder_memory: 0,
            last_signal: 0,
            receiver_memory: 0,
        }
    }
}

/// (Q − D)⁺ + A.
pub fn step_dynamics(q: &QueueState, d: &[u32], a: &[u8]) -> Result<QueueState> {
    check_len("schedule", q.0.len(), d.len())?;
    check_len("arrivals", q.0.len(), a.len())?;
    Ok(QueueState(
        q.0.iter()
            .zip(d)
            .zip(a)
            .map(|((&q, &d), &a)| q.saturating_sub(d as u64) + a as u64)
            .collect(),
    ))
}
