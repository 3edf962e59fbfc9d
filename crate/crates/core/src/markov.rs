//! Finite Markov chain analysis for simple policies.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::channel::Channel;
use crate::error::{Error, Result};
use crate::network::ScheduleSet;
use crate::policies::{FiniteMemoryAllocation, MemorylessAllocation, SimpleEncoder};
use crate::stoch::RowStochastic;

/// Above this many states the stationary law is found by power iteration.
pub const DENSE_LIMIT: usize = 10_000;
pub const POWER_TOL: f64 = 1e-12;
pub const POWER_MAX_ITER: usize = 1_000_000;

/// G^S over states (m, x, d), index (m·|X| + x)·|Π| + d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointChain {
    pub memory_states: usize,
    pub inputs: usize,
    pub schedules: usize,
    pub transition: Vec<Vec<f64>>,
}

impl JointChain {
    pub fn len(&self) -> usize {
        self.transition.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transition.is_empty()
    }

    pub fn state(&self, m: usize, x: usize, d: usize) -> usize {
        (m * self.inputs + x) * self.schedules + d
    }

    pub fn decode(&self, s: usize) -> (usize, usize, usize) {
        let d = s % self.schedules;
        let mx = s / self.schedules;
        (mx / self.inputs, mx % self.inputs, d)
    }

    /// Stationary probability of each schedule.
    pub fn schedule_marginal(&self, pi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.schedules];
        for (s, p) in pi.iter().enumerate() {
            out[s % self.schedules] += p;
        }
        out
    }

    /// Stationary law of (m, x), index m·|X| + x.
    pub fn signal_memory_marginal(&self, pi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.memory_states * self.inputs];
        for (s, p) in pi.iter().enumerate() {
            out[s / self.schedules] += p;
        }
        out
    }
}

fn check_dims(enc: &SimpleEncoder, pol: &FiniteMemoryAllocation, c: &Channel) -> Result<()> {
    let pairs = [
        ("encoder memory states", pol.memory_states(), enc.memory_states()),
        ("encoder alphabet", c.inputs(), enc.inputs()),
        ("allocation alphabet", c.outputs(), pol.outputs()),
    ];
    for (what, expected, got) in pairs {
        if expected != got {
            return Err(Error::Dimension { what, expected, got });
        }
    }
    Ok(())
}

/// G^S_{(m,x,d),(m',x',d')} = G^E_{(m,x),x'} Σ_y C_{x',y} G^A_{(m,y),m'} H^A_{(m,y),d'}.
pub fn build_joint_chain(enc: &SimpleEncoder, pol: &FiniteMemoryAllocation, c: &Channel) -> Result<JointChain> {
    check_dims(enc, pol, c)?;
    let (nm, nx, nd) = (pol.memory_states(), c.inputs(), pol.schedules());
    let mut chain = JointChain {
        memory_states: nm,
        inputs: nx,
        schedules: nd,
        transition: Vec::new(),
    };
    let n = nm * nx * nd;
    let mut rows = Vec::with_capacity(n);
    for m in 0..nm {
        for x in 0..nx {
            let mut row = vec![0.0; n];
            let ge = enc.g_e().row(enc.row(m, x));
            for (x2, &pe) in ge.iter().enumerate() {
                if pe == 0.0 {
                    continue;
                }
                for (y, &cy) in c.row(x2).iter().enumerate() {
                    if cy == 0.0 {
                        continue;
                    }
                    let r = pol.row(m, y);
                    for (m2, &ga) in pol.g_a().row(r).iter().enumerate() {
                        if ga == 0.0 {
                            continue;
                        }
                        for (d2, &ha) in pol.h_a().row(r).iter().enumerate() {
                            row[chain.state(m2, x2, d2)] += pe * cy * ga * ha;
                        }
                    }
                }
            }
            for _ in 0..nd {
                rows.push(row.clone());
            }
        }
    }
    chain.transition = rows;
    Ok(chain)
}

/// Transition matrix of (m, x), index m·|X| + x.
pub fn signal_memory_chain(enc: &SimpleEncoder, pol: &FiniteMemoryAllocation, c: &Channel) -> Result<Vec<Vec<f64>>> {
    check_dims(enc, pol, c)?;
    let (nm, nx) = (pol.memory_states(), c.inputs());
    let mut p = vec![vec![0.0; nm * nx]; nm * nx];
    for m in 0..nm {
        for x in 0..nx {
            let row = &mut p[m * nx + x];
            for (x2, &pe) in enc.g_e().row(enc.row(m, x)).iter().enumerate() {
                for (y, &cy) in c.row(x2).iter().enumerate() {
                    for (m2, &ga) in pol.g_a().row(pol.row(m, y)).iter().enumerate() {
                        row[m2 * nx + x2] += pe * cy * ga;
                    }
                }
            }
        }
    }
    Ok(p)
}

fn graph(p: &[Vec<f64>]) -> DiGraph<(), ()> {
    let mut g = DiGraph::new();
    let nodes: Vec<_> = (0..p.len()).map(|_| g.add_node(())).collect();
    for (i, row) in p.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v > 0.0 {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    g
}

/// Communicating classes with no edge leaving them, each sorted.
pub fn closed_classes(p: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let g = graph(p);
    let mut out: Vec<Vec<usize>> = tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut v: Vec<usize> = c.into_iter().map(|n| n.index()).collect();
            v.sort_unstable();
            v
        })
        .filter(|class| {
            class
                .iter()
                .all(|&i| p[i].iter().enumerate().all(|(j, &v)| v == 0.0 || class.binary_search(&j).is_ok()))
        })
        .collect();
    out.sort();
    out
}

pub fn check_irreducible(p: &[Vec<f64>]) -> bool {
    !p.is_empty() && tarjan_scc(&graph(p)).len() == 1
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Period of the class containing `start`, from BFS levels.
pub fn period_from(p: &[Vec<f64>], start: usize) -> usize {
    let n = p.len();
    let mut level = vec![usize::MAX; n];
    level[start] = 0;
    let mut queue = std::collections::VecDeque::from([start]);
    let mut g = 0;
    while let Some(u) = queue.pop_front() {
        for (v, &w) in p[u].iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            } else {
                let diff = (level[u] + 1).abs_diff(level[v]);
                g = gcd(g, diff);
            }
        }
    }
    g.max(1)
}

/// Irreducible with period one.
pub fn check_aperiodic(p: &[Vec<f64>]) -> bool {
    check_irreducible(p) && period_from(p, 0) == 1
}

/// Solves πP = π, Σπ = 1. Transient states are allowed; more than one
/// closed class is an error.
pub fn stationary(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = p.len();
    if n == 0 || p.iter().any(|r| r.len() != n) {
        return Err(Error::Parameter("transition matrix must be square and non-empty".into()));
    }
    let classes = closed_classes(p);
    if classes.len() != 1 {
        return Err(Error::Reducible(classes));
    }
    if n > DENSE_LIMIT {
        return Ok(stationary_power(p, POWER_TOL, POWER_MAX_ITER));
    }
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(j, i)] = p[i][j];
        }
        a[(i, i)] -= 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let lu = a.clone().lu();
    let mut x = lu
        .solve(&b)
        .ok_or_else(|| Error::Parameter("singular stationary system".into()))?;
    // one step of iterative refinement
    let r = &b - &a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    let mut pi: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= s);
    Ok(pi)
}

/// Power iteration on the lazy chain (I + P)/2, which has the same
/// stationary law and is aperiodic.
pub fn stationary_power(p: &[Vec<f64>], tol: f64, max_iter: usize) -> Vec<f64> {
    let n = p.len();
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..max_iter {
        next.iter_mut().zip(&pi).for_each(|(a, b)| *a = 0.5 * b);
        for (i, row) in p.iter().enumerate() {
            let w = 0.5 * pi[i];
            if w == 0.0 {
                continue;
            }
            for (j, &v) in row.iter().enumerate() {
                next[j] += w * v;
            }
        }
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= s);
        let diff = pi
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut pi, &mut next);
        if diff < tol {
            break;
        }
    }
    pi
}

pub fn residual(p: &[Vec<f64>], pi: &[f64]) -> f64 {
    let n = p.len();
    (0..n)
        .map(|j| ((0..n).map(|i| pi[i] * p[i][j]).sum::<f64>() - pi[j]).abs())
        .fold(0.0, f64::max)
}

/// μ from the d-marginal of the joint chain.
pub fn service_rate(
    enc: &SimpleEncoder,
    pol: &FiniteMemoryAllocation,
    c: &Channel,
    pi: &ScheduleSet,
) -> Result<Vec<f64>> {
    if pol.schedules() != pi.len() {
        return Err(Error::Dimension {
            what: "allocation schedules",
            expected: pi.len(),
            got: pol.schedules(),
        });
    }
    let chain = build_joint_chain(enc, pol, c)?;
    let law = stationary(&chain.transition)?;
    Ok(pi.mix(&chain.schedule_marginal(&law)))
}

/// μ from the (m, x) chain; equal to [`service_rate`] but cheaper.
pub fn service_rate_reduced(
    enc: &SimpleEncoder,
    pol: &FiniteMemoryAllocation,
    c: &Channel,
    pi: &ScheduleSet,
) -> Result<Vec<f64>> {
    let p = signal_memory_chain(enc, pol, c)?;
    let law = stationary(&p)?;
    let nx = c.inputs();
    let mut w = vec![0.0; pi.len()];
    for (s, &ps) in law.iter().enumerate() {
        let m = s / nx;
        for (x2, &pe) in enc.g_e().row(s).iter().enumerate() {
            for (y, &cy) in c.row(x2).iter().enumerate() {
                let f = ps * pe * cy;
                if f == 0.0 {
                    continue;
                }
                for (d, &h) in pol.h_a().row(pol.row(m, y)).iter().enumerate() {
                    w[d] += f * h;
                }
            }
        }
    }
    Ok(pi.mix(&w))
}

/// γ C Θ S.
pub fn memoryless_service_rate(gamma: &[f64], c: &Channel, theta: &MemorylessAllocation, pi: &ScheduleSet) -> Vec<f64> {
    let rows = theta.rate_rows(c, pi);
    let mut mu = vec![0.0; pi.queues()];
    for (g, r) in gamma.iter().zip(&rows) {
        for (m, v) in mu.iter_mut().zip(r) {
            *m += g * v;
        }
    }
    mu
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionOptions {
    /// Leading fraction of the trajectory discarded.
    pub burn_in: f64,
    /// Visited cells below this count are an error; 0 disables the check.
    pub min_visits: u64,
    pub pseudo_count: f64,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        ProjectionOptions {
            burn_in: 0.2,
            min_visits: 0,
            pseudo_count: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub encoder: SimpleEncoder,
    /// Transitions observed out of each (m, x) cell.
    pub visits: Vec<u64>,
    /// Cells never visited, as (m, x).
    pub unvisited: Vec<(usize, usize)>,
}

/// Empirical G^E from a per-slot trace of (X(t), M_r(t)).
pub fn project_to_simple(
    trace: &[(usize, usize)],
    inputs: usize,
    memory_states: usize,
    opts: ProjectionOptions,
) -> Result<Projection> {
    let start = (trace.len() as f64 * opts.burn_in).floor() as usize;
    let kept = &trace[start.min(trace.len())..];
    if kept.len() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "{} slots left after burn-in",
            kept.len()
        )));
    }
    let cells = memory_states * inputs;
    let mut counts = vec![vec![0u64; inputs]; cells];
    for w in kept.windows(2) {
        let (x, m) = w[0];
        if x >= inputs || m >= memory_states || w[1].0 >= inputs {
            return Err(Error::Parameter(format!("trace entry ({x}, {m}) out of range")));
        }
        counts[m * inputs + x][w[1].0] += 1;
    }
    let visits: Vec<u64> = counts.iter().map(|r| r.iter().sum()).collect();
    let unvisited = (0..cells)
        .filter(|&c| visits[c] == 0)
        .map(|c| (c / inputs, c % inputs))
        .collect();
    if let Some(c) = (0..cells).find(|&c| visits[c] > 0 && visits[c] < opts.min_visits) {
        return Err(Error::InsufficientSamples(format!(
            "cell (m={}, x={}) visited {} times, need {}",
            c / inputs,
            c % inputs,
            visits[c],
            opts.min_visits
        )));
    }
    let rows = counts
        .iter()
        .map(|r| r.iter().map(|&v| v as f64 + opts.pseudo_count).collect())
        .collect();
    let encoder = SimpleEncoder::new(RowStochastic::normalized(rows)?, memory_states, inputs)?;
    Ok(Projection {
        encoder,
        visits,
        unvisited,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSummary {
    pub l1_slopes: Vec<f64>,
    pub l2_slopes: Vec<f64>,
    /// Medians over windows in the second half of the run.
    pub median_l1: f64,
    pub median_l2: f64,
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Queue lengths observed at `slot`; `peak` is the largest single queue
/// seen since the previous sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueSample {
    pub slot: u64,
    pub queues: Vec<u64>,
    pub peak: u64,
}

impl QueueSample {
    pub fn new(slot: u64, queues: Vec<u64>) -> Self {
        let peak = queues.iter().copied().max().unwrap_or(0);
        QueueSample { slot, queues, peak }
    }
}

/// Least-squares slopes of ‖Q‖₁ and ‖Q‖² per window of `window` slots.
pub fn drift_estimate(samples: &[QueueSample], window: u64) -> Result<DriftSummary> {
    if window == 0 {
        return Err(Error::Parameter("window must be positive".into()));
    }
    let (Some(first), Some(last)) = (samples.first(), samples.last()) else {
        return Err(Error::InsufficientSamples("empty trajectory".into()));
    };
    let span = last.slot - first.slot;
    if span < 2 * window {
        return Err(Error::InsufficientSamples(format!(
            "trajectory spans {span} slots, need at least two windows of {window}"
        )));
    }
    let windows = (span / window) as usize;
    let mut l1 = vec![Vec::new(); windows];
    let mut l2 = vec![Vec::new(); windows];
    for QueueSample { slot: t, queues: q, .. } in samples {
        let w = (((t - first.slot) / window) as usize).min(windows - 1);
        let x = *t as f64;
        l1[w].push((x, q.iter().sum::<u64>() as f64));
        l2[w].push((x, q.iter().map(|&v| (v as f64).powi(2)).sum::<f64>()));
    }
    let l1_slopes: Vec<f64> = l1.iter().map(|p| if p.len() > 1 { slope(p) } else { 0.0 }).collect();
    let l2_slopes: Vec<f64> = l2.iter().map(|p| if p.len() > 1 { slope(p) } else { 0.0 }).collect();
    let half = windows / 2;
    Ok(DriftSummary {
        median_l1: median(&l1_slopes[half..]),
        median_l2: median(&l2_slopes[half..]),
        l1_slopes,
        l2_slopes,
    })
}

/// Total variation distance.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn stationary_examples() {
        assert!(close(&stationary(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap(), &[0.5, 0.5], 1e-12));
        let pi = stationary(&[vec![0.9, 0.1], vec![0.5, 0.5]]).unwrap();
        assert!(close(&pi, &[5.0 / 6.0, 1.0 / 6.0], 1e-12));
        assert!(close(&stationary(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(), &[0.5, 0.5], 1e-12));
    }

    #[test]
    fn reducible_names_classes() {
        let p = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.5, 0.0, 0.5]];
        match stationary(&p) {
            Err(Error::Reducible(c)) => assert_eq!(c, vec![vec![0], vec![1]]),
            other => panic!("{other:?}"),
        }
        assert!(!check_irreducible(&[vec![1.0, 0.0], vec![0.0, 1.0]]));
    }

    #[test]
    fn transient_states_get_zero_mass() {
        let p = vec![vec![0.5, 0.5, 0.0], vec![0.5, 0.5, 0.0], vec![0.2, 0.3, 0.5]];
        assert!(close(&stationary(&p).unwrap(), &[0.5, 0.5, 0.0], 1e-12));
    }

    #[test]
    fn periods() {
        let cyc = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(check_irreducible(&cyc));
        assert_eq!(period_from(&cyc, 0), 2);
        assert!(!check_aperiodic(&cyc));
        let three = vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]];
        assert_eq!(period_from(&three, 0), 3);
    }

    #[test]
    fn perturbation_breaks_periodicity() {
        use crate::policies::perturb_simple;
        let enc = SimpleEncoder::new(RowStochastic::point_mass(2, 2, |r| 1 - r), 1, 2).unwrap();
        let pol = FiniteMemoryAllocation::from_memoryless(&MemorylessAllocation::direct(&[0, 1], 2));
        let c = Channel::identity(2);
        let p = signal_memory_chain(&enc, &pol, &c).unwrap();
        assert_eq!(period_from(&p, 0), 2);
        let (e, a) = perturb_simple(&enc, &pol, 0.05).unwrap();
        let p = signal_memory_chain(&e, &a, &c).unwrap();
        assert!(check_aperiodic(&p));
    }

    #[test]
    fn joint_chain_single_signal_rows_identical() {
        let c = Channel::new(vec![vec![0.3, 0.7]]).unwrap();
        let enc = SimpleEncoder::iid(&[1.0], 1).unwrap();
        let theta = MemorylessAllocation::new(RowStochastic::new(vec![vec![0.2, 0.8], vec![0.6, 0.4]]).unwrap(), 2, 2).unwrap();
        let ch = build_joint_chain(&enc, &FiniteMemoryAllocation::from_memoryless(&theta), &c).unwrap();
        assert_eq!(ch.len(), 2);
        assert_eq!(ch.transition[0], ch.transition[1]);
        assert!(close(&ch.transition[0], &[0.3 * 0.2 + 0.7 * 0.6, 0.3 * 0.8 + 0.7 * 0.4], 1e-15));
    }

    #[test]
    fn joint_chain_deterministic_is_zero_one() {
        let enc = SimpleEncoder::new(RowStochastic::point_mass(2, 2, |r| 1 - r), 1, 2).unwrap();
        let pol = FiniteMemoryAllocation::from_memoryless(&MemorylessAllocation::direct(&[0, 1], 2));
        let ch = build_joint_chain(&enc, &pol, &Channel::identity(2)).unwrap();
        for row in &ch.transition {
            assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(row.iter().filter(|&&v| v == 0.0).count(), row.len() - 1);
        }
    }

    #[test]
    fn joint_chain_matches_brute_force() {
        // symmetric channel, uniform G^E, Θ = identity; enumerate every term
        let c = Channel::symmetric(2, 0.5).unwrap();
        let enc = SimpleEncoder::new(RowStochastic::uniform(2, 2), 1, 2).unwrap();
        let pol = FiniteMemoryAllocation::from_memoryless(&MemorylessAllocation::direct(&[0, 1], 2));
        let ch = build_joint_chain(&enc, &pol, &c).unwrap();
        for s in 0..ch.len() {
            for t in 0..ch.len() {
                let (_, _, _) = ch.decode(s);
                let (_, x2, d2) = ch.decode(t);
                let mut expect = 0.0;
                for y in 0..2 {
                    let h = if y == d2 { 1.0 } else { 0.0 };
                    expect += 0.5 * c.prob(x2, y) * h;
                }
                assert!((ch.transition[s][t] - expect).abs() < 1e-15);
            }
        }
        assert!((ch.transition[0][0] - 0.375).abs() < 1e-15);
        assert!((ch.transition[0][1] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn service_rate_examples() {
        let pi = ScheduleSet::single_server(2);
        let theta = MemorylessAllocation::direct(&[1, 2], 3);
        let pol = FiniteMemoryAllocation::from_memoryless(&theta);
        let enc = SimpleEncoder::iid(&[0.3, 0.7], 1).unwrap();
        let mu = service_rate(&enc, &pol, &Channel::identity(2), &pi).unwrap();
        assert!(close(&mu, &[0.3, 0.7], 1e-12));

        let c = Channel::uninformative(vec![0.4, 0.6], 2).unwrap();
        let e1 = SimpleEncoder::new(RowStochastic::point_mass(2, 2, |_| 0), 1, 2).unwrap();
        let e2 = SimpleEncoder::new(RowStochastic::uniform(2, 2), 1, 2).unwrap();
        let a = service_rate(&e1, &pol, &c, &pi).unwrap();
        let b = service_rate(&e2, &pol, &c, &pi).unwrap();
        assert!(close(&a, &[0.4, 0.6], 1e-12) && close(&a, &b, 1e-12));

        let c = Channel::symmetric(2, 0.5).unwrap();
        let mu = service_rate(&e1, &pol, &c, &pi).unwrap();
        assert!(close(&mu, &[0.75, 0.25], 1e-12));
        let gamma = [1.0, 0.0];
        assert!(close(&memoryless_service_rate(&gamma, &c, &theta, &pi), &mu, 1e-12));
    }

    fn random_stochastic(rng: &mut ChaCha8Rng, rows: usize, cols: usize, sparsity: f64) -> RowStochastic {
        let rows = (0..rows)
            .map(|_| {
                (0..cols)
                    .map(|_| if rng.random::<f64>() < sparsity { 0.0 } else { rng.random::<f64>() })
                    .collect()
            })
            .collect();
        RowStochastic::normalized(rows).unwrap().floored(1e-3)
    }

    #[test]
    fn reduced_rate_matches_joint_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let pi = ScheduleSet::monotone_closure(&[vec![2, 0], vec![1, 1], vec![0, 2]]).unwrap();
        for _ in 0..20 {
            let (nm, nx, ny) = (2, 3, 2);
            let c = Channel::new(random_stochastic(&mut rng, nx, ny, 0.0).rows().to_vec()).unwrap();
            let enc = SimpleEncoder::new(random_stochastic(&mut rng, nm * nx, nx, 0.3), nm, nx).unwrap();
            let pol = FiniteMemoryAllocation::new(
                1,
                ny,
                random_stochastic(&mut rng, nm * ny, nm, 0.3),
                random_stochastic(&mut rng, nm * ny, pi.len(), 0.5),
            )
            .unwrap();
            let a = service_rate(&enc, &pol, &c, &pi).unwrap();
            let b = service_rate_reduced(&enc, &pol, &c, &pi).unwrap();
            assert!(close(&a, &b, 1e-10), "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn projection_examples() {
        let alt: Vec<(usize, usize)> = (0..1000).map(|t| (t % 2, 0)).collect();
        let p = project_to_simple(&alt, 2, 1, ProjectionOptions { pseudo_count: 0.0, ..Default::default() }).unwrap();
        assert_eq!(p.encoder.g_e().rows(), &[vec![0.0, 1.0], vec![1.0, 0.0]]);

        let constant: Vec<(usize, usize)> = vec![(1, 0); 500];
        let p = project_to_simple(&constant, 2, 1, ProjectionOptions { pseudo_count: 0.0, ..Default::default() }).unwrap();
        assert_eq!(p.encoder.g_e().row(1), &[0.0, 1.0]);
        assert_eq!(p.unvisited, vec![(0, 0)]);
        assert_eq!(p.encoder.g_e().row(0), &[0.5, 0.5]);

        let strict = ProjectionOptions { min_visits: 1000, ..Default::default() };
        assert!(matches!(project_to_simple(&alt, 2, 1, strict), Err(Error::InsufficientSamples(_))));
        assert!(project_to_simple(&[(0, 0)], 2, 1, Default::default()).is_err());
    }

    #[test]
    fn projection_recovers_encoder() {
        let g = RowStochastic::new(vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.6, 0.3], vec![0.3, 0.3, 0.4]]).unwrap();
        let enc = SimpleEncoder::new(g.clone(), 1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut x = 0;
        let trace: Vec<(usize, usize)> = (0..1_000_000)
            .map(|_| {
                x = enc.encode(x, 0, rng.random());
                (x, 0)
            })
            .collect();
        let p = project_to_simple(&trace, 3, 1, Default::default()).unwrap();
        for r in 0..3 {
            assert!(close(p.encoder.g_e().row(r), g.row(r), 0.02));
        }
    }

    #[test]
    fn drift_examples() {
        let flat: Vec<QueueSample> = (0..1000).map(|t| QueueSample::new(t, vec![3, 4])).collect();
        assert_eq!(drift_estimate(&flat, 100).unwrap().median_l1, 0.0);
        let ramp: Vec<QueueSample> = (0..1000).map(|t| QueueSample::new(t, vec![t, t, t])).collect();
        assert!((drift_estimate(&ramp, 100).unwrap().median_l1 - 3.0).abs() < 1e-9);
        assert!(drift_estimate(&ramp[..150], 100).is_err());
    }

    #[test]
    fn drift_of_stable_queue() {
        // Bernoulli(0.3) arrivals against Bernoulli(0.5) service
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut q = 0u64;
        let samples: Vec<QueueSample> = (0..100_000u64)
            .map(|t| {
                let s = (rng.random::<f64>() < 0.5) as u64;
                q = q.saturating_sub(s) + (rng.random::<f64>() < 0.3) as u64;
                QueueSample::new(t, vec![q])
            })
            .collect();
        let d = drift_estimate(&samples, 5000).unwrap();
        assert!(d.median_l1.abs() < 0.01);
    }

    fn random_chain() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..7).prop_flat_map(|n| {
            prop::collection::vec(prop::collection::vec(0.01f64..1.0, n), n).prop_map(|rows| {
                rows.into_iter()
                    .map(|r| {
                        let s: f64 = r.iter().sum();
                        r.into_iter().map(|v| v / s).collect()
                    })
                    .collect()
            })
        })
    }

    proptest! {
        #[test]
        fn stationary_residual_small(p in random_chain()) {
            let pi = stationary(&p).unwrap();
            prop_assert!(residual(&p, &pi) <= 1e-10);
            prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn stationary_permutation_equivariant(p in random_chain(), seed in 0u64..100) {
            use rand::seq::SliceRandom;
            let n = p.len();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let q: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| p[perm[i]][perm[j]]).collect()).collect();
            let a = stationary(&p).unwrap();
            let b = stationary(&q).unwrap();
            for i in 0..n {
                prop_assert!((b[i] - a[perm[i]]).abs() < 1e-10);
            }
        }

        #[test]
        fn dense_matches_power(p in random_chain()) {
            let a = stationary(&p).unwrap();
            let b = stationary_power(&p, POWER_TOL, POWER_MAX_ITER);
            prop_assert!(close(&a, &b, 1e-9));
        }
    }
}
