//! Encoder and allocation policies. Every step is a pure function of its
//! state, inputs and the uniform variates handed to it.

use serde::{Deserialize, Serialize};

use crate::channel::Channel;
use crate::error::{Error, Result};
use crate::network::{QueueState, ScheduleSet};
use crate::stoch::{argmax_lowest, sample_row, RowStochastic};

fn bits(states: usize) -> f64 {
    (states as f64).log2()
}

/// Θ: |Y| x |Π|.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorylessAllocation {
    theta: RowStochastic,
}

impl MemorylessAllocation {
    pub fn new(theta: RowStochastic, outputs: usize, schedules: usize) -> Result<Self> {
        if theta.nrows() != outputs {
            return Err(Error::Dimension {
                what: "theta rows",
                expected: outputs,
                got: theta.nrows(),
            });
        }
        if theta.ncols() != schedules {
            return Err(Error::Dimension {
                what: "theta columns",
                expected: schedules,
                got: theta.ncols(),
            });
        }
        Ok(MemorylessAllocation { theta })
    }

    /// Message y always maps to schedule `map[y]`.
    pub fn direct(map: &[usize], schedules: usize) -> Self {
        MemorylessAllocation {
            theta: RowStochastic::point_mass(map.len(), schedules, |y| map[y]),
        }
    }

    pub fn theta(&self) -> &RowStochastic {
        &self.theta
    }

    pub fn outputs(&self) -> usize {
        self.theta.nrows()
    }

    pub fn schedules(&self) -> usize {
        self.theta.ncols()
    }

    pub fn allocate(&self, y: usize, u: f64) -> usize {
        self.theta.sample(y, u)
    }

    /// Row x is (C Θ S)_x.
    pub fn rate_rows(&self, channel: &Channel, pi: &ScheduleSet) -> Vec<Vec<f64>> {
        (0..channel.inputs())
            .map(|x| {
                let mut w = vec![0.0; pi.len()];
                for (y, &c) in channel.row(x).iter().enumerate() {
                    for (d, wd) in w.iter_mut().enumerate() {
                        *wd += c * self.theta.get(y, d);
                    }
                }
                pi.mix(&w)
            })
            .collect()
    }
}

pub fn allocate_memoryless(y: usize, theta: &MemorylessAllocation, u: f64) -> usize {
    theta.allocate(y, u)
}

/// (G^A, H^A), both indexed by rows (m, y) -> m·|Y| + y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteMemoryAllocation {
    mem_bits: u32,
    outputs: usize,
    g_a: RowStochastic,
    h_a: RowStochastic,
}

impl FiniteMemoryAllocation {
    pub fn new(mem_bits: u32, outputs: usize, g_a: RowStochastic, h_a: RowStochastic) -> Result<Self> {
        let m = 1usize << mem_bits;
        let rows = m * outputs;
        for (what, mat) in [("G^A rows", &g_a), ("H^A rows", &h_a)] {
            if mat.nrows() != rows {
                return Err(Error::Dimension {
                    what,
                    expected: rows,
                    got: mat.nrows(),
                });
            }
        }
        if g_a.ncols() != m {
            return Err(Error::Dimension {
                what: "G^A columns",
                expected: m,
                got: g_a.ncols(),
            });
        }
        Ok(FiniteMemoryAllocation {
            mem_bits,
            outputs,
            g_a,
            h_a,
        })
    }

    pub fn from_memoryless(theta: &MemorylessAllocation) -> Self {
        FiniteMemoryAllocation {
            mem_bits: 0,
            outputs: theta.outputs(),
            g_a: RowStochastic::point_mass(theta.outputs(), 1, |_| 0),
            h_a: theta.theta().clone(),
        }
    }

    pub fn mem_bits(&self) -> u32 {
        self.mem_bits
    }

    pub fn memory_states(&self) -> usize {
        1 << self.mem_bits
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn schedules(&self) -> usize {
        self.h_a.ncols()
    }

    pub fn row(&self, m: usize, y: usize) -> usize {
        m * self.outputs + y
    }

    pub fn g_a(&self) -> &RowStochastic {
        &self.g_a
    }

    pub fn h_a(&self) -> &RowStochastic {
        &self.h_a
    }

    pub fn schedule(&self, y: usize, m: usize, u: f64) -> usize {
        self.h_a.sample(self.row(m, y), u)
    }

    pub fn next_memory(&self, y: usize, m: usize, u: f64) -> usize {
        self.g_a.sample(self.row(m, y), u)
    }

    pub fn allocate(&self, y: usize, m: usize, u_d: f64, u_m: f64) -> (usize, usize) {
        (self.schedule(y, m, u_d), self.next_memory(y, m, u_m))
    }
}

pub fn allocate_finite_memory(
    y: usize,
    m_r: usize,
    pol: &FiniteMemoryAllocation,
    u_d: f64,
    u_m: f64,
) -> (usize, usize) {
    pol.allocate(y, m_r, u_d, u_m)
}

/// G^E: rows (m, x) -> m·|X| + x, columns next signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimpleEncoder {
    inputs: usize,
    g_e: RowStochastic,
}

impl SimpleEncoder {
    pub fn new(g_e: RowStochastic, memory_states: usize, inputs: usize) -> Result<Self> {
        if g_e.nrows() != memory_states * inputs {
            return Err(Error::Dimension {
                what: "G^E rows",
                expected: memory_states * inputs,
                got: g_e.nrows(),
            });
        }
        if g_e.ncols() != inputs {
            return Err(Error::Dimension {
                what: "G^E columns",
                expected: inputs,
                got: g_e.ncols(),
            });
        }
        Ok(SimpleEncoder { inputs, g_e })
    }

    /// Signals drawn i.i.d. from `dist` regardless of state.
    pub fn iid(dist: &[f64], memory_states: usize) -> Result<Self> {
        let g = RowStochastic::new(vec![dist.to_vec(); memory_states * dist.len()])?;
        SimpleEncoder::new(g, memory_states, dist.len())
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn memory_states(&self) -> usize {
        self.g_e.nrows() / self.inputs
    }

    pub fn row(&self, m: usize, x: usize) -> usize {
        m * self.inputs + x
    }

    pub fn g_e(&self) -> &RowStochastic {
        &self.g_e
    }

    pub fn encode(&self, x_prev: usize, m_r: usize, u: f64) -> usize {
        self.g_e.sample(self.row(m_r, x_prev), u)
    }

    /// Encoder memory holds the last signal.
    pub fn memory_bits(&self) -> f64 {
        bits(self.inputs).ceil()
    }
}

pub fn simple_encode(x_prev: usize, m_r: usize, enc: &SimpleEncoder, u: f64) -> usize {
    enc.encode(x_prev, m_r, u)
}

/// Encoder Max-Weight over the conditional expected allocations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MwEncoder {
    rate_rows: Vec<Vec<f64>>,
}

impl MwEncoder {
    pub fn new(rate_rows: Vec<Vec<f64>>) -> Result<Self> {
        if rate_rows.is_empty() {
            return Err(Error::Parameter("max-weight encoder needs at least one row".into()));
        }
        Ok(MwEncoder { rate_rows })
    }

    pub fn for_allocation(channel: &Channel, theta: &MemorylessAllocation, pi: &ScheduleSet) -> Self {
        MwEncoder {
            rate_rows: theta.rate_rows(channel, pi),
        }
    }

    pub fn rate_rows(&self) -> &[Vec<f64>] {
        &self.rate_rows
    }

    pub fn encode(&self, q: &QueueState) -> usize {
        mw_encode(q, &self.rate_rows)
    }
}

pub fn mw_encode(q: &QueueState, rate_rows: &[Vec<f64>]) -> usize {
    argmax_lowest(
        rate_rows
            .iter()
            .map(|r| r.iter().zip(&q.0).map(|(a, &b)| a * b as f64).sum()),
    )
}

/// Smallest non-empty queue index, 0 when all queues are empty.
pub fn index_encode(q: &QueueState) -> usize {
    q.0.iter().position(|&v| v > 0).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmwMember {
    pub encoder: SimpleEncoder,
    pub rate: Vec<f64>,
}

/// Frozen bank of simple encoders with their stationary rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmwBank {
    members: Vec<EmwMember>,
    episode_mean: f64,
}

impl EmwBank {
    pub fn new(members: Vec<EmwMember>, episode_mean: f64) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Parameter("empty EMW policy bank".into()));
        }
        if episode_mean < 1.0 || !episode_mean.is_finite() {
            return Err(Error::Parameter(format!("episode mean {episode_mean} < 1")));
        }
        let (x, m) = (members[0].encoder.inputs(), members[0].encoder.memory_states());
        if members
            .iter()
            .any(|b| b.encoder.inputs() != x || b.encoder.memory_states() != m)
        {
            return Err(Error::Parameter("bank members disagree on alphabet or memory".into()));
        }
        Ok(EmwBank {
            members,
            episode_mean,
        })
    }

    pub fn members(&self) -> &[EmwMember] {
        &self.members
    }

    pub fn episode_mean(&self) -> f64 {
        self.episode_mean
    }

    pub fn episode_rate(&self) -> f64 {
        1.0 / self.episode_mean
    }

    pub fn inputs(&self) -> usize {
        self.members[0].encoder.inputs()
    }

    pub fn memory_states(&self) -> usize {
        self.members[0].encoder.memory_states()
    }

    /// log|F| + log|X|.
    pub fn memory_bits(&self) -> f64 {
        bits(self.members.len()) + bits(self.inputs())
    }

    pub fn select(&self, q: &QueueState) -> usize {
        argmax_lowest(
            self.members
                .iter()
                .map(|b| b.rate.iter().zip(&q.0).map(|(a, &v)| a * v as f64).sum()),
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmwState {
    pub current: usize,
    pub last_signal: usize,
}

/// Refresh the bank index with probability 1/B, then emit through the
/// current member.
pub fn emw_step(
    bank: &EmwBank,
    state: &mut EmwState,
    q: &QueueState,
    m_r: usize,
    u_episode: f64,
    u_signal: f64,
) -> usize {
    if u_episode < bank.episode_rate() {
        state.current = bank.select(q);
    }
    let x = bank.members[state.current]
        .encoder
        .encode(state.last_signal, m_r, u_signal);
    state.last_signal = x;
    x
}

/// Lazy versions: hold the previous signal / memory with probability δ.
pub fn perturb_simple(
    enc: &SimpleEncoder,
    pol: &FiniteMemoryAllocation,
    delta: f64,
) -> Result<(SimpleEncoder, FiniteMemoryAllocation)> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::Parameter(format!(
            "perturbation delta {delta} must lie in [0,1); delta = 1 freezes the chain"
        )));
    }
    let x = enc.inputs();
    let g_e = enc
        .g_e()
        .rows()
        .iter()
        .enumerate()
        .map(|(r, row)| {
            let held = r % x;
            row.iter()
                .enumerate()
                .map(|(j, p)| (1.0 - delta) * p + if j == held { delta } else { 0.0 })
                .collect()
        })
        .collect();
    let y = pol.outputs();
    let g_a = pol
        .g_a()
        .rows()
        .iter()
        .enumerate()
        .map(|(r, row)| {
            let held = r / y;
            row.iter()
                .enumerate()
                .map(|(j, p)| (1.0 - delta) * p + if j == held { delta } else { 0.0 })
                .collect()
        })
        .collect();
    Ok((
        SimpleEncoder::new(RowStochastic::new(g_e)?, enc.memory_states(), x)?,
        FiniteMemoryAllocation::new(pol.mem_bits(), y, RowStochastic::new(g_a)?, pol.h_a().clone())?,
    ))
}

/// Episodic greedy learning parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EglConfig {
    pub queues: usize,
    pub episode_len: u64,
    pub learn_len: u64,
    pub alpha: f64,
    pub x1: usize,
    pub x2: usize,
    pub y1: usize,
    pub q1: f64,
    pub q2: f64,
    /// Keep serving with the previous deployment mixture while learning.
    pub carry_over: bool,
}

/// (x1, x2, y1) maximizing q2 − q1 = C[x2][y1] − C[x1][y1]; ties to lowest indices.
pub fn probe_triple(channel: &Channel) -> Result<(usize, usize, usize, f64, f64)> {
    let mut best: Option<(usize, usize, usize, f64, f64)> = None;
    for y in 0..channel.outputs() {
        for x1 in 0..channel.inputs() {
            for x2 in 0..channel.inputs() {
                let (q1, q2) = (channel.prob(x1, y), channel.prob(x2, y));
                if q2 - q1 > best.map(|b| b.4 - b.3).unwrap_or(1e-12) {
                    best = Some((x1, x2, y, q1, q2));
                }
            }
        }
    }
    best.ok_or_else(|| Error::Parameter("channel has no informative probe pair (q1 = q2)".into()))
}

impl EglConfig {
    pub fn new(channel: &Channel, queues: usize, episode_len: u64, learn_len: u64, alpha: f64) -> Result<Self> {
        let (x1, x2, y1, q1, q2) = probe_triple(channel)?;
        let cfg = EglConfig {
            queues,
            episode_len,
            learn_len,
            alpha,
            x1,
            x2,
            y1,
            q1,
            q2,
            carry_over: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.queues as u64;
        if n == 0 {
            return Err(Error::Parameter("EGL needs at least one queue".into()));
        }
        if self.learn_len == 0 || self.learn_len % n != 0 {
            return Err(Error::Parameter(format!(
                "learning length {} must be a positive multiple of N = {n}",
                self.learn_len
            )));
        }
        if self.episode_len <= self.learn_len {
            return Err(Error::Parameter("episode must be longer than its learning phase".into()));
        }
        if self.q2 <= self.q1 {
            return Err(Error::Parameter("probe pair is not informative (q2 <= q1)".into()));
        }
        if self.alpha <= 0.0 {
            return Err(Error::Parameter("alpha must be positive".into()));
        }
        Ok(())
    }

    /// Learning tallies plus the episode clock: B1 + log B bits.
    pub fn receiver_bits(&self) -> f64 {
        self.learn_len as f64 + bits(self.episode_len as usize)
    }

    /// Round-robin counter kept by the encoder when there is no feedback.
    pub fn encoder_counter_bits(&self) -> f64 {
        bits(self.queues).ceil()
    }
}

/// x1 when the probed queue saw an arrival in the previous slot, else x2.
pub fn egl_encoder_step(t: u64, a_prev: &[u8], cfg: &EglConfig) -> usize {
    let i = (t % cfg.queues as u64) as usize;
    if a_prev[i] == 1 {
        cfg.x1
    } else {
        cfg.x2
    }
}

/// λ̂ = (q2 − p̂)/(q2 − q1), clamped at zero.
pub fn estimate_rate(p_hat: f64, q1: f64, q2: f64) -> f64 {
    ((q2 - p_hat) / (q2 - q1)).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EglReceiver {
    tau: u64,
    hits: Vec<u64>,
    samples: Vec<u64>,
    estimate: Option<Vec<f64>>,
    target: Option<Vec<f64>>,
    mixture: Option<Vec<f64>>,
    zero: usize,
}

impl EglReceiver {
    pub fn new(cfg: &EglConfig, pi: &ScheduleSet) -> Result<Self> {
        let zero = pi
            .zero_index()
            .ok_or_else(|| Error::Schedules("EGL needs the zero schedule in the set".into()))?;
        Ok(EglReceiver {
            tau: 0,
            hits: vec![0; cfg.queues],
            samples: vec![0; cfg.queues],
            estimate: None,
            target: None,
            mixture: None,
            zero,
        })
    }

    /// Position within the current episode (the receiver clock).
    pub fn tau(&self) -> u64 {
        self.tau
    }

    pub fn estimate(&self) -> Option<&[f64]> {
        self.estimate.as_deref()
    }

    pub fn target(&self) -> Option<&[f64]> {
        self.target.as_deref()
    }

    pub fn mixture(&self) -> Option<&[f64]> {
        self.mixture.as_deref()
    }

    fn deploy(&mut self, cfg: &EglConfig, pi: &ScheduleSet) -> Result<()> {
        let est: Vec<f64> = self
            .hits
            .iter()
            .zip(&self.samples)
            .map(|(&h, &n)| {
                let p = if n == 0 { cfg.q2 } else { h as f64 / n as f64 };
                estimate_rate(p, cfg.q1, cfg.q2)
            })
            .collect();
        let shifted: Vec<f64> = est.iter().map(|l| l + cfg.alpha).collect();
        let target = pi.proj_boundary(&shifted)?;
        let weights = pi
            .decompose(&target)
            .map_err(|e| Error::Shortfall(format!("internal: boundary target not decomposable: {e}")))?;
        self.estimate = Some(est);
        self.target = Some(target);
        self.mixture = Some(weights);
        Ok(())
    }

    pub fn step(&mut self, y: usize, cfg: &EglConfig, pi: &ScheduleSet, u: f64) -> Result<usize> {
        let tau = self.tau;
        let d = if tau < cfg.learn_len {
            let i = (tau % cfg.queues as u64) as usize;
            self.samples[i] += 1;
            if y == cfg.y1 {
                self.hits[i] += 1;
            }
            match (&self.mixture, cfg.carry_over) {
                (Some(w), true) => sample_row(w, u),
                _ => self.zero,
            }
        } else {
            if tau == cfg.learn_len {
                self.deploy(cfg, pi)?;
            }
            sample_row(self.mixture.as_ref().expect("deployed"), u)
        };
        self.tau += 1;
        if self.tau == cfg.episode_len {
            self.tau = 0;
            self.hits.iter_mut().for_each(|v| *v = 0);
            self.samples.iter_mut().for_each(|v| *v = 0);
        }
        Ok(d)
    }
}

pub fn egl_receiver_step(
    state: &mut EglReceiver,
    y: usize,
    cfg: &EglConfig,
    pi: &ScheduleSet,
    u: f64,
) -> Result<usize> {
    state.step(y, cfg, pi, u)
}

/// Smallest B1 (multiple of N) for which a Monte Carlo estimate of
/// P(‖λ̂⁺ − λ‖∞ > tol) at the worst-case rate stays at or below `fail`.
pub fn egl_learning_length(q1: f64, q2: f64, queues: usize, tol: f64, fail: f64, trials: usize, seed: u64) -> u64 {
    use rand::SeedableRng;
    use rand_distr::{Binomial, Distribution};
    // the Bernoulli mean with the largest variance
    let p = 0.5f64.clamp(q1, q2);
    let lam = (q2 - p) / (q2 - q1);
    let fails = |per_queue: u64| -> f64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let bin = Binomial::new(per_queue, p).expect("valid binomial");
        let bad = (0..trials)
            .filter(|_| {
                (0..queues).any(|_| {
                    let est = estimate_rate(bin.sample(&mut rng) as f64 / per_queue as f64, q1, q2);
                    (est - lam).abs() > tol
                })
            })
            .count();
        bad as f64 / trials as f64
    };
    let mut hi = 8u64;
    while fails(hi) > fail {
        hi *= 2;
    }
    let mut lo = hi / 2;
    while hi - lo > (hi / 200).max(1) {
        let mid = (lo + hi) / 2;
        if fails(mid) > fail {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi * queues as u64
}
