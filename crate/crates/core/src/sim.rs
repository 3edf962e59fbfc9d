//! Trajectory execution, stability verdicts, sweeps and result files.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::Channel;
use crate::error::{Error, Result};
use crate::markov::{drift_estimate, QueueSample};
use crate::network::{step_dynamics, ArrivalRates, ScheduleSet, SystemState};
use crate::policies::{
    egl_encoder_step, emw_step, index_encode, EglConfig, EglReceiver, EmwBank, EmwState,
    FiniteMemoryAllocation, MemorylessAllocation, MwEncoder, SimpleEncoder,
};

pub const DEFAULT_WINDOW: u64 = 5_000;
pub const DEFAULT_THRESHOLD: f64 = 0.002;
pub const DEFAULT_HORIZON: u64 = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Encoder {
    /// Smallest non-empty queue index.
    Index,
    MaxWeight(MwEncoder),
    Simple(SimpleEncoder),
    Emw(EmwBank),
    Egl(EglConfig),
    Constant { symbol: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Allocator {
    Memoryless(MemorylessAllocation),
    FiniteMemory(FiniteMemoryAllocation),
    Egl(EglConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyPair {
    pub encoder: Encoder,
    pub allocator: Allocator,
    /// Encoder observes M_r(t−1).
    pub feedback: bool,
    /// Receiver memory consumes Y(t−1) instead of Y(t).
    #[serde(default)]
    pub receiver_lag: bool,
}

impl PolicyPair {
    pub fn new(encoder: Encoder, allocator: Allocator, feedback: bool) -> Self {
        PolicyPair {
            encoder,
            allocator,
            feedback,
            receiver_lag: false,
        }
    }

    pub fn name(&self) -> String {
        let e = match &self.encoder {
            Encoder::Index => "index",
            Encoder::MaxWeight(_) => "max_weight",
            Encoder::Simple(_) => "simple",
            Encoder::Emw(_) => "emw",
            Encoder::Egl(_) => "egl",
            Encoder::Constant { .. } => "constant",
        };
        let a = match &self.allocator {
            Allocator::Memoryless(_) => "memoryless",
            Allocator::FiniteMemory(_) => "finite_memory",
            Allocator::Egl(_) => "egl",
        };
        format!("{e}/{a}")
    }

    /// Encoder memory in bits (k).
    pub fn encoder_bits(&self) -> f64 {
        match &self.encoder {
            Encoder::Index | Encoder::MaxWeight(_) | Encoder::Constant { .. } => 0.0,
            Encoder::Simple(e) => e.memory_bits(),
            Encoder::Emw(b) => b.memory_bits(),
            Encoder::Egl(cfg) => {
                if self.feedback {
                    0.0
                } else {
                    cfg.encoder_counter_bits()
                }
            }
        }
    }

    /// Receiver memory in bits (v).
    pub fn receiver_bits(&self) -> f64 {
        match &self.allocator {
            Allocator::Memoryless(_) => 0.0,
            Allocator::FiniteMemory(p) => p.mem_bits() as f64,
            Allocator::Egl(cfg) => cfg.receiver_bits(),
        }
    }

    pub fn validate(&self, pi: &ScheduleSet, c: &Channel) -> Result<()> {
        let dim = |what, expected, got| {
            if expected != got {
                Err(Error::Dimension { what, expected, got })
            } else {
                Ok(())
            }
        };
        let receiver_states = match &self.allocator {
            Allocator::Memoryless(t) => {
                dim("theta rows", c.outputs(), t.outputs())?;
                dim("theta columns", pi.len(), t.schedules())?;
                1
            }
            Allocator::FiniteMemory(p) => {
                dim("allocation alphabet", c.outputs(), p.outputs())?;
                dim("allocation schedules", pi.len(), p.schedules())?;
                p.memory_states()
            }
            Allocator::Egl(cfg) => {
                cfg.validate()?;
                dim("EGL queues", pi.queues(), cfg.queues)?;
                if pi.zero_index().is_none() {
                    return Err(Error::Config("EGL receiver needs the zero schedule".into()));
                }
                0
            }
        };
        match &self.encoder {
            Encoder::Index => {
                if c.inputs() < pi.queues() {
                    return Err(Error::Config(format!(
                        "index encoder needs |X| >= N ({} < {})",
                        c.inputs(),
                        pi.queues()
                    )));
                }
            }
            Encoder::MaxWeight(mw) => {
                dim("max-weight rows", c.inputs(), mw.rate_rows().len())?;
                for r in mw.rate_rows() {
                    dim("max-weight row length", pi.queues(), r.len())?;
                }
            }
            Encoder::Simple(e) => {
                dim("encoder alphabet", c.inputs(), e.inputs())?;
                if receiver_states > 0 {
                    dim("encoder memory states", receiver_states, e.memory_states())?;
                }
                if e.memory_states() > 1 && !self.feedback {
                    return Err(Error::Config("simple encoder with receiver memory requires memory-feedback".into()));
                }
            }
            Encoder::Emw(b) => {
                if !self.feedback {
                    return Err(Error::Config("EMW requires memory-feedback".into()));
                }
                dim("EMW alphabet", c.inputs(), b.inputs())?;
                if receiver_states > 0 {
                    dim("EMW memory states", receiver_states, b.memory_states())?;
                }
                for m in b.members() {
                    dim("EMW rate length", pi.queues(), m.rate.len())?;
                }
            }
            Encoder::Egl(cfg) => {
                cfg.validate()?;
                dim("EGL queues", pi.queues(), cfg.queues)?;
                match &self.allocator {
                    Allocator::Egl(rc) if rc == cfg => {}
                    _ => return Err(Error::Config("EGL encoder must pair with the same EGL receiver".into())),
                }
                if !self.feedback && cfg.episode_len % cfg.queues as u64 != 0 {
                    return Err(Error::Config(
                        "without feedback the episode length must be a multiple of N".into(),
                    ));
                }
            }
            Encoder::Constant { symbol } => {
                if *symbol >= c.inputs() {
                    return Err(Error::Config(format!("constant symbol {symbol} outside alphabet")));
                }
            }
        }
        if let Encoder::Egl(cfg) = &self.encoder {
            if cfg.x1.max(cfg.x2) >= c.inputs() {
                return Err(Error::Config("EGL probe symbols outside alphabet".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schedules: ScheduleSet,
    pub channel: Channel,
    pub arrivals: ArrivalRates,
    pub policy: PolicyPair,
    pub horizon: u64,
    pub seed: u64,
    pub window: u64,
    pub threshold: f64,
    /// Queue lengths are sampled every `stride` slots.
    pub stride: u64,
    /// Keep the per-slot (X(t), M_r(t)) trace.
    pub record_signals: bool,
}

impl ExperimentConfig {
    pub fn new(schedules: ScheduleSet, channel: Channel, arrivals: Vec<f64>, policy: PolicyPair) -> Result<Self> {
        Ok(ExperimentConfig {
            schedules,
            channel,
            arrivals: ArrivalRates::new(arrivals)?,
            policy,
            horizon: DEFAULT_HORIZON,
            seed: 0,
            window: DEFAULT_WINDOW,
            threshold: DEFAULT_THRESHOLD,
            stride: 10,
            record_signals: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.arrivals.rates().len() != self.schedules.queues() {
            return Err(Error::Dimension {
                what: "arrival rates",
                expected: self.schedules.queues(),
                got: self.arrivals.rates().len(),
            });
        }
        if self.window == 0 || self.horizon < 10 * self.window {
            return Err(Error::Config(format!(
                "horizon {} must be at least 10 windows of {}",
                self.horizon, self.window
            )));
        }
        if self.stride == 0 || self.stride > self.window {
            return Err(Error::Config("stride must lie in [1, window]".into()));
        }
        self.policy.validate(&self.schedules, &self.channel)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub samples: Vec<QueueSample>,
    pub initial: Vec<u64>,
    pub arrivals: Vec<u64>,
    pub departures: Vec<u64>,
    pub offered: Vec<u64>,
    pub final_state: SystemState,
    /// (X(t), M_r(t)) per slot when requested.
    pub signals: Option<Vec<(usize, usize)>>,
    /// How often each schedule was used.
    pub schedule_counts: Vec<u64>,
    pub slots: u64,
    pub rng_word_pos: u128,
}

impl TrajectoryRecord {
    /// initial + arrivals = departures + final, per queue.
    pub fn conserves_flow(&self) -> bool {
        (0..self.initial.len()).all(|i| {
            self.initial[i] + self.arrivals[i] == self.departures[i] + self.final_state.queues.0[i]
                && self.departures[i] <= self.offered[i]
        })
    }
}

enum EncState {
    Stateless,
    Emw(EmwState),
    EglCounter(u64),
}

/// Runs one trajectory. Per slot: encoder, channel, allocation and receiver
/// memory, arrivals, queue update. The RNG draws N arrival variates and five
/// policy variates every slot regardless of the policy in use.
pub fn run_trajectory(cfg: &ExperimentConfig) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    let pi = &cfg.schedules;
    let c = &cfg.channel;
    let n = pi.queues();
    let pol = &cfg.policy;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = SystemState::initial(n);
    let mut enc_state = match &pol.encoder {
        Encoder::Emw(_) => EncState::Emw(EmwState::default()),
        Encoder::Egl(_) => EncState::EglCounter(0),
        _ => EncState::Stateless,
    };
    let mut receiver = match &pol.allocator {
        Allocator::Egl(rc) => Some(EglReceiver::new(rc, pi)?),
        _ => None,
    };
    let mut y_prev = 0usize;
    let mut arrivals = vec![0u64; n];
    let mut departures = vec![0u64; n];
    let mut offered = vec![0u64; n];
    let mut schedule_counts = vec![0u64; pi.len()];
    let mut samples = vec![QueueSample::new(0, state.queues.0.clone())];
    let mut signals = cfg.record_signals.then(|| Vec::with_capacity(cfg.horizon as usize));
    let mut a = vec![0u8; n];
    let mut peak = 0u64;
    let rates = cfg.arrivals.rates();

    for t in 1..=cfg.horizon {
        for (ai, &l) in a.iter_mut().zip(rates) {
            *ai = (rng.random::<f64>() < l) as u8;
        }
        let u_enc1: f64 = rng.random();
        let u_enc2: f64 = rng.random();
        let u_chan: f64 = rng.random();
        let u_alloc: f64 = rng.random();
        let u_mem: f64 = rng.random();

        let m_prev = state.receiver_memory as usize;
        let m_seen = if pol.feedback { m_prev } else { 0 };
        let x = match (&pol.encoder, &mut enc_state) {
            (Encoder::Index, _) => index_encode(&state.queues),
            (Encoder::MaxWeight(mw), _) => mw.encode(&state.queues),
            (Encoder::Simple(e), _) => e.encode(state.last_signal, m_seen, u_enc1),
            (Encoder::Emw(bank), EncState::Emw(s)) => emw_step(bank, s, &state.queues, m_seen, u_enc1, u_enc2),
            (Encoder::Egl(ec), EncState::EglCounter(k)) => {
                let clock = if pol.feedback { m_prev as u64 } else { *k };
                *k = (*k + 1) % ec.queues as u64;
                egl_encoder_step(clock, &state.last_arrivals, ec)
            }
            (Encoder::Constant { symbol }, _) => *symbol,
            _ => unreachable!("encoder state matches encoder kind"),
        };
        let y = c.sample(x, u_chan);
        let (d, m_next) = match &pol.allocator {
            Allocator::Memoryless(theta) => (theta.allocate(y, u_alloc), 0),
            Allocator::FiniteMemory(fm) => {
                let d = fm.schedule(y, m_prev, u_alloc);
                let y_mem = if pol.receiver_lag { y_prev } else { y };
                (d, fm.next_memory(y_mem, m_prev, u_mem))
            }
            Allocator::Egl(rc) => {
                let r = receiver.as_mut().expect("receiver");
                let d = r.step(y, rc, pi, u_alloc)?;
                (d, r.tau() as usize)
            }
        };
        let sched = pi.get(d);
        for i in 0..n {
            let q = state.queues.0[i];
            departures[i] += q.min(sched[i] as u64);
            offered[i] += sched[i] as u64;
            arrivals[i] += a[i] as u64;
        }
        schedule_counts[d] += 1;
        state.queues = step_dynamics(&state.queues, sched, &a)?;
        state.last_arrivals.copy_from_slice(&a);
        state.last_signal = x;
        state.receiver_memory = m_next as u64;
        if let EncState::Emw(s) = &enc_state {
            state.encoder_memory = (s.current * c.inputs() + s.last_signal) as u64;
        } else if let EncState::EglCounter(k) = &enc_state {
            state.encoder_memory = *k;
        } else if matches!(pol.encoder, Encoder::Simple(_)) {
            state.encoder_memory = x as u64;
        }
        y_prev = y;
        if let Some(s) = signals.as_mut() {
            s.push((x, m_next));
        }
        peak = peak.max(state.queues.0.iter().copied().max().unwrap_or(0));
        if t % cfg.stride == 0 || t == cfg.horizon {
            samples.push(QueueSample {
                slot: t,
                queues: state.queues.0.clone(),
                peak,
            });
            peak = 0;
        }
    }
    Ok(TrajectoryRecord {
        samples,
        initial: vec![0; n],
        arrivals,
        departures,
        offered,
        final_state: state,
        signals,
        schedule_counts,
        slots: cfg.horizon,
        rng_word_pos: rng.get_word_pos(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Stable,
    Unstable,
    Inconclusive,
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Stable => "stable",
            Label::Unstable => "unstable",
            Label::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub label: Label,
    pub median_slope: f64,
    /// Largest single queue over the second half of the run.
    pub max_queue: u64,
    pub slots_run: u64,
}

pub fn queue_limit(queues: usize, horizon: u64) -> f64 {
    50.0 * queues as f64 * (1.0 + (horizon as f64).sqrt() / 100.0)
}

pub fn classify(median_slope: f64, max_queue: u64, queues: usize, slots: u64, threshold: f64) -> Label {
    if median_slope <= threshold && (max_queue as f64) <= queue_limit(queues, slots) {
        Label::Stable
    } else if median_slope >= 3.0 * threshold {
        Label::Unstable
    } else {
        Label::Inconclusive
    }
}

pub fn detect_stability(rec: &TrajectoryRecord, window: u64, threshold: f64) -> StabilityVerdict {
    let n = rec.initial.len();
    let half = rec.slots / 2;
    let max_queue = rec
        .samples
        .iter()
        .filter(|s| s.slot > half)
        .map(|s| s.peak)
        .max()
        .unwrap_or(0);
    match drift_estimate(&rec.samples, window) {
        Ok(d) => StabilityVerdict {
            label: classify(d.median_l1, max_queue, n, rec.slots, threshold),
            median_slope: d.median_l1,
            max_queue,
            slots_run: rec.slots,
        },
        Err(_) => StabilityVerdict {
            label: Label::Inconclusive,
            median_slope: f64::NAN,
            max_queue,
            slots_run: rec.slots,
        },
    }
}

/// Runs and classifies in one go.
pub fn run_and_classify(cfg: &ExperimentConfig) -> Result<(TrajectoryRecord, StabilityVerdict)> {
    let rec = run_trajectory(cfg)?;
    let v = detect_stability(&rec, cfg.window, cfg.threshold);
    Ok((rec, v))
}

/// Splitmix64 of (base, point id).
pub fn point_seed(base: u64, point: u64) -> u64 {
    let mut z = base.wrapping_add(point.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One grid point: either explicit rates or ρ times a direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct GridPoint {
    #[serde(default)]
    pub lambda: Option<Vec<f64>>,
    #[serde(default)]
    pub direction: Option<Vec<f64>>,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub horizon: Option<u64>,
}

impl GridPoint {
    pub fn rates(&self, n: usize) -> Result<Vec<f64>> {
        match (&self.lambda, &self.direction, self.rho) {
            (Some(l), None, None) => Ok(l.clone()),
            (Some(l), None, Some(r)) => Ok(l.iter().map(|v| v * r).collect()),
            (None, Some(d), Some(r)) => Ok(d.iter().map(|v| v * r).collect()),
            (None, None, _) => Err(Error::Config(format!("grid point needs lambda or direction (N = {n})"))),
            _ => Err(Error::Config("grid point: give lambda, or direction with rho".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point_id: usize,
    pub lambda: Vec<f64>,
    pub rho: Option<f64>,
    pub policy: String,
    pub k: f64,
    pub v: f64,
    pub seed: u64,
    pub slots: u64,
    pub verdict: Option<StabilityVerdict>,
    pub error: Option<String>,
}

fn sweep_point(base: &ExperimentConfig, id: usize, p: &GridPoint) -> SweepRow {
    let seed = point_seed(base.seed, id as u64);
    let mut row = SweepRow {
        point_id: id,
        lambda: Vec::new(),
        rho: p.rho,
        policy: base.policy.name(),
        k: base.policy.encoder_bits(),
        v: base.policy.receiver_bits(),
        seed,
        slots: p.horizon.unwrap_or(base.horizon),
        verdict: None,
        error: None,
    };
    let result = (|| -> Result<StabilityVerdict> {
        let rates = p.rates(base.schedules.queues())?;
        row.lambda = rates.clone();
        let mut cfg = base.clone();
        cfg.arrivals = ArrivalRates::new(rates)?;
        cfg.seed = seed;
        cfg.horizon = row.slots;
        cfg.record_signals = false;
        Ok(run_and_classify(&cfg)?.1)
    })();
    match result {
        Ok(v) => row.verdict = Some(v),
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Runs every grid point with its own derived seed. Rows come back in
/// point order whatever the worker count; per-point errors are kept in the row.
pub fn sweep(base: &ExperimentConfig, grid: &[GridPoint], workers: usize) -> Result<Vec<SweepRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        grid.par_iter()
            .enumerate()
            .map(|(i, p)| sweep_point(base, i, p))
            .collect()
    }))
}

/// Fixed decimal rendering with 12 significant digits.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (11 - mag).max(0) as usize;
    let s = format!("{:.*}", decimals, x);
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        t.to_string()
    } else {
        s
    }
}

fn round_sig(x: f64) -> f64 {
    fmt_sig(x).parse().unwrap_or(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

pub const CSV_HEADER: [&str; 11] = [
    "point_id",
    "lambda",
    "rho",
    "policy",
    "k",
    "v",
    "verdict",
    "median_slope",
    "max_queue",
    "seed",
    "slots",
];

pub fn emit_results(rows: &[SweepRow], path: &Path, format: Format) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Config("no rows to write".into()));
    }
    let mut sorted: Vec<&SweepRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.point_id);
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))?;
            w.write_record(CSV_HEADER).map_err(|e| Error::Io(e.into()))?;
            for r in sorted {
                let lambda = r.lambda.iter().map(|v| fmt_sig(*v)).collect::<Vec<_>>().join(";");
                let (verdict, slope, maxq) = match (&r.verdict, &r.error) {
                    (Some(v), _) => (v.label.to_string(), fmt_sig(v.median_slope), v.max_queue.to_string()),
                    (None, Some(e)) => (format!("error: {e}"), String::new(), String::new()),
                    (None, None) => (String::new(), String::new(), String::new()),
                };
                w.write_record([
                    r.point_id.to_string(),
                    lambda,
                    r.rho.map(fmt_sig).unwrap_or_default(),
                    r.policy.clone(),
                    fmt_sig(r.k),
                    fmt_sig(r.v),
                    verdict,
                    slope,
                    maxq,
                    r.seed.to_string(),
                    r.slots.to_string(),
                ])
                .map_err(|e| Error::Io(e.into()))?;
            }
            w.flush()?;
        }
        Format::Json => {
            let out: Vec<serde_json::Value> = sorted
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "point_id": r.point_id,
                        "config": {
                            "lambda": r.lambda.iter().map(|v| round_sig(*v)).collect::<Vec<_>>(),
                            "rho": r.rho.map(round_sig),
                            "policy": r.policy,
                            "k": round_sig(r.k),
                            "v": round_sig(r.v),
                            "seed": r.seed,
                            "slots": r.slots,
                        },
                        "verdict": r.verdict.as_ref().map(|v| v.label.to_string()),
                        "median_slope": r.verdict.as_ref().map(|v| round_sig(v.median_slope)),
                        "max_queue": r.verdict.as_ref().map(|v| v.max_queue),
                        "error": r.error,
                    })
                })
                .collect();
            let text = serde_json::to_string_pretty(&out).map_err(|e| Error::Config(e.to_string()))?;
            std::fs::write(path, text + "\n")?;
        }
    }
    Ok(())
}

/// Time-average service actually offered, per queue.
pub fn empirical_offered_rate(rec: &TrajectoryRecord) -> Vec<f64> {
    rec.offered.iter().map(|&o| o as f64 / rec.slots as f64).collect()
}

/// Full-information Max-Weight on any schedule set: identity channel over
/// Π, Θ = identity.
pub fn full_information_pair(pi: &ScheduleSet) -> (Channel, PolicyPair) {
    let c = Channel::identity(pi.len());
    let theta = MemorylessAllocation::direct(&(0..pi.len()).collect::<Vec<_>>(), pi.len());
    let mw = MwEncoder::for_allocation(&c, &theta, pi);
    (c, PolicyPair::new(Encoder::MaxWeight(mw), Allocator::Memoryless(theta), false))
}

/// The index encoder with direct allocation y -> e_{y}; needs |X| = |Y| = N.
pub fn index_direct_pair(pi: &ScheduleSet) -> Result<PolicyPair> {
    let n = pi.queues();
    let map = (0..n)
        .map(|i| {
            let mut e = vec![0u32; n];
            e[i] = 1;
            pi.index_of(&e)
                .ok_or_else(|| Error::Schedules(format!("unit schedule for queue {i} missing")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PolicyPair::new(
        Encoder::Index,
        Allocator::Memoryless(MemorylessAllocation::direct(&map, pi.len())),
        false,
    ))
}

/// Pair built from a simple encoder and a finite-memory allocation.
pub fn simple_pair(enc: SimpleEncoder, pol: FiniteMemoryAllocation) -> PolicyPair {
    PolicyPair::new(Encoder::Simple(enc), Allocator::FiniteMemory(pol), true)
}
