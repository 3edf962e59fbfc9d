//! TOML experiment files. Paths inside a file are relative to that file.

use std::path::{Path, PathBuf};

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::capacity::{build_emw, BisectionOptions, SolverOptions};
use crate::channel::Channel;
use crate::error::{Error, Result};
use crate::network::{ArrivalRates, ScheduleSet};
use crate::policies::{egl_learning_length, EglConfig, FiniteMemoryAllocation, MemorylessAllocation, MwEncoder, SimpleEncoder};
use crate::sim::{Allocator, Encoder, ExperimentConfig, GridPoint, PolicyPair, DEFAULT_HORIZON, DEFAULT_THRESHOLD, DEFAULT_WINDOW};
use crate::stoch::RowStochastic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    /// Explicit member list (must already be monotone).
    #[serde(default)]
    pub schedules: Option<Vec<Vec<u32>>>,
    /// Generators whose monotone closure is taken.
    #[serde(default)]
    pub generators: Option<Vec<Vec<u32>>>,
    /// N parallel queues with one server.
    #[serde(default)]
    pub single_server: Option<usize>,
}

/// Matrix entry: a number or a rational string such as "3/4".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Float(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSpec {
    Identity { n: usize },
    Symmetric { n: usize, epsilon: f64 },
    Uninformative { row: Vec<f64>, inputs: usize },
    Matrix { rows: Vec<Vec<Entry>> },
    /// CSV file, one channel row per line.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EncoderSpec {
    Index,
    /// Max-Weight against the memoryless allocator's rate rows.
    MaxWeight,
    Simple {
        g_e: Vec<Vec<f64>>,
        #[serde(default = "one")]
        memory_states: usize,
    },
    Constant { symbol: usize },
    /// Built from the memory program; the allocator is derived.
    Emw {
        #[serde(default = "one_u32")]
        v: u32,
        #[serde(default = "default_slack")]
        slack: f64,
        #[serde(default = "default_episode")]
        episode_mean: f64,
        #[serde(default)]
        starts: Option<usize>,
    },
    /// Episodic greedy learning; the allocator is derived.
    Egl {
        /// Target margin ε: λ̂ must be within ε/(3N) w.p. 1 − ε/(12KN).
        #[serde(default = "default_margin")]
        margin: f64,
        #[serde(default = "one")]
        k: usize,
        #[serde(default)]
        learn_len: Option<u64>,
        #[serde(default)]
        episode_len: Option<u64>,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_trials")]
        trials: usize,
        #[serde(default = "yes")]
        carry_over: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AllocatorSpec {
    Memoryless {
        #[serde(default)]
        theta: Option<Vec<Vec<f64>>>,
        /// y -> schedule index (deterministic Θ).
        #[serde(default)]
        map: Option<Vec<usize>>,
    },
    FiniteMemory {
        mem_bits: u32,
        g_a: Vec<Vec<f64>>,
        h_a: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub encoder: EncoderSpec,
    #[serde(default)]
    pub allocator: Option<AllocatorSpec>,
    #[serde(default)]
    pub feedback: Option<bool>,
    #[serde(default)]
    pub receiver_lag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalSpec {
    #[serde(default)]
    pub rates: Option<Vec<f64>>,
    #[serde(default)]
    pub direction: Option<Vec<f64>>,
    #[serde(default)]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_window")]
    pub window: u64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_stride")]
    pub stride: u64,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            horizon: DEFAULT_HORIZON,
            seed: 0,
            window: DEFAULT_WINDOW,
            threshold: DEFAULT_THRESHOLD,
            stride: default_stride(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CapFactorSpec {
    #[serde(default)]
    pub v: Option<u32>,
    /// Overrides the channel's maximal ε for the closed and bound methods.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub solver: Option<SolverOptions>,
    #[serde(default)]
    pub bisection: Option<BisectionOptions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub network: NetworkSpec,
    pub channel: ChannelSpec,
    #[serde(default)]
    pub policy: Option<PolicySpec>,
    #[serde(default)]
    pub arrivals: Option<ArrivalSpec>,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default)]
    pub capfactor: CapFactorSpec,
}

fn one() -> usize {
    1
}
fn one_u32() -> u32 {
    1
}
fn yes() -> bool {
    true
}
fn default_slack() -> f64 {
    0.05
}
fn default_episode() -> f64 {
    200.0
}
fn default_margin() -> f64 {
    0.1
}
fn default_alpha() -> f64 {
    0.05
}
fn default_trials() -> usize {
    4000
}
fn default_horizon() -> u64 {
    DEFAULT_HORIZON
}
fn default_window() -> u64 {
    DEFAULT_WINDOW
}
fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}
fn default_stride() -> u64 {
    10
}

fn parse_entry(e: &Entry) -> Result<Rational64> {
    match e {
        Entry::Text(s) => parse_rational(s),
        Entry::Float(f) => Rational64::approximate_float(*f)
            .ok_or_else(|| Error::Config(format!("entry {f} not representable"))),
    }
}

fn parse_rational(s: &str) -> Result<Rational64> {
    let s = s.trim();
    let bad = || Error::Config(format!("cannot parse matrix entry '{s}'"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n: i64 = n.trim().parse().map_err(|_| bad())?;
            let d: i64 = d.trim().parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            Ok(Rational64::new(n, d))
        }
        None => {
            let f: f64 = s.parse().map_err(|_| bad())?;
            Rational64::approximate_float(f).ok_or_else(bad)
        }
    }
}

/// Rows of text entries go through the exact path; plain numbers stay floats.
fn channel_from_entries(rows: &[Vec<Entry>]) -> Result<Channel> {
    if rows.iter().flatten().any(|e| matches!(e, Entry::Text(_))) {
        let exact = rows
            .iter()
            .map(|r| r.iter().map(parse_entry).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Channel::from_rationals(exact)
    } else {
        Channel::new(
            rows.iter()
                .map(|r| {
                    r.iter()
                        .map(|e| match e {
                            Entry::Float(f) => *f,
                            Entry::Text(_) => unreachable!(),
                        })
                        .collect()
                })
                .collect(),
        )
    }
}

fn read_csv_entries(path: &Path) -> Result<Vec<Vec<Entry>>> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        rows.push(
            rec.iter()
                .map(|s| match s.parse::<f64>() {
                    Ok(f) => Entry::Float(f),
                    Err(_) => Entry::Text(s.to_string()),
                })
                .collect(),
        );
    }
    Ok(rows)
}

impl NetworkSpec {
    pub fn build(&self) -> Result<ScheduleSet> {
        match (&self.schedules, &self.generators, self.single_server) {
            (Some(s), None, None) => ScheduleSet::new(s.clone()),
            (None, Some(g), None) => ScheduleSet::monotone_closure(g),
            (None, None, Some(n)) => Ok(ScheduleSet::single_server(n)),
            _ => Err(Error::Config(
                "[network] needs exactly one of schedules, generators, single_server".into(),
            )),
        }
    }
}

impl ChannelSpec {
    pub fn build(&self, base: &Path) -> Result<Channel> {
        match self {
            ChannelSpec::Identity { n } => Ok(Channel::identity(*n)),
            ChannelSpec::Symmetric { n, epsilon } => Channel::symmetric(*n, *epsilon),
            ChannelSpec::Uninformative { row, inputs } => Channel::uninformative(row.clone(), *inputs),
            ChannelSpec::Matrix { rows } => channel_from_entries(rows),
            ChannelSpec::File { path } => channel_from_entries(&read_csv_entries(&base.join(path))?),
        }
    }
}

impl ArrivalSpec {
    pub fn rates(&self) -> Result<Vec<f64>> {
        GridPoint {
            lambda: self.rates.clone(),
            direction: self.direction.clone(),
            rho: self.rho,
            horizon: None,
        }
        .rates(0)
    }
}

impl PolicySpec {
    pub fn build(&self, pi: &ScheduleSet, c: &Channel, seed: u64) -> Result<PolicyPair> {
        let feedback_or = |d: bool| self.feedback.unwrap_or(d);
        let derived_only = |what: &str| -> Result<()> {
            if self.allocator.is_some() {
                return Err(Error::Config(format!("{what} derives its allocator; remove [policy.allocator]")));
            }
            Ok(())
        };
        let mut pair = match &self.encoder {
            EncoderSpec::Emw {
                v,
                slack,
                episode_mean,
                starts,
            } => {
                derived_only("emw")?;
                let mut opts = SolverOptions {
                    seed,
                    ..SolverOptions::default()
                };
                if let Some(s) = starts {
                    opts.starts = *s;
                }
                let b = build_emw(pi, c, *v, *slack, *episode_mean, &opts)?;
                let mut p = b.policy_pair();
                p.feedback = feedback_or(true);
                p
            }
            EncoderSpec::Egl {
                margin,
                k,
                learn_len,
                episode_len,
                alpha,
                trials,
                carry_over,
            } => {
                derived_only("egl")?;
                let n = pi.queues();
                let (_, _, _, q1, q2) = crate::policies::probe_triple(c)?;
                let b1 = match learn_len {
                    Some(b) => *b,
                    None => {
                        let nf = n as f64;
                        egl_learning_length(q1, q2, n, margin / (3.0 * nf), margin / (12.0 * *k as f64 * nf), *trials, seed)
                    }
                };
                let feedback = feedback_or(true);
                let b = match episode_len {
                    Some(b) => *b,
                    None => (4 * b1).div_ceil(n as u64) * n as u64,
                };
                let mut cfg = EglConfig::new(c, n, b, b1, *alpha)?;
                cfg.carry_over = *carry_over;
                PolicyPair::new(Encoder::Egl(cfg.clone()), Allocator::Egl(cfg), feedback)
            }
            enc => {
                let alloc = match &self.allocator {
                    None => return Err(Error::Config("[policy.allocator] missing".into())),
                    Some(AllocatorSpec::Memoryless { theta, map }) => match (theta, map) {
                        (Some(t), None) => Allocator::Memoryless(MemorylessAllocation::new(
                            RowStochastic::new(t.clone())?,
                            c.outputs(),
                            pi.len(),
                        )?),
                        (None, Some(m)) => {
                            if let Some(&bad) = m.iter().find(|&&d| d >= pi.len()) {
                                return Err(Error::Config(format!("allocation map names schedule {bad} of {}", pi.len())));
                            }
                            Allocator::Memoryless(MemorylessAllocation::direct(m, pi.len()))
                        }
                        _ => return Err(Error::Config("memoryless allocator needs theta or map".into())),
                    },
                    Some(AllocatorSpec::FiniteMemory { mem_bits, g_a, h_a }) => Allocator::FiniteMemory(FiniteMemoryAllocation::new(
                        *mem_bits,
                        c.outputs(),
                        RowStochastic::new(g_a.clone())?,
                        RowStochastic::new(h_a.clone())?,
                    )?),
                };
                let (encoder, fb) = match enc {
                    EncoderSpec::Index => (Encoder::Index, false),
                    EncoderSpec::Constant { symbol } => (Encoder::Constant { symbol: *symbol }, false),
                    EncoderSpec::MaxWeight => match &alloc {
                        Allocator::Memoryless(theta) => {
                            if theta.outputs() != c.outputs() {
                                return Err(Error::Dimension {
                                    what: "theta rows",
                                    expected: c.outputs(),
                                    got: theta.outputs(),
                                });
                            }
                            (Encoder::MaxWeight(MwEncoder::for_allocation(c, theta, pi)), false)
                        }
                        _ => return Err(Error::Config("max_weight needs a memoryless allocator".into())),
                    },
                    EncoderSpec::Simple { g_e, memory_states } => {
                        let e = SimpleEncoder::new(RowStochastic::new(g_e.clone())?, *memory_states, c.inputs())?;
                        (Encoder::Simple(e), *memory_states > 1)
                    }
                    EncoderSpec::Emw { .. } | EncoderSpec::Egl { .. } => unreachable!(),
                };
                PolicyPair::new(encoder, alloc, feedback_or(fb))
            }
        };
        pair.receiver_lag = self.receiver_lag;
        pair.validate(pi, c)?;
        Ok(pair)
    }
}

/// A parsed file plus the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub file: ConfigFile,
    pub base: PathBuf,
}

impl LoadedConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(&text, base)
    }

    pub fn from_str(text: &str, base: PathBuf) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(LoadedConfig { file, base })
    }

    pub fn schedules(&self) -> Result<ScheduleSet> {
        self.file.network.build()
    }

    pub fn channel(&self) -> Result<Channel> {
        self.file.channel.build(&self.base)
    }

    pub fn policy(&self, pi: &ScheduleSet, c: &Channel) -> Result<PolicyPair> {
        self.file
            .policy
            .as_ref()
            .ok_or_else(|| Error::Config("[policy] missing".into()))?
            .build(pi, c, self.file.run.seed)
    }

    /// Full experiment; arrivals default to zero when absent.
    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let pi = self.schedules()?;
        let c = self.channel()?;
        let policy = self.policy(&pi, &c)?;
        let rates = match &self.file.arrivals {
            Some(a) => a.rates()?,
            None => vec![0.0; pi.queues()],
        };
        let r = &self.file.run;
        let cfg = ExperimentConfig {
            schedules: pi,
            channel: c,
            arrivals: ArrivalRates::new(rates)?,
            policy,
            horizon: r.horizon,
            seed: r.seed,
            window: r.window,
            threshold: r.threshold,
            stride: r.stride,
            record_signals: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Sweep grid: explicit points and/or rays of ρ values along directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    #[serde(default)]
    pub point: Vec<GridPoint>,
    #[serde(default)]
    pub ray: Vec<Ray>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ray {
    pub direction: Vec<f64>,
    pub rho: Vec<f64>,
    #[serde(default)]
    pub horizon: Option<u64>,
}

impl GridFile {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Points first, then rays in file order.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = self.point.clone();
        for r in &self.ray {
            out.extend(r.rho.iter().map(|&rho| GridPoint {
                lambda: None,
                direction: Some(r.direction.clone()),
                rho: Some(rho),
                horizon: r.horizon,
            }));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[network]
single_server = 2

[channel]
kind = "matrix"
rows = [["3/4", "1/4"], ["1/4", "3/4"]]

[policy]
encoder = { kind = "index" }
allocator = { kind = "memoryless", map = [1, 2] }

[arrivals]
direction = [0.5, 0.5]
rho = 0.6

[run]
horizon = 100000
seed = 7
"#;

    #[test]
    fn sample_round_trip() {
        let cfg = LoadedConfig::from_str(SAMPLE, PathBuf::new()).unwrap();
        let e = cfg.experiment().unwrap();
        assert_eq!(e.arrivals.rates(), &[0.3, 0.3]);
        assert!(e.channel.exact().is_some());
        assert_eq!(e.policy.name(), "index/memoryless");
        assert_eq!(e.seed, 7);
        assert_eq!(e.window, DEFAULT_WINDOW);
        let back: ConfigFile = toml::from_str(&toml::to_string(&cfg.file).unwrap()).unwrap();
        assert_eq!(back, cfg.file);
    }

    #[test]
    fn channel_file_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("c.csv"), "# binary\n0.9, 0.1\n1/10, 9/10\n").unwrap();
        let text = SAMPLE.replace(
            "kind = \"matrix\"\nrows = [[\"3/4\", \"1/4\"], [\"1/4\", \"3/4\"]]",
            "kind = \"file\"\npath = \"c.csv\"",
        );
        let p = dir.path().join("exp.toml");
        std::fs::write(&p, text).unwrap();
        let c = LoadedConfig::from_path(&p).unwrap().channel().unwrap();
        assert_eq!(c.matrix()[1], vec![0.1, 0.9]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let no_alloc = SAMPLE.replace("allocator = { kind = \"memoryless\", map = [1, 2] }\n", "");
        assert!(LoadedConfig::from_str(&no_alloc, PathBuf::new()).unwrap().experiment().is_err());
        let bad_map = SAMPLE.replace("map = [1, 2]", "map = [1, 9]");
        assert!(LoadedConfig::from_str(&bad_map, PathBuf::new()).unwrap().experiment().is_err());
        let typo = SAMPLE.replace("horizon =", "horizn =");
        assert!(LoadedConfig::from_str(&typo, PathBuf::new()).is_err());
        let bad_rational = SAMPLE.replace("\"3/4\"", "\"3/0\"");
        assert!(LoadedConfig::from_str(&bad_rational, PathBuf::new()).unwrap().channel().is_err());
        let short = SAMPLE.replace("horizon = 100000", "horizon = 1000");
        assert!(LoadedConfig::from_str(&short, PathBuf::new()).unwrap().experiment().is_err());
    }

    #[test]
    fn emw_without_feedback_rejected() {
        let text = SAMPLE.replace(
            "encoder = { kind = \"index\" }\nallocator = { kind = \"memoryless\", map = [1, 2] }",
            "encoder = { kind = \"emw\", v = 0, starts = 2 }\nfeedback = false",
        );
        let err = LoadedConfig::from_str(&text, PathBuf::new()).unwrap().experiment().unwrap_err();
        assert!(err.to_string().contains("feedback"), "{err}");
    }

    #[test]
    fn grid_points_and_rays() {
        let g: GridFile = toml::from_str(
            "[[point]]\nlambda = [0.1, 0.2]\n[[ray]]\ndirection = [1.0, 0.0]\nrho = [0.5, 0.7]\n",
        )
        .unwrap();
        let pts = g.points();
        assert_eq!(pts.len(), 3);
        assert_eq!(pts[2].rates(2).unwrap(), vec![0.7, 0.0]);
    }
}
