use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use spii::capacity::{
    closed_form_parallel, optimize_v0, optimize_vl, simulate_capfactor, upper_bound_epsmaj, BisectionOptions,
    CapFactorResult, Diagnostics, Method, SolverOptions, Witness,
};
use spii::config::{GridFile, LoadedConfig};
use spii::sim::{emit_results, run_and_classify, sweep, Format};

#[derive(Parser)]
#[command(name = "spii", version, about = "Noisy-observation queueing networks: simulation and capacity factors")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum CapMethod {
    Closed,
    Bound,
    Opt0,
    Optv,
    Sim,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one trajectory and print its verdict.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        horizon: Option<u64>,
        /// Also write the sampled queue path as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run every point of a grid file in parallel.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "SPII_WORKERS")]
        workers: Option<usize>,
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutFormat,
    },
    /// Compute a capacity factor.
    Capfactor {
        config: PathBuf,
        #[arg(long, value_enum)]
        method: CapMethod,
        /// Receiver memory bits for `optv`.
        #[arg(long)]
        v: Option<u32>,
        /// ε for `closed` and `bound` (defaults to the channel's maximal ε).
        #[arg(long)]
        epsilon: Option<f64>,
        /// Bisection tolerance for `sim`.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inspect the configured policy.
    Policy {
        #[command(subcommand)]
        cmd: PolicyCmd,
    },
    /// Check a config: schedule set, channel, policy dimensions.
    Validate { config: PathBuf },
}

#[derive(Subcommand)]
enum PolicyCmd {
    Describe {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(path: &Path, seed: Option<u64>) -> spii::Result<LoadedConfig> {
    let mut cfg = LoadedConfig::from_path(path)?;
    if let Some(s) = seed {
        cfg.file.run.seed = s;
    }
    Ok(cfg)
}

fn print_json(v: &serde_json::Value, out: Option<&Path>) -> spii::Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| spii::Error::Config(e.to_string()))?;
    match out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
                _ => {}
            }
        }
    }
    Ok(())
}

fn capfactor(cfg: &LoadedConfig, method: CapMethod, v: Option<u32>, eps: Option<f64>, tol: Option<f64>) -> spii::Result<CapFactorResult> {
    let pi = cfg.schedules()?;
    let c = cfg.channel()?;
    let spec = &cfg.file.capfactor;
    let seed = cfg.file.run.seed;
    let solver = SolverOptions {
        seed,
        ..spec.solver.unwrap_or_default()
    };
    let eps = || -> spii::Result<f64> {
        match eps.or(spec.epsilon) {
            Some(e) => Ok(e),
            None => Ok(c.max_eps_decompose()?.epsilon),
        }
    };
    match method {
        CapMethod::Closed => {
            let rho = closed_form_parallel(pi.queues(), eps()?)?;
            Ok(CapFactorResult {
                rho,
                method: Method::ClosedForm,
                directions: pi.maximal_extreme_points()?,
                witness: Witness::None,
                diagnostics: Diagnostics::default(),
            })
        }
        CapMethod::Bound => upper_bound_epsmaj(&pi, eps()?),
        CapMethod::Opt0 => optimize_v0(&pi, &c, &solver),
        CapMethod::Optv => optimize_vl(&pi, &c, v.or(spec.v).unwrap_or(1), &solver),
        CapMethod::Sim => {
            let pair = cfg.policy(&pi, &c)?;
            let r = &cfg.file.run;
            let mut opts = spec.bisection.unwrap_or(BisectionOptions {
                horizon: r.horizon,
                window: r.window,
                threshold: r.threshold,
                ..BisectionOptions::default()
            });
            opts.seed = seed;
            if let Some(t) = tol {
                opts.tol = t;
            }
            simulate_capfactor(&pair, &pi, &c, &opts)
        }
    }
}

fn run(cli: Cli) -> spii::Result<bool> {
    match cli.cmd {
        Cmd::Simulate {
            config,
            seed,
            horizon,
            trace,
        } => {
            let mut exp = load(&config, seed)?.experiment()?;
            if let Some(h) = horizon {
                exp.horizon = h;
                exp.validate()?;
            }
            let (rec, v) = run_and_classify(&exp)?;
            if let Some(p) = trace {
                let samples: Vec<_> = rec.samples.iter().map(|s| json!({"slot": s.slot, "queues": s.queues})).collect();
                print_json(&json!(samples), Some(&p))?;
            }
            print_json(
                &json!({
                    "policy": exp.policy.name(),
                    "k": exp.policy.encoder_bits(),
                    "v": exp.policy.receiver_bits(),
                    "lambda": exp.arrivals.rates(),
                    "seed": exp.seed,
                    "slots": rec.slots,
                    "verdict": v,
                    "arrivals": rec.arrivals,
                    "departures": rec.departures,
                    "final_queues": rec.final_state.queues.0,
                    "offered_rate": spii::sim::empirical_offered_rate(&rec),
                }),
                None,
            )?;
            Ok(true)
        }
        Cmd::Sweep {
            config,
            grid,
            seed,
            workers,
            out,
            format,
        } => {
            let base = load(&config, seed)?.experiment()?;
            let points = GridFile::from_path(&grid)?.points();
            let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
            let rows = sweep(&base, &points, workers)?;
            let fmt = match format {
                OutFormat::Csv => Format::Csv,
                OutFormat::Json => Format::Json,
            };
            emit_results(&rows, &out, fmt)?;
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            eprintln!("{} points written to {} ({failed} failed)", rows.len(), out.display());
            Ok(failed == 0)
        }
        Cmd::Capfactor {
            config,
            method,
            v,
            epsilon,
            tol,
            seed,
            out,
        } => {
            let cfg = load(&config, seed)?;
            let res = capfactor(&cfg, method, v, epsilon, tol)?;
            print_json(&serde_json::to_value(&res).map_err(|e| spii::Error::Config(e.to_string()))?, out.as_deref())?;
            Ok(true)
        }
        Cmd::Policy {
            cmd: PolicyCmd::Describe { config, seed },
        } => {
            let cfg = load(&config, seed)?;
            let pi = cfg.schedules()?;
            let c = cfg.channel()?;
            let pair = cfg.policy(&pi, &c)?;
            print_json(
                &json!({
                    "name": pair.name(),
                    "encoder_bits": pair.encoder_bits(),
                    "receiver_bits": pair.receiver_bits(),
                    "feedback": pair.feedback,
                    "receiver_lag": pair.receiver_lag,
                    "policy": pair,
                }),
                None,
            )?;
            Ok(true)
        }
        Cmd::Validate { config } => {
            let cfg = LoadedConfig::from_path(&config)?;
            let mut ok = true;
            let pi = cfg.schedules()?;
            let report = pi.validate();
            for v in &report.violations {
                println!("schedules: {v}");
                ok = false;
            }
            if let Some(cl) = &report.closure {
                println!("schedules: monotone closure has {} members", cl.len());
            }
            let c = cfg.channel()?;
            match c.max_eps_decompose() {
                Ok(d) => println!("channel: {}x{}, maximal epsilon {:.6}", c.inputs(), c.outputs(), d.epsilon),
                Err(e) => println!("channel: {}x{}, {e}", c.inputs(), c.outputs()),
            }
            if cfg.file.policy.is_some() {
                match cfg.experiment() {
                    Ok(e) => println!(
                        "policy: {} (k = {:.3} bits, v = {:.3} bits)",
                        e.policy.name(),
                        e.policy.encoder_bits(),
                        e.policy.receiver_bits()
                    ),
                    Err(e) => {
                        println!("policy: {e}");
                        ok = false;
                    }
                }
            }
            println!("{}", if ok { "valid" } else { "invalid" });
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
