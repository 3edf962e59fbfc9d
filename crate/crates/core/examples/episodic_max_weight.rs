//! Build an episodic max-weight policy from an optimized witness, then
//! check stability below and above the certified load.
use spii::capacity::{build_emw, SolverOptions};
use spii::network::ScheduleSet;
use spii::sim::{run_and_classify, ExperimentConfig};
use spii::Channel;

fn main() -> spii::Result<()> {
    let pi = ScheduleSet::single_server(2);
    let c = Channel::new(vec![vec![0.8, 0.15, 0.05], vec![0.1, 0.2, 0.7]])?;
    let emw = build_emw(&pi, &c, 0, 0.05, 200.0, &SolverOptions::default())?;
    println!("witness rho {:.4}, lazy delta {:.4}, bank of {}", emw.rho, emw.delta, emw.bank.members().len());
    for m in emw.bank.members() {
        println!("  member rate {:.4?}", m.rate);
    }
    let pair = emw.policy_pair();
    // along the first axis, where the witness is tight
    for frac in [0.8, 1.15] {
        let load = frac * emw.rho;
        let mut cfg = ExperimentConfig::new(pi.clone(), c.clone(), vec![load, 0.0], pair.clone())?;
        cfg.horizon = 500_000;
        cfg.window = 10_000;
        let (_, v) = run_and_classify(&cfg)?;
        println!("{frac:.2} x rho: {} (slope {:+.5})", v.label, v.median_slope);
    }
    Ok(())
}
