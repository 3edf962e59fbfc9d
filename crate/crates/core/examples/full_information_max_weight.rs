//! Max-weight with a noiseless channel at a few loads.
use spii::network::ScheduleSet;
use spii::sim::{full_information_pair, run_and_classify, ExperimentConfig};

fn main() -> spii::Result<()> {
    let pi = ScheduleSet::monotone_closure(&[vec![1, 1, 0], vec![0, 1, 1], vec![1, 0, 1]])?;
    let (c, pair) = full_information_pair(&pi);
    for load in [0.5, 0.62, 0.7, 0.8] {
        let mut cfg = ExperimentConfig::new(pi.clone(), c.clone(), vec![load; 3], pair.clone())?;
        cfg.horizon = 100_000;
        cfg.window = 5_000;
        let (rec, verdict) = run_and_classify(&cfg)?;
        println!(
            "load {load:.2}: {:<12} slope {:+.5}  final queues {:?}",
            verdict.label.to_string(),
            verdict.median_slope,
            rec.final_state.queues.0
        );
    }
    Ok(())
}
