//! Two parallel queues scheduled through a binary symmetric channel with a
//! memoryless index policy.
use spii::network::ScheduleSet;
use spii::sim::{index_direct_pair, run_and_classify, ExperimentConfig};
use spii::Channel;

fn main() -> spii::Result<()> {
    let eps: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let pi = ScheduleSet::single_server(2);
    let c = Channel::symmetric(2, eps)?;
    let pair = index_direct_pair(&pi)?;
    println!("policy {}", pair.name());
    for load in [0.3, 0.4, 0.47, 0.53] {
        let mut cfg = ExperimentConfig::new(pi.clone(), c.clone(), vec![load, load], pair.clone())?;
        cfg.seed = 7;
        let (rec, v) = run_and_classify(&cfg)?;
        let served: Vec<f64> = rec.departures.iter().map(|d| *d as f64 / rec.slots as f64).collect();
        println!("lambda ({load}, {load}): {:<12} served {served:.3?}", v.label.to_string());
    }
    Ok(())
}
