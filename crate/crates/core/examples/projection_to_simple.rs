//! Fit a simple encoder to the signal trace of a queue-aware encoder and
//! compare stationary service rates with what was simulated.
use spii::markov::{project_to_simple, service_rate_reduced, ProjectionOptions};
use spii::network::ScheduleSet;
use spii::policies::FiniteMemoryAllocation;
use spii::sim::{empirical_offered_rate, index_direct_pair, run_trajectory, Allocator, ExperimentConfig};
use spii::Channel;

fn main() -> spii::Result<()> {
    let pi = ScheduleSet::single_server(2);
    let c = Channel::symmetric(2, 0.25)?;
    let pair = index_direct_pair(&pi)?;
    let mut cfg = ExperimentConfig::new(pi.clone(), c.clone(), vec![0.35, 0.35], pair.clone())?;
    cfg.record_signals = true;
    cfg.horizon = 100_000;
    let rec = run_trajectory(&cfg)?;
    let trace = rec.signals.as_deref().unwrap_or_default();

    let pol = match &pair.allocator {
        Allocator::Memoryless(m) => FiniteMemoryAllocation::from_memoryless(m),
        Allocator::FiniteMemory(f) => f.clone(),
        Allocator::Egl(_) => unreachable!(),
    };
    let proj = project_to_simple(trace, c.inputs(), pol.memory_states(), ProjectionOptions::default())?;
    println!("fitted G^E rows:");
    for row in proj.encoder.g_e().rows() {
        println!("  {row:.4?}");
    }
    println!("unvisited cells {:?}", proj.unvisited);
    println!("offered rate (simulated) {:.4?}", empirical_offered_rate(&rec));
    println!("offered rate (projected) {:.4?}", service_rate_reduced(&proj.encoder, &pol, &c, &pi)?);
    Ok(())
}
