//! Learning the arrival rates through the channel and serving from a
//! learned mixture, with zero receiver memory beyond counters.
use spii::network::ScheduleSet;
use spii::policies::{egl_learning_length, probe_triple, EglConfig};
use spii::sim::{run_and_classify, Allocator, Encoder, ExperimentConfig, PolicyPair};
use spii::Channel;

fn main() -> spii::Result<()> {
    let pi = ScheduleSet::single_server(2);
    let c = Channel::symmetric(2, 0.3)?;
    let (_, _, _, q1, q2) = probe_triple(&c)?;
    let b1 = egl_learning_length(q1, q2, 2, 0.05, 0.05, 2000, 1);
    let cfg = EglConfig::new(&c, 2, 4 * b1, b1, 0.05)?;
    println!("probe pair x1={} x2={} y={} (q1 {:.2}, q2 {:.2}); B1 = {b1}, B = {}",
        cfg.x1, cfg.x2, cfg.y1, cfg.q1, cfg.q2, cfg.episode_len);
    let pair = PolicyPair::new(Encoder::Egl(cfg.clone()), Allocator::Egl(cfg), true);
    for lam in [[0.3, 0.4], [0.2, 0.6], [0.5, 0.52]] {
        let mut exp = ExperimentConfig::new(pi.clone(), c.clone(), lam.to_vec(), pair.clone())?;
        exp.horizon = 400_000;
        exp.window = 20_000;
        let (_, v) = run_and_classify(&exp)?;
        println!("lambda {lam:?}: {}", v.label);
    }
    Ok(())
}
