//! Service rates of a finite-memory policy pair from the joint Markov chain.
use spii::markov::{build_joint_chain, closed_classes, residual, service_rate, service_rate_reduced, stationary};
use spii::network::ScheduleSet;
use spii::policies::{FiniteMemoryAllocation, SimpleEncoder};
use spii::stoch::RowStochastic;
use spii::Channel;

fn main() -> spii::Result<()> {
    let pi = ScheduleSet::single_server(2);
    let c = Channel::symmetric(2, 0.3)?;
    let unit = |q: usize| pi.index_of(&[(q == 0) as u32, (q == 1) as u32]).unwrap();
    // one bit of receiver memory holding the last symbol; on disagreement
    // serve either queue with equal probability
    let g_a = RowStochastic::point_mass(4, 2, |r| r % 2);
    let h_a = RowStochastic::new(
        (0..4)
            .map(|r| {
                let (m, y) = (r / 2, r % 2);
                let mut row = vec![0.0; pi.len()];
                if m == y {
                    row[unit(y)] = 1.0;
                } else {
                    row[unit(0)] = 0.5;
                    row[unit(1)] = 0.5;
                }
                row
            })
            .collect(),
    )?;
    let pol = FiniteMemoryAllocation::new(1, 2, g_a, h_a)?;
    // alternate symbols, with a little randomness
    let g_e = RowStochastic::new(
        (0..4).map(|r| if r % 2 == 0 { vec![0.1, 0.9] } else { vec![0.9, 0.1] }).collect(),
    )?;
    let enc = SimpleEncoder::new(g_e, 2, 2)?;

    let chain = build_joint_chain(&enc, &pol, &c)?;
    let law = stationary(&chain.transition)?;
    println!("joint chain: {} states, {} closed class(es), residual {:.1e}",
        chain.len(), closed_classes(&chain.transition).len(), residual(&chain.transition, &law));
    println!("schedule marginal {:.4?}", chain.schedule_marginal(&law));
    println!("mu (full chain)    {:.6?}", service_rate(&enc, &pol, &c, &pi)?);
    println!("mu (reduced chain) {:.6?}", service_rate_reduced(&enc, &pol, &c, &pi)?);
    Ok(())
}
