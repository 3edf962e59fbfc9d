//! Lower and upper capacity-factor estimates for a noisy binary channel.
use spii::capacity::{closed_form_parallel, optimize_v0, optimize_vl, upper_bound_epsmaj, SolverOptions};
use spii::{Channel, ScheduleSet};

fn main() -> spii::Result<()> {
    let eps: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let pi = ScheduleSet::single_server(2);
    let c = Channel::symmetric(2, eps)?;
    let opts = SolverOptions::default();
    let eps_star = c.max_eps_decompose()?.epsilon;
    println!("channel {:?}, eps* = {eps_star:.4}", c.matrix());
    println!("closed form      {:.6}", closed_form_parallel(2, eps_star)?);
    println!("upper bound      {:.6}", upper_bound_epsmaj(&pi, eps_star)?.rho);
    println!("memoryless (v=0) {:.6}", optimize_v0(&pi, &c, &opts)?.rho);
    for v in 1..=2 {
        let r = optimize_vl(&pi, &c, v, &opts)?;
        println!(
            "v={v}              {:.6}  ({} starts, {} evaluations)",
            r.rho, r.diagnostics.starts, r.diagnostics.evaluations
        );
    }
    Ok(())
}
