//! A reproducible sweep along a ray, written as CSV.
use spii::network::ScheduleSet;
use spii::sim::{emit_results, index_direct_pair, sweep, ExperimentConfig, Format, GridPoint};
use spii::Channel;

fn main() -> spii::Result<()> {
    let pi = ScheduleSet::single_server(2);
    let c = Channel::symmetric(2, 0.5)?;
    let mut base = ExperimentConfig::new(pi.clone(), c, vec![0.0, 0.0], index_direct_pair(&pi)?)?;
    base.horizon = 100_000;
    base.seed = 11;
    let grid: Vec<GridPoint> = (0..10)
        .map(|i| GridPoint {
            direction: Some(vec![0.5, 0.5]),
            rho: Some(0.7 + 0.05 * i as f64),
            ..Default::default()
        })
        .collect();
    let rows = sweep(&base, &grid, 0)?;
    for r in &rows {
        let label = r.verdict.as_ref().map(|v| v.label.to_string()).unwrap_or_default();
        println!("rho {:.2}: {label}", r.rho.unwrap_or(f64::NAN));
    }
    let out = std::env::temp_dir().join("spii_sweep.csv");
    emit_results(&rows, &out, Format::Csv)?;
    println!("wrote {}", out.display());
    Ok(())
}
