//! Schedule sets: validation, maximal extreme points and boundary geometry.
use spii::ScheduleSet;

fn main() -> spii::Result<()> {
    let pi = ScheduleSet::monotone_closure(&[vec![2, 0, 1], vec![1, 1, 1], vec![0, 2, 0], vec![0, 1, 2]])?;
    println!("{} schedules over {} queues", pi.len(), pi.queues());
    let report = pi.validate();
    println!("valid: {}", report.is_valid());

    let ext = pi.maximal_extreme_points()?;
    println!("maximal extreme points:");
    for d in &ext {
        println!("  {:?}", pi.get(*d));
    }

    let x = [0.5, 0.5, 0.5];
    println!("boundary scale of {x:?}: {:.4}", pi.boundary_scale(&x)?);
    println!("projection onto boundary: {:?}", pi.proj_boundary(&x)?);
    let w = pi.decompose(&pi.proj_boundary(&x)?)?;
    println!("mixing weights: {:?}", w.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>());
    for s in [1.9, 2.1] {
        let y: Vec<f64> = x.iter().map(|v| v * s).collect();
        println!("{y:?} in region: {}", pi.region_membership(&y, 1.0)?);
    }

    // a set that is not downward closed
    let bad = ScheduleSet::new(vec![vec![0, 0], vec![1, 1]])?;
    for v in bad.validate().violations {
        println!("violation: {v}");
    }
    Ok(())
}
