//! Splitting a channel into an input-independent part and a residual.
use spii::Channel;

fn main() -> spii::Result<()> {
    let c = Channel::new(vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.6, 0.3], vec![0.2, 0.2, 0.6]])?;
    println!("column minima {:?}", c.column_minima());
    let dec = c.max_eps_decompose()?;
    println!("eps* = {:.4}", dec.epsilon);
    println!("C0 row {:?}", dec.c0_row);
    for (x, row) in dec.c1.iter().enumerate() {
        println!("C1[{x}] {row:?}");
    }
    let aug = c.augment(&dec)?;
    println!("augmented channel has {} outputs", aug.outputs());

    let exact = Channel::symmetric(3, 0.5)?;
    println!("symmetric(3, 0.5): eps* = {:.4}, informative = {}",
        exact.max_eps_decompose()?.epsilon, exact.is_informative());
    let flat = Channel::uninformative(vec![0.25, 0.75], 4)?;
    println!("uninformative: column minima sum to {:.4}, informative = {}",
        flat.column_minima().iter().sum::<f64>(), flat.is_informative());
    Ok(())
}
