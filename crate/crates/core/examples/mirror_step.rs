//! One weighted-entropy mirror step, then a long run of them in log space.

use fedoms::mirror::LogSimplex;
use fedoms::prelude::*;

fn main() -> fedoms::Result<()> {
    // three arms; the second has a looser loss bound, so it moves more slowly
    let geometry = WeightedEntropyGeometry::new(vec![1.0, 4.0, 1.0], 0.5)?;
    let p = SimplexPoint::new(vec![0.5, 0.3, 0.2])?;
    let losses = [0.2, 0.9, 0.6];

    let step = entropy_mirror_step(&geometry, &p, &losses)?;
    println!("p      = {:?}", p.as_slice());
    println!("losses = {losses:?}");
    println!(
        "p'     = {:?}  (λ* = {:.6}, {} bisection steps)",
        step.point.as_slice(),
        step.multiplier,
        step.iterations
    );

    // repeated steps concentrate on the lowest loss without underflowing
    let mut state = LogSimplex::from_point(&p);
    for _ in 0..100_000 {
        state.step(&geometry, &losses)?;
    }
    println!("after 1e5 steps, log p = {:?}", state.log_probs());
    Ok(())
}
