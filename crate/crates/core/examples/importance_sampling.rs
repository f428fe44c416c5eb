//! Subset sampling and the importance-weighted loss estimate it supports.

use fedoms::prelude::*;
use fedoms::selection::inclusion_probability;
use rand::SeedableRng;

fn main() -> fedoms::Result<()> {
    let p = [0.55, 0.2, 0.1, 0.1, 0.05];
    let losses = [0.3, 0.8, 0.5, 0.9, 0.1];
    let (k, j) = (p.len(), 2);
    let draws = 200_000;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let mut hits = vec![0usize; k];
    let mut estimate = vec![0.0; k];
    for _ in 0..draws {
        let outcome = sample_subset(&p, j, &mut rng)?;
        let raw: Vec<f64> = outcome.indices().iter().map(|&i| losses[i]).collect();
        for (e, v) in estimate.iter_mut().zip(estimate_losses(&raw, &outcome)?.values) {
            *e += v;
        }
        for &i in outcome.indices() {
            hits[i] += 1;
        }
    }

    println!(
        "{:>3} {:>6} {:>10} {:>10} {:>8} {:>10}",
        "i", "p_i", "P[i in O]", "observed", "loss", "estimate"
    );
    for i in 0..k {
        println!(
            "{i:>3} {:>6.2} {:>10.4} {:>10.4} {:>8.2} {:>10.4}",
            p[i],
            inclusion_probability(k, j, p[i]),
            hits[i] as f64 / draws as f64,
            losses[i],
            estimate[i] / draws as f64
        );
    }
    Ok(())
}
