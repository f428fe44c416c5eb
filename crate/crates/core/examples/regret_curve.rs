//! Regret against the best fixed predictor of the largest space, by horizon.

use fedoms::prelude::*;

fn main() -> fedoms::Result<()> {
    let radii: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let spaces = nested_linear_spaces(5, 1.0, &radii, LossFunction::Square)?;
    let largest = spaces.last().expect("ten spaces").clone();

    println!(
        "{:>6} {:>10} {:>12} {:>10}",
        "T", "regret", "regret/sqrtT", "regret/T"
    );
    for horizon in [250, 500, 1000, 2000, 4000, 8000] {
        let mut total = 0.0;
        let seeds = 5;
        for seed in 0..seeds {
            let mut spec = LinearStreamSpec::new(5, 4, horizon, seed);
            spec.target_norm = 0.08;
            let streams = spec.generate()?;
            let config = LearnerConfig::new(
                LearnerMode::Federated { epochs: horizon },
                spaces.clone(),
                LossFunction::Square,
                2,
                horizon,
                seed,
            );
            let run = run_fomd_oms(&config, &streams)?;
            let fit = offline_comparator(&largest, LossFunction::Square, &streams, horizon, 3000)?;
            total += regret_accounting(
                &run.traces,
                &streams,
                &largest,
                LossFunction::Square,
                &fit.weights,
            )?;
        }
        let r = total / seeds as f64;
        let t = horizon as f64;
        println!("{horizon:>6} {r:>10.2} {:>12.4} {:>10.5}", r / t.sqrt(), r / t);
    }
    Ok(())
}
