//! Paired comparison on a planted linear stream at J = 2 and J = K.

use fedoms::prelude::*;

fn main() -> fedoms::Result<()> {
    let (d, m, horizon) = (10, 10, 2000);
    let radii: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let spaces = nested_linear_spaces(d, 1.0, &radii, LossFunction::Square)?;

    println!("| J | seed | MSE federated | MSE noncooperative | delta |");
    println!("|---|---|---|---|---|");
    for j in [2, 10] {
        let mut deltas = Vec::new();
        for seed in 0..5 {
            let streams = LinearStreamSpec::new(d, m, horizon, seed).generate()?;
            let config = LearnerConfig::new(
                LearnerMode::Federated { epochs: horizon },
                spaces.clone(),
                LossFunction::Square,
                j,
                horizon,
                seed,
            );
            let fed = mse(&run_fomd_oms(&config, &streams)?.traces);
            let nco = mse(&run_nco_oms(&config, &streams)?.traces);
            println!("| {j} | {seed} | {fed:.6} | {nco:.6} | {:+.2e} |", nco - fed);
            deltas.push(nco - fed);
        }
        let (mean, sd) = fedoms::metrics::mean_std(&deltas);
        println!("| {j} | mean | | | {mean:+.2e} ± {sd:.1e} |");
    }
    Ok(())
}
