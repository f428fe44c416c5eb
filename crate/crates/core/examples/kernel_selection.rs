//! Choosing a Gaussian kernel width online from eight random-feature spaces.

use fedoms::prelude::*;

fn main() -> fedoms::Result<()> {
    let (d, m, horizon, seed) = (5, 10, 4000, 4);
    let widths = kernel_width_grid(8);
    let spaces = gaussian_kernel_spaces(d, 100, &widths, 1.0, LossFunction::Square, seed)?;
    let streams = LinearStreamSpec::new(d, m, horizon, seed).generate()?;
    let mut config = LearnerConfig::new(
        LearnerMode::Federated { epochs: horizon },
        spaces,
        LossFunction::Square,
        2,
        horizon,
        seed,
    );
    config.initial = InitialDistribution::Uniform;

    let run = run_fomd_oms(&config, &streams)?;
    println!(
        "MSE {:.5}, {} uplink / {} downlink bits",
        mse(&run.traces),
        run.bits.uplink_bits,
        run.bits.downlink_bits
    );
    // the schedules are conservative: p moves slowly, but it moves towards
    // the widths whose lead rounds cost less
    println!(
        "{:>7} {:>8} {:>10} {:>10}",
        "sigma", "p_T", "lead share", "lead loss"
    );
    for (i, sigma) in widths.iter().enumerate() {
        let rows: Vec<_> = run.traces.iter().filter(|t| t.lead_index == i).collect();
        let loss = rows.iter().map(|t| t.loss).sum::<f64>() / rows.len().max(1) as f64;
        println!(
            "{sigma:>7} {:>8.4} {:>10.4} {loss:>10.5}",
            run.final_probabilities[0][i],
            rows.len() as f64 / run.traces.len() as f64
        );
    }
    Ok(())
}
