//! Fewer, longer epochs: communication drops by T/R, prediction error rises.

use fedoms::prelude::*;

fn main() -> fedoms::Result<()> {
    let (d, m, horizon) = (10, 10, 2000);
    let radii: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let spaces = nested_linear_spaces(d, 1.0, &radii, LossFunction::Square)?;
    let streams = LinearStreamSpec::new(d, m, horizon, 11).generate()?;

    println!(
        "{:>6} {:>6} {:>10} {:>14} {:>14}",
        "R", "N", "MSE", "uplink bits", "downlink bits"
    );
    for epochs in [2000, 1000, 400, 200, 100, 40, 20] {
        let config = LearnerConfig::new(
            LearnerMode::Federated { epochs },
            spaces.clone(),
            LossFunction::Square,
            2,
            horizon,
            11,
        );
        let run = run_fomd_oms(&config, &streams)?;
        println!(
            "{epochs:>6} {:>6} {:>10.6} {:>14} {:>14}",
            horizon / epochs,
            mse(&run.traces),
            run.bits.uplink_bits,
            run.bits.downlink_bits
        );
    }
    Ok(())
}
