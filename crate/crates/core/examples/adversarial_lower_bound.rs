//! The biased-arm construction: with J = 2 of K arms observed per round,
//! pooling observations across clients finds the good arm sooner.

use fedoms::generators::AdversarialInstance;
use fedoms::prelude::*;

fn main() -> fedoms::Result<()> {
    let (k, m, horizon) = (16, 10, 4000);
    println!("seed  arm   rho     loss fed   loss nco   p_fed[arm]  mean p_nco[arm]");
    for seed in 0..6 {
        let spec = AdversarialSpec {
            kind: AdversarialKind::BiasedArm {
                rho: None,
                hidden_arm: None,
            },
            num_spaces: k,
            input_dim: k,
            horizon,
            clients: m,
            subset_size: 2,
            seed,
        };
        let AdversarialInstance {
            streams,
            spaces,
            loss,
            hidden_arm,
            rho,
        } = spec.generate()?;
        let arm = hidden_arm.expect("biased arm is always drawn");
        let config = LearnerConfig::new(
            LearnerMode::Federated { epochs: horizon },
            spaces,
            loss,
            2,
            horizon,
            seed,
        );
        let fed = run_fomd_oms(&config, &streams)?;
        let nco = run_nco_oms(&config, &streams)?;
        let nco_p = nco.final_probabilities.iter().map(|p| p[arm]).sum::<f64>() / m as f64;
        println!(
            "{seed:>4} {arm:>4} {:>6.4} {:>10.1} {:>10.1} {:>11.4} {:>16.4}",
            rho.unwrap_or_default(),
            fed.cumulative_loss(),
            nco.cumulative_loss(),
            fed.final_probabilities[0][arm],
            nco_p
        );
    }
    Ok(())
}
