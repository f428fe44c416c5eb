//! Random Fourier features against the exact Gaussian kernel.

use fedoms::hypotheses::{gaussian_kernel, RandomFourierFeatures};
use fedoms::prelude::*;
use rand::{Rng, SeedableRng};

fn main() -> fedoms::Result<()> {
    let d = 5;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..500)
        .map(|_| {
            let mut draw = || (0..d).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
            (draw(), draw())
        })
        .collect();

    println!("{:>6} {:>6} {:>12}", "D", "sigma", "mean |err|");
    for features in [25, 100, 400, 1600] {
        for sigma in kernel_width_grid(8).into_iter().step_by(2) {
            let map = FeatureMap::GaussianRff(RandomFourierFeatures::new(d, features, sigma, 7)?);
            let mut err = 0.0;
            for (x, v) in &pairs {
                let (a, b) = (map.featurize(x)?, map.featurize(v)?);
                let approx: f64 = a.iter().zip(&b).map(|(p, q)| p * q).sum();
                err += (approx - gaussian_kernel(x, v, sigma)).abs();
            }
            println!("{features:>6} {sigma:>6} {:>12.4}", err / pairs.len() as f64);
        }
    }
    Ok(())
}
