//! Tabular data end to end: ingest, rescale, partition, compare learners.
//!
//! Usage: `cargo run --release --example csv_pipeline -- data.csv TARGET`.
//! Without arguments a small synthetic file is written to a temp directory.

use fedoms::config::{run_ab, ExperimentConfig};
use fedoms::data::ingest_csv;
use rand::{Rng, SeedableRng};

fn synthetic(path: &std::path::Path) -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["temp", "load", "hour", "noise", "demand"])?;
    for _ in 0..4000 {
        let (temp, load, hour): (f64, f64, f64) = (
            rng.random_range(-10.0..35.0),
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..24.0),
        );
        let demand = 2.0 * load
            + 0.03 * temp
            + (hour / 24.0 * std::f64::consts::TAU).sin()
            + rng.random_range(-0.3..0.3);
        w.write_record([temp, load, hour, rng.random_range(0.0..1.0), demand].map(|v| format!("{v:.4}")))?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dir = std::env::temp_dir().join("fedoms-csv-example");
    std::fs::create_dir_all(&dir)?;
    let (path, target) = match args.as_slice() {
        [path, target] => (std::path::PathBuf::from(path), target.clone()),
        _ => {
            let path = dir.join("demand.csv");
            synthetic(&path)?;
            (path, "demand".to_string())
        }
    };

    let raw = ingest_csv(&path, &target)?;
    println!("{}: {} rows, {} features", path.display(), raw.len(), raw.dim());

    let config = ExperimentConfig::from_json(
        &serde_json::json!({
            "dataset": {"source": "csv", "path": path, "target_column": target},
            "spaces": {"kind": "nested_linear", "radii": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]},
            "clients": 10,
            "subset_size": 2,
            "loss": "square",
            "seeds": [0, 1, 2, 3, 4],
            "output_dir": dir.join("out"),
        })
        .to_string(),
    )?;
    let report = run_ab(&config)?;
    print!("{}", report.table());
    println!(
        "federated lower on {}/{} seeds",
        report.federated_wins,
        report.rows.len()
    );
    Ok(())
}
