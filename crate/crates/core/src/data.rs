//! Example streams, CSV ingestion and client partitioning.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, StreamPurpose};

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: Vec<f64>,
    pub y: f64,
}

/// The ordered examples one client sees, `(x_t, y_t)` for `t = 1..=T`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExampleStream {
    examples: Vec<Example>,
}

impl ExampleStream {
    pub fn new(examples: Vec<Example>) -> Self {
        Self { examples }
    }

    /// 0-based access: round `t` is `get(t - 1)`.
    pub fn get(&self, index: usize) -> Option<&Example> {
        self.examples.get(index)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.examples.first().map(|e| e.x.len())
    }

    /// First `len` examples.
    pub fn truncated(&self, len: usize) -> Self {
        Self::new(self.examples[..len.min(self.len())].to_vec())
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Example> {
        self.examples.iter()
    }
}

impl FromIterator<Example> for ExampleStream {
    fn from_iter<I: IntoIterator<Item = Example>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// Rows of a numeric CSV split into features and target.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub source: Option<PathBuf>,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }
}

/// Where a dataset came from, recorded in run summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub rows: usize,
    pub features: usize,
    pub rows_used: usize,
}

/// Reads a rectangular numeric CSV with a header row. Every column other than
/// `target_column` becomes a feature, in file order.
pub fn ingest_csv(path: impl AsRef<Path>, target_column: &str) -> Result<RawDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dataset = read_csv(file, target_column)?;
    dataset.source = Some(path.to_path_buf());
    log::info!(
        "read {} rows with {} features from {}",
        dataset.len(),
        dataset.dim(),
        path.display()
    );
    Ok(dataset)
}

/// [`ingest_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(reader: R, target_column: &str) -> Result<RawDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let target = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::MissingColumn {
            wanted: target_column.to_owned(),
            available: headers.clone(),
        })?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != target)
        .map(|(_, h)| h.clone())
        .collect();

    let mut features = Vec::new();
    let mut targets = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        // 1-based data rows; the header is row 0
        let row = row + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let mut x = Vec::with_capacity(feature_names.len());
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: headers[c].clone(),
                message: format!("non-numeric cell {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: headers[c].clone(),
                    message: format!("non-finite value {cell:?}"),
                });
            }
            if c == target {
                targets.push(v);
            } else {
                x.push(v);
            }
        }
        features.push(x);
    }
    Ok(RawDataset {
        features,
        targets,
        feature_names,
        target_name: target_column.to_owned(),
        source: None,
    })
}

fn column_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

/// Maps `[lo, hi]` onto `[a, b]`; a constant column maps to 0.
fn rescaler(lo: f64, hi: f64, a: f64, b: f64, name: &str) -> impl Fn(f64) -> f64 {
    let span = hi - lo;
    if span <= 0.0 {
        log::warn!("column {name} is constant; mapping it to 0");
    }
    move |v| {
        if span > 0.0 {
            (a + (v - lo) * (b - a) / span).clamp(a, b)
        } else {
            0.0
        }
    }
}

/// Global min-max scaling (features to `[-1, 1]`, targets to `[0, 1]`), a
/// seeded permutation, then a contiguous split into `m` equal streams. Rows
/// that do not fill a whole stream are dropped.
pub fn preprocess_and_partition(dataset: &RawDataset, m: usize, seed: u64) -> Result<Vec<ExampleStream>> {
    if dataset.is_empty() {
        return Err(Error::InvalidConfig("dataset is empty".into()));
    }
    if m == 0 {
        return Err(Error::InvalidConfig("need at least one client".into()));
    }
    let n = dataset.len();
    let per_client = n / m;
    if per_client == 0 {
        return Err(Error::InvalidConfig(format!("{n} rows cannot feed {m} clients")));
    }

    let d = dataset.dim();
    let feature_scalers: Vec<_> = (0..d)
        .map(|c| {
            let (lo, hi) = column_range(dataset.features.iter().map(|row| row[c]));
            rescaler(lo, hi, -1.0, 1.0, &dataset.feature_names[c])
        })
        .collect();
    let (lo, hi) = column_range(dataset.targets.iter().copied());
    let target_scaler = rescaler(lo, hi, 0.0, 1.0, &dataset.target_name);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(
        seed,
        StreamPurpose::Permutation,
        m as u64,
        n as u64,
    ));

    let dropped = n - per_client * m;
    if dropped > 0 {
        log::info!("dropping {dropped} of {n} rows so that {m} clients get {per_client} rows each");
    }
    let streams = order[..per_client * m]
        .chunks(per_client)
        .map(|chunk| {
            chunk
                .iter()
                .map(|&row| Example {
                    x: dataset.features[row]
                        .iter()
                        .zip(&feature_scalers)
                        .map(|(&v, f)| f(v))
                        .collect(),
                    y: target_scaler(dataset.targets[row]),
                })
                .collect()
        })
        .collect();
    Ok(streams)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HAND: &str = "a,b,y\n1,2,3\n4.5,-1,0\n0,0,1e-3\n";

    #[test]
    fn hand_file_parses_exactly() {
        let ds = read_csv(HAND.as_bytes(), "y").unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.feature_names, vec!["a", "b"]);
        assert_eq!(ds.features[1], vec![4.5, -1.0]);
        assert_eq!(ds.targets, vec![3.0, 0.0, 1e-3]);
    }

    #[test]
    fn target_column_may_sit_anywhere() {
        let ds = read_csv(HAND.as_bytes(), "a").unwrap();
        assert_eq!(ds.features[0], vec![2.0, 3.0]);
        assert_eq!(ds.targets[1], 4.5);
    }

    #[test]
    fn missing_target_lists_columns() {
        let err = read_csv(HAND.as_bytes(), "label").unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("label") && msg.contains('a') && msg.contains('b'),
            "{msg}"
        );
    }

    #[test]
    fn bad_cell_reports_row_and_column() {
        let err = read_csv("a,y\n1,2\nfoo,3\n".as_bytes(), "y").unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "a");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_csv("a,y\n1,2\n3\n".as_bytes(), "y").is_err());
    }

    fn dataset(rows: usize) -> RawDataset {
        RawDataset {
            features: (0..rows).map(|r| vec![r as f64, (r * r) as f64, 7.0]).collect(),
            targets: (0..rows).map(|r| 10.0 - r as f64).collect(),
            feature_names: vec!["lin".into(), "sq".into(), "const".into()],
            target_name: "y".into(),
            source: None,
        }
    }

    #[test]
    fn truncates_remainder() {
        let streams = preprocess_and_partition(&dataset(101), 10, 3).unwrap();
        assert_eq!(streams.len(), 10);
        assert!(streams.iter().all(|s| s.len() == 10));
    }

    #[test]
    fn rescales_with_global_extrema() {
        let streams = preprocess_and_partition(&dataset(50), 1, 0).unwrap();
        let rows = streams[0].examples();
        for c in 0..2 {
            let (lo, hi) = column_range(rows.iter().map(|e| e.x[c]));
            assert_eq!((lo, hi), (-1.0, 1.0));
        }
        assert!(rows.iter().all(|e| e.x[2] == 0.0));
        let (lo, hi) = column_range(rows.iter().map(|e| e.y));
        assert_eq!((lo, hi), (0.0, 1.0));
    }

    #[test]
    fn same_seed_same_partition() {
        let a = preprocess_and_partition(&dataset(40), 4, 9).unwrap();
        let b = preprocess_and_partition(&dataset(40), 4, 9).unwrap();
        let c = preprocess_and_partition(&dataset(40), 4, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn scaled_data_survives_up_to_permutation() {
        let ds = RawDataset {
            features: vec![vec![-1.0], vec![0.25], vec![1.0], vec![-0.5]],
            targets: vec![0.0, 0.5, 1.0, 0.125],
            feature_names: vec!["x".into()],
            target_name: "y".into(),
            source: None,
        };
        let streams = preprocess_and_partition(&ds, 1, 5).unwrap();
        let mut got: Vec<(f64, f64)> = streams[0].iter().map(|e| (e.x[0], e.y)).collect();
        got.sort_by(|a, b| a.0.total_cmp(&b.0));
        let want = [(-1.0, 0.0), (-0.5, 0.125), (0.25, 0.5), (1.0, 1.0)];
        for (g, w) in got.iter().zip(want) {
            assert!((g.0 - w.0).abs() < 1e-15 && (g.1 - w.1).abs() < 1e-15);
        }
    }

    #[test]
    fn too_few_rows_rejected() {
        assert!(preprocess_and_partition(&dataset(3), 4, 0).is_err());
    }
}
