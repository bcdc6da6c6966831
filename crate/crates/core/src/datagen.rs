//! Synthetic regression data and horizontal sharding across workers.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::util::{rng_from_seed, write_atomic};
use crate::{Error, Result};

/// Feature matrix (row-major, `m x d`), labels and, for synthetic data, the
/// generating weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<f64>,
    rows: usize,
    cols: usize,
    true_weights: Option<Vec<f64>>,
    seed: Option<u64>,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<f64>, cols: usize) -> Result<Self> {
        if cols == 0 {
            return Err(Error::InvalidArgument("dataset needs at least one column".into()));
        }
        if labels.is_empty() {
            return Err(Error::InvalidArgument("dataset needs at least one row".into()));
        }
        let rows = labels.len();
        if features.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: features.len(),
            });
        }
        Ok(Self {
            features,
            labels,
            rows,
            cols,
            true_weights: None,
            seed: None,
        })
    }

    pub fn with_true_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                actual: weights.len(),
            });
        }
        self.true_weights = Some(weights);
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Number of rows `m`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of features `d`.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.cols..(i + 1) * self.cols]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn true_weights(&self) -> Option<&[f64]> {
        self.true_weights.as_deref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Writes the dataset as CSV with header `x1,...,xd,y`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = (1..=self.cols).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for i in 0..self.rows {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.labels[i].to_string());
            w.write_record(&rec)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        write_atomic(path, &bytes)
    }

    /// Reads a dataset written by [`Dataset::write_csv`]. The last column is
    /// the label.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        if header.len() < 2 || &header[header.len() - 1] != "y" {
            return Err(Error::Parse {
                path: path.into(),
                message: "expected header x1,...,xd,y".into(),
            });
        }
        let cols = header.len() - 1;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                    path: path.into(),
                    message: format!("row {}: bad number {field:?}", line + 2),
                })?;
                if j == cols {
                    labels.push(v);
                } else {
                    features.push(v);
                }
            }
        }
        Dataset::new(features, labels, cols)
    }

    /// Writes the `{seed, true_weights}` sidecar next to a CSV export.
    pub fn write_sidecar(&self, path: &Path) -> Result<()> {
        let meta = DatasetMeta {
            seed: self.seed,
            true_weights: self.true_weights.clone(),
        };
        write_atomic(path, serde_json::to_string_pretty(&meta)?.as_bytes())
    }

    pub fn apply_sidecar(self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let meta: DatasetMeta = serde_json::from_str(&text)?;
        let mut ds = match meta.true_weights {
            Some(w) => self.with_true_weights(w)?,
            None => self,
        };
        ds.seed = meta.seed;
        Ok(ds)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetMeta {
    seed: Option<u64>,
    true_weights: Option<Vec<f64>>,
}

/// Draws `m` rows uniformly from `{1..10}^d`, a weight vector uniformly from
/// `{1..100}^d`, and labels `y ~ N(<x, w>, 1)`.
pub fn generate_synthetic(m: usize, d: usize, seed: u64) -> Result<Dataset> {
    if m == 0 || d == 0 {
        return Err(Error::InvalidArgument(format!(
            "synthetic dataset needs m >= 1 and d >= 1 (got m={m}, d={d})"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let features: Vec<f64> = (0..m * d)
        .map(|_| rng.random_range(1..=10u32) as f64)
        .collect();
    let weights: Vec<f64> = (0..d).map(|_| rng.random_range(1..=100u32) as f64).collect();
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let labels = features
        .chunks_exact(d)
        .map(|x| dot(x, &weights) + noise.sample(&mut rng))
        .collect();
    Ok(Dataset::new(features, labels, d)?
        .with_true_weights(weights)?
        .with_seed(seed))
}

/// The rows held by one worker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shard {
    /// 1-based worker id.
    pub worker_id: usize,
    /// 0-based row indices into the parent dataset.
    pub row_indices: Vec<usize>,
    /// Row count of the dataset this shard was cut from.
    pub parent_rows: usize,
}

impl Shard {
    pub fn len(&self) -> usize {
        self.row_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_indices.is_empty()
    }
}

/// Splits the rows into `n` contiguous blocks of `m / n` rows; worker 1 gets
/// the first block.
pub fn shard(dataset: &Dataset, n: usize) -> Result<Vec<Shard>> {
    let m = dataset.rows();
    if n == 0 || !m.is_multiple_of(n) {
        return Err(Error::NonDivisible { m, n });
    }
    let s = m / n;
    Ok((0..n)
        .map(|i| Shard {
            worker_id: i + 1,
            row_indices: (i * s..(i + 1) * s).collect(),
            parent_rows: m,
        })
        .collect())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn paper_sized_dataset_has_integer_features() {
        let ds = generate_synthetic(2000, 100, 7).unwrap();
        assert_eq!(ds.rows(), 2000);
        assert_eq!(ds.cols(), 100);
        assert!(ds
            .features()
            .iter()
            .all(|&v| (1.0..=10.0).contains(&v) && v.fract() == 0.0));
        let w = ds.true_weights().unwrap();
        assert!(w.iter().all(|&v| (1.0..=100.0).contains(&v) && v.fract() == 0.0));
        let mean = ds.features().iter().sum::<f64>() / ds.features().len() as f64;
        assert!((mean - 5.5).abs() < 0.1, "feature mean {mean}");
    }

    #[test]
    fn single_row_dataset() {
        let ds = generate_synthetic(1, 1, 0).unwrap();
        let w = ds.true_weights().unwrap()[0];
        let resid = ds.label(0) - ds.row(0)[0] * w;
        // unit variance noise; 6 sigma
        assert!(resid.abs() < 6.0);
    }

    #[test]
    fn label_noise_has_unit_moments() {
        let ds = generate_synthetic(100, 5, 3).unwrap();
        let w = ds.true_weights().unwrap();
        let noise: Vec<f64> = (0..ds.rows())
            .map(|i| ds.label(i) - dot(ds.row(i), w))
            .collect();
        let mean = noise.iter().sum::<f64>() / noise.len() as f64;
        let var = noise.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (noise.len() - 1) as f64;
        assert!(mean.abs() < 0.3, "mean {mean}");
        assert!((var - 1.0).abs() < 0.3, "var {var}");
    }

    #[test]
    fn rejects_empty_shapes() {
        assert!(generate_synthetic(0, 3, 1).is_err());
        assert!(generate_synthetic(3, 0, 1).is_err());
    }

    #[test]
    fn same_seed_same_bits_other_seed_differs() {
        let a = generate_synthetic(50, 4, 11).unwrap();
        let b = generate_synthetic(50, 4, 11).unwrap();
        let c = generate_synthetic(50, 4, 12).unwrap();
        assert_eq!(a, b);
        assert!(a.features() != c.features() || a.labels() != c.labels());
    }

    #[test]
    fn paper_sharding() {
        let ds = generate_synthetic(2000, 3, 1).unwrap();
        let shards = shard(&ds, 50).unwrap();
        assert_eq!(shards.len(), 50);
        assert!(shards.iter().all(|s| s.len() == 40));
        assert_eq!(shards[0].row_indices[0], 0);
        assert_eq!(shards[49].worker_id, 50);
    }

    #[test]
    fn single_worker_gets_everything() {
        let ds = generate_synthetic(10, 2, 1).unwrap();
        let shards = shard(&ds, 1).unwrap();
        assert_eq!(shards[0].row_indices, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn non_divisible_is_rejected() {
        let ds = generate_synthetic(12, 2, 1).unwrap();
        assert!(matches!(shard(&ds, 5), Err(Error::NonDivisible { m: 12, n: 5 })));
        assert!(shard(&ds, 0).is_err());
    }

    #[test]
    fn csv_and_sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_synthetic(7, 3, 5).unwrap();
        let csv_path = dir.path().join("data.csv");
        let meta_path = dir.path().join("data.json");
        ds.write_csv(&csv_path).unwrap();
        ds.write_sidecar(&meta_path).unwrap();
        let header = std::fs::read_to_string(&csv_path).unwrap();
        assert!(header.starts_with("x1,x2,x3,y\n"));
        let back = Dataset::read_csv(&csv_path)
            .unwrap()
            .apply_sidecar(&meta_path)
            .unwrap();
        assert_eq!(back, ds);
    }

    proptest! {
        #[test]
        fn shards_partition_rows(s in 1usize..20, n in 1usize..12) {
            let ds = generate_synthetic(s * n, 1, 0).unwrap();
            let shards = shard(&ds, n).unwrap();
            let mut all: Vec<usize> = shards.iter().flat_map(|s| s.row_indices.clone()).collect();
            prop_assert!(shards.iter().all(|sh| sh.len() == s));
            all.sort_unstable();
            prop_assert_eq!(all, (0..s * n).collect::<Vec<_>>());
        }
    }
}
