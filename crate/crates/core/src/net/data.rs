use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Labelled inputs stored row-major (`len × dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    num_classes: usize,
    split: Split,
}

impl Dataset {
    pub fn new(inputs: Vec<f64>, labels: Vec<usize>, dim: usize, num_classes: usize, split: Split) -> Result<Self> {
        if dim == 0 || num_classes == 0 {
            return Err(Error::invalid("dataset", "dim and num_classes must be positive"));
        }
        if inputs.len() != labels.len() * dim {
            return Err(Error::Shape(format!(
                "{} input values for {} rows of width {dim}",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::invalid("labels", format!("label {bad} is not below {num_classes}")));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("inputs", "values must be finite"));
        }
        Ok(Self {
            inputs,
            labels,
            dim,
            num_classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn input(&self, row: usize) -> &[f64] {
        &self.inputs[row * self.dim..(row + 1) * self.dim]
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }
}

fn default_classes() -> usize {
    4
}
fn default_dim() -> usize {
    20
}
fn default_per_class() -> usize {
    500
}
fn default_spread() -> f64 {
    0.3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobsConfig {
    #[serde(default = "default_classes")]
    pub num_classes: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_per_class")]
    pub samples_per_class: usize,
    #[serde(default = "default_spread")]
    pub spread: f64,
}

impl Default for BlobsConfig {
    fn default() -> Self {
        Self {
            num_classes: default_classes(),
            dim: default_dim(),
            samples_per_class: default_per_class(),
            spread: default_spread(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blobs {
    pub train: Dataset,
    pub test: Dataset,
    /// Cluster centres, one unit vector per class.
    pub centers: Vec<Vec<f64>>,
}

/// Gaussian clusters around random unit-sphere centres, shuffled and split
/// 80/20 into train and test.
pub fn make_blobs(num_classes: usize, dim: usize, samples_per_class: usize, spread: f64, seed: u64) -> Result<Blobs> {
    if num_classes == 0 || dim == 0 || samples_per_class == 0 {
        return Err(Error::invalid("blobs", "sizes must be positive"));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::invalid("spread", format!("{spread} must be non-negative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect();

    let total = num_classes * samples_per_class;
    let mut rows: Vec<(Vec<f64>, usize)> = Vec::with_capacity(total);
    for (label, c) in centers.iter().enumerate() {
        for _ in 0..samples_per_class {
            let x = c.iter().map(|m| m + spread * rng.sample::<f64, _>(StandardNormal)).collect();
            rows.push((x, label));
        }
    }
    rows.shuffle(&mut rng);

    let n_train = (total * 4) / 5;
    let build = |rows: &[(Vec<f64>, usize)], split| {
        let inputs = rows.iter().flat_map(|(x, _)| x.iter().copied()).collect();
        let labels = rows.iter().map(|(_, l)| *l).collect();
        Dataset::new(inputs, labels, dim, num_classes, split)
    };
    Ok(Blobs {
        train: build(&rows[..n_train], Split::Train)?,
        test: build(&rows[n_train..], Split::Test)?,
        centers,
    })
}

impl BlobsConfig {
    pub fn generate(&self, seed: u64) -> Result<Blobs> {
        make_blobs(self.num_classes, self.dim, self.samples_per_class, self.spread, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nearest_centroid(centers: &[Vec<f64>], x: &[f64]) -> usize {
        let dist = |c: &Vec<f64>| c.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        (0..centers.len())
            .min_by(|&a, &b| dist(&centers[a]).total_cmp(&dist(&centers[b])))
            .unwrap()
    }

    #[test]
    fn zero_spread_is_perfectly_separable() {
        let b = make_blobs(4, 20, 50, 0.0, 3).unwrap();
        for ds in [&b.train, &b.test] {
            for r in 0..ds.len() {
                assert_eq!(nearest_centroid(&b.centers, ds.input(r)), ds.labels()[r]);
            }
        }
    }

    #[test]
    fn deterministic_and_split() {
        let a = make_blobs(3, 5, 10, 0.3, 9).unwrap();
        assert_eq!(a, make_blobs(3, 5, 10, 0.3, 9).unwrap());
        assert_ne!(a, make_blobs(3, 5, 10, 0.3, 10).unwrap());
        assert_eq!(a.train.len(), 24);
        assert_eq!(a.test.len(), 6);
        assert_eq!(a.train.split(), Split::Train);
        for c in &a.centers {
            let n: f64 = c.iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_labels() {
        assert!(Dataset::new(vec![0.0, 1.0], vec![0, 2], 1, 2, Split::Train).is_err());
        assert!(Dataset::new(vec![0.0], vec![0, 1], 1, 2, Split::Train).is_err());
        assert!(make_blobs(0, 2, 2, 0.1, 0).is_err());
    }
}
