use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One named parameter tensor, flattened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub name: String,
    pub values: Vec<f64>,
    /// Whether magnitude pruning may zero entries of this layer.
    pub prunable: bool,
}

/// Flat parameter vector partitioned into ordered, uniquely named layers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamSet {
    layers: Vec<Layer>,
}

impl ParamSet {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        for (i, l) in layers.iter().enumerate() {
            if layers[..i].iter().any(|o| o.name == l.name) {
                return Err(Error::invalid("param set", format!("duplicate layer `{}`", l.name)));
            }
            if let Some(k) = l.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(
                    "param set",
                    format!("layer `{}` has non-finite value at {k}", l.name),
                ));
            }
        }
        Ok(Self { layers })
    }

    /// Builds a set where every layer is prunable.
    pub fn from_vecs<S: Into<String>>(layers: impl IntoIterator<Item = (S, Vec<f64>)>) -> Result<Self> {
        Self::new(
            layers
                .into_iter()
                .map(|(name, values)| Layer {
                    name: name.into(),
                    values,
                    prunable: true,
                })
                .collect(),
        )
    }

    /// A single prunable layer named `w`.
    pub fn single(values: Vec<f64>) -> Self {
        Self::from_vecs([("w", values)]).expect("single layer is always valid")
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn layer(&self, name: &str) -> Option<&Layer> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn total_dim(&self) -> usize {
        self.layers.iter().map(|l| l.values.len()).sum()
    }

    pub fn prunable_dim(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.prunable)
            .map(|l| l.values.len())
            .sum()
    }

    /// Same layer names, sizes and prunability, all values zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    name: l.name.clone(),
                    values: vec![0.0; l.values.len()],
                    prunable: l.prunable,
                })
                .collect(),
        }
    }

    pub fn same_shape(&self, other: &ParamSet) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.values.len() == b.values.len())
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.values.iter().copied()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.values.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.values.iter_mut())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    /// Fraction of exactly-zero entries among prunable layers.
    pub fn sparsity(&self) -> f64 {
        let d = self.prunable_dim();
        if d == 0 {
            return 0.0;
        }
        let zeros = self
            .layers
            .iter()
            .filter(|l| l.prunable)
            .flat_map(|l| l.values.iter())
            .filter(|v| **v == 0.0)
            .count();
        zeros as f64 / d as f64
    }
}
