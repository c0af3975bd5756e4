use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::data::Dataset;
use crate::error::{Error, Result};
use crate::pruning::{Layer, ParamSet};

pub const DEFAULT_DIMS: [usize; 4] = [20, 64, 64, 4];

/// Fully connected ReLU network with a softmax cross-entropy head.
///
/// Layer `l` (1-based) is stored as `fc{l}.weight` (`out × in`, row-major)
/// followed by `fc{l}.bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    params: ParamSet,
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::invalid("layer dims", format!("{dims:?} needs ≥ 2 positive sizes")));
    }
    Ok(())
}

impl Mlp {
    /// He-uniform weights (`U(±√(6/fan_in))`), zero biases. Biases are not
    /// prunable.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        check_dims(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(2 * (dims.len() - 1));
        for (l, w) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            layers.push(Layer {
                name: format!("fc{}.weight", l + 1),
                values: (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect(),
                prunable: true,
            });
            layers.push(Layer {
                name: format!("fc{}.bias", l + 1),
                values: vec![0.0; fan_out],
                prunable: false,
            });
        }
        Ok(Self {
            dims: dims.to_vec(),
            params: ParamSet::new(layers)?,
        })
    }

    pub fn default_arch(seed: u64) -> Result<Self> {
        Self::new(&DEFAULT_DIMS, seed)
    }

    pub fn from_params(dims: &[usize], params: ParamSet) -> Result<Self> {
        check_dims(dims)?;
        let model = Self {
            dims: dims.to_vec(),
            params,
        };
        if !model.layout_matches(&model.params) {
            return Err(Error::Shape(format!("parameters do not fit layer dims {dims:?}")));
        }
        Ok(model)
    }

    pub fn with_prunable_biases(mut self, prunable: bool) -> Self {
        for layer in self.params.layers_mut() {
            if layer.name.ends_with(".bias") {
                layer.prunable = prunable;
            }
        }
        self
    }

    fn layout_matches(&self, params: &ParamSet) -> bool {
        let layers = params.layers();
        layers.len() == 2 * (self.dims.len() - 1)
            && self.dims.windows(2).enumerate().all(|(l, w)| {
                layers[2 * l].values.len() == w[0] * w[1] && layers[2 * l + 1].values.len() == w[1]
            })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_classes(&self) -> usize {
        *self.dims.last().expect("dims are non-empty")
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn into_params(self) -> ParamSet {
        self.params
    }

    pub fn set_params(&mut self, params: ParamSet) -> Result<()> {
        if !params.same_shape(&self.params) {
            return Err(Error::Shape("parameters do not match the model layout".into()));
        }
        self.params = params;
        Ok(())
    }

    fn check_batch(&self, data: &Dataset, rows: &[usize]) -> Result<()> {
        if rows.is_empty() {
            return Err(Error::invalid("batch", "must be non-empty"));
        }
        if data.dim() != self.dims[0] || data.num_classes() != self.num_classes() {
            return Err(Error::Shape(format!(
                "data is {}-dimensional with {} classes, model expects {} and {}",
                data.dim(),
                data.num_classes(),
                self.dims[0],
                self.num_classes()
            )));
        }
        if let Some(&r) = rows.iter().find(|&&r| r >= data.len()) {
            return Err(Error::invalid("batch", format!("row {r} is out of range")));
        }
        Ok(())
    }

    /// Activations of every layer for one input; the last entry holds logits.
    fn activations(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let layers = self.params.layers();
        let depth = self.dims.len() - 1;
        let mut acts = Vec::with_capacity(depth + 1);
        acts.push(x.to_vec());
        for l in 0..depth {
            let (w, b) = (&layers[2 * l].values, &layers[2 * l + 1].values);
            let input = &acts[l];
            let n_in = self.dims[l];
            let mut z: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(o, bo)| bo + w[o * n_in..(o + 1) * n_in].iter().zip(input).map(|(a, c)| a * c).sum::<f64>())
                .collect();
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    quantity: format!("activations of layer {}", l + 1),
                    iter: 0,
                });
            }
            if l + 1 < depth {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        Ok(acts)
    }

    /// Class probabilities, one row per input.
    pub fn predict_proba(&self, data: &Dataset, rows: &[usize]) -> Result<Vec<Vec<f64>>> {
        self.check_batch(data, rows)?;
        rows.iter()
            .map(|&r| {
                let logits = self.activations(data.input(r))?.pop().expect("at least one layer");
                Ok(softmax(&logits))
            })
            .collect()
    }

    /// Mean cross-entropy and accuracy over `rows`.
    pub fn forward_loss(&self, data: &Dataset, rows: &[usize]) -> Result<(f64, f64)> {
        self.check_batch(data, rows)?;
        let mut loss = 0.0;
        let mut correct = 0usize;
        for &r in rows {
            let logits = self.activations(data.input(r))?.pop().expect("at least one layer");
            let y = data.labels()[r];
            loss += log_sum_exp(&logits) - logits[y];
            correct += (argmax(&logits) == y) as usize;
        }
        let m = rows.len() as f64;
        Ok((loss / m, correct as f64 / m))
    }

    /// Loss and accuracy over a whole dataset.
    pub fn evaluate(&self, data: &Dataset) -> Result<(f64, f64)> {
        let rows: Vec<usize> = (0..data.len()).collect();
        self.forward_loss(data, &rows)
    }

    /// Mean loss over `rows` and its gradient by backpropagation.
    pub fn gradient(&self, data: &Dataset, rows: &[usize]) -> Result<(f64, ParamSet)> {
        self.check_batch(data, rows)?;
        let depth = self.dims.len() - 1;
        let mut grad = self.params.zeros_like();
        let m = rows.len() as f64;
        let mut loss = 0.0;
        for &r in rows {
            let acts = self.activations(data.input(r))?;
            let logits = &acts[depth];
            let y = data.labels()[r];
            loss += log_sum_exp(logits) - logits[y];

            let mut delta = softmax(logits);
            delta[y] -= 1.0;
            delta.iter_mut().for_each(|v| *v /= m);

            for l in (0..depth).rev() {
                let n_in = self.dims[l];
                let input = &acts[l];
                let w = &self.params.layers()[2 * l].values;
                let prev = (l > 0).then(|| {
                    let mut back = vec![0.0; n_in];
                    for (o, d) in delta.iter().enumerate() {
                        if *d != 0.0 {
                            for (bk, wk) in back.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                                *bk += wk * d;
                            }
                        }
                    }
                    // ReLU derivative; stored activations are post-ReLU
                    back.iter_mut().zip(input).for_each(|(bk, a)| {
                        if *a <= 0.0 {
                            *bk = 0.0
                        }
                    });
                    back
                });
                let layers = grad.layers_mut();
                let gw = &mut layers[2 * l].values;
                for (o, d) in delta.iter().enumerate() {
                    if *d != 0.0 {
                        for (g, a) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                            *g += d * a;
                        }
                    }
                }
                for (g, d) in layers[2 * l + 1].values.iter_mut().zip(&delta) {
                    *g += d;
                }
                if let Some(p) = prev {
                    delta = p;
                }
            }
        }
        Ok((loss / m, grad))
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(z);
    z.iter().map(|v| (v - lse).exp()).collect()
}

/// Index of the largest entry, lowest index on ties.
fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = i;
        }
    }
    best
}
