use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use crate::error::{Error, Result};

/// Whether the magnitude threshold is taken per layer or over all layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    #[default]
    Local,
    Global,
}

/// Binary keep-mask aligned with a [`ParamSet`]; `true` means kept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneMask {
    pub layers: Vec<Vec<bool>>,
    pub scope: Scope,
}

impl PruneMask {
    pub fn ones_like(params: &ParamSet) -> Self {
        Self {
            layers: params.layers().iter().map(|l| vec![true; l.values.len()]).collect(),
            scope: Scope::Local,
        }
    }

    /// Builds a mask from 0/1 rows.
    pub fn from_bits(layers: &[&[u8]]) -> Self {
        Self {
            layers: layers
                .iter()
                .map(|l| l.iter().map(|&b| b != 0).collect())
                .collect(),
            scope: Scope::Local,
        }
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_shape(&self, other: &PruneMask) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.len() == b.len())
    }

    fn matches(&self, params: &ParamSet) -> bool {
        self.layers.len() == params.layers().len()
            && self
                .layers
                .iter()
                .zip(params.layers())
                .all(|(m, l)| m.len() == l.values.len())
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.layers.iter().flat_map(|l| l.iter().copied())
    }

    pub fn pruned_count(&self) -> usize {
        self.iter().filter(|k| !k).count()
    }

    /// Flat indices of pruned entries.
    pub fn pruned_indices(&self) -> Vec<usize> {
        self.iter()
            .enumerate()
            .filter_map(|(i, k)| (!k).then_some(i))
            .collect()
    }
}

/// Number of entries pruned out of `n` at sparsity `s`. The small slack
/// absorbs products such as `0.95 * 100 = 94.999…`.
pub(crate) fn prune_count(s: f64, n: usize) -> usize {
    ((s * n as f64 + 1e-9).floor() as usize).min(n)
}

/// Magnitude pruning of `params` to sparsity `s`.
///
/// Local scope zeros the `floor(s·n_l)` smallest-magnitude entries of every
/// prunable layer; global scope zeros the `floor(s·d)` smallest over all
/// prunable layers jointly. Equal magnitudes are broken by (layer, index),
/// lowest first. Non-prunable layers are always kept.
pub fn magprune(params: &ParamSet, s: f64, scope: Scope) -> Result<PruneMask> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::invalid("sparsity", format!("{s} is outside [0, 1]")));
    }
    if !params.is_finite() {
        return Err(Error::invalid("param set", "contains non-finite values"));
    }
    let mut mask = PruneMask::ones_like(params);
    mask.scope = scope;
    match scope {
        Scope::Local => {
            for (keep, layer) in mask.layers.iter_mut().zip(params.layers()) {
                if !layer.prunable {
                    continue;
                }
                let k = prune_count(s, layer.values.len());
                let mut order: Vec<usize> = (0..layer.values.len()).collect();
                order.sort_by(|&a, &b| {
                    layer.values[a]
                        .abs()
                        .total_cmp(&layer.values[b].abs())
                        .then(a.cmp(&b))
                });
                for &i in &order[..k] {
                    keep[i] = false;
                }
            }
        }
        Scope::Global => {
            let mut order: Vec<(usize, usize)> = params
                .layers()
                .iter()
                .enumerate()
                .filter(|(_, l)| l.prunable)
                .flat_map(|(li, l)| (0..l.values.len()).map(move |i| (li, i)))
                .collect();
            let k = prune_count(s, order.len());
            let mag = |&(li, i): &(usize, usize)| params.layers()[li].values[i].abs();
            order.sort_by(|a, b| mag(a).total_cmp(&mag(b)).then(a.cmp(b)));
            for &(li, i) in &order[..k] {
                mask.layers[li][i] = false;
            }
        }
    }
    Ok(mask)
}

/// Element-wise product `θ ⊙ M`.
pub fn apply_mask(params: &ParamSet, mask: &PruneMask) -> Result<ParamSet> {
    let mut out = params.clone();
    apply_mask_in_place(&mut out, mask)?;
    Ok(out)
}

pub fn apply_mask_in_place(params: &mut ParamSet, mask: &PruneMask) -> Result<()> {
    if !mask.matches(params) {
        return Err(Error::Shape("mask does not match parameter layout".into()));
    }
    for (layer, keep) in params.layers_mut().iter_mut().zip(&mask.layers) {
        for (v, &k) in layer.values.iter_mut().zip(keep) {
            if !k {
                *v = 0.0;
            }
        }
    }
    Ok(())
}

/// Jaccard distance between the pruned index sets of two masks; 0 when
/// neither prunes anything.
pub fn jaccard_mask_distance(a: &PruneMask, b: &PruneMask) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Shape("masks have different layouts".into()));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (ka, kb) in a.iter().zip(b.iter()) {
        if !ka && !kb {
            inter += 1;
        }
        if !ka || !kb {
            union += 1;
        }
    }
    if union == 0 {
        return Ok(0.0);
    }
    Ok(1.0 - inter as f64 / union as f64)
}
