//! Dense feedforward networks evaluated under explicit dropout masks.
//!
//! Mask layout: when input masking is enabled the input features come first,
//! followed by the hidden units of each layer in network order. The output
//! layer is never maskable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
        }
    }
}

/// A fully connected layer. `weights` is row-major `out_dim × in_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        weights: Vec<f64>,
        biases: Vec<f64>,
    ) -> Result<Self> {
        if weights.len() != in_dim * out_dim {
            return Err(Error::Shape(format!(
                "weight matrix has {} entries, expected {out_dim}x{in_dim}",
                weights.len()
            )));
        }
        if biases.len() != out_dim {
            return Err(Error::Shape(format!(
                "bias vector has {} entries, expected {out_dim}",
                biases.len()
            )));
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite layer parameter".into()));
        }
        Ok(Self {
            in_dim,
            out_dim,
            activation,
            weights,
            biases,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
        }
    }

    #[inline]
    pub fn row(&self, unit: usize) -> &[f64] {
        &self.weights[unit * self.in_dim..(unit + 1) * self.in_dim]
    }

    /// Pre-activations `W·input + b`.
    pub(crate) fn affine_into(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.biases
                .iter()
                .enumerate()
                .map(|(unit, b)| b + dot(self.row(unit), input)),
        );
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<DenseLayer>,
    /// Whether input features are part of the maskable unit set.
    #[serde(default, skip_serializing_if = "is_false")]
    pub mask_inputs: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl Network {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        let net = Self {
            layers,
            mask_inputs: false,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn with_input_masking(mut self, enabled: bool) -> Self {
        self.mask_inputs = enabled;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let Some(last) = self.layers.last() else {
            return Err(Error::Shape("network has no layers".into()));
        };
        if self.layers[0].in_dim == 0 {
            return Err(Error::Shape("input dimension must be positive".into()));
        }
        if last.out_dim < 2 {
            return Err(Error::Shape(format!(
                "class count must be at least 2, got {}",
                last.out_dim
            )));
        }
        for (k, pair) in self.layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Shape(format!(
                    "layer {k} outputs {} values but layer {} expects {}",
                    pair[0].out_dim,
                    k + 1,
                    pair[1].in_dim
                )));
            }
        }
        for (k, layer) in self.layers.iter().enumerate() {
            if layer.weights.len() != layer.in_dim * layer.out_dim || layer.biases.len() != layer.out_dim {
                return Err(Error::Shape(format!("layer {k} parameter shapes disagree with its dims")));
            }
            if layer.weights.iter().chain(&layer.biases).any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("layer {k} has a non-finite parameter")));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn class_count(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.out_dim)
            .collect()
    }

    /// Raw forward pass with an optional mask. Kept units are multiplied by
    /// `keep_scale` (1 for thinned-network evaluation, `1/p` for inverted
    /// dropout during training).
    pub fn forward_with(
        &self,
        mask: Option<&DropoutMask>,
        x: &[f64],
        keep_scale: f64,
    ) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        if let Some(mask) = mask {
            let expected = count_maskable_units(self);
            if mask.len() != expected {
                return Err(Error::Shape(format!(
                    "mask covers {} units, network has {expected}",
                    mask.len()
                )));
            }
        }

        let mut offset = 0;
        let mut current: Vec<f64> = x.to_vec();
        if self.mask_inputs {
            if let Some(mask) = mask {
                apply_mask(&mut current, &mask.keep[..x.len()], keep_scale);
            }
            offset = x.len();
        }

        let last = self.layers.len() - 1;
        let mut next = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            layer.affine_into(&current, &mut next);
            for z in next.iter_mut() {
                *z = layer.activation.apply(*z);
            }
            if k < last {
                if let Some(mask) = mask {
                    apply_mask(&mut next, &mask.keep[offset..offset + layer.out_dim], keep_scale);
                }
                offset += layer.out_dim;
            }
            std::mem::swap(&mut current, &mut next);
        }

        if current.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite activation in forward pass".into()));
        }
        Ok(current)
    }
}

fn apply_mask(values: &mut [f64], keep: &[bool], keep_scale: f64) {
    for (v, &k) in values.iter_mut().zip(keep) {
        *v = if k { *v * keep_scale } else { 0.0 };
    }
}

/// Total number of maskable units `N₀`: the sum of hidden-layer widths, plus
/// the input width when input masking is enabled.
pub fn count_maskable_units(net: &Network) -> usize {
    let hidden: usize = net.hidden_widths().iter().sum();
    if net.mask_inputs {
        hidden + net.input_dim()
    } else {
        hidden
    }
}

/// Keep-vector over the maskable units of a network.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DropoutMask {
    pub keep: Vec<bool>,
}

impl DropoutMask {
    pub fn all_keep(units: usize) -> Self {
        Self {
            keep: vec![true; units],
        }
    }

    pub fn all_drop(units: usize) -> Self {
        Self {
            keep: vec![false; units],
        }
    }

    /// Mask whose unit `j` is kept iff bit `j` of `word` is set.
    pub fn from_bits(word: u64, units: usize) -> Self {
        debug_assert!(units <= 64);
        Self {
            keep: (0..units).map(|j| word >> j & 1 == 1).collect(),
        }
    }

    /// Inverse of [`DropoutMask::from_bits`]; `None` beyond 64 units.
    pub fn to_bits(&self) -> Option<u64> {
        if self.keep.len() > 64 {
            return None;
        }
        Some(
            self.keep
                .iter()
                .enumerate()
                .fold(0u64, |acc, (j, &k)| acc | (u64::from(k) << j)),
        )
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    /// Number of kept units `N`.
    pub fn size(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn flip(&mut self, unit: usize) {
        self.keep[unit] = !self.keep[unit];
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Self { features, label }
    }

    pub fn validate_for(&self, net: &Network) -> Result<()> {
        if self.features.len() != net.input_dim() {
            return Err(Error::Shape(format!(
                "sample has {} features, network expects {}",
                self.features.len(),
                net.input_dim()
            )));
        }
        if self.label >= net.class_count() {
            return Err(Error::Parameter(format!(
                "label {} outside [0, {})",
                self.label,
                net.class_count()
            )));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("sample has non-finite features".into()));
        }
        Ok(())
    }
}

/// Logits of the thinned network selected by `mask`.
pub fn forward(net: &Network, mask: &DropoutMask, x: &[f64]) -> Result<Vec<f64>> {
    net.forward_with(Some(mask), x, 1.0)
}

/// Logits of the full network.
pub fn forward_full(net: &Network, x: &[f64]) -> Result<Vec<f64>> {
    net.forward_with(None, x, 1.0)
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `-log softmax(logits)[target]`, never negative.
pub fn cross_entropy(logits: &[f64], target: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|v| (v - max).exp()).sum();
    // (max - target logit) >= 0 and ln(sum) >= 0 since sum >= 1
    (max - logits[target]) + sum.ln()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Cross-entropy loss of the thinned network on `(x, target)`.
pub fn loss(net: &Network, mask: &DropoutMask, x: &[f64], target: usize) -> Result<f64> {
    if target >= net.class_count() {
        return Err(Error::Parameter(format!(
            "class index {target} outside [0, {})",
            net.class_count()
        )));
    }
    let logits = forward(net, mask, x)?;
    Ok(cross_entropy(&logits, target))
}

/// Class probabilities of the full (unmasked) network.
pub fn predict_full(net: &Network, x: &[f64]) -> Result<Vec<f64>> {
    Ok(softmax(&forward_full(net, x)?))
}

pub fn sample_mask_bernoulli<R: rand::Rng + ?Sized>(
    units: usize,
    p: f64,
    rng: &mut R,
) -> Result<DropoutMask> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Parameter(format!("retain probability {p} outside (0, 1]")));
    }
    Ok(DropoutMask {
        keep: (0..units).map(|_| rng.random_bool(p)).collect(),
    })
}

/// Uniform draw among the `C(units, size)` masks with exactly `size` kept units.
pub fn sample_mask_fixed_size<R: rand::Rng + ?Sized>(
    units: usize,
    size: usize,
    rng: &mut R,
) -> Result<DropoutMask> {
    if size > units {
        return Err(Error::Parameter(format!("mask size {size} exceeds {units} units")));
    }
    let mut mask = DropoutMask::all_drop(units);
    for j in rand::seq::index::sample(rng, units, size) {
        mask.keep[j] = true;
    }
    Ok(mask)
}
