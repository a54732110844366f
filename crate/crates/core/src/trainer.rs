//! Minibatch SGD with momentum and inverted dropout.
//!
//! During training each kept hidden unit is scaled by `1/p`, so inference on
//! the full network needs no rescaling and coincides with the maskless
//! forward pass.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, count_maskable_units, Activation, DenseLayer, DropoutMask, Network, Sample};
use crate::rng::{derive_named_seed, rng_from_seed, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden_widths: Vec<usize>,
    /// Retain probability `p`.
    pub dropout_p: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub mask_inputs: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_widths: vec![32, 16],
            dropout_p: 0.5,
            learning_rate: 0.05,
            momentum: 0.9,
            epochs: 30,
            batch_size: 32,
            seed: 0,
            mask_inputs: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_widths.iter().any(|&w| w == 0) {
            return Err(Error::Parameter("hidden widths must be positive".into()));
        }
        if !(self.dropout_p > 0.0 && self.dropout_p <= 1.0) {
            return Err(Error::Parameter(format!("dropout_p {} outside (0, 1]", self.dropout_p)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Parameter(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub split: Split,
    pub class_count: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, split: Split, class_count: usize) -> Result<Self> {
        let ds = Self {
            samples,
            split,
            class_count,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.samples.first() else {
            return Err(Error::Parameter("dataset is empty".into()));
        };
        let dim = first.features.len();
        if dim == 0 {
            return Err(Error::Shape("samples have no features".into()));
        }
        if self.class_count < 2 {
            return Err(Error::Parameter("class_count must be at least 2".into()));
        }
        for (i, s) in self.samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(Error::Shape(format!(
                    "sample {i} has {} features, expected {dim}",
                    s.features.len()
                )));
            }
            if s.label >= self.class_count {
                return Err(Error::Parameter(format!("sample {i} label {} out of range", s.label)));
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("sample {i} has non-finite features")));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.samples[0].features.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    /// Row 0 is the initialized network, row `e` the network after epoch `e`.
    pub log: Vec<EpochStats>,
}

/// He-uniform weights for relu layers, Glorot-uniform for the linear output.
pub fn init_network(config: &TrainConfig, input_dim: usize, class_count: usize, rng: &mut Rng) -> Network {
    let mut dims = vec![input_dim];
    dims.extend_from_slice(&config.hidden_widths);
    dims.push(class_count);
    let last = dims.len() - 2;
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let (activation, limit) = if k == last {
                (Activation::Identity, (6.0 / (fan_in + fan_out) as f64).sqrt())
            } else {
                (Activation::Relu, (6.0 / fan_in as f64).sqrt())
            };
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            DenseLayer {
                in_dim: fan_in,
                out_dim: fan_out,
                activation,
                weights: (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect(),
                biases: vec![0.0; fan_out],
            }
        })
        .collect();
    Network {
        layers,
        mask_inputs: config.mask_inputs,
    }
}

/// Mean full-network loss and accuracy over a sample set.
pub fn evaluate(net: &Network, samples: &[Sample]) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for s in samples {
        let logits = nn::forward_full(net, &s.features)?;
        loss += nn::cross_entropy(&logits, s.label);
        if nn::argmax(&logits) == s.label {
            correct += 1;
        }
    }
    let n = samples.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

struct Gradients {
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros(net: &Network) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    fn clear(&mut self) {
        self.weights.iter_mut().chain(self.biases.iter_mut()).for_each(|g| g.fill(0.0));
    }
}

/// Accumulates the gradient of one sample's loss under `mask` into `grads`
/// and returns that loss.
fn backprop(net: &Network, mask: &DropoutMask, keep_scale: f64, sample: &Sample, grads: &mut Gradients) -> f64 {
    let last = net.layers.len() - 1;
    // inputs[k] is what layer k consumes; pre[k] its pre-activations
    let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(net.layers.len());
    let mut pre: Vec<Vec<f64>> = Vec::with_capacity(net.layers.len());
    let mut offset = 0;

    let mut x = sample.features.clone();
    if net.mask_inputs {
        for (v, &k) in x.iter_mut().zip(&mask.keep) {
            *v = if k { *v * keep_scale } else { 0.0 };
        }
        offset = x.len();
    }
    inputs.push(x);
    for (k, layer) in net.layers.iter().enumerate() {
        let mut z = Vec::new();
        layer.affine_into(&inputs[k], &mut z);
        if k < last {
            let keep = &mask.keep[offset..offset + layer.out_dim];
            let a = z
                .iter()
                .zip(keep)
                .map(|(&z, &kept)| if kept { layer.activation.apply(z) * keep_scale } else { 0.0 })
                .collect();
            offset += layer.out_dim;
            inputs.push(a);
        }
        pre.push(z);
    }

    let logits = &pre[last];
    let loss = nn::cross_entropy(logits, sample.label);
    let mut delta = nn::softmax(logits);
    delta[sample.label] -= 1.0;

    for k in (0..=last).rev() {
        let layer = &net.layers[k];
        let input = &inputs[k];
        for (unit, &d) in delta.iter().enumerate() {
            grads.biases[k][unit] += d;
            let row = &mut grads.weights[k][unit * layer.in_dim..(unit + 1) * layer.in_dim];
            for (g, &a) in row.iter_mut().zip(input) {
                *g += d * a;
            }
        }
        if k == 0 {
            break;
        }
        // back through layer k's weights, then layer k-1's mask and activation
        let below = &net.layers[k - 1];
        offset -= below.out_dim;
        let keep = &mask.keep[offset..offset + below.out_dim];
        let mut next = vec![0.0; layer.in_dim];
        for (unit, &d) in delta.iter().enumerate() {
            for (n, &w) in next.iter_mut().zip(layer.row(unit)) {
                *n += w * d;
            }
        }
        for (j, n) in next.iter_mut().enumerate() {
            let active = match below.activation {
                Activation::Relu => pre[k - 1][j] > 0.0,
                Activation::Identity => true,
            };
            *n = if keep[j] && active { *n * keep_scale } else { 0.0 };
        }
        delta = next;
    }
    loss
}

pub fn train(config: &TrainConfig, data: &Dataset) -> Result<Network> {
    train_logged(config, data).map(|o| o.network)
}

pub fn train_logged(config: &TrainConfig, data: &Dataset) -> Result<TrainOutcome> {
    config.validate()?;
    data.validate()?;
    let mut rng = rng_from_seed(derive_named_seed(config.seed, "init"));
    let mut net = init_network(config, data.input_dim(), data.class_count, &mut rng);
    let mut rng = rng_from_seed(derive_named_seed(config.seed, "sgd"));

    let (loss0, acc0) = evaluate(&net, &data.samples)?;
    let mut log = vec![EpochStats {
        epoch: 0,
        train_loss: loss0,
        train_accuracy: acc0,
    }];

    let units = count_maskable_units(&net);
    let keep_scale = 1.0 / config.dropout_p;
    let mut grads = Gradients::zeros(&net);
    let mut velocity = Gradients::zeros(&net);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grads.clear();
            for &i in batch {
                let mask = DropoutMask {
                    keep: (0..units).map(|_| rng.random_bool(config.dropout_p)).collect(),
                };
                let l = backprop(&net, &mask, keep_scale, &data.samples[i], &mut grads);
                if !l.is_finite() {
                    return Err(Error::Training {
                        epoch,
                        message: format!("non-finite loss on sample {i}"),
                    });
                }
            }
            let scale = config.learning_rate / batch.len() as f64;
            for (k, layer) in net.layers.iter_mut().enumerate() {
                let params = layer.weights.iter_mut().chain(layer.biases.iter_mut());
                let vel = velocity.weights[k].iter_mut().chain(velocity.biases[k].iter_mut());
                let grad = grads.weights[k].iter().chain(&grads.biases[k]);
                for ((p, v), g) in params.zip(vel).zip(grad) {
                    *v = config.momentum * *v - scale * g;
                    *p += *v;
                }
            }
        }
        let (train_loss, train_accuracy) = evaluate(&net, &data.samples).map_err(|e| Error::Training {
            epoch,
            message: e.to_string(),
        })?;
        if !train_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                message: "non-finite training loss".into(),
            });
        }
        log.push(EpochStats {
            epoch,
            train_loss,
            train_accuracy,
        });
    }
    Ok(TrainOutcome { network: net, log })
}

pub fn write_log_csv<W: Write>(log: &[EpochStats], mut out: W) -> Result<()> {
    writeln!(out, "epoch,train_loss,train_accuracy")?;
    for row in log {
        writeln!(out, "{},{},{}", row.epoch, row.train_loss, row.train_accuracy)?;
    }
    Ok(())
}
