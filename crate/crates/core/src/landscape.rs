//! Loss oracles: the map from a dropout mask to the loss of the thinned
//! network it selects.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, count_maskable_units, DropoutMask, Network, Sample};
use crate::rng::{derive_named_seed, derive_seed, rng_from_seed};

/// Anything that assigns a loss to every mask over `units()` maskable units.
pub trait LossLandscape: Sync {
    fn units(&self) -> usize;
    fn loss(&self, mask: &DropoutMask) -> Result<f64>;
}

/// Which label the per-sample loss is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossOracleMode {
    TrueLabel,
    #[default]
    PredictedLabel,
    /// A label drawn once per sample from a seeded stream.
    RandomLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LossOracle {
    pub mode: LossOracleMode,
    /// Only used by [`LossOracleMode::RandomLabel`].
    #[serde(default)]
    pub seed: u64,
}

impl LossOracle {
    pub fn true_label() -> Self {
        Self {
            mode: LossOracleMode::TrueLabel,
            seed: 0,
        }
    }

    pub fn predicted_label() -> Self {
        Self {
            mode: LossOracleMode::PredictedLabel,
            seed: 0,
        }
    }

    pub fn random_label(seed: u64) -> Self {
        Self {
            mode: LossOracleMode::RandomLabel,
            seed,
        }
    }

    /// The class the loss of `sample` is evaluated against.
    pub fn target(&self, net: &Network, sample: &Sample, sample_id: usize) -> Result<usize> {
        match self.mode {
            LossOracleMode::TrueLabel => Ok(sample.label),
            LossOracleMode::PredictedLabel => Ok(nn::argmax(&nn::forward_full(net, &sample.features)?)),
            LossOracleMode::RandomLabel => {
                let stream = derive_named_seed(self.seed, "random-labels");
                let mut rng = rng_from_seed(derive_seed(stream, sample_id as u64));
                Ok(rng.random_range(0..net.class_count()))
            }
        }
    }
}

/// Per-sample landscape: loss of one input against a fixed target class.
#[derive(Debug, Clone)]
pub struct SampleLandscape<'a> {
    pub net: &'a Network,
    pub features: &'a [f64],
    pub target: usize,
}

impl<'a> SampleLandscape<'a> {
    pub fn new(net: &'a Network, sample: &'a Sample, sample_id: usize, oracle: &LossOracle) -> Result<Self> {
        sample.validate_for(net)?;
        Ok(Self {
            net,
            features: &sample.features,
            target: oracle.target(net, sample, sample_id)?,
        })
    }
}

impl LossLandscape for SampleLandscape<'_> {
    fn units(&self) -> usize {
        count_maskable_units(self.net)
    }

    fn loss(&self, mask: &DropoutMask) -> Result<f64> {
        nn::loss(self.net, mask, self.features, self.target)
    }
}

/// Mean loss over a whole sample set, for global diagnostics.
#[derive(Debug, Clone)]
pub struct DatasetLandscape<'a> {
    pub net: &'a Network,
    pub items: Vec<(&'a [f64], usize)>,
}

impl<'a> DatasetLandscape<'a> {
    pub fn new(net: &'a Network, samples: &'a [Sample], oracle: &LossOracle) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Parameter("dataset landscape needs samples".into()));
        }
        let items = samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.validate_for(net)?;
                Ok((s.features.as_slice(), oracle.target(net, s, i)?))
            })
            .collect::<Result<_>>()?;
        Ok(Self { net, items })
    }
}

impl LossLandscape for DatasetLandscape<'_> {
    fn units(&self) -> usize {
        count_maskable_units(self.net)
    }

    fn loss(&self, mask: &DropoutMask) -> Result<f64> {
        let mut total = 0.0;
        for (x, y) in &self.items {
            total += nn::loss(self.net, mask, x, *y)?;
        }
        Ok(total / self.items.len() as f64)
    }
}

/// Explicit loss table indexed by the mask's bit word.
#[derive(Debug, Clone, PartialEq)]
pub struct TableLandscape {
    pub units: usize,
    pub losses: Vec<f64>,
}

impl TableLandscape {
    pub fn new(units: usize, losses: Vec<f64>) -> Result<Self> {
        if units > 30 || losses.len() != 1usize << units {
            return Err(Error::Shape(format!(
                "loss table has {} entries, expected 2^{units}",
                losses.len()
            )));
        }
        Ok(Self { units, losses })
    }
}

impl LossLandscape for TableLandscape {
    fn units(&self) -> usize {
        self.units
    }

    fn loss(&self, mask: &DropoutMask) -> Result<f64> {
        let bits = mask
            .to_bits()
            .filter(|_| mask.len() == self.units)
            .ok_or_else(|| Error::Shape("mask does not match loss table".into()))?;
        Ok(self.losses[bits as usize])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseLayer};

    fn net() -> Network {
        Network::new(vec![
            DenseLayer::new(2, 3, Activation::Relu, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0], vec![0.0; 3]).unwrap(),
            DenseLayer::new(3, 3, Activation::Identity, vec![2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 2.0], vec![0.0; 3])
                .unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn targets_per_mode() {
        let n = net();
        let s = Sample::new(vec![3.0, 1.0], 1);
        assert_eq!(LossOracle::true_label().target(&n, &s, 0).unwrap(), 1);
        // hidden = (3, 1, 4) -> class 2 wins
        assert_eq!(LossOracle::predicted_label().target(&n, &s, 0).unwrap(), 2);
        let oracle = LossOracle::random_label(5);
        let first: Vec<usize> = (0..20).map(|i| oracle.target(&n, &s, i).unwrap()).collect();
        let again: Vec<usize> = (0..20).map(|i| oracle.target(&n, &s, i).unwrap()).collect();
        assert_eq!(first, again);
        assert!(first.iter().all(|&c| c < 3));
        assert!(first.iter().any(|&c| c != first[0]));
    }

    #[test]
    fn dataset_landscape_is_mean_of_sample_losses() {
        let n = net();
        let samples = vec![Sample::new(vec![3.0, 1.0], 1), Sample::new(vec![0.5, 2.0], 0)];
        let oracle = LossOracle::true_label();
        let global = DatasetLandscape::new(&n, &samples, &oracle).unwrap();
        let mask = DropoutMask::from_bits(0b101, 3);
        let each: f64 = samples
            .iter()
            .enumerate()
            .map(|(i, s)| SampleLandscape::new(&n, s, i, &oracle).unwrap().loss(&mask).unwrap())
            .sum();
        assert!((global.loss(&mask).unwrap() - each / 2.0).abs() < 1e-15);
    }

    #[test]
    fn table_shape_checked() {
        assert!(TableLandscape::new(2, vec![0.0; 3]).is_err());
        let t = TableLandscape::new(2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.loss(&DropoutMask::from_bits(2, 2)).unwrap(), 2.0);
    }
}
