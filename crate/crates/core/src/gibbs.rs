//! Exact Gibbs ensemble over all `2^N₀` thinned networks of a tiny network.
//!
//! Mask `i` (bit `j` set ⇔ unit `j` kept) has weight `exp(-(β·Lᵢ + η·Nᵢ))`.
//! Masks are enumerated in integer counting order, so results are replayable
//! and independent of how the loss evaluations are partitioned across
//! threads: evaluation is parallel, every reduction runs sequentially in mask
//! order with compensated summation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::{LossLandscape, LossOracle, SampleLandscape};
use crate::nn::{DropoutMask, Network, Sample};
use crate::stats::{compensated_sum, cumulants, CompensatedSum};

/// Largest `N₀` that [`MaskEnsemble::enumerate`] accepts.
pub const MAX_ENUMERATION_UNITS: usize = 22;

/// Inverse temperature `β` (conjugate to loss) and chemical potential `η`
/// (conjugate to unit count).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsParams {
    pub beta: f64,
    pub eta: f64,
}

impl GibbsParams {
    pub fn new(beta: f64, eta: f64) -> Result<Self> {
        let p = Self { beta, eta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Parameter(format!("beta {} must be finite and >= 0", self.beta)));
        }
        if !self.eta.is_finite() {
            return Err(Error::Parameter(format!("eta {} must be finite", self.eta)));
        }
        Ok(())
    }

    /// `β·L + η·N`.
    #[inline]
    pub fn energy(&self, loss: f64, size: usize) -> f64 {
        self.beta * loss + self.eta * size as f64
    }
}

impl Default for GibbsParams {
    fn default() -> Self {
        Self { beta: 1.0, eta: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub log_z: f64,
    pub mean_loss: f64,
    pub mean_n: f64,
    pub var_loss: f64,
    pub var_n: f64,
    pub kappa3_loss: f64,
    pub kappa4_loss: f64,
    /// `Σ pᵢ`, kept as a normalization diagnostic.
    pub probability_sum: f64,
    pub units: usize,
}

/// Loss and size of every mask of a landscape, indexed by mask word.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskEnsemble {
    pub units: usize,
    pub losses: Vec<f64>,
}

impl MaskEnsemble {
    pub fn enumerate<L: LossLandscape + ?Sized>(landscape: &L) -> Result<Self> {
        let units = landscape.units();
        if units > MAX_ENUMERATION_UNITS {
            return Err(Error::Capacity(format!(
                "{units} maskable units exceed the enumeration cap of {MAX_ENUMERATION_UNITS}"
            )));
        }
        let losses = (0..1u64 << units)
            .into_par_iter()
            .map(|bits| {
                let l = landscape.loss(&DropoutMask::from_bits(bits, units))?;
                if !l.is_finite() {
                    return Err(Error::Numeric(format!("non-finite loss for mask {bits:#b}")));
                }
                Ok(l)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { units, losses })
    }

    pub fn from_losses(units: usize, losses: Vec<f64>) -> Result<Self> {
        if units > MAX_ENUMERATION_UNITS {
            return Err(Error::Capacity(format!("{units} units exceed the enumeration cap")));
        }
        if losses.len() != 1usize << units {
            return Err(Error::Shape(format!("{} losses for {units} units", losses.len())));
        }
        if losses.iter().any(|l| !l.is_finite()) {
            return Err(Error::Numeric("non-finite loss in table".into()));
        }
        Ok(Self { units, losses })
    }

    #[inline]
    pub fn size(&self, index: usize) -> usize {
        index.count_ones() as usize
    }

    fn log_weights(&self, params: &GibbsParams) -> Vec<f64> {
        self.losses
            .iter()
            .enumerate()
            .map(|(i, &l)| -params.energy(l, self.size(i)))
            .collect()
    }

    /// `log Z` and the unnormalized weights `exp(wᵢ − max w)` with their sum.
    fn weights(&self, params: &GibbsParams) -> (f64, Vec<f64>, f64) {
        let logw = self.log_weights(params);
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logw.iter().map(|v| (v - max).exp()).collect();
        let total = compensated_sum(w.iter().copied());
        (max + total.ln(), w, total)
    }

    pub fn log_partition(&self, params: &GibbsParams) -> f64 {
        self.weights(params).0
    }

    /// Gibbs probability of every mask, indexed by mask word.
    pub fn probabilities(&self, params: &GibbsParams) -> Vec<f64> {
        let (_, w, total) = self.weights(params);
        w.into_iter().map(|v| v / total).collect()
    }

    pub fn gibbs(&self, params: &GibbsParams) -> Result<OracleResult> {
        params.validate()?;
        let (log_z, w, total) = self.weights(params);
        let p: Vec<f64> = w.into_iter().map(|v| v / total).collect();
        let loss_c = cumulants(&self.losses, &p)?;
        let sizes: Vec<f64> = (0..p.len()).map(|i| self.size(i) as f64).collect();
        let size_c = cumulants(&sizes, &p)?;
        Ok(OracleResult {
            log_z,
            mean_loss: loss_c.mean,
            mean_n: size_c.mean,
            var_loss: loss_c.variance,
            var_n: size_c.variance,
            kappa3_loss: loss_c.third,
            kappa4_loss: loss_c.fourth,
            probability_sum: compensated_sum(p.iter().copied()),
            units: self.units,
        })
    }

    /// Central second difference of `log Z` in `β`:
    /// `(log Z(β+δ) − 2 log Z(β) + log Z(β−δ)) / δ²`.
    ///
    /// `log Z(β±δ) − log Z(β) = log Σ pᵢ e^{∓δLᵢ}` is evaluated with losses
    /// shifted by a constant `c` (which cancels in the second difference) and
    /// `expm1`/`ln_1p`, so the difference never subtracts two large `log Z`
    /// values.
    pub fn variance_via_log_partition(&self, params: &GibbsParams, delta: f64) -> Result<f64> {
        params.validate()?;
        if !(1e-6..=1e-2).contains(&delta) {
            return Err(Error::Parameter(format!("delta {delta} outside [1e-6, 1e-2]")));
        }
        let p = self.probabilities(params);
        let shift = compensated_sum(p.iter().zip(&self.losses).map(|(p, l)| p * l));
        let p_total = compensated_sum(p.iter().copied());
        let log_ratio = |step: f64| {
            let mut acc = CompensatedSum::default();
            acc.add(p_total - 1.0);
            for (pi, l) in p.iter().zip(&self.losses) {
                acc.add(pi * (-step * (l - shift)).exp_m1());
            }
            acc.value().ln_1p()
        };
        // the normalization error of `p` enters all three terms equally
        Ok((log_ratio(delta) + log_ratio(-delta) - 2.0 * log_ratio(0.0)) / (delta * delta))
    }
}

/// Exact Gibbs statistics of one sample's loss landscape.
pub fn enumerate(
    net: &Network,
    sample: &Sample,
    sample_id: usize,
    params: &GibbsParams,
    oracle: &LossOracle,
) -> Result<OracleResult> {
    let landscape = SampleLandscape::new(net, sample, sample_id, oracle)?;
    MaskEnsemble::enumerate(&landscape)?.gibbs(params)
}

/// Loss variance as the second `β`-derivative of `log Z`, by finite differences.
pub fn variance_via_log_z(
    net: &Network,
    sample: &Sample,
    sample_id: usize,
    params: &GibbsParams,
    oracle: &LossOracle,
    delta: f64,
) -> Result<f64> {
    let landscape = SampleLandscape::new(net, sample, sample_id, oracle)?;
    MaskEnsemble::enumerate(&landscape)?.variance_via_log_partition(params, delta)
}
