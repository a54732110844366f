//! Reference estimators: uniform MC dropout and a retrained-ensemble ground
//! truth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::{LossLandscape, LossOracle, SampleLandscape};
use crate::nn::{self, sample_mask_bernoulli, Network, Sample};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sampler::{estimate, LossTrace, UncertaintyReport};
use crate::stats::compensated_sum;
use crate::trainer::{train, Dataset, TrainConfig};

/// `draws` independent Bernoulli(`p`) masks, each of equal weight.
pub fn mc_dropout(
    net: &Network,
    sample: &Sample,
    sample_id: usize,
    p: f64,
    draws: usize,
    seed: u64,
    oracle: &LossOracle,
) -> Result<(LossTrace, UncertaintyReport)> {
    if draws < 2 {
        return Err(Error::Parameter(format!("mc_dropout needs at least 2 draws, got {draws}")));
    }
    let landscape = SampleLandscape::new(net, sample, sample_id, oracle)?;
    let trace = mc_dropout_on(&landscape, p, draws, seed)?;
    let h = nn::predict_full(net, &sample.features)?;
    let report = estimate(&trace, h, sample_id)?;
    Ok((trace, report))
}

pub fn mc_dropout_on<L: LossLandscape + ?Sized>(landscape: &L, p: f64, draws: usize, seed: u64) -> Result<LossTrace> {
    let mut rng = rng_from_seed(seed);
    let units = landscape.units();
    let mut trace = LossTrace::default();
    for step in 1..=draws as u64 {
        let mask = sample_mask_bernoulli(units, p, &mut rng)?;
        let loss = landscape.loss(&mask)?;
        trace.steps.push(step);
        trace.losses.push(loss);
        trace.sizes.push(mask.size());
        trace.accepted.push(true);
    }
    trace.accept_count = draws as u64;
    trace.propose_count = draws as u64;
    Ok(trace)
}

/// MC dropout for every sample, seeded per sample like the chains.
pub fn mc_dropout_all(
    net: &Network,
    samples: &[Sample],
    p: f64,
    draws: usize,
    seed: u64,
    oracle: &LossOracle,
    workers: usize,
) -> Result<Vec<(LossTrace, UncertaintyReport)>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    pool.install(|| {
        samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                mc_dropout(net, s, i, p, draws, derive_seed(seed, i as u64), oracle).map_err(|e| Error::Sample {
                    sample_id: i,
                    source: Box::new(e),
                })
            })
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSample {
    pub sample_id: usize,
    /// Mean over members of the softmax probability of the true label.
    pub mean_p_correct: f64,
    pub var_p_correct: f64,
    pub mean_loss: f64,
    pub var_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthReport {
    pub ensemble_size: usize,
    pub seeds: Vec<u64>,
    pub samples: Vec<GroundTruthSample>,
}

/// Mean and unbiased variance, summed in sorted order so the result does not
/// depend on member order.
fn sorted_mean_var(values: &mut [f64]) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    let var = compensated_sum(values.iter().map(|v| (v - mean).powi(2))) / (n - 1.0);
    (mean, var)
}

/// Trains `members` networks whose seeds are derived from `master_seed`.
pub fn ground_truth_ensemble(
    config: &TrainConfig,
    train_data: &Dataset,
    test: &[Sample],
    members: usize,
    master_seed: u64,
    workers: usize,
) -> Result<GroundTruthReport> {
    let seeds: Vec<u64> = (0..members as u64).map(|k| derive_seed(master_seed, k)).collect();
    ground_truth_with_seeds(config, train_data, test, &seeds, workers)
}

/// Trains one network per seed (differing only in initialization and batch
/// order) and summarizes the correct-class probability across members.
pub fn ground_truth_with_seeds(
    config: &TrainConfig,
    train_data: &Dataset,
    test: &[Sample],
    seeds: &[u64],
    workers: usize,
) -> Result<GroundTruthReport> {
    if seeds.len() < 2 {
        return Err(Error::Parameter(format!("ensemble needs at least 2 members, got {}", seeds.len())));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    // per member: (p_correct, loss) for every test sample
    let per_member: Vec<Vec<(f64, f64)>> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let member = |e: Error| Error::Member {
                    seed,
                    source: Box::new(e),
                };
                let cfg = TrainConfig { seed, ..config.clone() };
                let net = train(&cfg, train_data).map_err(member)?;
                test.iter()
                    .map(|s| {
                        let logits = nn::forward_full(&net, &s.features)?;
                        let p = nn::softmax(&logits)[s.label];
                        Ok((p, nn::cross_entropy(&logits, s.label)))
                    })
                    .collect::<Result<Vec<_>>>()
                    .map_err(member)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let samples = (0..test.len())
        .map(|i| {
            let mut probs: Vec<f64> = per_member.iter().map(|m| m[i].0).collect();
            let mut losses: Vec<f64> = per_member.iter().map(|m| m[i].1).collect();
            let (mean_p_correct, var_p_correct) = sorted_mean_var(&mut probs);
            let (mean_loss, var_loss) = sorted_mean_var(&mut losses);
            GroundTruthSample {
                sample_id: i,
                mean_p_correct,
                var_p_correct,
                mean_loss,
                var_loss,
            }
        })
        .collect();
    Ok(GroundTruthReport {
        ensemble_size: seeds.len(),
        seeds: seeds.to_vec(),
        samples,
    })
}
