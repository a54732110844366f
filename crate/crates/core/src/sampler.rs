//! Metropolis–Hastings chain over thinned networks.
//!
//! The chain starts from the full network and targets the Gibbs measure
//! `p ∝ exp(-(β·L + η·N))`. A move from `μ` to a proposed `v` is accepted
//! with probability
//!
//! ```text
//! A = min(1, exp(-β(L_v − L_μ) − η(N_v − N_μ)) · g(v→μ)/g(μ→v))
//! ```
//!
//! Two proposal kernels are available. `SingleFlip` toggles one uniformly
//! chosen unit and is symmetric. `SizeResample` draws a size uniformly from
//! `{0..N₀}` and then a uniform mask of that size; its kernel ratio is
//! `C(N₀, N_v) / C(N₀, N_μ)`.
//!
//! β and η are stored separately (never as η/β), so β = 0 is well defined.

use std::io::Write;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::gibbs::GibbsParams;
use crate::landscape::{LossLandscape, SampleLandscape};
use crate::nn::{self, sample_mask_fixed_size, DropoutMask, Network, Sample};
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::stats::{sample_moments, SampleMoments};

pub use crate::landscape::{LossOracle, LossOracleMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalKernel {
    #[default]
    SingleFlip,
    SizeResample,
}

impl ProposalKernel {
    /// `log g(from → to)`; `-inf` when the kernel cannot make the move.
    pub fn log_density(self, from: &DropoutMask, to: &DropoutMask) -> f64 {
        let units = from.len();
        match self {
            ProposalKernel::SingleFlip => {
                let differing = from.keep.iter().zip(&to.keep).filter(|(a, b)| a != b).count();
                match (units, differing) {
                    (0, 0) => 0.0,
                    (_, 1) => -(units as f64).ln(),
                    _ => f64::NEG_INFINITY,
                }
            }
            ProposalKernel::SizeResample => {
                -((units + 1) as f64).ln() - ln_binomial(units as u64, to.size() as u64)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub params: GibbsParams,
    /// Number of transitions `T`.
    pub transitions: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub kernel: ProposalKernel,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            params: GibbsParams::default(),
            transitions: 5000,
            burn_in: 100,
            thin: 1,
            kernel: ProposalKernel::SingleFlip,
            seed: 0,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.transitions == 0 {
            return Err(Error::Parameter("transitions must be positive".into()));
        }
        if self.burn_in >= self.transitions {
            return Err(Error::Parameter(format!(
                "burn_in {} must be below transitions {}",
                self.burn_in, self.transitions
            )));
        }
        if self.thin == 0 {
            return Err(Error::Parameter("thin must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of states a chain with this configuration records.
    pub fn recorded_states(&self) -> u64 {
        (self.transitions - self.burn_in).div_ceil(self.thin)
    }
}

/// Current state of the chain: a mask with its loss and size.
#[derive(Debug, Clone, PartialEq)]
pub struct ThinnedNetworkState {
    pub mask: DropoutMask,
    pub loss: f64,
    pub size: usize,
}

impl ThinnedNetworkState {
    pub fn evaluate<L: LossLandscape + ?Sized>(landscape: &L, mask: DropoutMask) -> Result<Self> {
        let loss = landscape.loss(&mask)?;
        let size = mask.size();
        Ok(Self { mask, loss, size })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub mask: DropoutMask,
    /// `log g(v→μ) − log g(μ→v)`.
    pub log_g_ratio: f64,
}

pub fn propose(current: &ThinnedNetworkState, kernel: ProposalKernel, rng: &mut Rng) -> Proposal {
    let units = current.mask.len();
    match kernel {
        ProposalKernel::SingleFlip => {
            let mut mask = current.mask.clone();
            if units > 0 {
                mask.flip(rng.random_range(0..units));
            }
            Proposal { mask, log_g_ratio: 0.0 }
        }
        ProposalKernel::SizeResample => {
            let size = rng.random_range(0..=units);
            let mask = sample_mask_fixed_size(units, size, rng).expect("size within range");
            let log_g_ratio = ln_binomial(units as u64, size as u64) - ln_binomial(units as u64, current.size as u64);
            Proposal { mask, log_g_ratio }
        }
    }
}

/// Metropolis–Hastings acceptance probability of `current → candidate`.
pub fn acceptance_prob(
    current: &ThinnedNetworkState,
    candidate: &ThinnedNetworkState,
    params: &GibbsParams,
    log_g_ratio: f64,
) -> f64 {
    let exponent = -params.beta * (candidate.loss - current.loss)
        - params.eta * (candidate.size as f64 - current.size as f64)
        + log_g_ratio;
    if exponent >= 0.0 {
        1.0
    } else {
        exponent.exp()
    }
}

/// Recorded chain history.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTrace {
    /// Transition index (1-based) at which each state was recorded.
    pub steps: Vec<u64>,
    pub losses: Vec<f64>,
    pub sizes: Vec<usize>,
    /// Whether the transition that ended at the recorded step was accepted.
    pub accepted: Vec<bool>,
    pub accept_count: u64,
    pub propose_count: u64,
}

impl LossTrace {
    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.propose_count == 0 {
            0.0
        } else {
            self.accept_count as f64 / self.propose_count as f64
        }
    }

    fn record(&mut self, step: u64, state: &ThinnedNetworkState, accepted: bool) {
        self.steps.push(step);
        self.losses.push(state.loss);
        self.sizes.push(state.size);
        self.accepted.push(accepted);
    }
}

/// Runs a chain on an arbitrary loss landscape. Every transition evaluates
/// the candidate's loss exactly once.
pub fn run_chain_on<L: LossLandscape + ?Sized>(landscape: &L, config: &ChainConfig) -> Result<LossTrace> {
    config.validate()?;
    let mut rng = rng_from_seed(config.seed);
    let units = landscape.units();
    let chain_err = |step: u64, e: Error| Error::Chain {
        step,
        message: e.to_string(),
    };

    let mut current =
        ThinnedNetworkState::evaluate(landscape, DropoutMask::all_keep(units)).map_err(|e| chain_err(0, e))?;
    if !current.loss.is_finite() {
        return Err(chain_err(0, Error::Numeric("non-finite loss of the full network".into())));
    }

    let mut trace = LossTrace::default();
    for step in 1..=config.transitions {
        let proposal = propose(&current, config.kernel, &mut rng);
        let candidate = ThinnedNetworkState::evaluate(landscape, proposal.mask).map_err(|e| chain_err(step, e))?;
        if !candidate.loss.is_finite() {
            return Err(chain_err(step, Error::Numeric("non-finite candidate loss".into())));
        }
        trace.propose_count += 1;
        let a = acceptance_prob(&current, &candidate, &config.params, proposal.log_g_ratio);
        let theta: f64 = rng.random();
        let accepted = theta < a;
        if accepted {
            trace.accept_count += 1;
            current = candidate;
        }
        if step > config.burn_in && (step - config.burn_in - 1) % config.thin == 0 {
            trace.record(step, &current, accepted);
        }
    }
    Ok(trace)
}

/// Chain over the per-sample loss landscape of `sample`.
pub fn run_chain(
    net: &Network,
    sample: &Sample,
    sample_id: usize,
    config: &ChainConfig,
    oracle: &LossOracle,
) -> Result<LossTrace> {
    let landscape = SampleLandscape::new(net, sample, sample_id, oracle)?;
    run_chain_on(&landscape, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub sample_id: usize,
    pub mean_loss: f64,
    pub var_loss: f64,
    pub var_n: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Set when the loss trace is constant; shape statistics are then 0.
    pub degenerate: bool,
    /// Class probabilities of the full network.
    pub h_score: Vec<f64>,
    pub trace_len: usize,
    pub acceptance_rate: f64,
}

/// Summarizes a trace: unbiased mean/variance, size variance and shape
/// statistics of the losses.
pub fn estimate(trace: &LossTrace, h_score: Vec<f64>, sample_id: usize) -> Result<UncertaintyReport> {
    if trace.len() < 2 {
        return Err(Error::Parameter(format!("trace has {} states, need at least 2", trace.len())));
    }
    let SampleMoments {
        mean,
        variance,
        skewness,
        excess_kurtosis,
        degenerate,
    } = sample_moments(&trace.losses)?;
    let sizes: Vec<f64> = trace.sizes.iter().map(|&n| n as f64).collect();
    let var_n = sample_moments(&sizes)?.variance;
    Ok(UncertaintyReport {
        sample_id,
        mean_loss: mean,
        var_loss: variance,
        var_n,
        skewness,
        excess_kurtosis,
        degenerate,
        h_score,
        trace_len: trace.len(),
        acceptance_rate: trace.acceptance_rate(),
    })
}

/// Runs one chain per sample. Sample `i` uses seed
/// `derive_seed(config.seed, i)`, so the output does not depend on the
/// worker count or scheduling.
pub fn run_chains_parallel_traced(
    net: &Network,
    samples: &[Sample],
    config: &ChainConfig,
    oracle: &LossOracle,
    workers: usize,
) -> Result<Vec<(LossTrace, UncertaintyReport)>> {
    config.validate()?;
    let job = |(i, sample): (usize, &Sample)| -> Result<(LossTrace, UncertaintyReport)> {
        let tagged = |e: Error| Error::Sample {
            sample_id: i,
            source: Box::new(e),
        };
        let cfg = ChainConfig {
            seed: derive_seed(config.seed, i as u64),
            ..config.clone()
        };
        let trace = run_chain(net, sample, i, &cfg, oracle).map_err(tagged)?;
        let h = nn::predict_full(net, &sample.features).map_err(tagged)?;
        let report = estimate(&trace, h, i).map_err(tagged)?;
        Ok((trace, report))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    pool.install(|| samples.par_iter().enumerate().map(job).collect())
}

pub fn run_chains_parallel(
    net: &Network,
    samples: &[Sample],
    config: &ChainConfig,
    oracle: &LossOracle,
    workers: usize,
) -> Result<Vec<UncertaintyReport>> {
    Ok(run_chains_parallel_traced(net, samples, config, oracle, workers)?
        .into_iter()
        .map(|(_, r)| r)
        .collect())
}

pub fn write_trace_csv<W: Write>(trace: &LossTrace, mut out: W) -> Result<()> {
    writeln!(out, "step,loss,size,accepted")?;
    for i in 0..trace.len() {
        writeln!(
            out,
            "{},{},{},{}",
            trace.steps[i],
            trace.losses[i],
            trace.sizes[i],
            u8::from(trace.accepted[i])
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::MaskEnsemble;
    use crate::landscape::TableLandscape;
    use crate::nn::{Activation, DenseLayer};
    use proptest::prelude::*;

    fn state(mask: DropoutMask, loss: f64) -> ThinnedNetworkState {
        let size = mask.size();
        ThinnedNetworkState { mask, loss, size }
    }

    fn table(units: usize, seed: u64) -> TableLandscape {
        let mut rng = rng_from_seed(seed);
        TableLandscape::new(units, (0..1 << units).map(|_| rng.random_range(0.0..3.0)).collect()).unwrap()
    }

    #[test]
    fn single_flip_from_full_drops_one_unit() {
        let mut rng = rng_from_seed(1);
        let s = state(DropoutMask::all_keep(9), 0.5);
        for _ in 0..20 {
            let p = propose(&s, ProposalKernel::SingleFlip, &mut rng);
            assert_eq!(p.mask.size(), 8);
            assert_eq!(p.log_g_ratio, 0.0);
        }
    }

    #[test]
    fn single_flip_kernel_is_symmetric() {
        let mu = DropoutMask::from_bits(0b0110, 4);
        let v = DropoutMask::from_bits(0b0111, 4);
        let k = ProposalKernel::SingleFlip;
        assert_eq!(k.log_density(&mu, &v), k.log_density(&v, &mu));
        assert_eq!(k.log_density(&mu, &v), -(4f64).ln());
        assert_eq!(k.log_density(&mu, &DropoutMask::from_bits(0b1001, 4)), f64::NEG_INFINITY);
    }

    #[test]
    fn size_resample_hastings_ratio() {
        // C(4, 2) / C(4, 4) = 6
        let current = state(DropoutMask::all_keep(4), 1.0);
        let mut rng = rng_from_seed(2);
        let mut seen = false;
        for _ in 0..200 {
            let p = propose(&current, ProposalKernel::SizeResample, &mut rng);
            if p.mask.size() == 2 {
                assert!((p.log_g_ratio - 6f64.ln()).abs() < 1e-12);
                seen = true;
            }
        }
        assert!(seen);
        let k = ProposalKernel::SizeResample;
        let v = DropoutMask::from_bits(0b0101, 4);
        let ratio = k.log_density(&v, &current.mask) - k.log_density(&current.mask, &v);
        assert!((ratio - 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn proposals_follow_declared_density() {
        let units = 3;
        let draws = 80_000;
        let current = state(DropoutMask::from_bits(0b011, units), 0.0);
        for kernel in [ProposalKernel::SingleFlip, ProposalKernel::SizeResample] {
            let mut rng = rng_from_seed(44);
            let mut counts = [0usize; 8];
            for _ in 0..draws {
                counts[propose(&current, kernel, &mut rng).mask.to_bits().unwrap() as usize] += 1;
            }
            for (bits, &c) in counts.iter().enumerate() {
                let g = kernel.log_density(&current.mask, &DropoutMask::from_bits(bits as u64, units)).exp();
                let se = (g * (1.0 - g) / draws as f64).sqrt();
                assert!((c as f64 / draws as f64 - g).abs() <= 4.0 * se + 1e-12, "{kernel:?} {bits}");
            }
        }
    }

    #[test]
    fn acceptance_examples() {
        let p = GibbsParams::new(1.0, 0.0).unwrap();
        let a = state(DropoutMask::from_bits(0b01, 2), 1.0);
        let same = state(DropoutMask::from_bits(0b10, 2), 1.0);
        assert_eq!(acceptance_prob(&a, &same, &p, 0.0), 1.0);
        let uphill = state(DropoutMask::from_bits(0b10, 2), 3.0);
        assert!((acceptance_prob(&a, &uphill, &p, 0.0) - (-2f64).exp()).abs() < 1e-15);
        let downhill = state(DropoutMask::from_bits(0b10, 2), 0.2);
        assert_eq!(acceptance_prob(&a, &downhill, &GibbsParams::new(2.0, 0.5).unwrap(), 0.0), 1.0);
        // beta = 0: only the size term acts
        let bigger = state(DropoutMask::from_bits(0b11, 2), 9.0);
        let p0 = GibbsParams::new(0.0, 0.7).unwrap();
        assert!((acceptance_prob(&a, &bigger, &p0, 0.0) - (-0.7f64).exp()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn acceptance_ratio_matches_detailed_balance(
            lm in 0.0f64..5.0, lv in 0.0f64..5.0,
            bm in 0u64..256, bv in 0u64..256,
            beta in 0.0f64..4.0, eta in -1.0f64..1.0,
            resample in any::<bool>(),
        ) {
            let kernel = if resample { ProposalKernel::SizeResample } else { ProposalKernel::SingleFlip };
            let mu = state(DropoutMask::from_bits(bm, 8), lm);
            // single flip can only connect neighbours
            let v_bits = if resample { bv } else { bm ^ (1 << (bv % 8)) };
            let v = state(DropoutMask::from_bits(v_bits, 8), lv);
            let params = GibbsParams::new(beta, eta).unwrap();
            let g_mv = kernel.log_density(&mu.mask, &v.mask);
            let g_vm = kernel.log_density(&v.mask, &mu.mask);
            let a_mv = acceptance_prob(&mu, &v, &params, g_vm - g_mv);
            let a_vm = acceptance_prob(&v, &mu, &params, g_mv - g_vm);
            // A(mu->v)/A(v->mu) = p_v g(v->mu) / (p_mu g(mu->v))
            let log_target = -params.energy(lv, v.size) + params.energy(lm, mu.size) + g_vm - g_mv;
            prop_assert!(((a_mv / a_vm).ln() - log_target).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&a_mv));
        }
    }

    #[test]
    fn trace_bookkeeping() {
        let land = table(3, 1);
        let cfg = ChainConfig {
            transitions: 11,
            burn_in: 10,
            thin: 1,
            ..ChainConfig::default()
        };
        let t = run_chain_on(&land, &cfg).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.steps, vec![11]);
        let cfg = ChainConfig {
            transitions: 100,
            burn_in: 10,
            thin: 7,
            ..ChainConfig::default()
        };
        let t = run_chain_on(&land, &cfg).unwrap();
        assert_eq!(t.len() as u64, cfg.recorded_states());
        assert_eq!(t.propose_count, 100);
        assert!(t.accept_count <= t.propose_count);
        assert!(t.sizes.iter().zip(&t.losses).all(|(&n, l)| n <= 3 && l.is_finite()));
    }

    #[test]
    fn chain_is_deterministic() {
        let land = table(5, 3);
        let cfg = ChainConfig {
            transitions: 500,
            seed: 9,
            ..ChainConfig::default()
        };
        assert_eq!(run_chain_on(&land, &cfg).unwrap(), run_chain_on(&land, &cfg).unwrap());
    }

    #[test]
    fn invalid_configs() {
        let land = table(2, 0);
        let bad = ChainConfig {
            transitions: 10,
            burn_in: 10,
            ..ChainConfig::default()
        };
        assert!(matches!(run_chain_on(&land, &bad), Err(Error::Parameter(_))));
        let bad = ChainConfig {
            thin: 0,
            ..ChainConfig::default()
        };
        assert!(run_chain_on(&land, &bad).is_err());
    }

    struct Exploding;
    impl LossLandscape for Exploding {
        fn units(&self) -> usize {
            4
        }
        fn loss(&self, mask: &DropoutMask) -> Result<f64> {
            Ok(if mask.size() < 3 { f64::NAN } else { 1.0 })
        }
    }

    #[test]
    fn non_finite_loss_reports_step() {
        let cfg = ChainConfig {
            params: GibbsParams::new(0.0, 0.0).unwrap(),
            transitions: 100,
            burn_in: 0,
            ..ChainConfig::default()
        };
        match run_chain_on(&Exploding, &cfg) {
            Err(Error::Chain { step, .. }) => assert!(step >= 2),
            other => panic!("expected chain error, got {other:?}"),
        }
    }

    #[test]
    fn uniform_chain_size_histogram_is_binomial() {
        let land = table(8, 5);
        let cfg = ChainConfig {
            params: GibbsParams::new(0.0, 0.0).unwrap(),
            transitions: 200_000,
            burn_in: 1000,
            thin: 1,
            seed: 3,
            ..ChainConfig::default()
        };
        let t = run_chain_on(&land, &cfg).unwrap();
        let mut hist = [0f64; 9];
        t.sizes.iter().for_each(|&n| hist[n] += 1.0);
        let total = t.len() as f64;
        let binom = |k: u64| ln_binomial(8, k).exp() / 256.0;
        let tv: f64 = (0..=8).map(|k| (hist[k] / total - binom(k as u64)).abs()).sum::<f64>() / 2.0;
        assert!(tv <= 0.05, "tv = {tv}");
    }

    #[test]
    fn chain_matches_enumeration_on_tiny_net() {
        let mut rng = rng_from_seed(77);
        let mut uniform = |n: usize| (0..n).map(|_| rng.random_range(-1.5..1.5)).collect::<Vec<f64>>();
        let net = Network::new(vec![
            DenseLayer::new(3, 8, Activation::Relu, uniform(24), uniform(8)).unwrap(),
            DenseLayer::new(8, 3, Activation::Identity, uniform(24), uniform(3)).unwrap(),
        ])
        .unwrap();
        let sample = Sample::new(vec![0.5, -0.3, 0.8], 1);
        let oracle = LossOracle::true_label();
        let params = GibbsParams::new(1.0, 0.1).unwrap();
        let exact = crate::gibbs::enumerate(&net, &sample, 0, &params, &oracle).unwrap();
        let cfg = ChainConfig {
            params,
            transitions: 500 + 50_000 * 8,
            burn_in: 500,
            thin: 8,
            seed: 12,
            kernel: ProposalKernel::SingleFlip,
        };
        let trace = run_chain(&net, &sample, 0, &cfg, &oracle).unwrap();
        assert_eq!(trace.len(), 50_000);
        let report = estimate(&trace, vec![0.5, 0.5], 0).unwrap();
        assert!((report.var_loss - exact.var_loss).abs() < 0.05 * exact.var_loss, "{} vs {}", report.var_loss, exact.var_loss);
        assert!((report.mean_loss - exact.mean_loss).abs() < 0.05 * exact.mean_loss);
    }

    #[test]
    fn stationary_distribution_matches_gibbs() {
        let land = table(6, 8);
        let params = GibbsParams::new(1.5, -0.2).unwrap();
        let exact = MaskEnsemble::from_losses(6, land.losses.clone()).unwrap().probabilities(&params);
        for kernel in [ProposalKernel::SingleFlip, ProposalKernel::SizeResample] {
            // recover visited masks from (loss, size) pairs: random losses are distinct
            let cfg = ChainConfig {
                params,
                transitions: 100_500,
                burn_in: 500,
                thin: 1,
                kernel,
                seed: 4,
            };
            let t = run_chain_on(&land, &cfg).unwrap();
            let mut counts = vec![0f64; 64];
            for l in &t.losses {
                let idx = land.losses.iter().position(|x| x == l).unwrap();
                counts[idx] += 1.0;
            }
            let tv: f64 = counts.iter().zip(&exact).map(|(c, p)| (c / t.len() as f64 - p).abs()).sum::<f64>() / 2.0;
            assert!(tv <= 0.05, "{kernel:?}: tv = {tv}");
        }
    }

    #[test]
    fn estimate_examples() {
        let constant = LossTrace {
            losses: vec![0.4; 5],
            sizes: vec![3; 5],
            ..LossTrace::default()
        };
        let r = estimate(&constant, vec![1.0], 0).unwrap();
        assert_eq!((r.var_loss, r.skewness, r.var_n), (0.0, 0.0, 0.0));
        assert!(r.degenerate);
        let two = LossTrace {
            losses: vec![0.0, 2.0],
            sizes: vec![1, 2],
            ..LossTrace::default()
        };
        let r = estimate(&two, vec![1.0], 0).unwrap();
        assert_eq!((r.mean_loss, r.var_loss), (1.0, 2.0));
        let short = LossTrace {
            losses: vec![1.0],
            sizes: vec![1],
            ..LossTrace::default()
        };
        assert!(matches!(estimate(&short, vec![], 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn trace_csv_columns() {
        let t = LossTrace {
            steps: vec![3],
            losses: vec![0.25],
            sizes: vec![4],
            accepted: vec![true],
            accept_count: 1,
            propose_count: 3,
        };
        let mut buf = Vec::new();
        write_trace_csv(&t, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "step,loss,size,accepted\n3,0.25,4,1\n");
    }
}
