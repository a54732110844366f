use std::collections::{BTreeSet, VecDeque};

use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;

use lovme_core::data::{perturb, read_dataset_csv, synth_blobs, write_dataset_csv};
use lovme_core::eval::{band_roc, rejection_auc, roc_auc, EvalRecord};
use lovme_core::gibbs::MaskEnsemble;
use lovme_core::nn::{self, cross_entropy};
use lovme_core::sampler::{acceptance_prob, ThinnedNetworkState};
use lovme_core::trainer::train_logged;
use lovme_core::{Dataset, DropoutMask, GibbsParams, ProposalKernel, Sample, Split, TrainConfig};

fn records_strategy(max: usize) -> impl Strategy<Value = Vec<EvalRecord>> {
    prop::collection::vec((0u32..=20, any::<bool>(), 0u32..=8), 2..=max).prop_map(|raw| {
        let mut records: Vec<EvalRecord> = raw
            .into_iter()
            .enumerate()
            .map(|(i, (s, label, u))| EvalRecord {
                sample_id: i,
                score: f64::from(s) / 20.0,
                label,
                uncertainty: f64::from(u) / 16.0,
            })
            .collect();
        records[0].label = true;
        records[1].label = false;
        records
    })
}

fn u_statistic(records: &[EvalRecord]) -> BigRational {
    let pos: Vec<f64> = records.iter().filter(|r| r.label).map(|r| r.score).collect();
    let neg: Vec<f64> = records.iter().filter(|r| !r.label).map(|r| r.score).collect();
    let twice: i64 = pos
        .iter()
        .flat_map(|p| neg.iter().map(move |n| if p > n { 2 } else if p == n { 1 } else { 0 }))
        .sum();
    BigRational::new(BigInt::from(twice), BigInt::from(2 * pos.len() as i64 * neg.len() as i64))
}

proptest! {
    #[test]
    fn auc_is_the_u_statistic(records in records_strategy(200)) {
        let c = roc_auc(&records).unwrap();
        let exact = BigRational::new(BigInt::from(c.auc_numerator), BigInt::from(c.auc_denominator));
        prop_assert_eq!(exact, u_statistic(&records));
        for w in c.points.windows(2) {
            prop_assert!(w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr);
        }
    }

    #[test]
    fn bands_bracket_the_curve(records in records_strategy(120)) {
        let base = roc_auc(&records).unwrap().auc;
        let (opt, pes) = band_roc(&records).unwrap();
        prop_assert!(pes.auc <= base && base <= opt.auc);
    }

    #[test]
    fn curves_ignore_input_order(records in records_strategy(120), q in 0.0f64..0.5, shift in 0usize..120) {
        let mut shuffled = records.clone();
        shuffled.reverse();
        let k = shift % shuffled.len();
        shuffled.rotate_left(k);
        prop_assert_eq!(roc_auc(&records).unwrap(), roc_auc(&shuffled).unwrap());
        prop_assert_eq!(band_roc(&records).unwrap(), band_roc(&shuffled).unwrap());
        prop_assert_eq!(rejection_auc(&records, q).ok(), rejection_auc(&shuffled, q).ok());
    }

    /// Noisy records rank below every opposite-class clean record and carry
    /// higher uncertainty, so rejecting by uncertainty can only help.
    #[test]
    fn rejection_is_monotone_for_oracle_uncertainty(
        clean_pos in 2usize..30, clean_neg in 2usize..30, noisy_pos in 0usize..10, noisy_neg in 0usize..10,
        seed in any::<u64>(),
    ) {
        let mut rng = lovme_core::rng::rng_from_seed(seed);
        use rand::Rng;
        let mut records = Vec::new();
        let mut push = |label: bool, lo: f64, hi: f64, u: f64, rng: &mut lovme_core::rng::Rng| {
            let id = records.len();
            records.push(EvalRecord { sample_id: id, score: rng.random_range(lo..hi), label, uncertainty: u });
        };
        for _ in 0..clean_pos { let u = rng.random_range(0.0..0.5); push(true, 0.6, 0.9, u, &mut rng); }
        for _ in 0..clean_neg { let u = rng.random_range(0.0..0.5); push(false, 0.1, 0.4, u, &mut rng); }
        for _ in 0..noisy_pos { let u = rng.random_range(0.5..1.0); push(true, 0.0, 0.1, u, &mut rng); }
        for _ in 0..noisy_neg { let u = rng.random_range(0.5..1.0); push(false, 0.9, 1.0, u, &mut rng); }
        let n = records.len();
        let mut last = 0.0;
        for k in 0..n {
            let q = k as f64 / n as f64;
            match rejection_auc(&records, q) {
                Ok((c, _)) => {
                    prop_assert!(c.auc >= last - 1e-15, "q = {}: {} < {}", q, c.auc, last);
                    last = c.auc;
                }
                Err(_) => break,
            }
        }
    }

    #[test]
    fn loss_is_nonnegative(logits in prop::collection::vec(-50.0f64..50.0, 2..10), t in 0usize..10) {
        let t = t % logits.len();
        prop_assert!(cross_entropy(&logits, t) >= 0.0);
    }

    #[test]
    fn gibbs_is_normalized_and_reduces_to_uniform(
        losses in prop::collection::vec(0.0f64..10.0, 64), beta in 0.0f64..5.0, eta in -2.0f64..2.0,
    ) {
        let ensemble = MaskEnsemble::from_losses(6, losses.clone()).unwrap();
        let r = ensemble.gibbs(&GibbsParams::new(beta, eta).unwrap()).unwrap();
        prop_assert!((r.probability_sum - 1.0).abs() <= 1e-12);
        let uniform = ensemble.gibbs(&GibbsParams::new(0.0, 0.0).unwrap()).unwrap();
        let mean = losses.iter().sum::<f64>() / 64.0;
        let var = losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / 64.0;
        prop_assert!((uniform.mean_loss - mean).abs() <= 1e-12 * mean.max(1.0));
        prop_assert!((uniform.var_loss - var).abs() <= 1e-10 * var.max(1.0));
    }

    #[test]
    fn acceptance_ratio_identity_on_tables(
        losses in prop::collection::vec(0.0f64..6.0, 32), beta in 0.0f64..4.0, eta in -1.0f64..1.0,
        mu in 0u64..32, nu in 0u64..32, resample in any::<bool>(),
    ) {
        let kernel = if resample { ProposalKernel::SizeResample } else { ProposalKernel::SingleFlip };
        let params = GibbsParams::new(beta, eta).unwrap();
        let state = |b: u64| {
            let mask = DropoutMask::from_bits(b, 5);
            ThinnedNetworkState { size: mask.size(), loss: losses[b as usize], mask }
        };
        let (a, b) = (state(mu), state(nu));
        let log_g = |x: &ThinnedNetworkState, y: &ThinnedNetworkState| kernel.log_density(&x.mask, &y.mask);
        if log_g(&a, &b).is_finite() {
            let forward = acceptance_prob(&a, &b, &params, log_g(&b, &a) - log_g(&a, &b));
            let backward = acceptance_prob(&b, &a, &params, log_g(&a, &b) - log_g(&b, &a));
            let log_ratio = -params.energy(b.loss, b.size) + params.energy(a.loss, a.size) + log_g(&b, &a) - log_g(&a, &b);
            prop_assert!((forward.ln() - backward.ln() - log_ratio).abs() <= 1e-12 * log_ratio.abs().max(1.0));
        }
    }

    #[test]
    fn csv_round_trip(rows in prop::collection::vec((prop::collection::vec(-1e6f64..1e6, 3), 0usize..4), 1..30)) {
        let samples: Vec<Sample> = rows.into_iter().map(|(f, l)| Sample::new(f, l)).collect();
        let data = Dataset::new(samples, Split::Test, 4).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&data, &mut buf).unwrap();
        prop_assert_eq!(read_dataset_csv(buf.as_slice(), Split::Test, Some(4)).unwrap(), data);
    }

    #[test]
    fn perturbation_leaves_others_untouched(fraction in 0.0f64..=1.0, seed in any::<u64>()) {
        let samples = (0..40)
            .map(|i| Sample::new((0..25).map(|j| ((i * 7 + j * 3) % 11) as f64 / 11.0).collect(), i % 3))
            .collect();
        let data = Dataset::new(samples, Split::Test, 3).unwrap();
        let (out, ids) = perturb(&data, fraction, 20.0, 0.1, seed).unwrap();
        prop_assert_eq!(ids.len(), (fraction * 40.0).round() as usize);
        let ids: BTreeSet<usize> = ids.into_iter().collect();
        for (i, (a, b)) in data.samples.iter().zip(&out.samples).enumerate() {
            if !ids.contains(&i) {
                prop_assert_eq!(a, b);
            }
            prop_assert!(b.features.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

#[test]
fn single_flip_connects_all_masks_within_n_steps() {
    let units = 6;
    let kernel = ProposalKernel::SingleFlip;
    for start in 0..1u64 << units {
        let mut dist = vec![usize::MAX; 1 << units];
        dist[start as usize] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(b) = queue.pop_front() {
            let from = DropoutMask::from_bits(b, units);
            for c in 0..1u64 << units {
                let to = DropoutMask::from_bits(c, units);
                if dist[c as usize] == usize::MAX && kernel.log_density(&from, &to).is_finite() {
                    dist[c as usize] = dist[b as usize] + 1;
                    queue.push_back(c);
                }
            }
        }
        assert!(dist.iter().all(|&d| d <= units));
    }
}

#[test]
fn size_resample_reaches_every_mask_directly() {
    let units = 6;
    for a in 0..1u64 << units {
        for b in 0..1u64 << units {
            let g = ProposalKernel::SizeResample
                .log_density(&DropoutMask::from_bits(a, units), &DropoutMask::from_bits(b, units));
            assert!(g.is_finite());
        }
    }
}

#[test]
fn training_lowers_the_loss_on_blobs() {
    let (data, _) = synth_blobs(200, 3, 0.6, 0.0, 4).unwrap();
    let config = TrainConfig {
        hidden_widths: vec![16],
        epochs: 10,
        ..TrainConfig::default()
    };
    let log = train_logged(&config, &data).unwrap().log;
    assert!(log.last().unwrap().train_loss < log[0].train_loss);
}

#[test]
fn full_mask_forward_is_bitwise_maskless() {
    let (data, _) = synth_blobs(30, 2, 0.5, 0.0, 2).unwrap();
    let net = train_logged(
        &TrainConfig {
            hidden_widths: vec![5, 4],
            epochs: 2,
            ..TrainConfig::default()
        },
        &data,
    )
    .unwrap()
    .network;
    let all = DropoutMask::all_keep(nn::count_maskable_units(&net));
    for s in &data.samples {
        let a = nn::forward(&net, &all, &s.features).unwrap();
        let b = nn::forward_full(&net, &s.features).unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
