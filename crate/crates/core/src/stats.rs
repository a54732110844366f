//! Small statistics toolbox: compensated sums, weighted cumulants, sample
//! moments, two-sample Kolmogorov–Smirnov and Pearson correlation.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        iter.into_iter().for_each(|v| acc.add(v));
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<CompensatedSum>().value()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cumulants {
    pub mean: f64,
    pub variance: f64,
    pub third: f64,
    pub fourth: f64,
}

/// First four cumulants of a weighted point set (`κ₃ = μ₃`, `κ₄ = μ₄ − 3μ₂²`).
/// Weights must sum to one.
pub fn cumulants(values: &[f64], weights: &[f64]) -> Result<Cumulants> {
    if values.is_empty() {
        return Err(Error::Parameter("cumulants of an empty set".into()));
    }
    if values.len() != weights.len() {
        return Err(Error::Shape("values and weights differ in length".into()));
    }
    let total = compensated_sum(weights.iter().copied());
    if (total - 1.0).abs() > 1e-9 || weights.iter().any(|w| *w < 0.0) {
        return Err(Error::Parameter(format!("weights must be nonnegative and sum to 1 (got {total})")));
    }
    let mean = compensated_sum(values.iter().zip(weights).map(|(v, w)| v * w));
    let central = |k: i32| compensated_sum(values.iter().zip(weights).map(|(v, w)| w * (v - mean).powi(k)));
    let (m2, m3, m4) = (central(2), central(3), central(4));
    Ok(Cumulants {
        mean,
        variance: m2,
        third: m3,
        fourth: m4 - 3.0 * m2 * m2,
    })
}

/// Summary of an unweighted sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMoments {
    pub mean: f64,
    /// Unbiased (n − 1) variance.
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// True when the sample has zero spread; shape statistics are then 0.
    pub degenerate: bool,
}

pub fn sample_moments(values: &[f64]) -> Result<SampleMoments> {
    if values.len() < 2 {
        return Err(Error::Parameter(format!("need at least 2 values, got {}", values.len())));
    }
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    let central = |k: i32| compensated_sum(values.iter().map(|v| (v - mean).powi(k))) / n;
    let (m2, m3, m4) = (central(2), central(3), central(4));
    let variance = m2 * n / (n - 1.0);
    if m2 <= 0.0 || values.iter().all(|&v| v == values[0]) {
        return Ok(SampleMoments {
            mean,
            variance: 0.0,
            skewness: 0.0,
            excess_kurtosis: 0.0,
            degenerate: true,
        });
    }
    Ok(SampleMoments {
        mean,
        variance,
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Asymptotic Kolmogorov survival function `Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}`.
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov test with the Stephens small-sample
/// correction to the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Parameter("KS test needs two nonempty samples".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    let p_value = kolmogorov_survival((en + 0.12 + 0.11 / en) * d);
    Ok(KsResult { statistic: d, p_value })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    /// Two-sided p-value of the t test for zero correlation.
    pub p_value: f64,
    pub n: usize,
    pub degenerate: bool,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::Shape("pearson inputs differ in length".into()));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::Parameter(format!("pearson correlation needs n >= 3, got {n}")));
    }
    let mx = compensated_sum(x.iter().copied()) / n as f64;
    let my = compensated_sum(y.iter().copied()) / n as f64;
    let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let sxx = compensated_sum(x.iter().map(|a| (a - mx).powi(2)));
    let syy = compensated_sum(y.iter().map(|b| (b - my).powi(2)));
    if sxx <= 0.0 || syy <= 0.0 {
        return Ok(Correlation {
            r: 0.0,
            p_value: 1.0,
            n,
            degenerate: true,
        });
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let dof = (n - 2) as f64;
    let p_value = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * (dof / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, dof).expect("positive dof");
        2.0 * dist.sf(t.abs())
    };
    Ok(Correlation {
        r,
        p_value,
        n,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand_distr::{Distribution, Gamma, Normal};

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let values = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(values), 2.0);
    }

    #[test]
    fn symmetric_two_point_has_zero_third_cumulant() {
        let c = cumulants(&[-1.5, 1.5], &[0.5, 0.5]).unwrap();
        assert_eq!(c.third, 0.0);
        assert_eq!(c.variance, 2.25);
    }

    #[test]
    fn point_mass_has_no_spread() {
        let c = cumulants(&[3.0], &[1.0]).unwrap();
        assert_eq!((c.mean, c.variance, c.third, c.fourth), (3.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn weighted_four_point_set() {
        // exact rational evaluation: values (0,1,2,4), weights (1/8,1/4,1/2,1/8)
        // mean = 7/4, mu2 = 19/16, mu3 = 21/32, mu4 = 1141/256
        let c = cumulants(&[0.0, 1.0, 2.0, 4.0], &[0.125, 0.25, 0.5, 0.125]).unwrap();
        assert!((c.mean - 7.0 / 4.0).abs() < 1e-12);
        assert!((c.variance - 19.0 / 16.0).abs() < 1e-12);
        assert!((c.third - 21.0 / 32.0).abs() < 1e-12);
        let k4 = 1141.0 / 256.0 - 3.0 * (19.0f64 / 16.0).powi(2);
        assert!((c.fourth - k4).abs() < 1e-12);
    }

    #[test]
    fn cumulant_errors() {
        assert!(matches!(cumulants(&[], &[]), Err(Error::Parameter(_))));
        assert!(matches!(cumulants(&[1.0, 2.0], &[0.5, 0.6]), Err(Error::Parameter(_))));
    }

    #[test]
    fn two_point_sample_moments() {
        let m = sample_moments(&[0.0, 2.0]).unwrap();
        assert_eq!(m.mean, 1.0);
        assert_eq!(m.variance, 2.0);
    }

    #[test]
    fn constant_sample_is_degenerate() {
        let m = sample_moments(&[0.7; 10]).unwrap();
        assert!(m.degenerate);
        assert_eq!((m.variance, m.skewness), (0.0, 0.0));
        assert!(sample_moments(&[1.0]).is_err());
    }

    #[test]
    fn gamma_skewness() {
        // Gamma(shape k): skewness 2/sqrt(k), excess kurtosis 6/k
        let shape = 4.0;
        let dist = Gamma::new(shape, 0.5).unwrap();
        let mut rng = rng_from_seed(2024);
        let draws: Vec<f64> = (0..100_000).map(|_| dist.sample(&mut rng)).collect();
        let m = sample_moments(&draws).unwrap();
        let skew = 2.0 / f64::sqrt(shape);
        assert!((m.skewness - skew).abs() < 0.05 * skew, "{}", m.skewness);
        assert!((m.variance - shape * 0.25).abs() < 0.05 * shape * 0.25);
    }

    #[test]
    fn ks_same_and_shifted() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut rng = rng_from_seed(8);
        let a: Vec<f64> = (0..2000).map(|_| normal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..2000).map(|_| normal.sample(&mut rng)).collect();
        let c: Vec<f64> = b.iter().map(|v| v + 0.3).collect();
        assert!(ks_two_sample(&a, &b).unwrap().p_value > 0.01);
        assert!(ks_two_sample(&a, &c).unwrap().p_value < 1e-6);
        let r = ks_two_sample(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
    }

    #[test]
    fn kolmogorov_reference_values() {
        // standard table: Q(1.36) ~ 0.0494, Q(1.63) ~ 0.0098
        assert!((kolmogorov_survival(1.36) - 0.0494).abs() < 5e-4);
        assert!((kolmogorov_survival(1.63) - 0.0098).abs() < 5e-4);
    }

    #[test]
    fn pearson_extremes() {
        let p: Vec<f64> = (0..50).map(|i| i as f64 / 50.0).collect();
        let u: Vec<f64> = p.iter().map(|p| 0.3 * (1.0 - p)).collect();
        let c = pearson(&u, &p).unwrap();
        assert!((c.r + 1.0).abs() < 1e-12);
        assert_eq!(c.p_value, 0.0);
        let c = pearson(&[1.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.r, 0.0);
    }

    #[test]
    fn pearson_p_value_reference() {
        // reference values from scipy.stats.pearsonr
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        let y = [2.1, 1.9, 3.5, 3.0, 5.2, 4.1, 4.0, 6.3, 5.5, 7.0];
        let c = pearson(&x, &y).unwrap();
        assert!((c.r - 0.9096460975354477).abs() < 1e-12);
        assert!((c.p_value - 0.0002611451741004977).abs() < 1e-9);
    }
}
