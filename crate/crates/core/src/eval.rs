//! ROC/AUC evaluation with uncertainty bands and reject option.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{pearson, Correlation};

/// Binary evaluation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sample_id: usize,
    /// Classifier score for the positive class.
    pub score: f64,
    pub label: bool,
    /// Nonnegative uncertainty, used as a band half-width and for rejection.
    pub uncertainty: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// From `(0, 0)` at threshold `+inf` to `(1, 1)`.
    pub points: Vec<RocPoint>,
    pub auc: f64,
    /// AUC as the exact fraction `auc_numerator / auc_denominator`.
    pub auc_numerator: u128,
    pub auc_denominator: u128,
}

fn check_records(records: &[EvalRecord]) -> Result<(u64, u64)> {
    let mut pos = 0u64;
    let mut neg = 0u64;
    for r in records {
        if !r.score.is_finite() {
            return Err(Error::Evaluation(format!("sample {} has a non-finite score", r.sample_id)));
        }
        if !(r.uncertainty >= 0.0 && r.uncertainty.is_finite()) {
            return Err(Error::Evaluation(format!("sample {} has invalid uncertainty", r.sample_id)));
        }
        if r.label {
            pos += 1;
        } else {
            neg += 1;
        }
    }
    if pos == 0 || neg == 0 {
        return Err(Error::Evaluation(format!(
            "ROC needs both classes ({pos} positives, {neg} negatives)"
        )));
    }
    Ok((pos, neg))
}

/// Threshold sweep over distinct scores (ties form a single step), with the
/// trapezoidal area accumulated in integers.
pub fn roc_auc(records: &[EvalRecord]) -> Result<RocCurve> {
    let (pos, neg) = check_records(records)?;
    let mut order: Vec<&EvalRecord> = records.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut twice_area: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let threshold = order[i].score;
        let (tp_prev, fp_prev) = (tp, fp);
        while i < order.len() && order[i].score.total_cmp(&threshold) == Ordering::Equal {
            if order[i].label {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        twice_area += u128::from(fp - fp_prev) * u128::from(tp + tp_prev);
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    let denominator = 2 * u128::from(pos) * u128::from(neg);
    Ok(RocCurve {
        points,
        auc: twice_area as f64 / denominator as f64,
        auc_numerator: twice_area,
        auc_denominator: denominator,
    })
}

fn shifted(records: &[EvalRecord], towards_label: bool) -> Vec<EvalRecord> {
    records
        .iter()
        .map(|r| {
            let up = r.label == towards_label;
            let score = if up { r.score + r.uncertainty } else { r.score - r.uncertainty };
            EvalRecord {
                score: score.clamp(0.0, 1.0),
                ..r.clone()
            }
        })
        .collect()
}

/// Optimistic and pessimistic curves. The optimistic curve moves every
/// positive up and every negative down by its uncertainty (clamped to
/// `[0, 1]`); the pessimistic curve does the reverse.
pub fn band_roc(records: &[EvalRecord]) -> Result<(RocCurve, RocCurve)> {
    check_records(records)?;
    Ok((roc_auc(&shifted(records, true))?, roc_auc(&shifted(records, false))?))
}

fn rejection_order(records: &[EvalRecord]) -> Vec<&EvalRecord> {
    let mut order: Vec<&EvalRecord> = records.iter().collect();
    order.sort_by(|a, b| {
        b.uncertainty
            .total_cmp(&a.uncertainty)
            .then(a.sample_id.cmp(&b.sample_id))
    });
    order
}

/// Number of records rejected at quantile `q`: `⌈q·n⌉`.
pub fn rejection_count(q: f64, n: usize) -> usize {
    // guard against q·n landing a hair above an integer
    ((q * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Drops the `⌈q·n⌉` most uncertain records (ties by `sample_id`).
pub fn reject_quantile(records: &[EvalRecord], q: f64) -> Result<Vec<EvalRecord>> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::Parameter(format!("rejection quantile {q} outside [0, 1)")));
    }
    let k = rejection_count(q, records.len());
    let mut kept: Vec<EvalRecord> = rejection_order(records).into_iter().skip(k).cloned().collect();
    kept.sort_by_key(|r| r.sample_id);
    Ok(kept)
}

/// Drops every record whose uncertainty exceeds `tau`.
pub fn reject_threshold(records: &[EvalRecord], tau: f64) -> Vec<EvalRecord> {
    records.iter().filter(|r| r.uncertainty <= tau).cloned().collect()
}

pub fn rejection_auc(records: &[EvalRecord], q: f64) -> Result<(RocCurve, f64)> {
    let kept = reject_quantile(records, q)?;
    let fraction = kept.len() as f64 / records.len() as f64;
    Ok((roc_auc(&kept)?, fraction))
}

/// How raw loss variances are turned into band half-widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyScale {
    /// Min-max normalized to `[0, 1]` over the evaluation set.
    #[default]
    MinMax,
    Raw,
    StdDev,
}

pub fn scale_uncertainty(values: &[f64], scale: UncertaintyScale) -> Vec<f64> {
    match scale {
        UncertaintyScale::Raw => values.to_vec(),
        UncertaintyScale::StdDev => values.iter().map(|v| v.max(0.0).sqrt()).collect(),
        UncertaintyScale::MinMax => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !(hi > lo) {
                return vec![0.0; values.len()];
            }
            values.iter().map(|v| (v - lo) / (hi - lo)).collect()
        }
    }
}

/// Multiclass record: full probability vector plus uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassRecord {
    pub sample_id: usize,
    pub probs: Vec<f64>,
    pub label: usize,
    pub uncertainty: f64,
}

/// One-vs-rest reduction onto `target_class`.
pub fn multiclass_to_binary(records: &[MulticlassRecord], target_class: usize) -> Result<Vec<EvalRecord>> {
    records
        .iter()
        .map(|r| {
            let score = *r.probs.get(target_class).ok_or_else(|| {
                Error::Parameter(format!("class {target_class} outside {} classes", r.probs.len()))
            })?;
            Ok(EvalRecord {
                sample_id: r.sample_id,
                score,
                label: r.label == target_class,
                uncertainty: r.uncertainty,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroAuc {
    pub per_class: Vec<f64>,
    pub macro_auc: f64,
}

fn class_count(records: &[MulticlassRecord]) -> Result<usize> {
    let k = records
        .first()
        .map(|r| r.probs.len())
        .ok_or_else(|| Error::Evaluation("no records".into()))?;
    if records.iter().any(|r| r.probs.len() != k) {
        return Err(Error::Evaluation("records disagree on class count".into()));
    }
    Ok(k)
}

fn macro_of<F>(records: &[MulticlassRecord], auc: F) -> Result<MacroAuc>
where
    F: Fn(&[EvalRecord]) -> Result<f64>,
{
    let k = class_count(records)?;
    let per_class = (0..k)
        .map(|c| auc(&multiclass_to_binary(records, c)?))
        .collect::<Result<Vec<_>>>()?;
    let macro_auc = per_class.iter().sum::<f64>() / k as f64;
    Ok(MacroAuc { per_class, macro_auc })
}

/// Per-class one-vs-rest AUCs and their unweighted mean.
pub fn macro_roc_auc(records: &[MulticlassRecord]) -> Result<MacroAuc> {
    macro_of(records, |r| Ok(roc_auc(r)?.auc))
}

pub fn macro_band_auc(records: &[MulticlassRecord]) -> Result<(MacroAuc, MacroAuc)> {
    Ok((
        macro_of(records, |r| Ok(band_roc(r)?.0.auc))?,
        macro_of(records, |r| Ok(band_roc(r)?.1.auc))?,
    ))
}

/// Rejects the most uncertain records once, then computes the macro AUC on
/// the remainder. Returns the kept fraction alongside.
pub fn macro_rejection_auc(records: &[MulticlassRecord], q: f64) -> Result<(MacroAuc, f64)> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::Parameter(format!("rejection quantile {q} outside [0, 1)")));
    }
    let mut order: Vec<&MulticlassRecord> = records.iter().collect();
    order.sort_by(|a, b| {
        b.uncertainty
            .total_cmp(&a.uncertainty)
            .then(a.sample_id.cmp(&b.sample_id))
    });
    let k = rejection_count(q, records.len());
    let mut kept: Vec<MulticlassRecord> = order.into_iter().skip(k).cloned().collect();
    kept.sort_by_key(|r| r.sample_id);
    let fraction = kept.len() as f64 / records.len() as f64;
    Ok((macro_roc_auc(&kept)?, fraction))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub all: Correlation,
    /// Restricted to pairs with expected correct-class probability below
    /// `restrict_below`; `None` with fewer than 3 such pairs.
    pub restricted: Option<Correlation>,
    pub restrict_below: f64,
}

/// Pearson correlation between uncertainty `u` and ensemble-mean
/// correct-class probability, over `(u, p)` pairs.
pub fn uncertainty_correlation(pairs: &[(f64, f64)], restrict_below: f64) -> Result<CorrelationReport> {
    let (u, p): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let all = pearson(&u, &p)?;
    let (ru, rp): (Vec<f64>, Vec<f64>) = pairs.iter().copied().filter(|&(_, p)| p < restrict_below).unzip();
    let restricted = if ru.len() >= 3 { Some(pearson(&ru, &rp)?) } else { None };
    Ok(CorrelationReport {
        all,
        restricted,
        restrict_below,
    })
}

pub fn write_scatter_csv<W: Write>(pairs: &[(f64, f64)], mut out: W) -> Result<()> {
    writeln!(out, "uncertainty,mean_p_correct")?;
    for (u, p) in pairs {
        writeln!(out, "{u},{p}")?;
    }
    Ok(())
}

pub fn write_roc_csv<W: Write>(curve: &RocCurve, mut out: W) -> Result<()> {
    writeln!(out, "threshold,fpr,tpr")?;
    for p in &curve.points {
        writeln!(out, "{},{},{}", p.threshold, p.fpr, p.tpr)?;
    }
    Ok(())
}
