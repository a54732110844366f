//! End-to-end experiment orchestration: data → train → estimators → eval,
//! with a manifest that pins every seed and hashes every output.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{ground_truth_with_seeds, mc_dropout_all, GroundTruthReport};
use crate::data::{load_dataset_csv, load_idx, perturb, synth_blobs, write_dataset_csv};
use crate::error::{Error, Result};
use crate::eval::{
    macro_band_auc, macro_rejection_auc, macro_roc_auc, scale_uncertainty, uncertainty_correlation, write_roc_csv,
    write_scatter_csv, multiclass_to_binary, roc_auc, CorrelationReport, MulticlassRecord, UncertaintyScale,
};
use crate::gibbs::{GibbsParams, MaskEnsemble, OracleResult};
use crate::landscape::{LossOracle, LossOracleMode, SampleLandscape};
use crate::nn::{self, Network, Sample};
use crate::rng::{derive_named_seed, derive_seed};
use crate::sampler::{run_chain_on, run_chains_parallel_traced, write_trace_csv, ChainConfig, ProposalKernel, UncertaintyReport};
use crate::stats::sample_moments;
use crate::trainer::{train_logged, write_log_csv, Dataset, Split, TrainConfig};
use crate::weights;

pub const MANIFEST_SCHEMA: &str = "lovme-manifest/1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Gaussian blobs; label noise is applied to both splits.
    Synthetic {
        n_train: usize,
        n_test: usize,
        classes: usize,
        noise_sigma: f64,
        label_noise_rate: f64,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default)]
        train_limit: Option<usize>,
        #[serde(default)]
        test_limit: Option<usize>,
    },
    Csv {
        train: PathBuf,
        test: PathBuf,
        #[serde(default)]
        class_count: Option<usize>,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            n_train: 600,
            n_test: 300,
            classes: 3,
            noise_sigma: 0.8,
            label_noise_rate: 0.1,
        }
    }
}

/// Rotation plus pixel noise on a random fraction of the test images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbSection {
    pub fraction: f64,
    pub rotation_max_deg: f64,
    pub noise_sigma: f64,
}

impl Default for PerturbSection {
    fn default() -> Self {
        Self {
            fraction: 0.1,
            rotation_max_deg: 30.0,
            noise_sigma: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
    pub perturb: Option<PerturbSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Lovme,
    McDropout,
    GroundTruth,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Lovme => "lovme",
            Estimator::McDropout => "mc_dropout",
            Estimator::GroundTruth => "ground_truth",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LovmeSection {
    /// `None` picks `β = 1 / (mean full-network test loss)`.
    pub beta: Option<f64>,
    pub eta: f64,
    pub transitions: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub kernel: ProposalKernel,
    pub write_traces: bool,
}

impl Default for LovmeSection {
    fn default() -> Self {
        let chain = ChainConfig::default();
        Self {
            beta: None,
            eta: 0.0,
            transitions: chain.transitions,
            burn_in: chain.burn_in,
            thin: chain.thin,
            kernel: chain.kernel,
            write_traces: true,
        }
    }
}

impl LovmeSection {
    pub fn chain_config(&self, beta: f64, seed: u64) -> Result<ChainConfig> {
        let config = ChainConfig {
            params: GibbsParams::new(beta, self.eta)?,
            transitions: self.transitions,
            burn_in: self.burn_in,
            thin: self.thin,
            kernel: self.kernel,
            seed,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McDropoutSection {
    /// Retain probability.
    pub p: f64,
    pub draws: usize,
    pub write_traces: bool,
}

impl Default for McDropoutSection {
    fn default() -> Self {
        Self {
            p: 0.5,
            draws: 5000,
            write_traces: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundTruthSection {
    pub members: usize,
}

impl Default for GroundTruthSection {
    fn default() -> Self {
        Self { members: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub rejection_quantiles: Vec<f64>,
    pub uncertainty_scale: UncertaintyScale,
    /// Correlation is also reported on samples whose ensemble-mean
    /// correct-class probability is below this.
    pub restrict_below: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            rejection_quantiles: vec![0.1],
            uncertainty_scale: UncertaintyScale::MinMax,
            restrict_below: 0.99,
        }
    }
}

/// Exact-vs-chain comparison on a small network trained for the purpose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleCheckSection {
    pub hidden_widths: Vec<usize>,
    pub samples: usize,
    /// `[β, η]` pairs.
    pub grid: Vec<[f64; 2]>,
    pub transitions: u64,
    pub burn_in: u64,
    /// Keep odd: at β = η = 0 the single-flip walk has period 2.
    pub thin: u64,
    pub kernel: ProposalKernel,
}

impl Default for OracleCheckSection {
    fn default() -> Self {
        Self {
            hidden_widths: vec![8],
            samples: 3,
            grid: vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.2]],
            transitions: 100_000,
            burn_in: 1000,
            thin: 3,
            kernel: ProposalKernel::SingleFlip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    pub data: DataSection,
    /// `train.seed` is replaced by the derived training seed.
    pub train: TrainConfig,
    pub oracle: LossOracleMode,
    pub estimators: Vec<Estimator>,
    pub lovme: LovmeSection,
    pub mc_dropout: McDropoutSection,
    pub ground_truth: GroundTruthSection,
    pub eval: EvalSection,
    pub oracle_check: Option<OracleCheckSection>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataSection::default(),
            train: TrainConfig::default(),
            oracle: LossOracleMode::default(),
            estimators: vec![Estimator::Lovme, Estimator::McDropout, Estimator::GroundTruth],
            lovme: LovmeSection::default(),
            mc_dropout: McDropoutSection::default(),
            ground_truth: GroundTruthSection::default(),
            eval: EvalSection::default(),
            oracle_check: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_table(table)
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    /// Reads a TOML config (or defaults) and applies `key.path=value`
    /// overrides on top.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match &self.data.source {
            DataSource::Synthetic {
                n_train,
                n_test,
                classes,
                label_noise_rate,
                ..
            } => {
                if *classes < 2 || n_train < classes || n_test < classes {
                    return bad(format!("synthetic data needs >= 2 classes and n >= classes (got {classes})"));
                }
                if !(0.0..=1.0).contains(label_noise_rate) {
                    return bad(format!("label_noise_rate {label_noise_rate} outside [0, 1]"));
                }
            }
            DataSource::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                ..
            } => {
                for p in [train_images, train_labels, test_images, test_labels] {
                    if !p.exists() {
                        return bad(format!("{} does not exist", p.display()));
                    }
                }
            }
            DataSource::Csv { train, test, .. } => {
                for p in [train, test] {
                    if !p.exists() {
                        return bad(format!("{} does not exist", p.display()));
                    }
                }
            }
        }
        if let Some(p) = &self.data.perturb {
            if !(0.0..=1.0).contains(&p.fraction) {
                return bad(format!("perturbation fraction {} outside [0, 1]", p.fraction));
            }
        }
        if self.estimators.is_empty() {
            return bad("no estimators selected".into());
        }
        if self.eval.rejection_quantiles.iter().any(|q| !(0.0..1.0).contains(q)) {
            return bad("rejection quantiles must lie in [0, 1)".into());
        }
        let as_config = |e: Error| Error::Config(e.to_string());
        self.train.validate().map_err(as_config)?;
        self.lovme.chain_config(self.lovme.beta.unwrap_or(1.0), 0).map_err(as_config)?;
        if self.estimators.contains(&Estimator::McDropout)
            && (!(self.mc_dropout.p > 0.0 && self.mc_dropout.p <= 1.0) || self.mc_dropout.draws < 2)
        {
            return bad("mc_dropout needs p in (0, 1] and at least 2 draws".into());
        }
        if self.estimators.contains(&Estimator::GroundTruth) && self.ground_truth.members < 2 {
            return bad("ground_truth needs at least 2 members".into());
        }
        Ok(())
    }
}

/// Sets `key.path` in a TOML table from `key.path=value`. The value is parsed
/// as a TOML literal and falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut node = table;
    for part in parents {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{part}` is not a table")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

/// Every seed used by a run, all derived from the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub master: u64,
    pub data_train: u64,
    pub data_test: u64,
    pub perturb: u64,
    pub train: u64,
    pub chain: u64,
    pub mc_dropout: u64,
    pub oracle: u64,
    pub ground_truth_members: Vec<u64>,
    pub oracle_check_train: u64,
    pub oracle_check_chain: u64,
}

impl SeedRecord {
    pub fn derive(config: &ExperimentConfig) -> Self {
        let m = config.seed;
        let gt = derive_named_seed(m, "ground-truth");
        let members = if config.estimators.contains(&Estimator::GroundTruth) {
            (0..config.ground_truth.members as u64).map(|k| derive_seed(gt, k)).collect()
        } else {
            Vec::new()
        };
        Self {
            master: m,
            data_train: derive_named_seed(m, "data-train"),
            data_test: derive_named_seed(m, "data-test"),
            perturb: derive_named_seed(m, "perturb"),
            train: derive_named_seed(m, "train"),
            chain: derive_named_seed(m, "chain"),
            mc_dropout: derive_named_seed(m, "mc-dropout"),
            oracle: derive_named_seed(m, "oracle"),
            ground_truth_members: members,
            oracle_check_train: derive_named_seed(m, "oracle-check-train"),
            oracle_check_chain: derive_named_seed(m, "oracle-check-chain"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub train: Dataset,
    pub test: Dataset,
    /// Test samples whose label was flipped (synthetic data only).
    pub label_noise_ids: Vec<usize>,
    /// Test samples that were rotated and noised.
    pub perturbed_ids: Vec<usize>,
}

fn with_class_count(data: Dataset, classes: usize) -> Result<Dataset> {
    Dataset::new(data.samples, data.split, classes)
}

pub fn prepare_data(config: &ExperimentConfig, seeds: &SeedRecord) -> Result<PreparedData> {
    let (train, mut test, label_noise_ids) = match &config.data.source {
        DataSource::Synthetic {
            n_train,
            n_test,
            classes,
            noise_sigma,
            label_noise_rate,
        } => {
            let (mut train, _) = synth_blobs(*n_train, *classes, *noise_sigma, *label_noise_rate, seeds.data_train)?;
            train.split = Split::Train;
            let (test, noised) = synth_blobs(*n_test, *classes, *noise_sigma, *label_noise_rate, seeds.data_test)?;
            (train, test, noised)
        }
        DataSource::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            train_limit,
            test_limit,
        } => {
            let mut train = load_idx(train_images, train_labels, *train_limit)?;
            train.split = Split::Train;
            let test = load_idx(test_images, test_labels, *test_limit)?;
            let classes = train.class_count.max(test.class_count);
            (with_class_count(train, classes)?, with_class_count(test, classes)?, Vec::new())
        }
        DataSource::Csv {
            train,
            test,
            class_count,
        } => {
            let train = load_dataset_csv(train, Split::Train, *class_count)?;
            let test = load_dataset_csv(test, Split::Test, *class_count)?;
            let classes = train.class_count.max(test.class_count);
            (with_class_count(train, classes)?, with_class_count(test, classes)?, Vec::new())
        }
    };
    if train.input_dim() != test.input_dim() {
        return Err(Error::Shape(format!(
            "train has {} features, test has {}",
            train.input_dim(),
            test.input_dim()
        )));
    }
    let mut perturbed_ids = Vec::new();
    if let Some(p) = &config.data.perturb {
        let (t, ids) = perturb(&test, p.fraction, p.rotation_max_deg, p.noise_sigma, seeds.perturb)?;
        test = t;
        perturbed_ids = ids;
    }
    Ok(PreparedData {
        train,
        test,
        label_noise_ids,
        perturbed_ids,
    })
}

/// Loss oracle for a run; the random-label stream gets its own seed.
pub fn resolve_oracle(mode: LossOracleMode, seeds: &SeedRecord) -> LossOracle {
    LossOracle {
        mode,
        seed: if mode == LossOracleMode::RandomLabel { seeds.oracle } else { 0 },
    }
}

/// `1 / mean full-network loss` over `samples`, the default inverse temperature.
pub fn default_beta(net: &Network, samples: &[Sample], oracle: &LossOracle) -> Result<f64> {
    let mut losses = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let target = oracle.target(net, s, i)?;
        losses.push(nn::cross_entropy(&nn::forward_full(net, &s.features)?, target));
    }
    let mean = crate::stats::compensated_sum(losses.iter().copied()) / losses.len().max(1) as f64;
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::Numeric(format!("mean test loss {mean} gives no usable default beta")));
    }
    Ok(1.0 / mean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownSummary {
    pub n: usize,
    pub auc: f64,
    pub auc_optimistic: f64,
    pub auc_pessimistic: f64,
    pub per_class_auc: Vec<f64>,
    /// Keyed by the rejection quantile.
    pub auc_rejected: BTreeMap<String, f64>,
    pub kept_fraction: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub estimator: String,
    pub uncertainty_scale: UncertaintyScale,
    pub pooled: BreakdownSummary,
    pub perturbed_only: Option<BreakdownSummary>,
    /// Restricted-subset correlation with the ensemble ground truth when
    /// available, otherwise the correlation over all samples.
    pub pearson_r: Option<f64>,
    pub correlation: Option<CorrelationReport>,
    pub notes: Vec<String>,
}

/// Joins reports with labels into multiclass records, scaling `Var[L]` into
/// band half-widths.
pub fn records_from_reports(
    reports: &[UncertaintyReport],
    samples: &[Sample],
    scale: UncertaintyScale,
) -> Result<Vec<MulticlassRecord>> {
    let raw: Vec<f64> = reports.iter().map(|r| r.var_loss).collect();
    let scaled = scale_uncertainty(&raw, scale);
    reports
        .iter()
        .zip(scaled)
        .map(|(r, u)| {
            let s = samples
                .get(r.sample_id)
                .ok_or_else(|| Error::Evaluation(format!("report for unknown sample {}", r.sample_id)))?;
            Ok(MulticlassRecord {
                sample_id: r.sample_id,
                probs: r.h_score.clone(),
                label: s.label,
                uncertainty: u,
            })
        })
        .collect()
}

fn breakdown(records: &[MulticlassRecord], quantiles: &[f64]) -> Result<BreakdownSummary> {
    let base = macro_roc_auc(records)?;
    let (opt, pes) = macro_band_auc(records)?;
    let mut auc_rejected = BTreeMap::new();
    let mut kept_fraction = BTreeMap::new();
    for &q in quantiles {
        let (auc, kept) = macro_rejection_auc(records, q)?;
        auc_rejected.insert(q.to_string(), auc.macro_auc);
        kept_fraction.insert(q.to_string(), kept);
    }
    Ok(BreakdownSummary {
        n: records.len(),
        auc: base.macro_auc,
        auc_optimistic: opt.macro_auc,
        auc_pessimistic: pes.macro_auc,
        per_class_auc: base.per_class,
        auc_rejected,
        kept_fraction,
    })
}

pub fn evaluate_reports(
    estimator: &str,
    reports: &[UncertaintyReport],
    samples: &[Sample],
    ground_truth: Option<&GroundTruthReport>,
    perturbed_ids: &[usize],
    section: &EvalSection,
) -> Result<EvalSummary> {
    let records = records_from_reports(reports, samples, section.uncertainty_scale)?;
    let pooled = breakdown(&records, &section.rejection_quantiles)?;
    let mut notes = Vec::new();
    let perturbed_only = if perturbed_ids.is_empty() {
        None
    } else {
        let ids: BTreeSet<usize> = perturbed_ids.iter().copied().collect();
        let subset: Vec<MulticlassRecord> = records.iter().filter(|r| ids.contains(&r.sample_id)).cloned().collect();
        match breakdown(&subset, &section.rejection_quantiles) {
            Ok(b) => Some(b),
            Err(Error::Evaluation(m)) => {
                notes.push(format!("perturbed-only breakdown skipped: {m}"));
                None
            }
            Err(e) => return Err(e),
        }
    };
    let correlation = match ground_truth {
        Some(gt) => {
            let pairs = correlation_pairs(reports, gt)?;
            Some(uncertainty_correlation(&pairs, section.restrict_below)?)
        }
        None => None,
    };
    let pearson_r = correlation
        .as_ref()
        .map(|c| c.restricted.as_ref().map_or(c.all.r, |r| r.r));
    Ok(EvalSummary {
        estimator: estimator.to_string(),
        uncertainty_scale: section.uncertainty_scale,
        pooled,
        perturbed_only,
        pearson_r,
        correlation,
        notes,
    })
}

/// `(Var[L], ensemble-mean P(correct))` for every sample.
pub fn correlation_pairs(reports: &[UncertaintyReport], gt: &GroundTruthReport) -> Result<Vec<(f64, f64)>> {
    reports
        .iter()
        .map(|r| {
            let g = gt
                .samples
                .get(r.sample_id)
                .filter(|g| g.sample_id == r.sample_id)
                .ok_or_else(|| Error::Evaluation(format!("no ground truth for sample {}", r.sample_id)))?;
            Ok((r.var_loss, g.mean_p_correct))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheckRow {
    pub sample_id: usize,
    pub beta: f64,
    pub eta: f64,
    pub oracle: OracleResult,
    pub chain_mean_loss: f64,
    pub chain_var_loss: f64,
    pub rel_err_mean: f64,
    pub rel_err_var: f64,
    pub acceptance_rate: f64,
}

fn rel_err(estimate: f64, exact: f64) -> f64 {
    if exact == 0.0 {
        estimate.abs()
    } else {
        (estimate - exact).abs() / exact.abs()
    }
}

/// Exact enumeration next to an MCMC estimate for every sample and grid point.
pub fn oracle_check(
    net: &Network,
    samples: &[Sample],
    grid: &[GibbsParams],
    template: &ChainConfig,
    oracle: &LossOracle,
) -> Result<Vec<OracleCheckRow>> {
    let mut rows = Vec::new();
    for (i, sample) in samples.iter().enumerate() {
        let landscape = SampleLandscape::new(net, sample, i, oracle)?;
        let ensemble = MaskEnsemble::enumerate(&landscape)?;
        for (g, params) in grid.iter().enumerate() {
            let exact = ensemble.gibbs(params)?;
            let config = ChainConfig {
                params: *params,
                seed: derive_seed(derive_seed(template.seed, i as u64), g as u64),
                ..template.clone()
            };
            let trace = run_chain_on(&landscape, &config)?;
            let m = sample_moments(&trace.losses)?;
            rows.push(OracleCheckRow {
                sample_id: i,
                beta: params.beta,
                eta: params.eta,
                oracle: exact,
                chain_mean_loss: m.mean,
                chain_var_loss: m.variance,
                rel_err_mean: rel_err(m.mean, exact.mean_loss),
                rel_err_var: rel_err(m.variance, exact.var_loss),
                acceptance_rate: trace.acceptance_rate(),
            });
        }
    }
    Ok(rows)
}

pub fn format_oracle_table(rows: &[OracleCheckRow]) -> String {
    let mut out = String::from(
        "| sample | beta | eta | E[L] exact | E[L] chain | rel err | Var[L] exact | Var[L] chain | rel err | accept |\n\
         |---|---|---|---|---|---|---|---|---|---|\n",
    );
    for r in rows {
        out.push_str(&format!(
            "| {} | {} | {} | {:.6} | {:.6} | {:.4} | {:.6} | {:.6} | {:.4} | {:.3} |\n",
            r.sample_id,
            r.beta,
            r.eta,
            r.oracle.mean_loss,
            r.chain_mean_loss,
            r.rel_err_mean,
            r.oracle.var_loss,
            r.chain_var_loss,
            r.rel_err_var,
            r.acceptance_rate
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub version: String,
    pub status: RunStatus,
    pub config: ExperimentConfig,
    pub seeds: SeedRecord,
    pub resolved_beta: Option<f64>,
    /// What happens to outputs already written when a stage fails.
    pub on_error: String,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    /// SHA-256 of every output file, keyed by path relative to the run
    /// directory.
    pub outputs: BTreeMap<String, String>,
}

const CLEANUP_POLICY: &str =
    "partial outputs are kept in place; status, failed_stage and error identify the failing stage";

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(Error::Config(format!("unsupported manifest schema {}", m.schema)));
        }
        Ok(m)
    }
}

struct Artifacts {
    root: PathBuf,
}

impl Artifacts {
    fn write(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, bytes)?;
        Ok(())
    }

    fn write_json<T: Serialize + ?Sized>(&self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    fn write_with<F>(&self, rel: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(rel, &buf)
    }
}

/// SHA-256 of every file under `root` except the manifest, keyed by
/// `/`-separated relative path.
pub fn hash_outputs(root: &Path) -> Result<BTreeMap<String, String>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(&path, root, out)?;
                continue;
            }
            let rel = path
                .strip_prefix(root)
                .expect("walked path lies under root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            if rel == MANIFEST_FILE {
                continue;
            }
            out.insert(rel, hex::encode(Sha256::digest(fs::read(&path)?)));
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out)?;
    Ok(out)
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })
}

/// Runs the whole pipeline into `out_dir` and returns the final manifest.
/// `workers` only affects speed, never the outputs.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path, workers: usize) -> Result<Manifest> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let out = Artifacts {
        root: out_dir.to_path_buf(),
    };
    let mut manifest = Manifest {
        schema: MANIFEST_SCHEMA.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        status: RunStatus::Running,
        config: config.clone(),
        seeds: SeedRecord::derive(config),
        resolved_beta: None,
        on_error: CLEANUP_POLICY.to_string(),
        failed_stage: None,
        error: None,
        outputs: BTreeMap::new(),
    };
    out.write_json(MANIFEST_FILE, &manifest)?;

    let result = run_stages(config, &out, workers, &mut manifest);
    match &result {
        Ok(()) => {
            manifest.status = RunStatus::Complete;
            manifest.outputs = hash_outputs(out_dir)?;
        }
        Err(e) => {
            manifest.status = RunStatus::Failed;
            if let Error::Stage { stage, source } = e {
                manifest.failed_stage = Some(stage.to_string());
                manifest.error = Some(source.to_string());
            } else {
                manifest.error = Some(e.to_string());
            }
        }
    }
    out.write_json(MANIFEST_FILE, &manifest)?;
    result.map(|()| manifest)
}

fn run_stages(config: &ExperimentConfig, out: &Artifacts, workers: usize, manifest: &mut Manifest) -> Result<()> {
    let seeds = manifest.seeds.clone();
    let data = stage("data", prepare_data(config, &seeds))?;
    stage("data", (|| {
        out.write_with("data/test.csv", |w| write_dataset_csv(&data.test, w))?;
        out.write_json(
            "data/ids.json",
            &serde_json::json!({
                "label_noise_ids": data.label_noise_ids,
                "perturbed_ids": data.perturbed_ids,
            }),
        )
    })())?;

    let train_config = TrainConfig {
        seed: seeds.train,
        ..config.train.clone()
    };
    let outcome = stage("train", train_logged(&train_config, &data.train))?;
    let net = outcome.network;
    stage("train", (|| {
        out.write("weights.tnlw", &weights::encode(&net))?;
        out.write_with("train_log.csv", |w| write_log_csv(&outcome.log, w))
    })())?;

    let oracle = resolve_oracle(config.oracle, &seeds);
    let estimators: BTreeSet<Estimator> = config.estimators.iter().copied().collect();

    let ground_truth = if estimators.contains(&Estimator::GroundTruth) {
        let gt = stage(
            "ground_truth",
            ground_truth_with_seeds(&train_config, &data.train, &data.test.samples, &seeds.ground_truth_members, workers),
        )?;
        stage("ground_truth", out.write_json("ground_truth/report.json", &gt))?;
        Some(gt)
    } else {
        None
    };

    let mut estimates: Vec<(Estimator, Vec<UncertaintyReport>)> = Vec::new();
    if estimators.contains(&Estimator::Lovme) {
        let beta = match config.lovme.beta {
            Some(b) => b,
            None => stage("lovme", default_beta(&net, &data.test.samples, &oracle))?,
        };
        manifest.resolved_beta = Some(beta);
        let chain = stage("lovme", config.lovme.chain_config(beta, seeds.chain))?;
        let results = stage(
            "lovme",
            run_chains_parallel_traced(&net, &data.test.samples, &chain, &oracle, workers),
        )?;
        stage("lovme", (|| {
            if config.lovme.write_traces {
                for (trace, report) in &results {
                    out.write_with(&format!("lovme/traces/sample_{:05}.csv", report.sample_id), |w| {
                        write_trace_csv(trace, w)
                    })?;
                }
            }
            let reports: Vec<UncertaintyReport> = results.iter().map(|(_, r)| r.clone()).collect();
            out.write_json("lovme/reports.json", &reports)
        })())?;
        estimates.push((Estimator::Lovme, results.into_iter().map(|(_, r)| r).collect()));
    }
    if estimators.contains(&Estimator::McDropout) {
        let mc = &config.mc_dropout;
        let results = stage(
            "mc_dropout",
            mc_dropout_all(&net, &data.test.samples, mc.p, mc.draws, seeds.mc_dropout, &oracle, workers),
        )?;
        stage("mc_dropout", (|| {
            if mc.write_traces {
                for (trace, report) in &results {
                    out.write_with(&format!("mc_dropout/traces/sample_{:05}.csv", report.sample_id), |w| {
                        write_trace_csv(trace, w)
                    })?;
                }
            }
            let reports: Vec<UncertaintyReport> = results.iter().map(|(_, r)| r.clone()).collect();
            out.write_json("mc_dropout/reports.json", &reports)
        })())?;
        estimates.push((Estimator::McDropout, results.into_iter().map(|(_, r)| r).collect()));
    }

    for (estimator, reports) in &estimates {
        let name = estimator.name();
        stage("eval", (|| {
            let summary = evaluate_reports(
                name,
                reports,
                &data.test.samples,
                ground_truth.as_ref(),
                &data.perturbed_ids,
                &config.eval,
            )?;
            out.write_json(&format!("eval/{name}/summary.json"), &summary)?;
            let records = records_from_reports(reports, &data.test.samples, config.eval.uncertainty_scale)?;
            for c in 0..data.test.class_count {
                let binary = multiclass_to_binary(&records, c)?;
                let curve = match roc_auc(&binary) {
                    Ok(curve) => curve,
                    Err(Error::Evaluation(_)) => continue,
                    Err(e) => return Err(e),
                };
                out.write_with(&format!("eval/{name}/roc_class{c}.csv"), |w| write_roc_csv(&curve, w))?;
                let (opt, pes) = crate::eval::band_roc(&binary)?;
                out.write_with(&format!("eval/{name}/roc_class{c}_optimistic.csv"), |w| write_roc_csv(&opt, w))?;
                out.write_with(&format!("eval/{name}/roc_class{c}_pessimistic.csv"), |w| write_roc_csv(&pes, w))?;
            }
            if let Some(gt) = &ground_truth {
                let pairs = correlation_pairs(reports, gt)?;
                out.write_with(&format!("eval/{name}/scatter.csv"), |w| write_scatter_csv(&pairs, w))?;
            }
            Ok(())
        })())?;
    }

    if let Some(section) = &config.oracle_check {
        let rows = stage("oracle_check", run_oracle_check_section(section, &data, &train_config, &seeds, &oracle))?;
        stage("oracle_check", (|| {
            out.write_json("oracle_check/results.json", &rows)?;
            out.write("oracle_check/table.md", format_oracle_table(&rows).as_bytes())
        })())?;
    }
    Ok(())
}

fn run_oracle_check_section(
    section: &OracleCheckSection,
    data: &PreparedData,
    train_config: &TrainConfig,
    seeds: &SeedRecord,
    oracle: &LossOracle,
) -> Result<Vec<OracleCheckRow>> {
    let small = TrainConfig {
        hidden_widths: section.hidden_widths.clone(),
        seed: seeds.oracle_check_train,
        ..train_config.clone()
    };
    let net = crate::trainer::train(&small, &data.train)?;
    let grid = section
        .grid
        .iter()
        .map(|[b, e]| GibbsParams::new(*b, *e))
        .collect::<Result<Vec<_>>>()?;
    let template = ChainConfig {
        params: GibbsParams::default(),
        transitions: section.transitions,
        burn_in: section.burn_in,
        thin: section.thin,
        kernel: section.kernel,
        seed: seeds.oracle_check_chain,
    };
    template.validate()?;
    let n = section.samples.min(data.test.len());
    oracle_check(&net, &data.test.samples[..n], &grid, &template, oracle)
}

/// Reruns the configuration recorded in a manifest into `out_dir`.
pub fn rerun_from_manifest(manifest_path: &Path, out_dir: &Path, workers: usize) -> Result<Manifest> {
    let recorded = Manifest::load(manifest_path)?;
    run_experiment(&recorded.config, out_dir, workers)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            seed: 11,
            data: DataSection {
                source: DataSource::Synthetic {
                    n_train: 90,
                    n_test: 30,
                    classes: 3,
                    noise_sigma: 0.7,
                    label_noise_rate: 0.1,
                },
                perturb: None,
            },
            train: TrainConfig {
                hidden_widths: vec![6],
                epochs: 5,
                ..TrainConfig::default()
            },
            lovme: LovmeSection {
                transitions: 200,
                burn_in: 20,
                ..LovmeSection::default()
            },
            mc_dropout: McDropoutSection {
                draws: 50,
                ..McDropoutSection::default()
            },
            ground_truth: GroundTruthSection { members: 3 },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn config_round_trips_through_toml_and_json() {
        let c = tiny_config();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&json).unwrap(), c);
    }

    #[test]
    fn empty_config_is_default() {
        assert_eq!(ExperimentConfig::from_toml_str("").unwrap(), ExperimentConfig::default());
        assert!(matches!(ExperimentConfig::from_toml_str("bogus = 1"), Err(Error::Config(_))));
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let c = ExperimentConfig::load(
            None,
            &[
                "lovme.beta=2.5".into(),
                "train.hidden_widths=[4, 4]".into(),
                "oracle=true_label".into(),
                "data.source.kind=csv".into(),
                "data.source.train=a.csv".into(),
                "data.source.test=b.csv".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.lovme.beta, Some(2.5));
        assert_eq!(c.train.hidden_widths, vec![4, 4]);
        assert_eq!(c.oracle, LossOracleMode::TrueLabel);
        assert!(matches!(c.data.source, DataSource::Csv { .. }));
        // paths that do not exist fail validation as config errors
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        assert!(ExperimentConfig::load(None, &["novalue".into()]).is_err());
    }

    #[test]
    fn invalid_configs_are_config_errors() {
        let mut c = tiny_config();
        c.eval.rejection_quantiles = vec![1.0];
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
        let mut c = tiny_config();
        c.data.perturb = Some(PerturbSection {
            fraction: 1.5,
            ..PerturbSection::default()
        });
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
        let mut c = tiny_config();
        c.estimators.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let s = SeedRecord::derive(&tiny_config());
        let all = [s.data_train, s.data_test, s.perturb, s.train, s.chain, s.mc_dropout, s.oracle];
        let unique: BTreeSet<u64> = all.iter().copied().collect();
        assert_eq!(unique.len(), all.len());
        assert_eq!(s.ground_truth_members.len(), 3);
        assert_eq!(s, SeedRecord::derive(&tiny_config()));
    }

    #[test]
    fn smoke_run_writes_expected_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let m = run_experiment(&tiny_config(), dir.path(), 2).unwrap();
        assert_eq!(m.status, RunStatus::Complete);
        for f in [
            "weights.tnlw",
            "train_log.csv",
            "lovme/reports.json",
            "lovme/traces/sample_00000.csv",
            "mc_dropout/reports.json",
            "ground_truth/report.json",
            "eval/lovme/summary.json",
            "eval/lovme/roc_class0.csv",
            "eval/lovme/scatter.csv",
        ] {
            assert!(m.outputs.contains_key(f), "missing {f}");
        }
        assert!(m.resolved_beta.unwrap() > 0.0);
        let reloaded = Manifest::load(dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(reloaded, m);
    }

    #[test]
    fn failing_stage_is_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny_config();
        c.train.learning_rate = 1e200;
        let err = run_experiment(&c, dir.path(), 1).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "train", .. }));
        assert_eq!(err.exit_code(), 4);
        let m = Manifest::load(dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(m.status, RunStatus::Failed);
        assert_eq!(m.failed_stage.as_deref(), Some("train"));
    }

    #[test]
    fn oracle_check_section_emits_table() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny_config();
        c.estimators = vec![Estimator::Lovme];
        c.oracle_check = Some(OracleCheckSection {
            hidden_widths: vec![5],
            samples: 2,
            grid: vec![[0.0, 0.0], [1.0, 0.1]],
            transitions: 20_000,
            burn_in: 100,
            thin: 1,
            kernel: ProposalKernel::SingleFlip,
        });
        run_experiment(&c, dir.path(), 1).unwrap();
        let rows: Vec<OracleCheckRow> =
            serde_json::from_str(&fs::read_to_string(dir.path().join("oracle_check/results.json")).unwrap()).unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            assert!((r.oracle.probability_sum - 1.0).abs() < 1e-12);
            assert!(r.rel_err_mean < 0.1, "{r:?}");
        }
        let table = fs::read_to_string(dir.path().join("oracle_check/table.md")).unwrap();
        assert_eq!(table.lines().count(), 2 + rows.len());
    }
}
