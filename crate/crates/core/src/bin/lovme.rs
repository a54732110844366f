use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use lovme_core::baselines::{ground_truth_with_seeds, mc_dropout_all, GroundTruthReport};
use lovme_core::data::load_dataset_csv;
use lovme_core::experiment::{
    default_beta, evaluate_reports, format_oracle_table, oracle_check, prepare_data, rerun_from_manifest,
    resolve_oracle, run_experiment, ExperimentConfig, SeedRecord,
};
use lovme_core::sampler::{run_chains_parallel_traced, write_trace_csv};
use lovme_core::trainer::{train_logged, write_log_csv};
use lovme_core::{weights, ChainConfig, Error, GibbsParams, LossTrace, Result, Split, TrainConfig, UncertaintyReport};

#[derive(Parser)]
#[command(name = "lovme", version, about = "Loss-variance uncertainty estimates for dropout networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; omitted sections take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set lovme.beta=2.0`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads; outputs do not depend on this.
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::load(self.config.as_deref(), &self.overrides)
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Subcommand)]
enum Command {
    /// Train a network on the configured training data.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run Metropolis–Hastings chains over thinned networks.
    Lovme {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        weights: PathBuf,
        /// Dataset CSV (`label,f0,...`).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Uniform Bernoulli-mask baseline.
    McDropout {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrain an ensemble and summarize correct-class probabilities.
    GroundTruth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// ROC, bands, rejection and correlation from report JSON.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        reports: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        /// JSON array of perturbed sample ids, or an object with a
        /// `perturbed_ids` field.
        #[arg(long)]
        perturbed_ids: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact enumeration next to a chain estimate on a small network.
    OracleCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Number of leading samples to check.
        #[arg(long, default_value_t = 3)]
        samples: usize,
        /// Single grid point instead of the configured grid.
        #[arg(long, requires = "eta")]
        beta: Option<f64>,
        #[arg(long, requires = "beta")]
        eta: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline: data, training, estimators, evaluation, manifest.
    Run {
        #[command(flatten)]
        common: Common,
        /// Rerun the configuration recorded in an earlier manifest.
        #[arg(long, conflicts_with_all = ["config", "overrides"])]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_outputs(out: &Path, results: &[(LossTrace, UncertaintyReport)], traces: bool) -> Result<()> {
    fs::create_dir_all(out)?;
    if traces {
        fs::create_dir_all(out.join("traces"))?;
        for (trace, report) in results {
            let file = fs::File::create(out.join(format!("traces/sample_{:05}.csv", report.sample_id)))?;
            write_trace_csv(trace, std::io::BufWriter::new(file))?;
        }
    }
    let reports: Vec<&UncertaintyReport> = results.iter().map(|(_, r)| r).collect();
    write_json(&out.join("reports.json"), &reports)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        offset: 0,
        message: format!("{}: {e}", path.display()),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, out } => {
            let config = common.config()?;
            config.validate()?;
            let seeds = SeedRecord::derive(&config);
            let data = prepare_data(&config, &seeds)?;
            let train_config = TrainConfig {
                seed: seeds.train,
                ..config.train.clone()
            };
            let outcome = train_logged(&train_config, &data.train)?;
            fs::create_dir_all(&out)?;
            weights::save_weights(&outcome.network, out.join("weights.tnlw"))?;
            write_log_csv(&outcome.log, fs::File::create(out.join("train_log.csv"))?)?;
            let last = outcome.log.last().expect("log has the initial row");
            eprintln!("trained {} epochs, train loss {:.4}, accuracy {:.4}", last.epoch, last.train_loss, last.train_accuracy);
        }
        Command::Lovme {
            common,
            weights: w,
            data,
            out,
        } => {
            let config = common.config()?;
            let seeds = SeedRecord::derive(&config);
            let net = weights::load_any(&w)?;
            let data = load_dataset_csv(&data, Split::Test, Some(net.class_count()))?;
            let oracle = resolve_oracle(config.oracle, &seeds);
            let beta = match config.lovme.beta {
                Some(b) => b,
                None => default_beta(&net, &data.samples, &oracle)?,
            };
            let chain = config.lovme.chain_config(beta, seeds.chain)?;
            let results = run_chains_parallel_traced(&net, &data.samples, &chain, &oracle, common.workers)?;
            write_outputs(&out, &results, config.lovme.write_traces)?;
            eprintln!("beta = {beta}, {} reports written", results.len());
        }
        Command::McDropout {
            common,
            weights: w,
            data,
            out,
        } => {
            let config = common.config()?;
            let seeds = SeedRecord::derive(&config);
            let net = weights::load_any(&w)?;
            let data = load_dataset_csv(&data, Split::Test, Some(net.class_count()))?;
            let oracle = resolve_oracle(config.oracle, &seeds);
            let mc = &config.mc_dropout;
            let results = mc_dropout_all(&net, &data.samples, mc.p, mc.draws, seeds.mc_dropout, &oracle, common.workers)?;
            write_outputs(&out, &results, mc.write_traces)?;
        }
        Command::GroundTruth { common, out } => {
            let mut config = common.config()?;
            config.estimators = vec![lovme_core::experiment::Estimator::GroundTruth];
            config.validate()?;
            let seeds = SeedRecord::derive(&config);
            let data = prepare_data(&config, &seeds)?;
            let train_config = TrainConfig {
                seed: seeds.train,
                ..config.train.clone()
            };
            let gt = ground_truth_with_seeds(
                &train_config,
                &data.train,
                &data.test.samples,
                &seeds.ground_truth_members,
                common.workers,
            )?;
            write_json(&out.join("report.json"), &gt)?;
        }
        Command::Eval {
            common,
            reports,
            data,
            ground_truth,
            perturbed_ids,
            out,
        } => {
            let config = common.config()?;
            let reports: Vec<UncertaintyReport> = read_json(&reports)?;
            let classes = reports.first().map(|r| r.h_score.len());
            let data = load_dataset_csv(&data, Split::Test, classes)?;
            let gt: Option<GroundTruthReport> = ground_truth.as_deref().map(read_json).transpose()?;
            let ids: Vec<usize> = match perturbed_ids {
                None => Vec::new(),
                Some(p) => match read_json::<serde_json::Value>(&p)? {
                    serde_json::Value::Object(mut o) => {
                        serde_json::from_value(o.remove("perturbed_ids").unwrap_or_default())?
                    }
                    v => serde_json::from_value(v)?,
                },
            };
            let summary = evaluate_reports("reports", &reports, &data.samples, gt.as_ref(), &ids, &config.eval)?;
            write_json(&out.join("summary.json"), &summary)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::OracleCheck {
            common,
            weights: w,
            data,
            samples,
            beta,
            eta,
            out,
        } => {
            let config = common.config()?;
            let seeds = SeedRecord::derive(&config);
            let section = config.oracle_check.clone().unwrap_or_default();
            let net = weights::load_any(&w)?;
            let data = load_dataset_csv(&data, Split::Test, Some(net.class_count()))?;
            let grid = match (beta, eta) {
                (Some(b), Some(e)) => vec![GibbsParams::new(b, e)?],
                _ => section
                    .grid
                    .iter()
                    .map(|[b, e]| GibbsParams::new(*b, *e))
                    .collect::<Result<Vec<_>>>()?,
            };
            let template = ChainConfig {
                params: GibbsParams::default(),
                transitions: section.transitions,
                burn_in: section.burn_in,
                thin: section.thin,
                kernel: section.kernel,
                seed: seeds.oracle_check_chain,
            };
            template.validate()?;
            let oracle = resolve_oracle(config.oracle, &seeds);
            let n = samples.min(data.len());
            let rows = oracle_check(&net, &data.samples[..n], &grid, &template, &oracle)?;
            let table = format_oracle_table(&rows);
            println!("{}", serde_json::to_string_pretty(&rows)?);
            eprint!("{table}");
            if let Some(out) = out {
                write_json(&out.join("results.json"), &rows)?;
                fs::write(out.join("table.md"), table)?;
            }
        }
        Command::Run { common, manifest, out } => {
            let m = match manifest {
                Some(path) => rerun_from_manifest(&path, &out, common.workers)?,
                None => run_experiment(&common.config()?, &out, common.workers)?,
            };
            eprintln!("{} outputs written to {}", m.outputs.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
