//! Python bindings: networks, training, chains, exact enumeration and ROC
//! evaluation. Structured results come back as plain dicts.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use lovme_core::baselines::mc_dropout as core_mc_dropout;
use lovme_core::data::synth_blobs as core_synth_blobs;
use lovme_core::eval::{band_roc, rejection_auc as core_rejection_auc, roc_auc as core_roc_auc, EvalRecord};
use lovme_core::gibbs::enumerate as core_enumerate;
use lovme_core::landscape::LossOracleMode;
use lovme_core::sampler::{estimate, run_chain as core_run_chain};
use lovme_core::{
    nn, weights, ChainConfig, Dataset, DropoutMask, Error, GibbsParams, LossOracle, Network, ProposalKernel, Sample,
    Split, TrainConfig,
};

create_exception!(lovme, LovmeError, PyException);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Parameter(_) | Error::Config(_) | Error::Shape(_) => PyValueError::new_err(e.to_string()),
        _ => LovmeError::new_err(e.to_string()),
    }
}

/// Hands a serializable value to Python through the `json` module.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| LovmeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_enum<T: serde::de::DeserializeOwned>(what: &str, name: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown {what} `{name}`")))
}

fn oracle(name: &str, seed: u64) -> PyResult<LossOracle> {
    let mode: LossOracleMode = parse_enum("oracle", name)?;
    Ok(LossOracle { mode, seed })
}

#[pyclass(name = "Network", module = "lovme", frozen)]
struct PyNetwork {
    inner: Network,
}

#[pymethods]
impl PyNetwork {
    /// Loads a binary or JSON weight file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: weights::load_any(path).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: weights::from_json(text).map_err(py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        weights::save_weights(&self.inner, path).map_err(py_err)
    }

    fn to_json(&self) -> String {
        weights::to_json(&self.inner)
    }

    /// Class probabilities of the full network.
    fn predict(&self, features: Vec<f64>) -> PyResult<Vec<f64>> {
        nn::predict_full(&self.inner, &features).map_err(py_err)
    }

    /// Cross-entropy of the thinned network selected by `mask` (all units
    /// kept when omitted).
    #[pyo3(signature = (features, target, mask=None))]
    fn loss(&self, features: Vec<f64>, target: usize, mask: Option<Vec<bool>>) -> PyResult<f64> {
        let mask = match mask {
            Some(keep) => DropoutMask { keep },
            None => DropoutMask::all_keep(self.units()),
        };
        nn::loss(&self.inner, &mask, &features, target).map_err(py_err)
    }

    /// Number of maskable units `N₀`.
    #[getter]
    fn units(&self) -> usize {
        nn::count_maskable_units(&self.inner)
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn class_count(&self) -> usize {
        self.inner.class_count()
    }

    #[getter]
    fn hidden_widths(&self) -> Vec<usize> {
        self.inner.hidden_widths()
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(input_dim={}, hidden={:?}, classes={})",
            self.inner.input_dim(),
            self.inner.hidden_widths(),
            self.inner.class_count()
        )
    }
}

/// Gaussian blobs: returns `(features, labels, label_noise_ids)`.
#[pyfunction]
#[pyo3(signature = (n, classes, noise_sigma=0.5, label_noise_rate=0.0, seed=0))]
fn synth_blobs(
    n: usize,
    classes: usize,
    noise_sigma: f64,
    label_noise_rate: f64,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<usize>, Vec<usize>)> {
    let (data, noised) = core_synth_blobs(n, classes, noise_sigma, label_noise_rate, seed).map_err(py_err)?;
    let (features, labels) = data.samples.into_iter().map(|s| (s.features, s.label)).unzip();
    Ok((features, labels, noised))
}

#[pyfunction]
#[pyo3(signature = (
    features, labels, hidden_widths=vec![32, 16], epochs=30, dropout_p=0.5, learning_rate=0.05,
    momentum=0.9, batch_size=32, seed=0, class_count=None
))]
#[allow(clippy::too_many_arguments)]
fn train(
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    hidden_widths: Vec<usize>,
    epochs: usize,
    dropout_p: f64,
    learning_rate: f64,
    momentum: f64,
    batch_size: usize,
    seed: u64,
    class_count: Option<usize>,
) -> PyResult<PyNetwork> {
    if features.len() != labels.len() {
        return Err(PyValueError::new_err("features and labels differ in length"));
    }
    let classes = class_count.unwrap_or_else(|| labels.iter().max().map_or(2, |m| (m + 1).max(2)));
    let samples = features.into_iter().zip(labels).map(|(f, l)| Sample::new(f, l)).collect();
    let data = Dataset::new(samples, Split::Train, classes).map_err(py_err)?;
    let config = TrainConfig {
        hidden_widths,
        dropout_p,
        learning_rate,
        momentum,
        epochs,
        batch_size,
        seed,
        mask_inputs: false,
    };
    Ok(PyNetwork {
        inner: lovme_core::trainer::train(&config, &data).map_err(py_err)?,
    })
}

/// Runs one Metropolis–Hastings chain and returns the uncertainty report
/// together with the recorded `losses` and `sizes`.
#[pyfunction]
#[pyo3(signature = (
    net, features, label, beta=1.0, eta=0.0, transitions=5000, burn_in=100, thin=1,
    kernel="single_flip", seed=0, oracle="predicted_label"
))]
#[allow(clippy::too_many_arguments)]
fn run_chain<'py>(
    py: Python<'py>,
    net: PyRef<'_, PyNetwork>,
    features: Vec<f64>,
    label: usize,
    beta: f64,
    eta: f64,
    transitions: u64,
    burn_in: u64,
    thin: u64,
    kernel: &str,
    seed: u64,
    oracle: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let config = ChainConfig {
        params: GibbsParams::new(beta, eta).map_err(py_err)?,
        transitions,
        burn_in,
        thin,
        kernel: parse_enum::<ProposalKernel>("kernel", kernel)?,
        seed,
    };
    let sample = Sample::new(features, label);
    let o = self::oracle(oracle, seed)?;
    let trace = core_run_chain(&net.inner, &sample, 0, &config, &o).map_err(py_err)?;
    let h = nn::predict_full(&net.inner, &sample.features).map_err(py_err)?;
    let report = estimate(&trace, h, 0).map_err(py_err)?;
    to_py(
        py,
        &serde_json::json!({
            "report": report,
            "losses": trace.losses,
            "sizes": trace.sizes,
            "acceptance_rate": trace.acceptance_rate(),
        }),
    )
}

/// Exact Gibbs statistics by enumerating every mask (`N₀ ≤ 22`).
#[pyfunction]
#[pyo3(signature = (net, features, label, beta=1.0, eta=0.0, oracle="predicted_label", seed=0))]
#[allow(clippy::too_many_arguments)]
fn enumerate<'py>(
    py: Python<'py>,
    net: PyRef<'_, PyNetwork>,
    features: Vec<f64>,
    label: usize,
    beta: f64,
    eta: f64,
    oracle: &str,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let params = GibbsParams::new(beta, eta).map_err(py_err)?;
    let sample = Sample::new(features, label);
    let result = core_enumerate(&net.inner, &sample, 0, &params, &self::oracle(oracle, seed)?).map_err(py_err)?;
    to_py(py, &result)
}

/// Uniform MC-dropout baseline with retain probability `p`.
#[pyfunction]
#[pyo3(signature = (net, features, label, p=0.5, draws=1000, seed=0, oracle="predicted_label"))]
#[allow(clippy::too_many_arguments)]
fn mc_dropout<'py>(
    py: Python<'py>,
    net: PyRef<'_, PyNetwork>,
    features: Vec<f64>,
    label: usize,
    p: f64,
    draws: usize,
    seed: u64,
    oracle: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let sample = Sample::new(features, label);
    let (trace, report) =
        core_mc_dropout(&net.inner, &sample, 0, p, draws, seed, &self::oracle(oracle, seed)?).map_err(py_err)?;
    to_py(py, &serde_json::json!({ "report": report, "losses": trace.losses, "sizes": trace.sizes }))
}

fn records(scores: Vec<f64>, labels: Vec<bool>, uncertainty: Option<Vec<f64>>) -> PyResult<Vec<EvalRecord>> {
    let u = uncertainty.unwrap_or_else(|| vec![0.0; scores.len()]);
    if labels.len() != scores.len() || u.len() != scores.len() {
        return Err(PyValueError::new_err("scores, labels and uncertainty differ in length"));
    }
    Ok(scores
        .into_iter()
        .zip(labels)
        .zip(u)
        .enumerate()
        .map(|(i, ((score, label), uncertainty))| EvalRecord {
            sample_id: i,
            score,
            label,
            uncertainty,
        })
        .collect())
}

#[pyfunction]
fn roc_auc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    Ok(core_roc_auc(&records(scores, labels, None)?).map_err(py_err)?.auc)
}

/// `(optimistic, pessimistic)` AUCs with every score moved by its uncertainty.
#[pyfunction]
fn band_auc(scores: Vec<f64>, labels: Vec<bool>, uncertainty: Vec<f64>) -> PyResult<(f64, f64)> {
    let (opt, pes) = band_roc(&records(scores, labels, Some(uncertainty))?).map_err(py_err)?;
    Ok((opt.auc, pes.auc))
}

/// `(auc, kept_fraction)` after dropping the `⌈q·n⌉` most uncertain records.
#[pyfunction]
fn rejection_auc(scores: Vec<f64>, labels: Vec<bool>, uncertainty: Vec<f64>, q: f64) -> PyResult<(f64, f64)> {
    let (curve, kept) = core_rejection_auc(&records(scores, labels, Some(uncertainty))?, q).map_err(py_err)?;
    Ok((curve.auc, kept))
}

#[pymodule]
pub fn lovme(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("LovmeError", m.py().get_type::<LovmeError>())?;
    m.add_class::<PyNetwork>()?;
    m.add_function(wrap_pyfunction!(synth_blobs, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(run_chain, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate, m)?)?;
    m.add_function(wrap_pyfunction!(mc_dropout, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    m.add_function(wrap_pyfunction!(band_auc, m)?)?;
    m.add_function(wrap_pyfunction!(rejection_auc, m)?)?;
    Ok(())
}
