//! Python bindings for the anomaly-detection pipeline: synthetic data
//! generation, log-Mel features, model construction, training, and AUC.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::path::{Path, PathBuf};

use aad_core::audio_io::{scan_dataset, Label, MachineType, SnrTag};
use aad_core::evaluation;
use aad_core::features::{log_mel_of_signal, preprocess_valve, FeatureBatch, NormStats};
use aad_core::models::{build_dense_ae, build_svdd_net};
use aad_core::pipeline::{build_feature_store, run_cell};
use aad_core::synthgen::{gen_dataset, SynthSpec};
use aad_core::training::TrainConfig;

fn err(e: aad_core::Error) -> PyErr {
    match e {
        aad_core::Error::Usage(_) | aad_core::Error::Config(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn parse_machine(name: &str) -> PyResult<MachineType> {
    MachineType::from_dir_name(name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown machine type '{name}'")))
}

fn parse_snr(name: &str) -> PyResult<SnrTag> {
    SnrTag::from_dir_name(name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown snr tag '{name}'")))
}

/// Generate a synthetic MIMII-shaped dataset tree from a JSON spec string.
#[pyfunction]
#[pyo3(signature = (spec_json, out_dir, overwrite=false))]
fn generate_dataset(spec_json: &str, out_dir: PathBuf, overwrite: bool) -> PyResult<()> {
    let spec: SynthSpec = serde_json_from(spec_json)?;
    gen_dataset(&spec, &out_dir, overwrite).map_err(err)
}

fn serde_json_from(s: &str) -> PyResult<SynthSpec> {
    serde_json::from_str(s).map_err(|e| PyValueError::new_err(format!("invalid spec: {e}")))
}

/// Scan a dataset tree; returns a list of (path, machine, model_id, snr, label).
#[pyfunction]
fn scan(root: PathBuf) -> PyResult<Vec<(String, String, String, String, String)>> {
    let index = scan_dataset(&root).map_err(err)?;
    Ok(index
        .entries
        .iter()
        .map(|e| {
            (
                e.path.display().to_string(),
                e.machine.dir_name().to_string(),
                e.model_id.clone(),
                e.snr.dir_name().to_string(),
                match e.label {
                    Label::Normal => "normal".to_string(),
                    Label::Anomalous => "anomalous".to_string(),
                },
            )
        })
        .collect())
}

/// Log-Mel spectrogram of a mono signal: rows are frames, columns Mel bands.
#[pyfunction]
fn log_mel(samples: Vec<f32>, sample_rate: u32) -> PyResult<Vec<Vec<f64>>> {
    let spec = log_mel_of_signal(&samples, sample_rate).map_err(err)?;
    Ok((0..spec.n_frames()).map(|i| spec.values.row(i).to_vec()).collect())
}

/// Valve front end: burst detection + 1 s window concatenation.
#[pyfunction]
fn valve_preprocess(samples: Vec<f32>, sample_rate: u32) -> PyResult<Vec<f32>> {
    preprocess_valve(&samples, sample_rate).map_err(err)
}

/// AUC with the 0.5 tie convention; `labels` marks anomalous clips.
#[pyfunction]
fn auc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    if scores.len() != labels.len() {
        return Err(PyValueError::new_err("scores and labels must have equal length"));
    }
    let pairs: Vec<(f64, Label)> = scores
        .into_iter()
        .zip(labels)
        .map(|(s, a)| (s, if a { Label::Anomalous } else { Label::Normal }))
        .collect();
    evaluation::auc(&pairs).map_err(err)
}

/// Trainable parameter count for the dense autoencoder.
#[pyfunction]
fn ae_parameter_count() -> usize {
    build_dense_ae(0).params.total_parameter_count()
}

/// Trainable parameter count for the deep SVDD network at a given width.
#[pyfunction]
fn svdd_parameter_count(dim: usize) -> usize {
    build_svdd_net(dim, 0).params.total_parameter_count()
}

/// Per-clip feature shapes for a mono signal: (frames, mels, ae_vectors,
/// svdd_windows).
#[pyfunction]
fn feature_shape(samples: Vec<f32>, sample_rate: u32) -> PyResult<(usize, usize, usize, usize)> {
    let spec = log_mel_of_signal(&samples, sample_rate).map_err(err)?;
    let stats = NormStats { mean: 0.0, std: 1.0 };
    let normed = aad_core::features::apply_normalizer(&spec, &stats);
    let fb = FeatureBatch::from_spectrogram(&normed, "py").map_err(err)?;
    Ok((spec.n_frames(), spec.n_mels(), fb.n_vectors, fb.n_windows))
}

/// Train one model on one dataset cell and return a result dict with keys
/// "auc", "epochs", "best_epoch", and "stop_reason".
#[pyfunction]
#[pyo3(signature = (data_root, machine, snr, model, model_id="id_00", dim=2, seed=0,
                    split_seed=42, max_epochs=None, valve_preprocessing=true))]
#[allow(clippy::too_many_arguments)]
fn train_cell<'py>(
    py: Python<'py>,
    data_root: PathBuf,
    machine: &str,
    snr: &str,
    model: &str,
    model_id: &str,
    dim: usize,
    seed: u64,
    split_seed: u64,
    max_epochs: Option<usize>,
    valve_preprocessing: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let mt = parse_machine(machine)?;
    let tag = parse_snr(snr)?;
    let mut cfg = match model {
        "ae" => TrainConfig::ae_defaults(seed),
        "svdd" => TrainConfig::svdd_defaults(dim, seed),
        other => return Err(PyValueError::new_err(format!("unknown model '{other}'"))),
    };
    if let Some(cap) = max_epochs {
        cfg.max_epochs = cap;
    }
    let index = scan_dataset(Path::new(&data_root)).map_err(err)?;
    let store = build_feature_store(&index, valve_preprocessing).map_err(err)?;
    let run = run_cell(&cfg, &index, &store, mt, model_id, tag, split_seed).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("auc", run.auc)?;
    out.set_item("epochs", run.log.epochs.len())?;
    out.set_item("best_epoch", run.log.best_epoch)?;
    out.set_item("stop_reason", format!("{:?}", run.log.stop_reason))?;
    Ok(out)
}

#[pymodule]
fn aad_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(scan, m)?)?;
    m.add_function(wrap_pyfunction!(log_mel, m)?)?;
    m.add_function(wrap_pyfunction!(valve_preprocess, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(ae_parameter_count, m)?)?;
    m.add_function(wrap_pyfunction!(svdd_parameter_count, m)?)?;
    m.add_function(wrap_pyfunction!(feature_shape, m)?)?;
    m.add_function(wrap_pyfunction!(train_cell, m)?)?;
    Ok(())
}
