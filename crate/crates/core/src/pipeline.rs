//! High-level glue: load a scanned dataset into features, train a model on
//! one (machine, model_id, snr) cell, and report its test AUC.

use crate::audio_io::{read_wav, select_channel, ClipIndex, MachineType, SnrTag};
use crate::evaluation::auc;
use crate::features::{log_mel_of_signal, preprocess_valve};
use crate::training::{
    make_split, score_test_set, train_model, FeatureStore, SplitSpec, TrainConfig, TrainingLog,
};
use crate::diffcore::Checkpoint;
use crate::Result;

/// Reads every indexed clip and converts it to a log-Mel spectrogram.
///
/// `valve_preprocess` gates the burst-extraction front end; it only ever
/// applies to valve clips, other machine types are passed through untouched.
pub fn build_feature_store(index: &ClipIndex, valve_preprocess: bool) -> Result<FeatureStore> {
    let mut store = FeatureStore::default();
    for (i, entry) in index.entries.iter().enumerate() {
        let clip = read_wav(&entry.path)?;
        let mono = select_channel(&clip, 0)?;
        let samples = if valve_preprocess && entry.machine == MachineType::Valve {
            preprocess_valve(&mono.samples[0], mono.sample_rate)?
        } else {
            mono.samples[0].clone()
        };
        store.specs.insert(i, log_mel_of_signal(&samples, mono.sample_rate)?);
    }
    Ok(store)
}

/// Outcome of training and scoring one cell.
#[derive(Debug, Clone)]
pub struct CellRun {
    pub checkpoint: Checkpoint,
    pub log: TrainingLog,
    pub split: SplitSpec,
    pub auc: f64,
}

/// Splits the cell, trains the configured model, and scores the held-out
/// test clips.
pub fn run_cell(
    config: &TrainConfig,
    index: &ClipIndex,
    store: &FeatureStore,
    machine: MachineType,
    model_id: &str,
    snr: SnrTag,
    split_seed: u64,
) -> Result<CellRun> {
    let split = make_split(index, machine, model_id, snr, split_seed)?;
    let (checkpoint, log) = train_model(config, &split, index, store)?;
    let scores = score_test_set(&checkpoint, &split, index, store)?;
    let auc = auc(&scores)?;
    Ok(CellRun { checkpoint, log, split, auc })
}
