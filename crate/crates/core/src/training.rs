//! Dataset partitioning, training loops with validation-based early stopping,
//! and test-set scoring.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::audio_io::{ClipIndex, Label, MachineType, SnrTag};
use crate::diffcore::{adam_step, AdamState, Checkpoint, CheckpointMeta, NetworkParams, Tensor};
use crate::features::{
    apply_normalizer, fit_normalizer, FeatureBatch, LogMelSpectrogram, NormStats,
};
use crate::models::{
    anomaly_score, build_dense_ae, build_svdd_net, init_center, one_class_backward,
    soft_boundary_backward, sq_distances, update_radius, SvddVariant,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ae,
    Svdd,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Ae => "ae",
            ModelKind::Svdd => "svdd",
        }
    }
}

/// Index-based partition of one (machine, model_id, snr) cell.
///
/// Train and validation hold normal clips only; the test set holds every
/// anomalous clip plus an equal number of randomly selected normal clips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub rng_seed: u64,
}

pub fn make_split(
    index: &ClipIndex,
    machine: MachineType,
    model_id: &str,
    snr: SnrTag,
    seed: u64,
) -> Result<SplitSpec> {
    let cell = index.cell(machine, model_id, snr);
    let anomalous: Vec<usize> = cell
        .iter()
        .copied()
        .filter(|&i| index.entries[i].label == Label::Anomalous)
        .collect();
    let mut normal: Vec<usize> = cell
        .iter()
        .copied()
        .filter(|&i| index.entries[i].label == Label::Normal)
        .collect();
    if normal.len() < 2 * anomalous.len() || anomalous.is_empty() {
        return Err(Error::Config(format!(
            "cell ({machine}, {model_id}, {snr}): need at least 2x as many normal as anomalous \
             clips and at least one anomalous (have {} normal, {} anomalous)",
            normal.len(),
            anomalous.len()
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    normal.shuffle(&mut rng);
    let n_a = anomalous.len();
    let mut test: Vec<usize> = anomalous;
    test.extend(&normal[..n_a]);
    test.sort_unstable();
    let pool = &normal[n_a..];
    let n_val = ((pool.len() as f64 * 0.10).ceil() as usize).max(1);
    if n_val >= pool.len() {
        return Err(Error::Config(format!(
            "cell ({machine}, {model_id}, {snr}): training pool of {} leaves no clips after \
             validation split",
            pool.len()
        )));
    }
    let mut val: Vec<usize> = pool[..n_val].to_vec();
    let mut train: Vec<usize> = pool[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok(SplitSpec { train, val, test, rng_seed: seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model_kind: ModelKind,
    /// Output width of the final dense layer (SVDD only).
    pub subspace_dim: usize,
    pub variant: SvddVariant,
    /// Target outlier fraction (soft-boundary SVDD only).
    pub nu: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn svdd_defaults(subspace_dim: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            model_kind: ModelKind::Svdd,
            subspace_dim,
            variant: SvddVariant::OneClass,
            nu: 0.1,
            max_epochs: 50,
            patience: 10,
            batch_size: 32,
            learning_rate: 0.0005,
            lambda: 1e-5,
            seed,
        }
    }

    pub fn ae_defaults(seed: u64) -> TrainConfig {
        TrainConfig {
            model_kind: ModelKind::Ae,
            subspace_dim: 0,
            variant: SvddVariant::OneClass,
            nu: 0.1,
            max_epochs: 100,
            patience: 10,
            batch_size: 256,
            learning_rate: 0.001,
            lambda: 1e-5,
            seed,
        }
    }

    /// Stable digest of the configuration, embedded in checkpoints.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a(json.as_bytes()))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// Raw (unnormalized) spectrograms keyed by clip-index position.
#[derive(Debug, Clone, Default)]
pub struct FeatureStore {
    pub specs: BTreeMap<usize, LogMelSpectrogram>,
}

impl FeatureStore {
    fn get(&self, idx: usize) -> Result<&LogMelSpectrogram> {
        self.specs
            .get(&idx)
            .ok_or_else(|| Error::Usage(format!("no features for clip index {idx}")))
    }

    /// Fits normalization stats on the listed clips only.
    pub fn fit_stats(&self, clips: &[usize]) -> Result<NormStats> {
        let refs: Vec<&LogMelSpectrogram> =
            clips.iter().map(|&i| self.get(i)).collect::<Result<_>>()?;
        fit_normalizer(&refs)
    }

    fn batch(&self, idx: usize, stats: &NormStats, clip_id: &str) -> Result<FeatureBatch> {
        let normed = apply_normalizer(self.get(idx)?, stats);
        FeatureBatch::from_spectrogram(&normed, clip_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub is_best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stop_reason: StopReason,
}

impl TrainingLog {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("epoch,train_loss,val_loss,is_best\n");
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{}\n",
                r.epoch, r.train_loss, r.val_loss, r.is_best
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Tracks the strict-improvement early-stopping rule: stop once the
/// validation loss has not improved for `patience` consecutive epochs.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> EarlyStopper {
        EarlyStopper { patience, best: f64::INFINITY, best_epoch: 0, since_best: 0 }
    }

    /// Returns (improved, should_stop) for a 1-based epoch number.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> (bool, bool) {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            (true, false)
        } else {
            self.since_best += 1;
            (false, self.since_best >= self.patience)
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

struct CellMeta {
    machine: MachineType,
    model_id: String,
    snr: SnrTag,
}

fn cell_meta(index: &ClipIndex, split: &SplitSpec) -> Result<CellMeta> {
    let first = *split
        .train
        .first()
        .ok_or_else(|| Error::Usage("empty training split".into()))?;
    let e = index
        .entries
        .get(first)
        .ok_or_else(|| Error::Usage("split references entries outside the index".into()))?;
    Ok(CellMeta { machine: e.machine, model_id: e.model_id.clone(), snr: e.snr })
}

/// Trains the configured model on the split and returns the checkpoint with
/// the lowest validation loss plus the per-epoch log.
pub fn train_model(
    config: &TrainConfig,
    split: &SplitSpec,
    index: &ClipIndex,
    store: &FeatureStore,
) -> Result<(Checkpoint, TrainingLog)> {
    if split.train.is_empty() || split.val.is_empty() {
        return Err(Error::Usage("train_model: empty split".into()));
    }
    // Leakage guard: stats come from the training portion only.
    let stats = store.fit_stats(&split.train)?;
    let meta = cell_meta(index, split)?;
    match config.model_kind {
        ModelKind::Ae => train_ae(config, split, store, &stats, &meta),
        ModelKind::Svdd => train_svdd(config, split, store, &stats, &meta),
    }
}

fn gather_vectors(
    store: &FeatureStore,
    stats: &NormStats,
    clips: &[usize],
) -> Result<(Vec<f32>, usize)> {
    let mut out = Vec::new();
    let mut rows = 0usize;
    for &idx in clips {
        let fb = store.batch(idx, stats, &idx.to_string())?;
        out.extend_from_slice(&fb.ae_vectors);
        rows += fb.n_vectors;
    }
    Ok((out, rows))
}

fn gather_windows(
    store: &FeatureStore,
    stats: &NormStats,
    clips: &[usize],
) -> Result<(Vec<f32>, usize)> {
    let mut out = Vec::new();
    let mut rows = 0usize;
    for &idx in clips {
        let fb = store.batch(idx, stats, &idx.to_string())?;
        out.extend_from_slice(&fb.svdd_windows);
        rows += fb.n_windows;
    }
    Ok((out, rows))
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(epoch as u64));
    order.shuffle(&mut rng);
    order
}

fn rows_tensor(data: &[f32], rows: &[usize], row_len: usize, shape_tail: &[usize]) -> Tensor<f32> {
    let mut buf = Vec::with_capacity(rows.len() * row_len);
    for &r in rows {
        buf.extend_from_slice(&data[r * row_len..(r + 1) * row_len]);
    }
    let mut shape = vec![rows.len()];
    shape.extend_from_slice(shape_tail);
    Tensor::new(shape, buf)
}

fn base_meta(config: &TrainConfig, stats: &NormStats, cell: &CellMeta) -> CheckpointMeta {
    CheckpointMeta {
        model_kind: config.model_kind.as_str().into(),
        subspace_dim: (config.model_kind == ModelKind::Svdd).then_some(config.subspace_dim),
        seed: config.seed,
        init_scheme: "glorot_uniform".into(),
        config_digest: config.digest(),
        lambda: config.lambda,
        center: None,
        radius_sq: None,
        nu: None,
        norm_mean: stats.mean,
        norm_std: stats.std,
        machine: Some(cell.machine.dir_name().into()),
        model_id: Some(cell.model_id.clone()),
        snr: Some(cell.snr.dir_name().into()),
        valve_preprocessed: None,
    }
}

fn train_ae(
    config: &TrainConfig,
    split: &SplitSpec,
    store: &FeatureStore,
    stats: &NormStats,
    cell: &CellMeta,
) -> Result<(Checkpoint, TrainingLog)> {
    const DIM: usize = crate::features::AE_INPUT_DIM;
    let (train_data, n_train) = gather_vectors(store, stats, &split.train)?;
    let (val_data, n_val) = gather_vectors(store, stats, &split.val)?;
    let mut model = build_dense_ae(config.seed);
    let mut adam = AdamState::new(&model.params, config.learning_rate);
    let mut stopper = EarlyStopper::new(config.patience);
    let mut log = TrainingLog { epochs: Vec::new(), best_epoch: 0, stop_reason: StopReason::MaxEpochs };
    let mut best_params: Option<NetworkParams<f32>> = None;

    for epoch in 1..=config.max_epochs {
        let order = epoch_order(n_train, config.seed, epoch);
        let mut train_loss_acc = 0.0f64;
        for chunk in order.chunks(config.batch_size) {
            let x = rows_tensor(&train_data, chunk, DIM, &[DIM]);
            let loss = ae_batch_step(&mut model.params, &mut adam, &x)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            train_loss_acc += loss * chunk.len() as f64;
        }
        let train_loss = train_loss_acc / n_train as f64;
        let val_loss = ae_eval_loss(&model.params, &val_data, n_val, config.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        let (improved, stop) = stopper.observe(epoch, val_loss);
        if improved {
            best_params = Some(model.params.clone());
        }
        log.epochs.push(EpochRecord { epoch, train_loss, val_loss, is_best: improved });
        if stop {
            log.stop_reason = StopReason::Patience;
            break;
        }
    }
    log.best_epoch = stopper.best_epoch();
    let mut params = best_params.unwrap_or(model.params);
    params.clear_grads();
    let meta = base_meta(config, stats, cell);
    Ok((Checkpoint { params, meta }, log))
}

fn ae_batch_step(
    params: &mut NetworkParams<f32>,
    adam: &mut AdamState<f32>,
    x: &Tensor<f32>,
) -> Result<f64> {
    let mut g = crate::diffcore::Graph::new();
    let xid = g.leaf(x.clone());
    let pids = g.insert_params(params);
    let out = g.forward_layout(&params.layout().layers.clone(), &pids, xid)?;
    let loss = g.mse(out, xid)?;
    g.backward(loss)?;
    params.zero_grads();
    g.extract_grads(&pids, params)?;
    let value = g.value(loss).item() as f64;
    adam_step(params, adam)?;
    Ok(value)
}

fn ae_eval_loss(
    params: &NetworkParams<f32>,
    data: &[f32],
    n_rows: usize,
    batch_size: usize,
) -> Result<f64> {
    const DIM: usize = crate::features::AE_INPUT_DIM;
    let rows: Vec<usize> = (0..n_rows).collect();
    let mut acc = 0.0f64;
    for chunk in rows.chunks(batch_size) {
        let x = rows_tensor(data, chunk, DIM, &[DIM]);
        let (per, _) = crate::models::ae_reconstruction_error(params, &x)?;
        acc += per.iter().map(|&v| v as f64).sum::<f64>();
    }
    Ok(acc / n_rows as f64)
}

const WIN: usize = 64;
const WIN_LEN: usize = WIN * WIN;

fn train_svdd(
    config: &TrainConfig,
    split: &SplitSpec,
    store: &FeatureStore,
    stats: &NormStats,
    cell: &CellMeta,
) -> Result<(Checkpoint, TrainingLog)> {
    let (train_data, n_train) = gather_windows(store, stats, &split.train)?;
    let (val_data, n_val) = gather_windows(store, stats, &split.val)?;
    let mut model = build_svdd_net(config.subspace_dim, config.seed);
    let all_train: Vec<usize> = (0..n_train).collect();
    let train_tensor = rows_tensor(&train_data, &all_train, WIN_LEN, &[1, WIN, WIN]);
    model.center = init_center(&model.params, &train_tensor)?;

    let objective = crate::models::SvddObjectiveConfig {
        variant: config.variant,
        lambda: config.lambda,
        nu: config.nu,
    };
    objective.validate()?;
    let tradeoff = objective.outlier_tradeoff(n_train);
    let mut radius_sq = if config.variant == SvddVariant::SoftBoundary {
        let dists = svdd_distances(&model.params, &train_data, n_train, &model.center, config.batch_size)?;
        update_radius(&dists, config.nu)? as f64
    } else {
        0.0
    };

    let mut adam = AdamState::new(&model.params, config.learning_rate);
    let mut stopper = EarlyStopper::new(config.patience);
    let mut log = TrainingLog { epochs: Vec::new(), best_epoch: 0, stop_reason: StopReason::MaxEpochs };
    let mut best: Option<(NetworkParams<f32>, f64)> = None;

    // Soft-boundary schedule: R frozen for the first 10 epochs, then
    // refreshed from each epoch's training distances.
    const RADIUS_FREEZE_EPOCHS: usize = 10;

    for epoch in 1..=config.max_epochs {
        let order = epoch_order(n_train, config.seed, epoch);
        let mut train_loss_acc = 0.0f64;
        for chunk in order.chunks(config.batch_size) {
            let x = rows_tensor(&train_data, chunk, WIN_LEN, &[1, WIN, WIN]);
            let loss = match config.variant {
                SvddVariant::OneClass => {
                    one_class_backward(&mut model.params, &x, &model.center, config.lambda)?
                }
                SvddVariant::SoftBoundary => soft_boundary_backward(
                    &mut model.params,
                    &x,
                    &model.center,
                    radius_sq,
                    tradeoff,
                    config.lambda,
                )?,
            } as f64;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            train_loss_acc += loss * chunk.len() as f64;
            adam_step(&mut model.params, &mut adam)?;
        }
        let train_loss = train_loss_acc / n_train as f64;
        if config.variant == SvddVariant::SoftBoundary && epoch >= RADIUS_FREEZE_EPOCHS {
            let dists =
                svdd_distances(&model.params, &train_data, n_train, &model.center, config.batch_size)?;
            radius_sq = update_radius(&dists, config.nu)? as f64;
        }
        // Validation tracks data fit only: mean squared distance to c.
        let val_dists =
            svdd_distances(&model.params, &val_data, n_val, &model.center, config.batch_size)?;
        let val_loss = val_dists.iter().map(|&d| d as f64).sum::<f64>() / n_val as f64;
        if !val_loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        let (improved, stop) = stopper.observe(epoch, val_loss);
        if improved {
            best = Some((model.params.clone(), radius_sq));
        }
        log.epochs.push(EpochRecord { epoch, train_loss, val_loss, is_best: improved });
        if stop {
            log.stop_reason = StopReason::Patience;
            break;
        }
    }
    log.best_epoch = stopper.best_epoch();
    let (mut params, best_radius) = best.unwrap_or((model.params, radius_sq));
    params.clear_grads();
    let mut meta = base_meta(config, stats, cell);
    meta.center = Some(model.center.iter().map(|&c| c as f64).collect());
    meta.radius_sq = Some(best_radius);
    meta.nu = Some(config.nu);
    Ok((Checkpoint { params, meta }, log))
}

fn svdd_distances(
    params: &NetworkParams<f32>,
    data: &[f32],
    n_rows: usize,
    center: &[f32],
    batch_size: usize,
) -> Result<Vec<f32>> {
    let rows: Vec<usize> = (0..n_rows).collect();
    let mut out = Vec::with_capacity(n_rows);
    for chunk in rows.chunks(batch_size) {
        let x = rows_tensor(data, chunk, WIN_LEN, &[1, WIN, WIN]);
        let emb = crate::models::embed(params, &x)?;
        out.extend(sq_distances(&emb, center)?);
    }
    Ok(out)
}

/// Scores every test clip with the trained checkpoint; one scalar per clip.
pub fn score_test_set(
    checkpoint: &Checkpoint,
    split: &SplitSpec,
    index: &ClipIndex,
    store: &FeatureStore,
) -> Result<Vec<(f64, Label)>> {
    let stats = NormStats { mean: checkpoint.meta.norm_mean, std: checkpoint.meta.norm_std };
    let mut out = Vec::with_capacity(split.test.len());
    for &idx in &split.test {
        let entry = index
            .entries
            .get(idx)
            .ok_or_else(|| Error::Usage("split references entries outside the index".into()))?;
        let fb = store.batch(idx, &stats, &idx.to_string())?;
        let score = score_clip(checkpoint, &fb)?;
        out.push((score, entry.label));
    }
    Ok(out)
}

/// Clip-level anomaly score: mean reconstruction error (AE) or mean squared
/// distance to the center (SVDD) over the clip's feature units.
pub fn score_clip(checkpoint: &Checkpoint, fb: &FeatureBatch) -> Result<f64> {
    match checkpoint.meta.model_kind.as_str() {
        "ae" => {
            let x = Tensor::new(
                vec![fb.n_vectors, crate::features::AE_INPUT_DIM],
                fb.ae_vectors.clone(),
            );
            let (_, mean) = crate::models::ae_reconstruction_error(&checkpoint.params, &x)?;
            Ok(mean as f64)
        }
        "svdd" => {
            let center: Vec<f32> = checkpoint
                .meta
                .center
                .as_ref()
                .ok_or_else(|| Error::Usage("svdd checkpoint without a center".into()))?
                .iter()
                .map(|&c| c as f32)
                .collect();
            let x = Tensor::new(vec![fb.n_windows, 1, WIN, WIN], fb.svdd_windows.clone());
            let (_, mean) = anomaly_score(&checkpoint.params, &x, &center)?;
            Ok(mean as f64)
        }
        other => Err(Error::Usage(format!("unknown model kind '{other}' in checkpoint"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio_io::ClipEntry;
    use std::path::PathBuf;

    fn synthetic_index(n_normal: usize, n_anomalous: usize) -> ClipIndex {
        let mut entries = Vec::new();
        for i in 0..n_normal {
            entries.push(ClipEntry {
                path: PathBuf::from(format!("normal/{i:04}.wav")),
                machine: MachineType::Fan,
                model_id: "id_00".into(),
                snr: SnrTag::Db0,
                label: Label::Normal,
            });
        }
        for i in 0..n_anomalous {
            entries.push(ClipEntry {
                path: PathBuf::from(format!("abnormal/{i:04}.wav")),
                machine: MachineType::Fan,
                model_id: "id_00".into(),
                snr: SnrTag::Db0,
                label: Label::Anomalous,
            });
        }
        ClipIndex { entries, warnings: Vec::new() }
    }

    #[test]
    fn split_arithmetic_large_case() {
        let index = synthetic_index(400, 100);
        let split = make_split(&index, MachineType::Fan, "id_00", SnrTag::Db0, 1).unwrap();
        assert_eq!(split.test.len(), 200);
        assert_eq!(split.val.len(), 30);
        assert_eq!(split.train.len(), 270);
        let test_anoms = split
            .test
            .iter()
            .filter(|&&i| index.entries[i].label == Label::Anomalous)
            .count();
        assert_eq!(test_anoms, 100);
    }

    #[test]
    fn split_arithmetic_small_case_uses_ceil() {
        let index = synthetic_index(10, 5);
        let split = make_split(&index, MachineType::Fan, "id_00", SnrTag::Db0, 1).unwrap();
        assert_eq!(split.test.len(), 10);
        assert_eq!(split.val.len(), 1);
        assert_eq!(split.train.len(), 4);
    }

    #[test]
    fn split_infeasible_cell_is_an_error() {
        let index = synthetic_index(4, 3);
        let err = make_split(&index, MachineType::Fan, "id_00", SnrTag::Db0, 1).unwrap_err();
        match err {
            Error::Config(msg) => assert!(msg.contains("4 normal, 3 anomalous"), "{msg}"),
            other => panic!("expected Config error, got {other:?}"),
        }
    }

    #[test]
    fn split_partitions_are_disjoint_and_anomalies_stay_in_test() {
        let index = synthetic_index(50, 10);
        let split = make_split(&index, MachineType::Fan, "id_00", SnrTag::Db0, 9).unwrap();
        let mut all: Vec<usize> = Vec::new();
        all.extend(&split.train);
        all.extend(&split.val);
        all.extend(&split.test);
        let mut dedup = all.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), all.len());
        for (i, e) in index.entries.iter().enumerate() {
            if e.label == Label::Anomalous {
                assert!(split.test.contains(&i));
            }
        }
    }

    #[test]
    fn split_seed_varies_only_the_normal_selection() {
        let index = synthetic_index(50, 10);
        let a = make_split(&index, MachineType::Fan, "id_00", SnrTag::Db0, 1).unwrap();
        let b = make_split(&index, MachineType::Fan, "id_00", SnrTag::Db0, 2).unwrap();
        let anoms = |s: &SplitSpec| {
            s.test
                .iter()
                .copied()
                .filter(|&i| index.entries[i].label == Label::Anomalous)
                .collect::<Vec<_>>()
        };
        assert_eq!(anoms(&a), anoms(&b));
        assert_ne!(a.train, b.train);
        // Same seed reproduces the split exactly.
        let c = make_split(&index, MachineType::Fan, "id_00", SnrTag::Db0, 1).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn early_stopper_patience_arithmetic() {
        // Losses 5, 4, then ten non-improving 4s: stop after epoch 12, best 2.
        let mut s = EarlyStopper::new(10);
        let losses = [5.0, 4.0, 4.0, 4.0, 4.0, 4.0, 4.0, 4.0, 4.0, 4.0, 4.0, 4.0];
        let mut stopped_at = None;
        for (i, &l) in losses.iter().enumerate() {
            let epoch = i + 1;
            let (_, stop) = s.observe(epoch, l);
            if stop {
                stopped_at = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped_at, Some(12));
        assert_eq!(s.best_epoch(), 2);
    }

    #[test]
    fn early_stopper_never_returns_worse_than_seen() {
        let mut s = EarlyStopper::new(3);
        for (i, &l) in [3.0, 2.5, 2.7, 2.4, 2.9].iter().enumerate() {
            s.observe(i + 1, l);
        }
        assert_eq!(s.best_epoch(), 4);
        assert_eq!(s.best_loss(), 2.4);
    }
}
