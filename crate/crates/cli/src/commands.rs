use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use aad_core::audio_io::{scan_dataset, ClipIndex, MachineType, SnrTag};
use aad_core::diffcore::Checkpoint;
use aad_core::evaluation::{aggregate, auc, measure_latency, EvalRecord};
use aad_core::features::{
    log_mel_of_signal, preprocess_valve, read_feat, write_feat, FeatureBatch, NormStats,
};
use aad_core::models::{build_dense_ae, build_svdd_net, SvddVariant};
use aad_core::training::{
    make_split, score_clip, score_test_set, train_model, FeatureStore, SplitSpec, TrainConfig,
};
use aad_core::{Error, Result};

use crate::manifest::{digest_bytes, now_unix, RunManifest};
use crate::{ModelArg, ValvePreprocessArg};

pub struct Ctx {
    pub threads: usize,
    pub deterministic: bool,
}

pub fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Usage(_) | Error::Config(_) => 2,
        _ => 1,
    }
}

fn manifest_skeleton(ctx: &Ctx, command: &str, digest: &str) -> RunManifest {
    RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        config_digest: digest.to_string(),
        seeds: Vec::new(),
        input_paths: Vec::new(),
        output_paths: Vec::new(),
        started_unix: now_unix(),
        finished_unix: 0,
        threads: ctx.threads,
        deterministic: ctx.deterministic,
        notes: Vec::new(),
    }
}

#[derive(Serialize, Deserialize)]
struct SynthConfig {
    schema_version: u32,
    spec: aad_core::synthgen::SynthSpec,
}

pub fn cmd_synth(ctx: &Ctx, config: &Path, out: &Path, overwrite: bool) -> Result<()> {
    let raw = std::fs::read(config)
        .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", config.display())))?;
    let cfg: SynthConfig = serde_json::from_slice(&raw)
        .map_err(|e| Error::Usage(format!("invalid synth config: {e}")))?;
    if cfg.schema_version != 1 {
        return Err(Error::Usage(format!(
            "unsupported schema_version {}",
            cfg.schema_version
        )));
    }
    aad_core::synthgen::gen_dataset(&cfg.spec, out, overwrite)?;
    let mut m = manifest_skeleton(ctx, "synth", &digest_bytes(&raw));
    m.seeds = vec![cfg.spec.seed];
    m.input_paths = vec![config.display().to_string()];
    m.output_paths = vec![out.display().to_string()];
    m.finished_unix = now_unix();
    m.write(out)?;
    println!(
        "generated {} normal + {} anomalous clips under {}",
        cfg.spec.n_normal,
        cfg.spec.n_anomalous,
        out.display()
    );
    Ok(())
}

fn resolve_data_root(data: Option<PathBuf>) -> Result<PathBuf> {
    match data {
        Some(p) => Ok(p),
        None => std::env::var_os("AAD_DATA_ROOT").map(PathBuf::from).ok_or_else(|| {
            Error::Usage("no --data given and AAD_DATA_ROOT is not set".into())
        }),
    }
}

fn feat_file(out: &Path, position: usize) -> PathBuf {
    out.join("feats").join(format!("{position:05}.feat"))
}

/// Loads a feature cache directory (index.csv + feats/) into memory.
pub fn load_feature_dir(dir: &Path) -> Result<(ClipIndex, FeatureStore)> {
    let index = ClipIndex::read_csv(&dir.join("index.csv"))?;
    let mut store = FeatureStore::default();
    for i in 0..index.entries.len() {
        store.specs.insert(i, read_feat(&feat_file(dir, i))?);
    }
    Ok((index, store))
}

pub fn cmd_features(
    ctx: &Ctx,
    data: Option<PathBuf>,
    out: &Path,
    machine: Option<String>,
    snr: Option<String>,
    valve_preprocess: ValvePreprocessArg,
) -> Result<()> {
    let root = resolve_data_root(data)?;
    let mut index = scan_dataset(&root)?;
    for w in &index.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(m) = &machine {
        let mt = MachineType::from_dir_name(m)
            .ok_or_else(|| Error::Usage(format!("unknown machine type '{m}'")))?;
        index.entries.retain(|e| e.machine == mt);
    }
    if let Some(s) = &snr {
        let tag = SnrTag::from_dir_name(s)
            .ok_or_else(|| Error::Usage(format!("unknown snr tag '{s}'")))?;
        index.entries.retain(|e| e.snr == tag);
    }
    if index.entries.is_empty() {
        return Err(Error::EmptyInput("no clips left after filtering".into()));
    }
    std::fs::create_dir_all(out.join("feats"))?;
    let mut computed = 0usize;
    let mut cached = 0usize;
    let mut preprocessed = false;
    for (i, entry) in index.entries.iter().enumerate() {
        let path = feat_file(out, i);
        if path.exists() {
            cached += 1;
            continue;
        }
        let clip = aad_core::audio_io::read_wav(&entry.path)?;
        let mono = aad_core::audio_io::select_channel(&clip, 0)?;
        // The burst front end is machine-gated: it only ever applies to
        // valve clips, regardless of the flag.
        let apply = entry.machine == MachineType::Valve
            && valve_preprocess != ValvePreprocessArg::Off;
        let samples = if apply {
            preprocessed = true;
            preprocess_valve(&mono.samples[0], mono.sample_rate)?
        } else {
            mono.samples[0].clone()
        };
        write_feat(&path, &log_mel_of_signal(&samples, mono.sample_rate)?)?;
        computed += 1;
    }
    index.write_csv(&out.join("index.csv"))?;
    // Normalization sidecars: one per cell, fit on that cell's default
    // training split only so held-out clips never leak into the stats.
    let store = load_feature_dir(out)?.1;
    for (machine, model_id, snr) in index.cells() {
        let split = match make_split(&index, machine, &model_id, snr, 42) {
            Ok(s) => s,
            Err(_) => continue, // cell too small for a split; stats come later
        };
        let stats = store.fit_stats(&split.train)?;
        let name = format!("stats-{}-{}-{}.json", machine.dir_name(), model_id, snr.dir_name());
        let json = serde_json::to_string_pretty(&stats)
            .map_err(|e| Error::Format(format!("stats serialization: {e}")))?;
        std::fs::write(out.join(name), json)?;
    }
    let mut m = manifest_skeleton(ctx, "features", "");
    m.input_paths = vec![root.display().to_string()];
    m.output_paths = vec![out.display().to_string()];
    m.notes.push(format!("valve_preprocess_applied={preprocessed}"));
    m.finished_unix = now_unix();
    m.write(out)?;
    println!("features: {computed} computed, {cached} cache hits, {} clips", index.entries.len());
    Ok(())
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainOverrides {
    schema_version: Option<u32>,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    max_epochs: Option<usize>,
    patience: Option<usize>,
    lambda: Option<f64>,
    nu: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_train(
    ctx: &Ctx,
    features: &Path,
    model: ModelArg,
    dim: usize,
    seed: u64,
    split_seed: u64,
    machine: &str,
    model_id: &str,
    snr: &str,
    soft_boundary: bool,
    config: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let mt = MachineType::from_dir_name(machine)
        .ok_or_else(|| Error::Usage(format!("unknown machine type '{machine}'")))?;
    let tag = SnrTag::from_dir_name(snr)
        .ok_or_else(|| Error::Usage(format!("unknown snr tag '{snr}'")))?;
    let mut cfg = match model {
        ModelArg::Ae => TrainConfig::ae_defaults(seed),
        ModelArg::Svdd => TrainConfig::svdd_defaults(dim, seed),
    };
    if soft_boundary {
        if model == ModelArg::Ae {
            return Err(Error::Usage("--soft-boundary only applies to --model svdd".into()));
        }
        cfg.variant = SvddVariant::SoftBoundary;
    }
    let mut digest_input = Vec::new();
    if let Some(path) = config {
        let raw = std::fs::read(path)
            .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let ov: TrainOverrides = serde_json::from_slice(&raw)
            .map_err(|e| Error::Usage(format!("invalid train config: {e}")))?;
        if let Some(v) = ov.schema_version {
            if v != 1 {
                return Err(Error::Usage(format!("unsupported schema_version {v}")));
            }
        }
        if let Some(v) = ov.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = ov.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = ov.max_epochs {
            cfg.max_epochs = v;
        }
        if let Some(v) = ov.patience {
            cfg.patience = v;
        }
        if let Some(v) = ov.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = ov.nu {
            cfg.nu = v;
        }
        digest_input = raw;
    }

    let (index, store) = load_feature_dir(features)?;
    let split = make_split(&index, mt, model_id, tag, split_seed)?;
    let (checkpoint, log) = train_model(&cfg, &split, &index, &store)?;
    std::fs::create_dir_all(out)?;
    checkpoint.save(&out.join("checkpoint.bin"))?;
    log.write_csv(&out.join("training_log.csv"))?;
    let split_json = serde_json::to_string_pretty(&split)
        .map_err(|e| Error::Format(format!("split serialization: {e}")))?;
    std::fs::write(out.join("split.json"), split_json)?;

    let mut m = manifest_skeleton(ctx, "train", &digest_bytes(&digest_input));
    m.seeds = vec![seed, split_seed];
    m.input_paths = vec![features.display().to_string()];
    m.output_paths = vec![out.display().to_string()];
    if model == ModelArg::Svdd && ![2, 4, 8].contains(&dim) {
        m.notes.push(format!("non-reference embedding width {dim}"));
    }
    m.finished_unix = now_unix();
    m.write(out)?;
    println!(
        "trained {} on {}/{}/{}: {} epochs, best {}, stop {:?}",
        match model {
            ModelArg::Ae => "ae".to_string(),
            ModelArg::Svdd => format!("svdd{dim}"),
        },
        machine,
        model_id,
        snr,
        log.epochs.len(),
        log.best_epoch,
        log.stop_reason
    );
    Ok(())
}

fn checkpoint_dirs(root: &Path) -> Vec<PathBuf> {
    let mut dirs = Vec::new();
    if root.join("checkpoint.bin").exists() {
        dirs.push(root.to_path_buf());
    }
    if let Ok(entries) = std::fs::read_dir(root) {
        let mut subs: Vec<PathBuf> =
            entries.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_dir()).collect();
        subs.sort();
        for sub in subs {
            dirs.extend(checkpoint_dirs(&sub));
        }
    }
    dirs
}

pub fn cmd_eval(ctx: &Ctx, checkpoints: &Path, features: &Path, out: &Path) -> Result<()> {
    let (index, store) = load_feature_dir(features)?;
    let dirs = checkpoint_dirs(checkpoints);
    if dirs.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no checkpoint.bin found under {}",
            checkpoints.display()
        )));
    }
    let mut records = Vec::new();
    for dir in dirs {
        let checkpoint = Checkpoint::load(&dir.join("checkpoint.bin"))?;
        verify_parameter_count(&checkpoint)?;
        let split_raw = std::fs::read_to_string(dir.join("split.json"))?;
        let split: SplitSpec = serde_json::from_str(&split_raw)
            .map_err(|e| Error::Format(format!("invalid split.json: {e}")))?;
        let scores = score_test_set(&checkpoint, &split, &index, &store)?;
        let meta = &checkpoint.meta;
        records.push(EvalRecord {
            machine: meta.machine.clone().unwrap_or_default(),
            model_id: meta.model_id.clone().unwrap_or_default(),
            snr: meta.snr.clone().unwrap_or_default(),
            seed: meta.seed,
            model_kind: meta.model_kind.clone(),
            dim: meta.subspace_dim,
            auc: auc(&scores)?,
            n_test: scores.len(),
        });
    }
    let report = aggregate(&records);
    std::fs::create_dir_all(out)?;
    report.write_csv(&out.join("report.csv"))?;
    report.write_markdown(&out.join("report.md"))?;
    let mut m = manifest_skeleton(ctx, "eval", "");
    m.input_paths =
        vec![checkpoints.display().to_string(), features.display().to_string()];
    m.output_paths = vec![out.display().to_string()];
    m.finished_unix = now_unix();
    m.write(out)?;
    for r in &report.records {
        println!(
            "{} {}/{}/{} seed {}: auc {:.3}",
            r.model_label(),
            r.machine,
            r.model_id,
            r.snr,
            r.seed,
            r.auc
        );
    }
    Ok(())
}

/// Confirms a loaded checkpoint still has the expected trainable parameter
/// count for its architecture.
fn verify_parameter_count(checkpoint: &Checkpoint) -> Result<()> {
    let actual = checkpoint.params.total_parameter_count();
    match (checkpoint.meta.model_kind.as_str(), checkpoint.meta.subspace_dim) {
        ("ae", _) => {
            if actual != 50_760 {
                return Err(Error::Format(format!(
                    "ae checkpoint has {actual} parameters, expected 50760"
                )));
            }
        }
        ("svdd", Some(dim)) => {
            let expected = build_svdd_net(dim, 0).params.total_parameter_count();
            if actual != expected {
                return Err(Error::Format(format!(
                    "svdd dim-{dim} checkpoint has {actual} parameters, expected {expected}"
                )));
            }
        }
        _ => {}
    }
    Ok(())
}

pub fn cmd_bench(_ctx: &Ctx, features: &Path, checkpoint: &Path, reps: usize) -> Result<()> {
    let (_, store) = load_feature_dir(features)?;
    let checkpoint = Checkpoint::load(checkpoint)?;
    let spec = store
        .specs
        .values()
        .next()
        .ok_or_else(|| Error::EmptyInput("feature cache is empty".into()))?;
    let stats = NormStats { mean: checkpoint.meta.norm_mean, std: checkpoint.meta.norm_std };
    let normed = aad_core::features::apply_normalizer(spec, &stats);
    let fb = FeatureBatch::from_spectrogram(&normed, "bench")?;
    let (mean, min, max) = measure_latency(
        || {
            std::hint::black_box(score_clip(&checkpoint, &fb)?);
            Ok(())
        },
        3.min(reps),
        reps,
    )?;
    let units = match checkpoint.meta.model_kind.as_str() {
        "ae" => fb.n_vectors,
        _ => fb.n_windows,
    };
    println!(
        "clip scoring: mean {:.3} ms  min {:.3} ms  max {:.3} ms  ({reps} reps)",
        mean * 1e3,
        min * 1e3,
        max * 1e3
    );
    println!("per feature unit: {:.3} ms over {units} units", mean * 1e3 / units as f64);
    Ok(())
}

pub fn cmd_verify(_ctx: &Ctx) -> Result<()> {
    let mut failures = 0usize;
    let mut check = |name: &str, ok: bool| {
        println!("{}: {}", name, if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    check("ae parameter count (50760)", {
        build_dense_ae(0).params.total_parameter_count() == 50_760
    });
    check("svdd parameter deltas (512 / 1024)", {
        let p2 = build_svdd_net(2, 0).params.total_parameter_count();
        let p4 = build_svdd_net(4, 0).params.total_parameter_count();
        let p8 = build_svdd_net(8, 0).params.total_parameter_count();
        p4 - p2 == 512 && p8 - p4 == 1024
    });
    check("shape law (10 s @ 16 kHz -> 313x64)", {
        let spec = log_mel_of_signal(&vec![0.01f32; 160_000], 16_000)?;
        spec.n_frames() == 313 && spec.n_mels() == 64
    });
    check("auc oracle equivalence (100 random instances)", auc_equivalence_holds());
    check("gradient check (dense + conv stack)", gradient_check_passes());
    if failures > 0 {
        return Err(Error::Format(format!("{failures} verification check(s) failed")));
    }
    println!("all checks passed");
    Ok(())
}

fn auc_equivalence_holds() -> bool {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let n = rng.random_range(2..200);
        let scores: Vec<(f64, aad_core::audio_io::Label)> = (0..n)
            .map(|_| {
                let s = (rng.random_range(0.0..1.0f64) * 8.0).round() / 8.0;
                let l = if rng.random_bool(0.5) {
                    aad_core::audio_io::Label::Anomalous
                } else {
                    aad_core::audio_io::Label::Normal
                };
                (s, l)
            })
            .collect();
        let fast = auc(&scores);
        let slow = aad_core::evaluation::auc_bruteforce(&scores);
        match (fast, slow) {
            (Ok(a), Ok(b)) if (a - b).abs() < 1e-12 => {}
            (Err(_), Err(_)) => {} // single-class draw: both must refuse
            _ => return false,
        }
    }
    true
}

fn gradient_check_passes() -> bool {
    use aad_core::diffcore::{grad_check, Activation, LayerSpec, LayoutDescriptor, Tensor};
    use rand::{Rng, SeedableRng};
    let layout = LayoutDescriptor {
        version: 1,
        layers: vec![
            LayerSpec::Conv2d {
                in_channels: 1,
                out_channels: 2,
                kernel: 3,
                stride: 2,
                pad: 1,
                activation: Activation::LeakyRelu(0.2),
            },
            LayerSpec::Flatten,
            LayerSpec::Dense {
                input: 2 * 4 * 4,
                output: 2,
                bias: false,
                activation: Activation::Linear,
            },
        ],
    };
    let params: aad_core::diffcore::NetworkParams<f64> =
        aad_core::models::init_params(&layout, 3);
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
    let xdata: Vec<f64> = (0..2 * 8 * 8).map(|_| rng.random_range(-0.5..0.5)).collect();
    let x = Tensor::new(vec![2, 1, 8, 8], xdata);
    let center = vec![0.2f64, -0.1];
    let mut work = params.clone();
    if aad_core::models::one_class_backward(&mut work, &x, &center, 1e-3).is_err() {
        return false;
    }
    let mut analytic: Vec<Vec<f64>> = work
        .entries()
        .iter()
        .map(|(_, t)| t.grad().unwrap().to_vec())
        .collect();
    // Test hook: deliberately corrupt one analytic gradient so the failure
    // path of this verification is itself testable.
    if std::env::var_os("AAD_VERIFY_INJECT_FAULT").is_some() {
        analytic[0][0] += 1.0;
    }
    match grad_check(
        &params,
        |p| aad_core::models::one_class_loss(p, &x, &center, 1e-3),
        &analytic,
        1e-5,
    ) {
        Ok(report) => report.passes(1e-5),
        Err(_) => false,
    }
}
