//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//! Run with `cargo test -p aad-core --test acceptance -- --nocapture`.

use aad_core::audio_io::{scan_dataset, Label, MachineType, SnrTag};
use aad_core::diffcore::{
    grad_check, Activation, Graph, LayerSpec, LayoutDescriptor, NetworkParams, Tensor,
};
use aad_core::evaluation::{auc, auc_bruteforce};
use aad_core::features::{log_mel_of_signal, FeatureBatch};
use aad_core::models::{self, build_dense_ae, build_svdd_net};
use aad_core::pipeline::{build_feature_store, run_cell, CellRun};
use aad_core::synthgen::{gen_dataset, AnomalyKind, SynthSpec};
use aad_core::training::{StopReason, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

struct Criterion {
    number: usize,
    label: &'static str,
}

impl Criterion {
    fn new(number: usize, label: &'static str) -> Criterion {
        Criterion { number, label }
    }

    fn finish(self, ok: bool, detail: &str) {
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!("criterion {} ({}): {} — {}", self.number, self.label, verdict, detail);
        assert!(ok, "criterion {} ({}) failed: {}", self.number, self.label, detail);
    }

    fn skip(self, reason: &str) {
        println!("criterion {} ({}): SKIP — {}", self.number, self.label, reason);
    }
}

#[test]
fn criterion_1_parameter_counts() {
    let c = Criterion::new(1, "parameter-count reproduction");
    let ae = build_dense_ae(0).params.total_parameter_count();
    let p2 = build_svdd_net(2, 0).params.total_parameter_count();
    let p4 = build_svdd_net(4, 0).params.total_parameter_count();
    let p8 = build_svdd_net(8, 0).params.total_parameter_count();
    let within = |actual: usize, reference: usize| {
        (actual as f64 - reference as f64).abs() / reference as f64 <= 0.10
    };
    let ok = ae == 50_760
        && p4 - p2 == 512
        && p8 - p4 == 1024
        && within(p2, 6848)
        && within(p4, 7360)
        && within(p8, 8384);
    c.finish(ok, &format!("ae={ae} svdd={p2}/{p4}/{p8}"));
}

#[test]
fn criterion_2_shape_laws() {
    let c = Criterion::new(2, "shape laws");
    let sr = 16_000u32;
    let signal: Vec<f32> = (0..10 * sr as usize)
        .map(|i| 0.1 * (2.0 * std::f32::consts::PI * 440.0 * i as f32 / sr as f32).sin())
        .collect();
    let spec = log_mel_of_signal(&signal, sr).unwrap();
    let fb = FeatureBatch::from_spectrogram(&spec, "shapes").unwrap();
    // Last window holds frames 256..313 (57 real) + 7 zero-padded frames.
    let tail = &fb.svdd_windows[4 * 64 * 64..];
    let pad_zero = tail[57 * 64..].iter().all(|&v| v == 0.0);
    let real_nonzero = tail[..57 * 64].iter().any(|&v| v != 0.0);
    let ok = spec.n_frames() == 313
        && spec.n_mels() == 64
        && fb.n_vectors == 309
        && fb.ae_vectors.len() == 309 * 320
        && fb.n_windows == 5
        && pad_zero
        && real_nonzero;
    c.finish(
        ok,
        &format!(
            "{}x{} -> {} vectors, {} windows",
            spec.n_frames(),
            spec.n_mels(),
            fb.n_vectors,
            fb.n_windows
        ),
    );
}

fn gc_layout(out_dim: usize) -> LayoutDescriptor {
    LayoutDescriptor {
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
            LayerSpec::Conv2d {
                in_channels: 2,
                out_channels: 2,
                kernel: 3,
                stride: 2,
                pad: 1,
                activation: Activation::LeakyRelu(0.2),
            },
            LayerSpec::Flatten,
            LayerSpec::Dense {
                input: 8,
                output: out_dim,
                bias: false,
                activation: Activation::Linear,
            },
        ],
    }
}

fn dense_layout() -> LayoutDescriptor {
    LayoutDescriptor {
        version: 1,
        layers: vec![
            LayerSpec::Dense { input: 6, output: 4, bias: true, activation: Activation::Relu },
            LayerSpec::Dense { input: 4, output: 6, bias: true, activation: Activation::Linear },
        ],
    }
}

fn ae_loss_and_grads(params: &NetworkParams<f64>, x: &Tensor<f64>) -> (f64, Vec<Vec<f64>>) {
    let mut work = params.clone();
    let mut g = Graph::new();
    let xid = g.leaf(x.clone());
    let pids = g.insert_params(&work);
    let layers = work.layout().layers.clone();
    let out = g.forward_layout(&layers, &pids, xid).unwrap();
    let loss = g.mse(out, xid).unwrap();
    g.backward(loss).unwrap();
    work.zero_grads();
    g.extract_grads(&pids, &mut work).unwrap();
    let grads = work.entries().iter().map(|(_, t)| t.grad().unwrap().to_vec()).collect();
    (g.value(loss).item(), grads)
}

#[test]
fn criterion_3_gradient_correctness() {
    let c = Criterion::new(3, "gradient correctness");
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(1000 + seed);

        // Dense + bias + ReLU + MSE (autoencoder op mix).
        let params: NetworkParams<f64> = models::init_params(&dense_layout(), seed);
        let xdata: Vec<f64> = (0..3 * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Tensor::new(vec![3, 6], xdata);
        let (_, analytic) = ae_loss_and_grads(&params, &x);
        let report =
            grad_check(&params, |p| Ok(ae_loss_and_grads(p, &x).0), &analytic, 1e-5).unwrap();
        worst = worst.max(report.max_rel_error());

        // Conv + LeakyReLU + one-class loss op mix.
        let params: NetworkParams<f64> = models::init_params(&gc_layout(2), seed);
        let xdata: Vec<f64> = (0..2 * 8 * 8).map(|_| rng.random_range(-0.5..0.5)).collect();
        let x = Tensor::new(vec![2, 1, 8, 8], xdata);
        let center = vec![rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)];
        let mut work = params.clone();
        models::one_class_backward(&mut work, &x, &center, 1e-3).unwrap();
        let analytic: Vec<Vec<f64>> =
            work.entries().iter().map(|(_, t)| t.grad().unwrap().to_vec()).collect();
        let report = grad_check(
            &params,
            |p| models::one_class_loss(p, &x, &center, 1e-3),
            &analytic,
            1e-5,
        )
        .unwrap();
        worst = worst.max(report.max_rel_error());

        // Soft-boundary hinge loss op mix.
        let params: NetworkParams<f64> = models::init_params(&gc_layout(4), seed + 77);
        let xdata: Vec<f64> = (0..3 * 8 * 8).map(|_| rng.random_range(-0.5..0.5)).collect();
        let x = Tensor::new(vec![3, 1, 8, 8], xdata);
        let center = vec![0.1f64; 4];
        let (r2, cf) = (1e-4, 0.9);
        let mut work = params.clone();
        models::soft_boundary_backward(&mut work, &x, &center, r2, cf, 1e-3).unwrap();
        let analytic: Vec<Vec<f64>> =
            work.entries().iter().map(|(_, t)| t.grad().unwrap().to_vec()).collect();
        let report = grad_check(
            &params,
            |p| models::soft_boundary_loss(p, &x, &center, r2, cf, 1e-3),
            &analytic,
            1e-5,
        )
        .unwrap();
        worst = worst.max(report.max_rel_error());
    }
    c.finish(worst < 1e-5, &format!("max relative error {worst:.2e} over 10 seeds"));
}

#[test]
fn criterion_4_auc_oracle_equivalence() {
    let c = Criterion::new(4, "AUC oracle equivalence");
    let mut rng = ChaCha12Rng::seed_from_u64(4242);
    let mut max_diff = 0.0f64;
    let mut checked = 0usize;
    while checked < 1000 {
        let n = rng.random_range(2..=500);
        // Alternate smooth scores with heavily quantized (tie-rich) ones.
        let levels = if checked % 2 == 0 { 0 } else { rng.random_range(2..10) };
        let scores: Vec<(f64, Label)> = (0..n)
            .map(|_| {
                let mut s: f64 = rng.random_range(0.0..1.0);
                if levels > 0 {
                    s = (s * levels as f64).round() / levels as f64;
                }
                let l = if rng.random_bool(0.3) { Label::Anomalous } else { Label::Normal };
                (s, l)
            })
            .collect();
        match (auc(&scores), auc_bruteforce(&scores)) {
            (Ok(a), Ok(b)) => {
                max_diff = max_diff.max((a - b).abs());
                checked += 1;
            }
            (Err(_), Err(_)) => {} // single-class draw: both refuse; redraw
            _ => {
                c.finish(false, "one implementation rejected what the other accepted");
                return;
            }
        }
    }
    c.finish(max_diff == 0.0, &format!("1000 instances, max |diff| = {max_diff:.1e}"));
}

fn fan_spec(snr_db: i32) -> SynthSpec {
    SynthSpec {
        machine_type: MachineType::Fan,
        n_normal: 260,
        n_anomalous: 40,
        snr_db,
        base_freqs: vec![120.0, 185.0],
        anomaly_kind: AnomalyKind::TransientBursts,
        seed: 1234,
        model_id: "id_00".into(),
    }
}

fn valve_spec() -> SynthSpec {
    SynthSpec {
        machine_type: MachineType::Valve,
        n_normal: 260,
        n_anomalous: 40,
        snr_db: 6,
        base_freqs: vec![110.0],
        anomaly_kind: AnomalyKind::TransientBursts,
        seed: 1234,
        model_id: "id_00".into(),
    }
}

fn run_generated_cell(
    spec: &SynthSpec,
    config: &TrainConfig,
    valve_preprocess: bool,
) -> CellRun {
    let dir = tempfile::tempdir().unwrap();
    gen_dataset(spec, dir.path(), false).unwrap();
    let index = scan_dataset(dir.path()).unwrap();
    let store = build_feature_store(&index, valve_preprocess).unwrap();
    run_cell(
        config,
        &index,
        &store,
        spec.machine_type,
        "id_00",
        spec.snr_tag(),
        42,
    )
    .unwrap()
}

#[test]
fn criterion_5_end_to_end_synthetic_benchmark() {
    let c = Criterion::new(5, "end-to-end synthetic benchmark");

    // Fan analog at the -6 dB noise level: 198 train / 22 val / 40+40 test
    // (the closest reachable split to 200/20/80 under the ceil-10% rule).
    let spec = fan_spec(-6);
    let dir = tempfile::tempdir().unwrap();
    gen_dataset(&spec, dir.path(), false).unwrap();
    let index = scan_dataset(dir.path()).unwrap();
    let store = build_feature_store(&index, false).unwrap();
    let svdd = run_cell(
        &TrainConfig::svdd_defaults(2, 7),
        &index,
        &store,
        MachineType::Fan,
        "id_00",
        SnrTag::DbNeg6,
        42,
    )
    .unwrap();
    // The AE saturates long before its 100-epoch default; a tighter cap
    // keeps this suite inside its runtime budget.
    let mut ae_cfg = TrainConfig::ae_defaults(7);
    ae_cfg.max_epochs = 25;
    let ae = run_cell(
        &ae_cfg,
        &index,
        &store,
        MachineType::Fan,
        "id_00",
        SnrTag::DbNeg6,
        42,
    )
    .unwrap();

    // Valve analog: burst-focused preprocessing on vs off.
    let vspec = valve_spec();
    let von = run_generated_cell(&vspec, &TrainConfig::svdd_defaults(2, 7), true);
    let voff = run_generated_cell(&vspec, &TrainConfig::svdd_defaults(2, 7), false);
    let gap = von.auc - voff.auc;

    let ok = svdd.auc >= 0.90 && ae.auc >= 0.85 && gap >= 0.03;
    c.finish(
        ok,
        &format!(
            "svdd2 {:.3} (>=0.90), ae {:.3} (>=0.85), valve preproc {:.3} vs {:.3}, gap {:+.3} (>=0.03)",
            svdd.auc, ae.auc, von.auc, voff.auc, gap
        ),
    );
}

fn small_fan_spec() -> SynthSpec {
    SynthSpec {
        machine_type: MachineType::Fan,
        n_normal: 40,
        n_anomalous: 10,
        snr_db: 6,
        base_freqs: vec![120.0, 185.0],
        anomaly_kind: AnomalyKind::TransientBursts,
        seed: 77,
        model_id: "id_00".into(),
    }
}

#[test]
fn criterion_6_training_protocol_conformance() {
    let c = Criterion::new(6, "training-protocol conformance");
    let spec = small_fan_spec();
    let dir = tempfile::tempdir().unwrap();
    gen_dataset(&spec, dir.path(), false).unwrap();
    let index = scan_dataset(dir.path()).unwrap();
    let store = build_feature_store(&index, false).unwrap();

    // Patience path: a zero learning rate freezes the model, so the first
    // epoch's validation loss is never beaten and training must halt exactly
    // `patience` epochs later.
    let mut frozen = TrainConfig::svdd_defaults(2, 7);
    frozen.learning_rate = 0.0;
    let run_a = run_cell(&frozen, &index, &store, MachineType::Fan, "id_00", SnrTag::Db6, 42)
        .unwrap();
    let patience_ok = run_a.log.stop_reason == StopReason::Patience
        && run_a.log.best_epoch == 1
        && run_a.log.epochs.len() == 1 + frozen.patience;

    // Max-epochs path with a real learning rate; the checkpoint must be the
    // validation-loss argmin.
    let mut short = TrainConfig::svdd_defaults(2, 7);
    short.max_epochs = 6;
    let run_b = run_cell(&short, &index, &store, MachineType::Fan, "id_00", SnrTag::Db6, 42)
        .unwrap();
    let argmin = run_b
        .log
        .epochs
        .iter()
        .min_by(|a, b| a.val_loss.partial_cmp(&b.val_loss).unwrap())
        .unwrap()
        .epoch;
    let max_epochs_ok = run_b.log.stop_reason == StopReason::MaxEpochs
        && run_b.log.epochs.len() == 6
        && run_b.log.best_epoch == argmin;

    c.finish(
        patience_ok && max_epochs_ok,
        &format!(
            "patience stop at epoch {} (best {}), max-epochs stop at {} (best {} = argmin {})",
            run_a.log.epochs.len(),
            run_a.log.best_epoch,
            run_b.log.epochs.len(),
            run_b.log.best_epoch,
            argmin
        ),
    );
}

#[test]
fn criterion_7_determinism() {
    let c = Criterion::new(7, "determinism");
    let spec = small_fan_spec();
    let dir = tempfile::tempdir().unwrap();
    gen_dataset(&spec, dir.path(), false).unwrap();
    let index = scan_dataset(dir.path()).unwrap();
    let store = build_feature_store(&index, false).unwrap();
    let mut cfg = TrainConfig::svdd_defaults(2, 7);
    cfg.max_epochs = 3;
    let a = run_cell(&cfg, &index, &store, MachineType::Fan, "id_00", SnrTag::Db6, 42).unwrap();
    let b = run_cell(&cfg, &index, &store, MachineType::Fan, "id_00", SnrTag::Db6, 42).unwrap();
    let logs_identical = a.log.epochs.len() == 3
        && a.log.epochs.len() == b.log.epochs.len()
        && a.log
            .epochs
            .iter()
            .zip(&b.log.epochs)
            .all(|(x, y)| {
                x.epoch == y.epoch
                    && x.train_loss.to_bits() == y.train_loss.to_bits()
                    && x.val_loss.to_bits() == y.val_loss.to_bits()
                    && x.is_best == y.is_best
            });
    let auc_identical = a.auc.to_bits() == b.auc.to_bits();
    c.finish(
        logs_identical && auc_identical,
        &format!("3-epoch logs bit-identical: {logs_identical}, auc {:.6} == {:.6}", a.auc, b.auc),
    );
}

#[test]
fn criterion_8_real_data_reproduction() {
    let c = Criterion::new(8, "real-data reproduction [optional]");
    let root = match std::env::var_os("AAD_MIMII_ROOT") {
        Some(r) => std::path::PathBuf::from(r),
        None => {
            c.skip("AAD_MIMII_ROOT not set; requires the full multi-GB dataset");
            return;
        }
    };
    // Reference all-machines deep SVDD dim-2 averages per SNR.
    let reference = [(SnrTag::Db6, 0.844), (SnrTag::Db0, 0.798), (SnrTag::DbNeg6, 0.689)];
    let index = scan_dataset(&root).unwrap();
    let store = build_feature_store(&index, true).unwrap();
    let mut detail = String::new();
    let mut ok = true;
    for (snr, target) in reference {
        let mut machine_means = Vec::new();
        for machine in
            [MachineType::Fan, MachineType::Pump, MachineType::SlideRail, MachineType::Valve]
        {
            let ids: Vec<String> = index
                .cells()
                .into_iter()
                .filter(|(m, _, s)| *m == machine && *s == snr)
                .map(|(_, id, _)| id)
                .collect();
            let mut cell_aucs = Vec::new();
            for id in ids {
                for seed in [1u64, 2, 3] {
                    let run = run_cell(
                        &TrainConfig::svdd_defaults(2, seed),
                        &index,
                        &store,
                        machine,
                        &id,
                        snr,
                        seed,
                    )
                    .unwrap();
                    cell_aucs.push(run.auc);
                }
            }
            if !cell_aucs.is_empty() {
                machine_means
                    .push(cell_aucs.iter().sum::<f64>() / cell_aucs.len() as f64);
            }
        }
        let mean = machine_means.iter().sum::<f64>() / machine_means.len() as f64;
        detail.push_str(&format!("{}: {:.3} (target {:.3}) ", snr.dir_name(), mean, target));
        if (mean - target).abs() > 0.05 {
            ok = false;
        }
    }
    // Informative only: report the outcome but never gate on it.
    println!(
        "criterion 8 (real-data reproduction): {} — {} (informative, non-gating)",
        if ok { "PASS" } else { "FAIL" },
        detail.trim()
    );
}
