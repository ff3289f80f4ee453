//! Scratch harness for sizing the synthetic benchmark: generates a dataset,
//! trains SVDD + AE, and prints test AUCs.

use aad_core::audio_io::{scan_dataset, MachineType, SnrTag};
use aad_core::pipeline::{build_feature_store, run_cell};
use aad_core::synthgen::{gen_dataset, AnomalyKind, SynthSpec};
use aad_core::training::TrainConfig;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let machine = args.get(1).map(|s| s.as_str()).unwrap_or("fan");
    let snr_db: i32 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(-6);
    let dir = tempfile::tempdir().unwrap();
    let (mt, kind, freqs): (MachineType, AnomalyKind, Vec<f64>) = match machine {
        "valve" => (MachineType::Valve, AnomalyKind::TransientBursts, vec![110.0]),
        _ => (MachineType::Fan, AnomalyKind::TransientBursts, vec![120.0, 185.0]),
    };
    let tag = match snr_db {
        6 => SnrTag::Db6,
        0 => SnrTag::Db0,
        _ => SnrTag::DbNeg6,
    };
    let spec = SynthSpec {
        machine_type: mt,
        n_normal: 260,
        n_anomalous: 40,
        snr_db,
        base_freqs: freqs,
        anomaly_kind: kind,
        seed: 1234,
        model_id: "id_00".into(),
    };
    let t0 = Instant::now();
    gen_dataset(&spec, dir.path(), false).unwrap();
    println!("gen: {:.1}s", t0.elapsed().as_secs_f64());
    let index = scan_dataset(dir.path()).unwrap();
    let t0 = Instant::now();
    let store = build_feature_store(&index, machine == "valve").unwrap();
    println!("features: {:.1}s", t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let svdd = run_cell(
        &TrainConfig::svdd_defaults(2, 7),
        &index,
        &store,
        mt,
        "id_00",
        tag,
        42,
    )
    .unwrap();
    println!(
        "svdd2: auc {:.3}  epochs {}  best {}  ({:.1}s)",
        svdd.auc,
        svdd.log.epochs.len(),
        svdd.log.best_epoch,
        t0.elapsed().as_secs_f64()
    );

    if machine == "valve" {
        let store_off = build_feature_store(&index, false).unwrap();
        let t0 = Instant::now();
        let off = run_cell(
            &TrainConfig::svdd_defaults(2, 7),
            &index,
            &store_off,
            mt,
            "id_00",
            tag,
            42,
        )
        .unwrap();
        println!(
            "svdd2 no-preproc: auc {:.3}  gap {:.3}  ({:.1}s)",
            off.auc,
            svdd.auc - off.auc,
            t0.elapsed().as_secs_f64()
        );
    } else {
        let mut ae_cfg = TrainConfig::ae_defaults(7);
        if let Ok(cap) = std::env::var("AAD_TUNE_AE_EPOCHS") {
            ae_cfg.max_epochs = cap.parse().unwrap();
        }
        let t0 = Instant::now();
        let ae = run_cell(
            &ae_cfg,
            &index,
            &store,
            mt,
            "id_00",
            tag,
            42,
        )
        .unwrap();
        println!(
            "ae: auc {:.3}  epochs {}  best {}  ({:.1}s)",
            ae.auc,
            ae.log.epochs.len(),
            ae.log.best_epoch,
            t0.elapsed().as_secs_f64()
        );
    }
}
