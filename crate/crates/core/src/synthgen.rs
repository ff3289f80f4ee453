//! Deterministic synthetic machine-sound generator.
//!
//! Produces 10-second 16 kHz mono clips in the same directory layout the
//! dataset scanner expects, so the whole pipeline can be exercised at desk
//! scale. Normal clips are harmonic hums (or burst trains for valves) plus
//! white noise at a controlled SNR; anomalous clips add one of three fault
//! signatures.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::audio_io::{write_wav, Label, MachineType, SnrTag};
use crate::{Error, Result};

pub const SAMPLE_RATE: u32 = 16000;
pub const CLIP_SECONDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    TransientBursts,
    DetunedHarmonics,
    AmplitudeModulation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub machine_type: MachineType,
    pub n_normal: usize,
    pub n_anomalous: usize,
    pub snr_db: i32,
    pub base_freqs: Vec<f64>,
    pub anomaly_kind: AnomalyKind,
    pub seed: u64,
    #[serde(default = "default_model_id")]
    pub model_id: String,
}

fn default_model_id() -> String {
    "id_00".to_string()
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_normal < 2 * self.n_anomalous {
            return Err(Error::Config(format!(
                "need n_normal >= 2 * n_anomalous (got {} vs {})",
                self.n_normal, self.n_anomalous
            )));
        }
        if SnrTag::from_dir_name(&format!("{}dB", self.snr_db)).is_none() {
            return Err(Error::Config(format!("snr_db {} not in {{6, 0, -6}}", self.snr_db)));
        }
        if self.base_freqs.is_empty() {
            return Err(Error::Config("base_freqs must be nonempty".into()));
        }
        Ok(())
    }

    pub fn snr_tag(&self) -> SnrTag {
        SnrTag::from_dir_name(&format!("{}dB", self.snr_db)).expect("validated")
    }
}

/// Per-clip RNG stream fully determined by (seed, index, label).
fn clip_rng(seed: u64, index: usize, label: Label) -> ChaCha12Rng {
    let mut x = seed ^ 0x9E37_79B9_7F4A_7C15u64;
    let label_bit = match label {
        Label::Normal => 1u64,
        Label::Anomalous => 2u64,
    };
    for v in [index as u64 + 1, label_bit] {
        x ^= v.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = x.rotate_left(27).wrapping_mul(0x94D0_49BB_1331_11EB);
    }
    ChaCha12Rng::seed_from_u64(x)
}

fn add_harmonics(out: &mut [f64], freqs: &[f64], amp_total: f64, rng: &mut ChaCha12Rng) {
    let sr = SAMPLE_RATE as f64;
    let per_freq = amp_total / freqs.len() as f64;
    for &f in freqs {
        let amp_scale: f64 = rng.random_range(0.9..1.1);
        for k in 1..=3usize {
            let phase: f64 = rng.random_range(0.0..2.0 * PI);
            let a = per_freq * amp_scale / k as f64;
            let w = 2.0 * PI * f * k as f64 / sr;
            for (i, o) in out.iter_mut().enumerate() {
                *o += a * (w * i as f64 + phase).sin();
            }
        }
    }
}

fn add_burst(out: &mut [f64], at: usize, freq: f64, amp: f64, decay: f64) {
    let sr = SAMPLE_RATE as f64;
    let len = (0.08 * sr) as usize;
    for i in 0..len.min(out.len() - at) {
        let t = i as f64 / sr;
        out[at + i] += amp * (-decay * t).exp() * (2.0 * PI * freq * t).sin();
    }
}

fn burst_times(rng: &mut ChaCha12Rng, n_bursts: usize, n: usize) -> Vec<usize> {
    let sr = SAMPLE_RATE as usize;
    let slot = n / n_bursts;
    (0..n_bursts)
        .map(|b| {
            let jitter = rng.random_range(0..slot.saturating_sub(sr / 4).max(1));
            (b * slot + jitter).min(n - sr / 2)
        })
        .collect()
}

fn power(x: &[f64]) -> f64 {
    x.iter().map(|&v| v * v).sum::<f64>() / x.len() as f64
}

/// Deterministically generates one 10 s mono clip.
pub fn gen_clip(spec: &SynthSpec, index: usize, label: Label) -> Result<Vec<f32>> {
    let (signal, noise) = gen_components(spec, index, label)?;
    Ok(signal.iter().zip(&noise).map(|(&s, &n)| (s + n) as f32).collect())
}

/// The machine signal and the SNR-scaled noise as separate tracks (already
/// rescaled by the common anti-clipping factor); their sum is the clip.
pub fn gen_components(spec: &SynthSpec, index: usize, label: Label) -> Result<(Vec<f64>, Vec<f64>)> {
    spec.validate()?;
    let n = CLIP_SECONDS * SAMPLE_RATE as usize;
    let mut rng = clip_rng(spec.seed, index, label);
    let mut signal = vec![0.0f64; n];

    let detune: f64 = if label == Label::Anomalous && spec.anomaly_kind == AnomalyKind::DetunedHarmonics {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        1.0 + sign * rng.random_range(0.04..0.08)
    } else {
        1.0
    };
    let freqs: Vec<f64> = spec.base_freqs.iter().map(|&f| f * detune).collect();

    match spec.machine_type {
        MachineType::Valve => {
            // Mostly silent with resonant clacks.
            let n_bursts = rng.random_range(7..10);
            for at in burst_times(&mut rng, n_bursts, n) {
                signal_burst_for_label(&mut signal, at, &freqs, label, spec.anomaly_kind, &mut rng);
            }
        }
        _ => {
            add_harmonics(&mut signal, &freqs, 0.12, &mut rng);
        }
    }

    if label == Label::Anomalous {
        match spec.anomaly_kind {
            AnomalyKind::TransientBursts => {
                if spec.machine_type != MachineType::Valve {
                    let n_bursts = rng.random_range(10..14);
                    for at in burst_times(&mut rng, n_bursts, n) {
                        let f = rng.random_range(1500.0..3000.0);
                        add_burst(&mut signal, at, f, 0.9, 20.0);
                    }
                }
            }
            AnomalyKind::AmplitudeModulation => {
                let phase: f64 = rng.random_range(0.0..2.0 * PI);
                let fm = 4.0;
                for (i, v) in signal.iter_mut().enumerate() {
                    let t = i as f64 / SAMPLE_RATE as f64;
                    *v *= 1.0 + 0.6 * (2.0 * PI * fm * t + phase).sin();
                }
            }
            AnomalyKind::DetunedHarmonics => {} // applied above
        }
    }

    // White noise scaled so signal power / noise power = 10^(snr/10) exactly.
    let p_sig = power(&signal);
    let mut noise: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let p_noise = power(&noise);
    let target = p_sig / 10f64.powf(spec.snr_db as f64 / 10.0);
    let scale = (target / p_noise).sqrt();
    for nz in noise.iter_mut() {
        *nz *= scale;
    }

    // Uniform rescale if anything would clip at 16-bit full scale; a common
    // factor preserves the SNR and all envelope ratios.
    let peak = signal
        .iter()
        .zip(&noise)
        .fold(0.0f64, |m, (&s, &n)| m.max((s + n).abs()));
    if peak > 0.99 {
        let norm = 0.99 / peak;
        for v in signal.iter_mut().chain(noise.iter_mut()) {
            *v *= norm;
        }
    }
    Ok((signal, noise))
}

fn signal_burst_for_label(
    signal: &mut [f64],
    at: usize,
    freqs: &[f64],
    label: Label,
    kind: AnomalyKind,
    rng: &mut ChaCha12Rng,
) {
    let f0 = freqs[0];
    match (label, kind) {
        (Label::Normal, _) | (Label::Anomalous, AnomalyKind::DetunedHarmonics) => {
            // DetunedHarmonics already shifted freqs; burst shape unchanged.
            add_burst(signal, at, f0, 0.95, 25.0);
        }
        (Label::Anomalous, AnomalyKind::TransientBursts) => {
            // Rattling double-hit with a detuned resonance. Amplitudes and
            // decays are chosen so the total burst energy matches a normal
            // clack (0.95^2/(4*25) = 0.8^2/(4*25) + 0.606^2/(4*35)): the cue
            // is the burst fine structure, not overall clip loudness.
            add_burst(signal, at, f0 * 1.3, 0.8, 25.0);
            let echo = at + (0.05 * SAMPLE_RATE as f64) as usize;
            if echo < signal.len() {
                add_burst(signal, echo, f0 * 1.95, 0.606, 35.0);
            }
        }
        (Label::Anomalous, AnomalyKind::AmplitudeModulation) => {
            let amp = rng.random_range(0.3..0.95);
            add_burst(signal, at, f0, amp, 25.0);
        }
    }
}

/// Writes `<snr>/<machine>/<model_id>/<normal|abnormal>/NNNN.wav` files for
/// one spec under `root`, plus a manifest recording the spec.
pub fn gen_dataset(spec: &SynthSpec, root: &Path, overwrite: bool) -> Result<()> {
    spec.validate()?;
    let subtree = root
        .join(spec.snr_tag().dir_name())
        .join(spec.machine_type.dir_name())
        .join(&spec.model_id);
    if subtree.exists() && subtree.read_dir()?.next().is_some() && !overwrite {
        return Err(Error::Config(format!(
            "target {} is not empty (pass overwrite to regenerate)",
            subtree.display()
        )));
    }
    let normal_dir = subtree.join("normal");
    let abnormal_dir = subtree.join("abnormal");
    std::fs::create_dir_all(&normal_dir)?;
    std::fs::create_dir_all(&abnormal_dir)?;
    for i in 0..spec.n_normal {
        let clip = gen_clip(spec, i, Label::Normal)?;
        write_wav(&normal_dir.join(format!("{i:04}.wav")), &[clip], SAMPLE_RATE)?;
    }
    for i in 0..spec.n_anomalous {
        let clip = gen_clip(spec, i, Label::Anomalous)?;
        write_wav(&abnormal_dir.join(format!("{i:04}.wav")), &[clip], SAMPLE_RATE)?;
    }
    let manifest = serde_json::to_string_pretty(spec)
        .map_err(|e| Error::Format(format!("manifest encode: {e}")))?;
    std::fs::write(subtree.join("manifest.json"), manifest)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio_io::scan_dataset;
    use crate::features::log_mel_of_signal;

    fn fan_spec(snr_db: i32, kind: AnomalyKind) -> SynthSpec {
        SynthSpec {
            machine_type: MachineType::Fan,
            n_normal: 8,
            n_anomalous: 4,
            snr_db,
            base_freqs: vec![120.0, 310.0],
            anomaly_kind: kind,
            seed: 7,
            model_id: "id_00".into(),
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = fan_spec(0, AnomalyKind::DetunedHarmonics);
        let a = gen_clip(&spec, 3, Label::Normal).unwrap();
        let b = gen_clip(&spec, 3, Label::Normal).unwrap();
        assert_eq!(a, b);
        let c = gen_clip(&spec, 3, Label::Anomalous).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn clip_length_and_range() {
        let spec = fan_spec(-6, AnomalyKind::TransientBursts);
        for label in [Label::Normal, Label::Anomalous] {
            let clip = gen_clip(&spec, 0, label).unwrap();
            assert_eq!(clip.len(), 160000);
            assert!(clip.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn snr_is_exact_within_one_percent() {
        for snr_db in [6i32, 0, -6] {
            let spec = fan_spec(snr_db, AnomalyKind::DetunedHarmonics);
            let (signal, noise) = gen_components(&spec, 1, Label::Normal).unwrap();
            let p = |x: &[f64]| x.iter().map(|&v| v * v).sum::<f64>() / x.len() as f64;
            let realized = p(&signal) / p(&noise);
            let target = 10f64.powf(snr_db as f64 / 10.0);
            assert!(
                (realized / target - 1.0).abs() < 0.01,
                "snr {snr_db}: realized {realized} vs {target}"
            );
        }
    }

    #[test]
    fn transient_bursts_exceed_envelope_threshold() {
        let spec = fan_spec(6, AnomalyKind::TransientBursts);
        let clip = gen_clip(&spec, 2, Label::Anomalous).unwrap();
        // Envelope analysis oracle: 10 ms moving average of |x|.
        let win = 160usize;
        let abs: Vec<f64> = clip.iter().map(|&v| v.abs() as f64).collect();
        let env: Vec<f64> = abs
            .windows(win)
            .map(|w| w.iter().sum::<f64>() / win as f64)
            .collect();
        let mut sorted = env.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[sorted.len() / 2];
        // Count separated threshold crossings.
        let thr = 5.0 * median;
        let mut crossings = 0;
        let mut last = 0usize;
        for (i, &e) in env.iter().enumerate() {
            if e > thr && (i - last > 1600 || crossings == 0) {
                crossings += 1;
                last = i;
            } else if e > thr {
                last = i;
            }
        }
        assert!(crossings >= 3, "only {crossings} bursts above 5x median envelope");
    }

    #[test]
    fn normal_spectra_are_stationary_and_bursty_clips_are_not() {
        let spec = SynthSpec {
            machine_type: MachineType::Valve,
            n_normal: 4,
            n_anomalous: 2,
            snr_db: 6,
            base_freqs: vec![800.0],
            anomaly_kind: AnomalyKind::TransientBursts,
            seed: 13,
            model_id: "id_00".into(),
        };
        let cos_mean = |clip: &[f32]| {
            let lm = log_mel_of_signal(clip, SAMPLE_RATE).unwrap();
            let mut acc = 0.0f64;
            let mut cnt = 0usize;
            for t in 1..lm.n_frames() {
                let a = lm.values.row(t - 1);
                let b = lm.values.row(t);
                let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
                let na: f64 = a.iter().map(|&x| x * x).sum::<f64>().sqrt();
                let nb: f64 = b.iter().map(|&x| x * x).sum::<f64>().sqrt();
                acc += dot / (na * nb).max(1e-12);
                cnt += 1;
            }
            acc / cnt as f64
        };
        let fan = fan_spec(6, AnomalyKind::TransientBursts);
        let normal = cos_mean(&gen_clip(&fan, 0, Label::Normal).unwrap());
        assert!(normal > 0.95, "normal stationarity {normal}");
        let anomalous = cos_mean(&gen_clip(&spec, 0, Label::Anomalous).unwrap());
        assert!(anomalous < normal, "{anomalous} vs {normal}");
    }

    #[test]
    fn dataset_layout_counts_and_rescan() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            machine_type: MachineType::Pump,
            n_normal: 6,
            n_anomalous: 3,
            snr_db: 0,
            base_freqs: vec![200.0],
            anomaly_kind: AnomalyKind::AmplitudeModulation,
            seed: 3,
            model_id: "id_02".into(),
        };
        gen_dataset(&spec, dir.path(), false).unwrap();
        let index = scan_dataset(dir.path()).unwrap();
        assert_eq!(index.entries.len(), 9);
        assert_eq!(index.entries.iter().filter(|e| e.label == Label::Anomalous).count(), 3);
        assert!(index
            .entries
            .iter()
            .all(|e| e.machine == MachineType::Pump && e.snr == SnrTag::Db0));

        // Refuse without overwrite; allow with it, byte-identically.
        assert!(matches!(gen_dataset(&spec, dir.path(), false), Err(Error::Config(_))));
        let first = std::fs::read(dir.path().join("0dB/pump/id_02/normal/0000.wav")).unwrap();
        gen_dataset(&spec, dir.path(), true).unwrap();
        let second = std::fs::read(dir.path().join("0dB/pump/id_02/normal/0000.wav")).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn infeasible_spec_is_rejected() {
        let mut spec = fan_spec(0, AnomalyKind::DetunedHarmonics);
        spec.n_normal = 5;
        spec.n_anomalous = 3;
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
    }
}
