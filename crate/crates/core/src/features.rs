//! Log-Mel feature extraction and model-input preparation.
//!
//! Mono audio -> Hann-windowed STFT power -> Mel filterbank -> log energies,
//! then either 320-dim stacked frames (dense AE) or zero-padded 64x64 windows
//! (deep SVDD). Also the training-set normalizer and the valve silence-removal
//! preprocessing.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const FRAME_SIZE: usize = 1024;
pub const HOP_SIZE: usize = 512;
pub const N_MELS: usize = 64;
pub const AE_STACK: usize = 5;
pub const AE_INPUT_DIM: usize = N_MELS * AE_STACK;
pub const WINDOW_WIDTH: usize = 64;

/// Mel energies are clamped here before the natural log.
pub const LOG_FLOOR: f64 = 1e-10;

/// Row-major 2-D matrix of f64, used for power spectra and filterbanks.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Mat {
        assert_eq!(rows * cols, data.len());
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Time x Mel matrix of natural-log Mel energies.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpectrogram {
    pub values: Mat,
    pub frame_size: usize,
    pub hop_size: usize,
    pub sample_rate: u32,
}

impl LogMelSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.values.rows
    }

    pub fn n_mels(&self) -> usize {
        self.values.cols
    }
}

/// Scalar mean/std over all training log-Mel cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

/// Model-ready inputs (f32) derived from one clip's spectrogram.
#[derive(Debug, Clone)]
pub struct FeatureBatch {
    /// Row-major [n_vectors x 320].
    pub ae_vectors: Vec<f32>,
    pub n_vectors: usize,
    /// Row-major [n_windows x 64 x 64].
    pub svdd_windows: Vec<f32>,
    pub n_windows: usize,
    pub clip_id: String,
}

impl FeatureBatch {
    pub fn from_spectrogram(spec: &LogMelSpectrogram, clip_id: &str) -> Result<FeatureBatch> {
        let stacked = stack_frames(spec, AE_STACK)?;
        let windows = tile_windows(spec, WINDOW_WIDTH)?;
        let n_vectors = stacked.rows;
        let ae_vectors = stacked.data().iter().map(|&v| v as f32).collect();
        let n_windows = windows.len();
        let mut svdd_windows = Vec::with_capacity(n_windows * WINDOW_WIDTH * WINDOW_WIDTH);
        for w in &windows {
            svdd_windows.extend(w.data().iter().map(|&v| v as f32));
        }
        Ok(FeatureBatch {
            ae_vectors,
            n_vectors,
            svdd_windows,
            n_windows,
            clip_id: clip_id.to_string(),
        })
    }
}

#[inline]
fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let m = (2 * n - 2) as isize;
    let mut j = i % m;
    if j < 0 {
        j += m;
    }
    if j < n as isize {
        j as usize
    } else {
        (m - j) as usize
    }
}

/// Hann-windowed, reflect-centered STFT power spectrogram.
///
/// Frame count is `floor(len / hop) + 1`; bins are the one-sided
/// `frame_size / 2 + 1` squared magnitudes.
pub fn stft_power(signal: &[f32], frame_size: usize, hop_size: usize) -> Result<Mat> {
    if signal.is_empty() {
        return Err(Error::EmptyInput("stft: empty signal".into()));
    }
    if frame_size % 2 != 0 || frame_size == 0 || hop_size == 0 {
        return Err(Error::Config(format!(
            "stft: frame_size {frame_size} must be even and hop_size {hop_size} nonzero"
        )));
    }
    let n = signal.len();
    let n_frames = n / hop_size + 1;
    let n_bins = frame_size / 2 + 1;
    let pad = (frame_size / 2) as isize;

    // Periodic Hann window.
    let window: Vec<f64> = (0..frame_size)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / frame_size as f64).cos())
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(frame_size);
    let mut out = Mat::zeros(n_frames, n_bins);
    let mut buf = vec![Complex::new(0.0, 0.0); frame_size];
    for t in 0..n_frames {
        let start = (t * hop_size) as isize - pad;
        for (j, b) in buf.iter_mut().enumerate() {
            let src = reflect_index(start + j as isize, n);
            *b = Complex::new(signal[src] as f64 * window[j], 0.0);
        }
        fft.process(&mut buf);
        for b in 0..n_bins {
            out.set(t, b, buf[b].norm_sqr());
        }
    }
    Ok(out)
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular Mel filterbank, HTK scale, un-normalized (each triangle peaks
/// at 1.0), centers equally spaced on the Mel scale from 0 Hz to Nyquist.
pub fn mel_filterbank(n_mels: usize, frame_size: usize, sample_rate: u32) -> Result<Mat> {
    let n_bins = frame_size / 2 + 1;
    if n_mels == 0 || sample_rate == 0 {
        return Err(Error::Config("mel_filterbank: n_mels and sample_rate must be positive".into()));
    }
    if n_mels > n_bins {
        return Err(Error::Config(format!(
            "mel_filterbank: {n_mels} filters exceed {n_bins} available bins"
        )));
    }
    let nyquist = sample_rate as f64 / 2.0;
    let mel_hi = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_hi * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / frame_size as f64;
    let mut bank = Mat::zeros(n_mels, n_bins);
    for m in 0..n_mels {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for b in 0..n_bins {
            let f = b as f64 * bin_hz;
            let w = if f <= lo || f >= hi {
                0.0
            } else if f <= mid {
                (f - lo) / (mid - lo)
            } else {
                (hi - f) / (hi - mid)
            };
            bank.set(m, b, w.max(0.0));
        }
    }
    Ok(bank)
}

/// Applies the filterbank and takes the floored natural log.
pub fn log_mel(power: &Mat, fbank: &Mat) -> Result<LogMelSpectrogram> {
    if power.cols != fbank.cols {
        return Err(Error::Dimension(format!(
            "log_mel: power has {} bins but filterbank has {}",
            power.cols, fbank.cols
        )));
    }
    let mut out = Mat::zeros(power.rows, fbank.rows);
    for t in 0..power.rows {
        let prow = power.row(t);
        for m in 0..fbank.rows {
            let energy: f64 = fbank.row(m).iter().zip(prow).map(|(&w, &p)| w * p).sum();
            out.set(t, m, energy.max(LOG_FLOOR).ln());
        }
    }
    Ok(LogMelSpectrogram {
        values: out,
        frame_size: FRAME_SIZE,
        hop_size: HOP_SIZE,
        sample_rate: 16000,
    })
}

/// Full default-configuration pipeline from a mono signal.
pub fn log_mel_of_signal(signal: &[f32], sample_rate: u32) -> Result<LogMelSpectrogram> {
    let power = stft_power(signal, FRAME_SIZE, HOP_SIZE)?;
    let fbank = mel_filterbank(N_MELS, FRAME_SIZE, sample_rate)?;
    let mut spec = log_mel(&power, &fbank)?;
    spec.sample_rate = sample_rate;
    Ok(spec)
}

/// Concatenates `n_stack` consecutive frames with stride 1.
pub fn stack_frames(spec: &LogMelSpectrogram, n_stack: usize) -> Result<Mat> {
    let (frames, mels) = (spec.n_frames(), spec.n_mels());
    if frames < n_stack {
        return Err(Error::Insufficient(format!(
            "stack_frames: {frames} frames < stack size {n_stack}"
        )));
    }
    let n_vectors = frames - n_stack + 1;
    let width = n_stack * mels;
    let mut out = Mat::zeros(n_vectors, width);
    for i in 0..n_vectors {
        for s in 0..n_stack {
            let src = spec.values.row(i + s);
            for (m, &v) in src.iter().enumerate() {
                out.set(i, s * mels + m, v);
            }
        }
    }
    Ok(out)
}

/// Splits the spectrogram into non-overlapping `width`-frame windows,
/// zero-padding the trailing window.
pub fn tile_windows(spec: &LogMelSpectrogram, width: usize) -> Result<Vec<Mat>> {
    let (frames, mels) = (spec.n_frames(), spec.n_mels());
    if mels != width {
        return Err(Error::Dimension(format!(
            "tile_windows: n_mels {mels} != window width {width}"
        )));
    }
    let n_windows = frames.div_ceil(width);
    let mut out = Vec::with_capacity(n_windows);
    for w in 0..n_windows {
        let mut win = Mat::zeros(width, mels);
        for r in 0..width {
            let src = w * width + r;
            if src < frames {
                for m in 0..mels {
                    win.set(r, m, spec.values.at(src, m));
                }
            }
        }
        out.push(win);
    }
    Ok(out)
}

/// Population mean/std over all cells of all training spectrograms.
pub fn fit_normalizer(train_specs: &[&LogMelSpectrogram]) -> Result<NormStats> {
    if train_specs.is_empty() {
        return Err(Error::EmptyInput("fit_normalizer: no spectrograms".into()));
    }
    let mut n = 0usize;
    let mut sum = 0.0f64;
    for s in train_specs {
        n += s.values.data().len();
        sum += s.values.data().iter().sum::<f64>();
    }
    let mean = sum / n as f64;
    let mut ssq = 0.0f64;
    for s in train_specs {
        ssq += s.values.data().iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>();
    }
    let std = (ssq / n as f64).sqrt().max(1e-8);
    Ok(NormStats { mean, std })
}

pub fn apply_normalizer(spec: &LogMelSpectrogram, stats: &NormStats) -> LogMelSpectrogram {
    let data = spec.values.data().iter().map(|&v| (v - stats.mean) / stats.std).collect();
    LogMelSpectrogram {
        values: Mat::from_vec(spec.values.rows, spec.values.cols, data),
        ..*spec
    }
}

/// Removes silent sections from valve recordings: detects envelope peaks and
/// concatenates the 1-second windows around them. Returns the input unchanged
/// when no peak qualifies.
pub fn preprocess_valve(signal: &[f32], sample_rate: u32) -> Result<Vec<f32>> {
    let sr = sample_rate as usize;
    if signal.len() < sr {
        return Err(Error::Insufficient(format!(
            "preprocess_valve: {} samples is shorter than 1 s",
            signal.len()
        )));
    }
    // Amplitude envelope: |x| smoothed by a centered 10 ms moving average.
    let win = (sr / 100).max(1);
    let half = win / 2;
    let abs: Vec<f64> = signal.iter().map(|&v| v.abs() as f64).collect();
    let mut prefix = vec![0.0f64; abs.len() + 1];
    for (i, &a) in abs.iter().enumerate() {
        prefix[i + 1] = prefix[i] + a;
    }
    let n = abs.len();
    let env: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + win - half).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect();

    let mut sorted = env.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[n / 2];
    let threshold = 5.0 * median;

    // Local maxima above threshold.
    let mut candidates: Vec<usize> = Vec::new();
    for i in 1..n - 1 {
        if env[i] > threshold && env[i] > env[i - 1] && env[i] >= env[i + 1] {
            candidates.push(i);
        }
    }
    // Greedy non-maximum suppression with a 1 s minimum gap.
    candidates.sort_by(|&a, &b| env[b].partial_cmp(&env[a]).unwrap());
    let mut kept: Vec<usize> = Vec::new();
    for &c in &candidates {
        if kept.iter().all(|&k| k.abs_diff(c) >= sr) {
            kept.push(c);
        }
    }
    if kept.is_empty() {
        return Ok(signal.to_vec());
    }
    kept.sort_unstable();
    let mut out = Vec::with_capacity(kept.len() * sr);
    for &peak in &kept {
        let start = peak.saturating_sub(sr / 2).min(n - sr);
        out.extend_from_slice(&signal[start..start + sr]);
    }
    Ok(out)
}

const FEAT_MAGIC: &[u8; 4] = b"AADF";
const FEAT_VERSION: u16 = 1;

/// Writes the on-disk feature cache entry for one clip: a 16-byte header
/// (magic, version, n_frames, n_mels, reserved) then row-major f32 cells.
pub fn write_feat(path: &Path, spec: &LogMelSpectrogram) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FEAT_MAGIC)?;
    w.write_u16::<LittleEndian>(FEAT_VERSION)?;
    w.write_u32::<LittleEndian>(spec.n_frames() as u32)?;
    w.write_u16::<LittleEndian>(spec.n_mels() as u16)?;
    w.write_all(&[0u8; 4])?; // reserved
    for &v in spec.values.data() {
        w.write_f32::<LittleEndian>(v as f32)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_feat(path: &Path) -> Result<LogMelSpectrogram> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Format("feat: truncated header".into()))?;
    if &magic != FEAT_MAGIC {
        return Err(Error::Format("feat: bad magic".into()));
    }
    let version = r.read_u16::<LittleEndian>().map_err(|_| Error::Format("feat: truncated header".into()))?;
    if version != FEAT_VERSION {
        return Err(Error::Unsupported(format!("feat version {version}")));
    }
    let n_frames = r.read_u32::<LittleEndian>().map_err(|_| Error::Format("feat: truncated header".into()))? as usize;
    let n_mels = r.read_u16::<LittleEndian>().map_err(|_| Error::Format("feat: truncated header".into()))? as usize;
    let mut reserved = [0u8; 4];
    r.read_exact(&mut reserved).map_err(|_| Error::Format("feat: truncated header".into()))?;
    let mut cells = vec![0f32; n_frames * n_mels];
    r.read_f32_into::<LittleEndian>(&mut cells)
        .map_err(|_| Error::Format("feat: truncated cell data".into()))?;
    Ok(LogMelSpectrogram {
        values: Mat::from_vec(n_frames, n_mels, cells.iter().map(|&v| v as f64).collect()),
        frame_size: FRAME_SIZE,
        hop_size: HOP_SIZE,
        sample_rate: 16000,
    })
}
