//! RIFF/WAVE PCM16 reading, channel selection, and dataset directory indexing.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::{Error, Result};

/// PCM samples normalized to [-1, 1], one row per channel.
#[derive(Debug, Clone)]
pub struct AudioClip {
    pub samples: Vec<Vec<f32>>,
    pub sample_rate: u32,
    pub source_path: String,
}

impl AudioClip {
    pub fn channels(&self) -> usize {
        self.samples.len()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.first().map_or(0, |c| c.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MachineType {
    Valve,
    Pump,
    Fan,
    SlideRail,
}

impl MachineType {
    pub fn from_dir_name(name: &str) -> Option<MachineType> {
        match name {
            "valve" => Some(MachineType::Valve),
            "pump" => Some(MachineType::Pump),
            "fan" => Some(MachineType::Fan),
            "slide_rail" => Some(MachineType::SlideRail),
            _ => None,
        }
    }

    pub fn dir_name(&self) -> &'static str {
        match self {
            MachineType::Valve => "valve",
            MachineType::Pump => "pump",
            MachineType::Fan => "fan",
            MachineType::SlideRail => "slide_rail",
        }
    }
}

impl fmt::Display for MachineType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SnrTag {
    Db6,
    Db0,
    DbNeg6,
}

impl SnrTag {
    pub fn from_dir_name(name: &str) -> Option<SnrTag> {
        match name {
            "6dB" => Some(SnrTag::Db6),
            "0dB" => Some(SnrTag::Db0),
            "-6dB" => Some(SnrTag::DbNeg6),
            _ => None,
        }
    }

    pub fn dir_name(&self) -> &'static str {
        match self {
            SnrTag::Db6 => "6dB",
            SnrTag::Db0 => "0dB",
            SnrTag::DbNeg6 => "-6dB",
        }
    }

    pub fn db(&self) -> i32 {
        match self {
            SnrTag::Db6 => 6,
            SnrTag::Db0 => 0,
            SnrTag::DbNeg6 => -6,
        }
    }
}

impl fmt::Display for SnrTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Normal,
    Anomalous,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Anomalous => "anomalous",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipEntry {
    pub path: PathBuf,
    pub machine: MachineType,
    pub model_id: String,
    pub snr: SnrTag,
    pub label: Label,
}

/// Deterministic index of a dataset tree, plus warnings for skipped entries.
#[derive(Debug, Clone, Default)]
pub struct ClipIndex {
    pub entries: Vec<ClipEntry>,
    pub warnings: Vec<String>,
}

impl ClipIndex {
    /// Entries restricted to one (machine, model_id, snr) cell.
    pub fn cell(&self, machine: MachineType, model_id: &str, snr: SnrTag) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.machine == machine && e.model_id == model_id && e.snr == snr)
            .map(|(i, _)| i)
            .collect()
    }

    /// Distinct (machine, model_id, snr) cells present, in index order.
    pub fn cells(&self) -> Vec<(MachineType, String, SnrTag)> {
        let mut out: Vec<(MachineType, String, SnrTag)> = Vec::new();
        for e in &self.entries {
            let key = (e.machine, e.model_id.clone(), e.snr);
            if !out.contains(&key) {
                out.push(key);
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["path", "machine", "model_id", "snr", "label"]).map_err(csv_err)?;
        for e in &self.entries {
            w.write_record([
                e.path.to_string_lossy().as_ref(),
                e.machine.dir_name(),
                &e.model_id,
                e.snr.dir_name(),
                e.label.as_str(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<ClipIndex> {
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let mut entries = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != 5 {
                return Err(Error::Format(format!("index csv: expected 5 fields, got {}", rec.len())));
            }
            let machine = MachineType::from_dir_name(&rec[1])
                .ok_or_else(|| Error::Format(format!("index csv: unknown machine '{}'", &rec[1])))?;
            let snr = SnrTag::from_dir_name(&rec[3])
                .ok_or_else(|| Error::Format(format!("index csv: unknown snr '{}'", &rec[3])))?;
            let label = match &rec[4] {
                "normal" => Label::Normal,
                "anomalous" => Label::Anomalous,
                other => return Err(Error::Format(format!("index csv: unknown label '{other}'"))),
            };
            entries.push(ClipEntry {
                path: PathBuf::from(&rec[0]),
                machine,
                model_id: rec[2].to_string(),
                snr,
                label,
            });
        }
        Ok(ClipIndex { entries, warnings: Vec::new() })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

/// Reads a 16-bit PCM RIFF/WAVE file, de-interleaves channels, and scales
/// samples to [-1, 1] by dividing by 32768.
pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let mut r = BufReader::new(File::open(path)?);
    let mut riff = [0u8; 4];
    r.read_exact(&mut riff).map_err(|_| Error::Format("wav: truncated header".into()))?;
    if &riff != b"RIFF" {
        return Err(Error::Format("wav: missing RIFF tag".into()));
    }
    let _riff_size = r.read_u32::<LittleEndian>().map_err(trunc)?;
    let mut wave = [0u8; 4];
    r.read_exact(&mut wave).map_err(|_| Error::Format("wav: truncated header".into()))?;
    if &wave != b"WAVE" {
        return Err(Error::Format("wav: missing WAVE tag".into()));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (format, channels, rate, bits)
    let mut data: Option<Vec<u8>> = None;
    loop {
        let mut id = [0u8; 4];
        match r.read_exact(&mut id) {
            Ok(()) => {}
            Err(_) => break,
        }
        let size = r.read_u32::<LittleEndian>().map_err(trunc)? as usize;
        match &id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::Format("wav: fmt chunk too small".into()));
                }
                let mut buf = vec![0u8; size];
                r.read_exact(&mut buf).map_err(trunc)?;
                let mut c = &buf[..];
                let audio_format = c.read_u16::<LittleEndian>().map_err(trunc)?;
                let channels = c.read_u16::<LittleEndian>().map_err(trunc)?;
                let rate = c.read_u32::<LittleEndian>().map_err(trunc)?;
                let _byte_rate = c.read_u32::<LittleEndian>().map_err(trunc)?;
                let _block_align = c.read_u16::<LittleEndian>().map_err(trunc)?;
                let bits = c.read_u16::<LittleEndian>().map_err(trunc)?;
                fmt = Some((audio_format, channels, rate, bits));
            }
            b"data" => {
                let mut buf = vec![0u8; size];
                r.read_exact(&mut buf).map_err(trunc)?;
                data = Some(buf);
            }
            _ => {
                // Skip unknown chunks (padded to even size).
                let skip = size + (size & 1);
                std::io::copy(&mut r.by_ref().take(skip as u64), &mut std::io::sink())?;
            }
        }
        if fmt.is_some() && data.is_some() {
            break;
        }
    }

    let (audio_format, channels, rate, bits) =
        fmt.ok_or_else(|| Error::Format("wav: missing fmt chunk".into()))?;
    if audio_format != 1 {
        return Err(Error::Unsupported(format!(
            "wav: non-PCM encoding (format code {audio_format})"
        )));
    }
    if bits != 16 {
        return Err(Error::Unsupported(format!("wav: {bits}-bit PCM (only 16-bit supported)")));
    }
    if channels == 0 {
        return Err(Error::Format("wav: zero channels".into()));
    }
    let data = data.ok_or_else(|| Error::Format("wav: missing data chunk".into()))?;
    let n_frames = data.len() / 2 / channels as usize;
    if n_frames == 0 {
        return Err(Error::Format("wav: empty data chunk".into()));
    }
    let mut samples = vec![Vec::with_capacity(n_frames); channels as usize];
    let mut c = &data[..];
    for _ in 0..n_frames {
        for ch in samples.iter_mut() {
            let v = c.read_i16::<LittleEndian>().map_err(trunc)?;
            ch.push(v as f32 / 32768.0);
        }
    }
    Ok(AudioClip {
        samples,
        sample_rate: rate,
        source_path: path.to_string_lossy().into_owned(),
    })
}

fn trunc<E>(_: E) -> Error {
    Error::Format("wav: truncated chunk".into())
}

/// Writes interleaved 16-bit PCM; the inverse of [`read_wav`] up to rounding.
pub fn write_wav(path: &Path, channels: &[Vec<f32>], sample_rate: u32) -> Result<()> {
    if channels.is_empty() || channels[0].is_empty() {
        return Err(Error::EmptyInput("write_wav: no samples".into()));
    }
    let n = channels[0].len();
    if channels.iter().any(|c| c.len() != n) {
        return Err(Error::Dimension("write_wav: ragged channels".into()));
    }
    let n_ch = channels.len() as u16;
    let data_len = (n * channels.len() * 2) as u32;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(b"RIFF")?;
    w.write_u32::<LittleEndian>(36 + data_len)?;
    w.write_all(b"WAVE")?;
    w.write_all(b"fmt ")?;
    w.write_u32::<LittleEndian>(16)?;
    w.write_u16::<LittleEndian>(1)?; // PCM
    w.write_u16::<LittleEndian>(n_ch)?;
    w.write_u32::<LittleEndian>(sample_rate)?;
    w.write_u32::<LittleEndian>(sample_rate * n_ch as u32 * 2)?;
    w.write_u16::<LittleEndian>(n_ch * 2)?;
    w.write_u16::<LittleEndian>(16)?;
    w.write_all(b"data")?;
    w.write_u32::<LittleEndian>(data_len)?;
    for i in 0..n {
        for ch in channels {
            let v = (ch[i] * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            w.write_i16::<LittleEndian>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Extracts one channel as a mono clip.
pub fn select_channel(clip: &AudioClip, index: usize) -> Result<AudioClip> {
    if index >= clip.channels() {
        return Err(Error::Bounds(format!(
            "channel {index} out of range (clip has {})",
            clip.channels()
        )));
    }
    Ok(AudioClip {
        samples: vec![clip.samples[index].clone()],
        sample_rate: clip.sample_rate,
        source_path: clip.source_path.clone(),
    })
}

/// Indexes a tree of the form `root/<snr>/<machine>/<model_id>/<normal|abnormal>/*.wav`.
///
/// Labels come from directory names only. Unknown machine or label directories
/// are skipped with a warning; an empty result is an error.
pub fn scan_dataset(root: &Path) -> Result<ClipIndex> {
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    let mut files: Vec<PathBuf> = WalkDir::new(root)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| p.extension().map_or(false, |x| x == "wav"))
        .collect();
    files.sort();
    for path in files {
        let rel = match path.strip_prefix(root) {
            Ok(r) => r,
            Err(_) => continue,
        };
        let parts: Vec<String> = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect();
        if parts.len() != 5 {
            warnings.push(format!("skipped (unexpected depth): {}", path.display()));
            continue;
        }
        let snr = match SnrTag::from_dir_name(&parts[0]) {
            Some(s) => s,
            None => {
                warnings.push(format!("skipped (unknown snr '{}'): {}", parts[0], path.display()));
                continue;
            }
        };
        let machine = match MachineType::from_dir_name(&parts[1]) {
            Some(m) => m,
            None => {
                warnings.push(format!(
                    "skipped (unknown machine '{}'): {}",
                    parts[1],
                    path.display()
                ));
                continue;
            }
        };
        let label = match parts[3].as_str() {
            "normal" => Label::Normal,
            "abnormal" => Label::Anomalous,
            other => {
                warnings.push(format!("skipped (unknown label dir '{other}'): {}", path.display()));
                continue;
            }
        };
        // Cheap header sanity check; full parsing happens at load time.
        if !wav_header_ok(&path) {
            warnings.push(format!("skipped (not a RIFF/WAVE file): {}", path.display()));
            continue;
        }
        entries.push(ClipEntry { path, machine, model_id: parts[2].clone(), snr, label });
    }
    if entries.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no indexable wav files under {}",
            root.display()
        )));
    }
    Ok(ClipIndex { entries, warnings })
}

fn wav_header_ok(path: &Path) -> bool {
    let mut buf = [0u8; 12];
    match File::open(path).and_then(|mut f| f.read_exact(&mut buf)) {
        Ok(()) => &buf[0..4] == b"RIFF" && &buf[8..12] == b"WAVE",
        Err(_) => false,
    }
}
