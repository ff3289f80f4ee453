use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::params::{LayoutDescriptor, NetworkParams};
use super::tensor::Tensor;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"AADC";
const VERSION: u16 = 1;

/// Reproducibility metadata stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model_kind: String,
    pub subspace_dim: Option<usize>,
    pub seed: u64,
    pub init_scheme: String,
    pub config_digest: String,
    pub lambda: f64,
    pub center: Option<Vec<f64>>,
    pub radius_sq: Option<f64>,
    pub nu: Option<f64>,
    pub norm_mean: f64,
    pub norm_std: f64,
    pub machine: Option<String>,
    pub model_id: Option<String>,
    pub snr: Option<String>,
    pub valve_preprocessed: Option<bool>,
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    layout: LayoutDescriptor,
    tensors: Vec<TensorHeader>,
    meta: CheckpointMeta,
}

/// Trained model weights (f32) plus metadata, in a versioned binary container.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: NetworkParams<f32>,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = Header {
            layout: self.params.layout().clone(),
            tensors: self
                .params
                .entries()
                .iter()
                .map(|(n, t)| TensorHeader { name: n.clone(), shape: t.shape().to_vec() })
                .collect(),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header)
            .map_err(|e| Error::Format(format!("checkpoint header encode: {e}")))?;
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_u16::<LittleEndian>(VERSION)?;
        w.write_u32::<LittleEndian>(json.len() as u32)?;
        w.write_all(&json)?;
        for (_, t) in self.params.entries() {
            for &v in t.data() {
                w.write_f32::<LittleEndian>(v)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format("checkpoint: truncated magic".into()))?;
        if &magic != MAGIC {
            return Err(Error::Format("checkpoint: bad magic".into()));
        }
        let version = r.read_u16::<LittleEndian>()?;
        if version != VERSION {
            return Err(Error::Unsupported(format!("checkpoint version {version}")));
        }
        let json_len = r.read_u32::<LittleEndian>()? as usize;
        let mut json = vec![0u8; json_len];
        r.read_exact(&mut json)
            .map_err(|_| Error::Format("checkpoint: truncated header".into()))?;
        let header: Header = serde_json::from_slice(&json)
            .map_err(|e| Error::Format(format!("checkpoint header decode: {e}")))?;
        let mut entries = Vec::with_capacity(header.tensors.len());
        for th in header.tensors {
            let n: usize = th.shape.iter().product();
            let mut data = vec![0f32; n];
            r.read_f32_into::<LittleEndian>(&mut data)
                .map_err(|_| Error::Format(format!("checkpoint: truncated tensor '{}'", th.name)))?;
            entries.push((th.name, Tensor::new(th.shape, data)));
        }
        Ok(Checkpoint {
            params: NetworkParams::new(header.layout, entries),
            meta: header.meta,
        })
    }
}
