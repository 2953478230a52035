//! Binary model files: magic, little-endian u64 header length, JSON header
//! (config and tensor layout), then every tensor of [`Model::state`] as
//! little-endian f32 in layout order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_model, Model, ModelConfig, NnError, Result, Scalar, TensorSpec};

pub const CHECKPOINT_MAGIC: &[u8; 9] = b"APNEACNN1";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tensors: Vec<TensorSpec>,
}

pub fn write_checkpoint<T: Scalar>(model: &Model<T>) -> Result<Vec<u8>> {
    let header = Header { config: model.config().clone(), tensors: model.layout() };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(CHECKPOINT_MAGIC.len() + 8 + json.len() + 4 * model.parameter_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, values) in model.state() {
        for v in values {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Model<T>> {
    let m = CHECKPOINT_MAGIC.len();
    if bytes.len() < m || &bytes[..m] != CHECKPOINT_MAGIC {
        return Err(NnError::MagicMismatch);
    }
    let arch = NnError::ArchitectureMismatch;
    let len_bytes: [u8; 8] = bytes
        .get(m..m + 8)
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| arch("truncated header length".into()))?;
    let hlen = usize::try_from(u64::from_le_bytes(len_bytes)).map_err(|_| arch("header too long".into()))?;
    let body_start = (m + 8).checked_add(hlen).filter(|&e| e <= bytes.len());
    let body_start = body_start.ok_or_else(|| arch("header runs past end of file".into()))?;
    let header: Header = serde_json::from_slice(&bytes[m + 8..body_start])?;

    let mut model: Model<T> =
        build_model(&header.config, 0).map_err(|e| arch(format!("declared config: {e}")))?;
    let layout = model.layout();
    if layout != header.tensors {
        let first = layout.iter().zip(&header.tensors).find(|(a, b)| a != b);
        return Err(arch(match first {
            Some((want, got)) => format!("tensor {} has shape {:?}, config implies {:?}", got.name, got.shape, want.shape),
            None => format!("{} tensors declared, config implies {}", header.tensors.len(), layout.len()),
        }));
    }
    let n: usize = layout.iter().map(|s| s.shape.iter().product::<usize>()).sum();
    let body = &bytes[body_start..];
    if body.len() != 4 * n {
        return Err(arch(format!("expected {} parameter bytes, found {}", 4 * n, body.len())));
    }
    let mut values = body
        .chunks_exact(4)
        .map(|c| T::of_f64(f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]))));
    for buf in model.state_mut() {
        for v in buf.iter_mut() {
            *v = values.next().expect("length checked above");
        }
    }
    Ok(model)
}

pub fn save_checkpoint<T: Scalar>(model: &Model<T>, path: &Path) -> Result<()> {
    fs::write(path, write_checkpoint(model)?)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Model<T>> {
    read_checkpoint(&fs::read(path)?)
}
