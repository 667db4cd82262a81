//! Flat binary model checkpoints.
//!
//! Layout: magic `SFHE`, version byte, layer count (u32 LE), then per layer a
//! weight tensor followed by a bias tensor, each as
//! `ndim: u32 LE, dims: u32 LE…, values: f32 LE`.

use std::fs;
use std::path::Path;

use super::NnError;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SFHE";
const CHECKPOINT_VERSION: u8 = 1;

pub fn save_checkpoint(path: &Path, layers: &[(&Tensor, &Tensor)]) -> Result<(), NnError> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for (w, b) in layers {
        out.extend_from_slice(&w.to_bytes());
        out.extend_from_slice(&b.to_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<(Tensor, Tensor)>, NnError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 9 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(NnError::Checkpoint(format!(
            "{}: missing SFHE magic",
            path.display()
        )));
    }
    if bytes[4] != CHECKPOINT_VERSION {
        return Err(NnError::Checkpoint(format!(
            "unsupported checkpoint version {}",
            bytes[4]
        )));
    }
    let count = u32::from_le_bytes([bytes[5], bytes[6], bytes[7], bytes[8]]) as usize;
    let mut off = 9;
    let mut layers = Vec::with_capacity(count);
    for i in 0..count {
        let (w, used) = Tensor::from_bytes(&bytes[off..])
            .map_err(|e| NnError::Checkpoint(format!("layer {i} weights: {e}")))?;
        off += used;
        let (b, used) = Tensor::from_bytes(&bytes[off..])
            .map_err(|e| NnError::Checkpoint(format!("layer {i} bias: {e}")))?;
        off += used;
        layers.push((w, b));
    }
    Ok(layers)
}
