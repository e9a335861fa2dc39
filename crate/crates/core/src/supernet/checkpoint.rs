//! Checkpoint file: one line of JSON header, then every parameter as a
//! little-endian `f64` in canonical order.
//!
//! Canonical order: stem weight (row-major) and bias; for each block, each
//! choice, each dense layer: weight then bias; head weight and bias.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{values_to_bytes, ChoiceParams, Supernet};
use crate::nn::{DenseParams, Matrix};
use crate::rng::sha256_hex;
use crate::space::{Dims, SearchSpace};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "shiftnas-ckpt-v1";

/// Which run produced an artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub space: SearchSpace,
    pub dims: Dims,
    pub train_steps: u64,
    pub stem_reinitialized: bool,
    pub param_count: usize,
    /// SHA-256 of the parameter payload.
    pub checksum: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

pub fn save_checkpoint(net: &Supernet, path: &Path, provenance: Option<&Provenance>) -> Result<()> {
    let payload = values_to_bytes(net.values());
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.to_string(),
        space: net.space().clone(),
        dims: net.space().dims(),
        train_steps: net.train_steps(),
        stem_reinitialized: net.stem_reinitialized(),
        param_count: payload.len() / 8,
        checksum: sha256_hex(&payload),
        provenance: provenance.cloned(),
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    bytes.extend_from_slice(&payload);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(Supernet, CheckpointHeader)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Loads and refuses a checkpoint whose block catalog differs from `expected`.
pub fn load_checkpoint_expecting(path: &Path, expected: &SearchSpace) -> Result<(Supernet, CheckpointHeader)> {
    let (net, header) = load_checkpoint(path)?;
    if &header.space != expected {
        return Err(Error::SpaceMismatch);
    }
    Ok((net, header))
}

fn decode(bytes: &[u8]) -> Result<(Supernet, CheckpointHeader)> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checkpoint("missing header line".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..newline])?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!(
            "unsupported format `{}`, expected `{CHECKPOINT_FORMAT}`",
            header.format
        )));
    }
    header.space.validate()?;
    if header.dims != header.space.dims() {
        return Err(Error::Checkpoint("header dims disagree with space".into()));
    }
    let payload = &bytes[newline + 1..];
    if payload.len() != header.param_count * 8 {
        return Err(Error::Checkpoint(format!(
            "payload holds {} bytes, header declares {} params",
            payload.len(),
            header.param_count
        )));
    }
    if sha256_hex(payload) != header.checksum {
        return Err(Error::Checkpoint("checksum mismatch".into()));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let space = header.space.clone();
    let mut next_dense = |in_dim: usize, out_dim: usize| -> Result<DenseParams> {
        let weight: Vec<f64> = values.by_ref().take(in_dim * out_dim).collect();
        let bias: Vec<f64> = values.by_ref().take(out_dim).collect();
        if bias.len() != out_dim {
            return Err(Error::Checkpoint("payload too short for space".into()));
        }
        Ok(DenseParams {
            weight: Matrix::new(in_dim, out_dim, weight)?,
            bias,
        })
    };
    let stem = next_dense(space.input_dim, space.hidden_dim)?;
    let mut blocks = Vec::with_capacity(space.blocks.len());
    for block in &space.blocks {
        let mut choices = Vec::with_capacity(block.choices.len());
        for choice in &block.choices {
            let params: ChoiceParams = choice
                .layers
                .iter()
                .map(|l| {
                    if l.has_params() {
                        next_dense(l.in_dim, l.out_dim).map(Some)
                    } else {
                        Ok(None)
                    }
                })
                .collect::<Result<_>>()?;
            choices.push(params);
        }
        blocks.push(choices);
    }
    let head = next_dense(space.hidden_dim, space.num_classes)?;
    let net = Supernet::from_parts(
        space,
        stem,
        blocks,
        head,
        header.train_steps,
        header.stem_reinitialized,
    );
    if net.param_count() != header.param_count {
        return Err(Error::Checkpoint("parameter count disagrees with space".into()));
    }
    Ok((net, header))
}
