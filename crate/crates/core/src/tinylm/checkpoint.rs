// SPDX-License-Identifier: Apache-2.0

//! Binary checkpoint: `EPLM`, u32 version, seven u64 config fields, u64
//! parameter count, little-endian f64 parameters, then a SHA-256 of all
//! preceding bytes. All integers are little-endian.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::model::parameter_count;
use super::{LanguageModel, ModelConfig, TinyLmError};
use crate::seqdata::VOCAB_SIZE;

pub const MAGIC: &[u8; 4] = b"EPLM";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 7 * 8 + 8;
const CHECKSUM_LEN: usize = 32;

pub fn checkpoint_bytes(m: &LanguageModel) -> Vec<u8> {
    let c = m.config();
    let mut buf = Vec::with_capacity(HEADER_LEN + m.num_params() * 8 + CHECKSUM_LEN);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for x in [
        c.n_layers,
        c.d_model,
        c.n_heads,
        c.d_ff,
        c.max_context,
        c.vocab_size,
    ] {
        buf.extend_from_slice(&(x as u64).to_le_bytes());
    }
    buf.extend_from_slice(&c.seed.to_le_bytes());
    buf.extend_from_slice(&(m.num_params() as u64).to_le_bytes());
    for p in m.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    let sum = Sha256::digest(&buf);
    buf.extend_from_slice(&sum);
    buf
}

pub fn save_checkpoint(m: &LanguageModel, path: impl AsRef<Path>) -> Result<(), TinyLmError> {
    std::fs::write(path, checkpoint_bytes(m))?;
    Ok(())
}

fn corrupt(msg: impl Into<String>) -> TinyLmError {
    TinyLmError::CorruptCheckpoint(msg.into())
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

pub fn checkpoint_from_bytes(b: &[u8]) -> Result<LanguageModel, TinyLmError> {
    if b.len() < HEADER_LEN + CHECKSUM_LEN {
        return Err(corrupt(format!("file too short ({} bytes)", b.len())));
    }
    if &b[..4] != MAGIC {
        return Err(corrupt("bad magic, not an EPLM checkpoint"));
    }
    let version = u32::from_le_bytes(b[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(corrupt(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let field = |i: usize| u64_at(b, 8 + 8 * i) as usize;
    let config = ModelConfig {
        n_layers: field(0),
        d_model: field(1),
        n_heads: field(2),
        d_ff: field(3),
        max_context: field(4),
        vocab_size: field(5),
        seed: u64_at(b, 8 + 8 * 6),
    };
    if config.vocab_size != VOCAB_SIZE {
        return Err(corrupt(format!(
            "checkpoint vocab_size {} does not match the {VOCAB_SIZE}-token amino-acid vocabulary",
            config.vocab_size
        )));
    }
    config
        .validate()
        .map_err(|e| corrupt(format!("invalid config block: {e}")))?;
    let n = u64_at(b, 8 + 8 * 7) as usize;
    let expected = parameter_count(&config);
    if n != expected {
        return Err(corrupt(format!(
            "parameter count {n} does not match config ({expected})"
        )));
    }
    let total = HEADER_LEN + n * 8 + CHECKSUM_LEN;
    if b.len() != total {
        return Err(corrupt(format!(
            "size {} bytes, expected {total} (truncated or padded)",
            b.len()
        )));
    }
    let body = &b[..total - CHECKSUM_LEN];
    if Sha256::digest(body).as_slice() != &b[total - CHECKSUM_LEN..] {
        return Err(corrupt("checksum mismatch"));
    }
    let params = body[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    LanguageModel::from_parts(config, params).map_err(|e| corrupt(e.to_string()))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<LanguageModel, TinyLmError> {
    checkpoint_from_bytes(&std::fs::read(path)?)
}
