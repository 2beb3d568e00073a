// SPDX-License-Identifier: Apache-2.0

//! Classifier file: `EPCL`, u32 version, u64 header length, a JSON header
//! (config, dimension, embedding source, per-member slice and blob
//! location), then one
//! little-endian blob per base learner.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::embedding::EmbeddingSpec;
use super::ensemble::{EnsembleClassifier, EnsembleConfig, Member};
use super::learners::BaseLearner;
use super::FilterError;

const MAGIC: &[u8; 4] = b"EPCL";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    dim: usize,
    config: EnsembleConfig,
    members: Vec<MemberHeader>,
    #[serde(default)]
    embedding: Option<EmbeddingSpec>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MemberHeader {
    slice: Vec<usize>,
    learner: String,
    offset: usize,
    length: usize,
    sha256: String,
}

pub fn classifier_to_bytes(c: &EnsembleClassifier) -> Vec<u8> {
    let mut blobs = Vec::new();
    let mut members = Vec::with_capacity(c.members.len());
    for m in &c.members {
        let b = m.learner.to_bytes();
        members.push(MemberHeader {
            slice: m.slice.clone(),
            learner: m.learner.kind_name().to_string(),
            offset: blobs.len(),
            length: b.len(),
            sha256: hex::encode(Sha256::digest(&b)),
        });
        blobs.extend(b);
    }
    let header = serde_json::to_vec(&Header {
        dim: c.dim,
        config: c.config,
        members,
        embedding: c.embedding.clone(),
    })
    .expect("header serializes");
    let mut out = Vec::with_capacity(16 + header.len() + blobs.len());
    out.extend(MAGIC);
    out.extend(MODEL_FORMAT_VERSION.to_le_bytes());
    out.extend((header.len() as u64).to_le_bytes());
    out.extend(header);
    out.extend(blobs);
    out
}

fn corrupt(msg: impl Into<String>) -> FilterError {
    FilterError::CorruptModel(msg.into())
}

pub fn classifier_from_bytes(bytes: &[u8]) -> Result<EnsembleClassifier, FilterError> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(corrupt("missing EPCL magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != MODEL_FORMAT_VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    let header_bytes = body
        .get(..hlen)
        .ok_or_else(|| corrupt("truncated header"))?;
    let header: Header =
        serde_json::from_slice(header_bytes).map_err(|e| corrupt(format!("header: {e}")))?;
    header
        .config
        .validate()
        .map_err(|e| corrupt(e.to_string()))?;
    let blobs = &body[hlen..];
    let mut members = Vec::with_capacity(header.members.len());
    let mut expected_offset = 0;
    for (k, mh) in header.members.into_iter().enumerate() {
        if mh.offset != expected_offset {
            return Err(corrupt(format!("member {k}: unexpected blob offset")));
        }
        let blob = blobs
            .get(mh.offset..mh.offset + mh.length)
            .ok_or_else(|| corrupt(format!("member {k}: truncated blob")))?;
        if hex::encode(Sha256::digest(blob)) != mh.sha256 {
            return Err(corrupt(format!("member {k}: checksum mismatch")));
        }
        expected_offset += mh.length;
        let slice_ok = mh.slice.len() == header.config.slice_size
            && mh.slice.windows(2).all(|w| w[0] < w[1])
            && mh.slice.last().is_some_and(|&j| j < header.dim);
        if !slice_ok {
            return Err(corrupt(format!("member {k}: invalid feature slice")));
        }
        let learner = BaseLearner::from_bytes(&mh.learner, blob, mh.slice.len())?;
        members.push(Member {
            slice: mh.slice,
            learner,
        });
    }
    if expected_offset != blobs.len() {
        return Err(corrupt("trailing bytes after last blob"));
    }
    if members.len() != header.config.n_members {
        return Err(corrupt("member count differs from config"));
    }
    Ok(EnsembleClassifier {
        config: header.config,
        dim: header.dim,
        members,
        embedding: header.embedding,
    })
}

pub fn save_classifier(c: &EnsembleClassifier, path: impl AsRef<Path>) -> Result<(), FilterError> {
    std::fs::write(path, classifier_to_bytes(c))?;
    Ok(())
}

pub fn load_classifier(path: impl AsRef<Path>) -> Result<EnsembleClassifier, FilterError> {
    classifier_from_bytes(&std::fs::read(path)?)
}
