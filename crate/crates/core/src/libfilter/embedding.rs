// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FilterError;
use crate::seqdata::encode;
use crate::tinylm::LanguageModel;

/// How per-token hidden states collapse into one vector.
/// Serialized as `rightmost`, `sum` or `weighted_sum:<w>`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub enum Pooling {
    /// Hidden state at the closing EOS.
    Rightmost,
    #[default]
    Sum,
    /// Sum with the rightmost state scaled by `weight`.
    WeightedSum { weight: f64 },
}

impl Pooling {
    pub const DEFAULT_RIGHTMOST_WEIGHT: f64 = 2.0;
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pooling::Rightmost => f.write_str("rightmost"),
            Pooling::Sum => f.write_str("sum"),
            Pooling::WeightedSum { weight } => write!(f, "weighted_sum:{weight}"),
        }
    }
}

impl FromStr for Pooling {
    type Err = String;

    /// `rightmost`, `sum`, `weighted_sum` or `weighted_sum:<w>`.
    fn from_str(s: &str) -> Result<Self, String> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        match (head, arg) {
            ("rightmost", None) => Ok(Pooling::Rightmost),
            ("sum", None) => Ok(Pooling::Sum),
            ("weighted_sum", None) => Ok(Pooling::WeightedSum {
                weight: Self::DEFAULT_RIGHTMOST_WEIGHT,
            }),
            ("weighted_sum", Some(w)) => {
                let weight: f64 = w.parse().map_err(|_| format!("bad weight {w:?}"))?;
                if !weight.is_finite() {
                    return Err(format!("bad weight {w:?}"));
                }
                Ok(Pooling::WeightedSum { weight })
            }
            _ => Err(format!("unknown pooling {s:?}")),
        }
    }
}

impl Serialize for Pooling {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Pooling {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub pooling: Pooling,
    pub source_model: String,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// How a classifier's inputs were produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSpec {
    pub pooling: Pooling,
    pub source_model: String,
}

/// Pools rows of `states`; the last row is the rightmost.
pub fn pool(states: &[Vec<f64>], mode: Pooling) -> Vec<f64> {
    let Some(last) = states.last() else {
        return Vec::new();
    };
    match mode {
        Pooling::Rightmost => last.clone(),
        Pooling::Sum | Pooling::WeightedSum { .. } => {
            let w = match mode {
                Pooling::WeightedSum { weight } => weight,
                _ => 1.0,
            };
            let n = states.len();
            let mut out = vec![0.0; last.len()];
            for (i, row) in states.iter().enumerate() {
                let k = if i + 1 == n { w } else { 1.0 };
                for (o, v) in out.iter_mut().zip(row) {
                    *o += k * v;
                }
            }
            out
        }
    }
}

/// Embeds `s` from the final-layer states of BOS, every residue and EOS.
pub fn embed(m: &LanguageModel, s: &str, pooling: Pooling) -> Result<EmbeddingVector, FilterError> {
    let seq = encode(s)?;
    let states = m.hidden_states(seq.tokens())?;
    Ok(EmbeddingVector {
        values: pool(&states, pooling),
        pooling,
        source_model: m.fingerprint(),
    })
}

pub fn embed_all<S: AsRef<str> + Sync>(
    m: &LanguageModel,
    seqs: &[S],
    pooling: Pooling,
) -> Result<Vec<EmbeddingVector>, FilterError> {
    let id = m.fingerprint();
    seqs.par_iter()
        .map(|s| {
            let seq = encode(s.as_ref())?;
            let states = m.hidden_states(seq.tokens())?;
            Ok(EmbeddingVector {
                values: pool(&states, pooling),
                pooling,
                source_model: id.clone(),
            })
        })
        .collect()
}

impl AsRef<[f64]> for EmbeddingVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}
