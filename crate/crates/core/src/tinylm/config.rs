// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::TinyLmError;
use crate::seqdata::VOCAB_SIZE;

/// Shape of the decoder-only transformer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_context: usize,
    #[serde(default = "default_vocab")]
    pub vocab_size: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_vocab() -> usize {
    VOCAB_SIZE
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_layers: 4,
            d_model: 128,
            n_heads: 4,
            d_ff: 512,
            max_context: 32,
            vocab_size: VOCAB_SIZE,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), TinyLmError> {
        let bad = |msg: String| Err(TinyLmError::BadConfig(msg));
        if self.n_layers == 0 || self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return bad("n_layers, d_model, n_heads and d_ff must be positive".into());
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.max_context < 3 {
            return bad(format!(
                "max_context {} leaves no room for a residue",
                self.max_context
            ));
        }
        if self.vocab_size != VOCAB_SIZE {
            return bad(format!(
                "vocab_size must be {VOCAB_SIZE}, got {}",
                self.vocab_size
            ));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Longest residue string that fits the context with BOS and EOS.
    pub fn max_residues(&self) -> usize {
        self.max_context - 2
    }
}

/// Optimizer settings. The optimizer is AdamW; `weight_decay` is decoupled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_batch() -> usize {
    48
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::grid(1)
    }
}

impl TrainConfig {
    /// Five preset (learning rate, epochs, weight decay) settings, numbered
    /// 1 to 5. Batch size 48.
    pub fn grid(model: usize) -> Self {
        let (learning_rate, epochs, weight_decay) = match model {
            1 => (0.001, 15, 0.001),
            2 => (0.01, 15, 0.01),
            3 => (0.001, 30, 0.01),
            4 => (0.001, 30, 0.01),
            5 => (0.01, 30, 0.01),
            _ => panic!("grid has models 1..=5, got {model}"),
        };
        Self {
            learning_rate,
            epochs,
            weight_decay,
            batch_size: 48,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), TinyLmError> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.epochs >= 1
            && self.weight_decay >= 0.0
            && self.weight_decay.is_finite()
            && self.batch_size >= 1;
        if ok {
            Ok(())
        } else {
            Err(TinyLmError::BadConfig(format!(
                "invalid training config {self:?}"
            )))
        }
    }
}
