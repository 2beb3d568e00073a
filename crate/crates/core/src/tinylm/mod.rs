// SPDX-License-Identifier: Apache-2.0

//! A small decoder-only transformer language model over amino acids.
//!
//! Everything runs in `f64`. The model factorizes a sequence probability as
//! the product of next-token probabilities given the left context and is
//! trained by minimizing the mean negative log-likelihood per token, EOS
//! prediction included. Blocks are pre-LN with learned positional embeddings.

mod backprop;
mod checkpoint;
mod config;
mod gradcheck;
mod layout;
mod model;
mod ops;
mod train;

pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, FORMAT_VERSION,
    MAGIC,
};
pub use config::{ModelConfig, TrainConfig};
pub use gradcheck::{grad_check, random_subset, GradCheck};
pub use layout::{LayerOffsets, Layout};
pub use model::{parameter_count, Decoder, LanguageModel, StepOutput};
pub use train::{encode_dataset, loss_and_grad, train, train_on_datasets, TrainReport};

use crate::seqdata::SeqDataError;

#[derive(Debug, thiserror::Error)]
pub enum TinyLmError {
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("sequence of {len} tokens exceeds context of {max}")]
    ContextOverflow { len: usize, max: usize },
    #[error("token id {0} outside vocabulary")]
    InvalidToken(usize),
    #[error("empty batch")]
    EmptyBatch,
    #[error("loss became non-finite in epoch {epoch}")]
    DivergenceDetected {
        epoch: usize,
        report: Box<TrainReport>,
    },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error(transparent)]
    Tokenize(#[from] SeqDataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
