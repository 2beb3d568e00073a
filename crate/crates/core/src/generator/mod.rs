// SPDX-License-Identifier: Apache-2.0

//! Autoregressive sampling with temperature and repetition penalty, unique
//! library generation and perplexity scoring.

mod library;
mod perplexity;
mod sampling;

pub use library::{
    generate_library, training_overlap, write_library_fasta, write_library_tsv, GeneratedLibrary,
};
pub use perplexity::{compare_perplexities, perplexity, ComparisonReport};
pub use sampling::{
    apply_repetition_penalty, apply_temperature, sample_one, step_distribution, LogitModel,
    LogitStream, SamplingParams, GREEDY_TEMPERATURE,
};

use crate::seqdata::SeqDataError;
use crate::seqstats::StatsError;
use crate::tinylm::TinyLmError;

#[derive(Debug, thiserror::Error)]
pub enum GeneratorError {
    #[error("invalid sampling parameters: {0}")]
    BadParams(String),
    #[error("model produced no finite logit for any allowed token")]
    DegenerateModel,
    #[error("empty library")]
    EmptyLibrary,
    #[error(transparent)]
    Model(#[from] TinyLmError),
    #[error(transparent)]
    Tokenize(#[from] SeqDataError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests;
