// SPDX-License-Identifier: Apache-2.0

//! Epitope language modeling toolkit: sequence data handling, a small
//! decoder-only transformer trained from scratch, sampling, sequence
//! statistics, an embedding-based ensemble classifier for library filtering,
//! and a staged pipeline tying them together.

// Index loops mirror the math in the numeric kernels.
#![allow(clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod generator;
pub mod libfilter;
pub mod pipeline;
pub mod seqdata;
pub mod seqstats;
pub mod tinylm;
pub mod toy;

pub use generator::{GeneratedLibrary, GeneratorError, SamplingParams};
pub use libfilter::{EnsembleClassifier, EnsembleConfig, FilterError, MetricsReport, Pooling};
pub use pipeline::{PipelineConfig, PipelineError, RunManifest, Stage};
pub use seqdata::{Dataset, EpitopeRecord, SeqDataError, TokenSequence};
pub use seqstats::{BackgroundModel, StatsError};
pub use tinylm::{LanguageModel, ModelConfig, TinyLmError, TrainConfig};
