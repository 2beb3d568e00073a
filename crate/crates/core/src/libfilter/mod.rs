// SPDX-License-Identifier: Apache-2.0

//! Sequence embeddings, the sliced ensemble classifier with biased voting,
//! evaluation metrics and library filtering.

mod embedding;
mod ensemble;
mod filter;
mod learners;
mod metrics;
mod model_file;

pub use embedding::{embed, embed_all, pool, EmbeddingSpec, EmbeddingVector, Pooling};
pub use ensemble::{
    draw_slices, train_ensemble, vote, BaseLearnerKind, EnsembleClassifier, EnsembleConfig, Member,
    Prediction,
};
pub use filter::{filter_library, CompositionReport, FilterOutcome, LibraryComposition};
pub use learners::{BaseLearner, BoostedTrees, Logistic, TreeNode, TreeParams};
pub use metrics::{
    average_precision, evaluate, metrics_from_predictions, roc_auc, LrPlus, MetricsReport,
};
pub use model_file::{
    classifier_from_bytes, classifier_to_bytes, load_classifier, save_classifier,
    MODEL_FORMAT_VERSION,
};

use crate::seqdata::SeqDataError;
use crate::tinylm::TinyLmError;

#[derive(Debug, thiserror::Error)]
pub enum FilterError {
    #[error("training labels contain a single class")]
    SingleClassData,
    #[error("slice size {slice} exceeds embedding dimension {dim}")]
    SliceTooLarge { slice: usize, dim: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid ensemble configuration: {0}")]
    BadConfig(String),
    #[error("{0} embeddings but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("corrupt classifier file: {0}")]
    CorruptModel(String),
    #[error(transparent)]
    Model(#[from] TinyLmError),
    #[error(transparent)]
    Tokenize(#[from] SeqDataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
