// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::generator::SamplingParams;
use crate::libfilter::{BaseLearnerKind, EnsembleConfig, Pooling};
use crate::seqdata::{ColumnMap, Delimiter, FilterSpec};
use crate::seqstats::{BackgroundModel, ProbabilityVector};
use crate::tinylm::{ModelConfig, TrainConfig};
use crate::toy::REFERENCE_COMPOSITION;

/// Whole-run configuration, one TOML section per stage. Unknown keys are
/// errors. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    /// Sampling workers; the generated library depends on this count.
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Output directory; not part of the run's identity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub ingest: IngestSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub generate: GenerateSection,
    #[serde(default)]
    pub stats: StatsSection,
    #[serde(default)]
    pub classifier: ClassifierSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
}

fn default_workers() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DelimiterChoice {
    #[default]
    Auto,
    Tab,
    Comma,
}

impl From<DelimiterChoice> for Delimiter {
    fn from(d: DelimiterChoice) -> Self {
        match d {
            DelimiterChoice::Auto => Delimiter::Auto,
            DelimiterChoice::Tab => Delimiter::Tab,
            DelimiterChoice::Comma => Delimiter::Comma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSection {
    pub input: PathBuf,
    #[serde(default)]
    pub delimiter: DelimiterChoice,
    #[serde(default)]
    pub columns: ColumnMap,
    #[serde(default = "FilterSpec::linear_human_epitopes")]
    pub filter: FilterSpec,
    #[serde(default = "default_ratios")]
    pub ratios: [f64; 3],
    #[serde(default = "yes")]
    pub deduplicate: bool,
}

fn default_ratios() -> [f64; 3] {
    [0.8, 0.1, 0.1]
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_context: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let c = ModelConfig::default();
        Self {
            n_layers: c.n_layers,
            d_model: c.d_model,
            n_heads: c.n_heads,
            d_ff: c.d_ff,
            max_context: c.max_context,
        }
    }
}

impl ModelSection {
    pub fn model_config(&self, seed: u64) -> ModelConfig {
        ModelConfig {
            n_layers: self.n_layers,
            d_model: self.d_model,
            n_heads: self.n_heads,
            d_ff: self.d_ff,
            max_context: self.max_context,
            seed,
            ..ModelConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    pub batch_size: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            weight_decay: t.weight_decay,
            batch_size: t.batch_size,
        }
    }
}

impl TrainSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateSection {
    /// Unique sequences requested.
    pub n: usize,
    pub temperature: f64,
    pub repetition_penalty: f64,
    pub max_len: usize,
    /// Draw budget; defaults to 20 draws per requested sequence.
    pub max_attempts: Option<usize>,
}

impl Default for GenerateSection {
    fn default() -> Self {
        let p = SamplingParams::default();
        Self {
            n: 1000,
            temperature: p.temperature,
            repetition_penalty: p.repetition_penalty,
            max_len: p.max_len,
            max_attempts: None,
        }
    }
}

impl GenerateSection {
    pub fn params(&self, seed: u64) -> SamplingParams {
        SamplingParams {
            temperature: self.temperature,
            repetition_penalty: self.repetition_penalty,
            max_len: self.max_len,
            seed,
        }
    }

    pub fn attempts(&self) -> usize {
        self.max_attempts.unwrap_or(self.n.saturating_mul(20))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsSection {
    /// `uniform`, `reference`, or a path to a `residue<TAB>weight` table.
    pub background: String,
    /// Add-alpha smoothing for a background table.
    pub pseudocount: f64,
    /// Minimum sequences of one length for that length to be analyzed.
    pub min_support: usize,
    /// Significance level of the perplexity comparison.
    pub alpha: f64,
}

impl Default for StatsSection {
    fn default() -> Self {
        Self {
            background: "uniform".into(),
            pseudocount: 0.0,
            min_support: 20,
            alpha: 0.05,
        }
    }
}

/// External file behind a background spec, if any.
pub fn background_path(spec: &str, base: &Path) -> Option<PathBuf> {
    match spec {
        "uniform" | "reference" => None,
        p => Some(base.join(p)),
    }
}

pub fn load_background(
    spec: &str,
    base: &Path,
    pseudocount: f64,
) -> Result<BackgroundModel, PipelineError> {
    Ok(match spec {
        "uniform" => BackgroundModel::uniform(),
        "reference" => BackgroundModel::Global(
            ProbabilityVector::from_weights(REFERENCE_COMPOSITION)
                .map_err(|e| PipelineError::Config(e.to_string()))?,
        ),
        p => BackgroundModel::from_file(base.join(p), pseudocount)
            .map_err(|e| PipelineError::Config(format!("background {p}: {e}")))?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierSection {
    pub pooling: Pooling,
    pub n_members: usize,
    pub slice_size: usize,
    pub bias: f64,
    pub base_learner: BaseLearnerKind,
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub lambda: f64,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        let e = EnsembleConfig::default();
        Self {
            pooling: Pooling::default(),
            n_members: e.n_members,
            slice_size: e.slice_size,
            bias: e.bias,
            base_learner: e.base_learner,
            rounds: e.rounds,
            learning_rate: e.learning_rate,
            max_depth: e.max_depth,
            lambda: e.lambda,
        }
    }
}

impl ClassifierSection {
    pub fn ensemble_config(&self, seed: u64) -> EnsembleConfig {
        EnsembleConfig {
            n_members: self.n_members,
            slice_size: self.slice_size,
            bias: self.bias,
            base_learner: self.base_learner,
            rounds: self.rounds,
            learning_rate: self.learning_rate,
            max_depth: self.max_depth,
            lambda: self.lambda,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateSection {
    /// Extra vote biases reported alongside the configured one.
    pub bias_sweep: Vec<f64>,
    /// Principal components of the evaluation embeddings.
    pub pca_components: usize,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            bias_sweep: vec![1.0, 1.5, 2.0, 3.0, 5.0],
            pca_components: 2,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let c: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            PipelineError::Config(m) => PipelineError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Checks every stage's parameters without touching the filesystem.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |e: String| PipelineError::Config(e);
        if self.workers == 0 {
            return Err(bad("workers must be >= 1".into()));
        }
        let [a, b, c] = self.ingest.ratios;
        crate::seqdata::split_sizes(10, (a, b, c))
            .map_err(|e| bad(format!("ingest.ratios: {e}")))?;
        self.model
            .model_config(0)
            .validate()
            .map_err(|e| bad(format!("model: {e}")))?;
        self.train
            .train_config(0)
            .validate()
            .map_err(|e| bad(format!("train: {e}")))?;
        self.generate
            .params(0)
            .validate()
            .map_err(|e| bad(format!("generate: {e}")))?;
        if self.generate.n == 0 {
            return Err(bad("generate.n must be >= 1".into()));
        }
        if self.generate.max_len > self.model.max_context.saturating_sub(2) {
            return Err(bad(format!(
                "generate.max_len {} exceeds the model's {} residues",
                self.generate.max_len,
                self.model.max_context.saturating_sub(2)
            )));
        }
        if !(self.stats.alpha > 0.0 && self.stats.alpha < 1.0) {
            return Err(bad("stats.alpha must lie in (0, 1)".into()));
        }
        if self.stats.pseudocount < 0.0 {
            return Err(bad("stats.pseudocount must be >= 0".into()));
        }
        self.classifier
            .ensemble_config(0)
            .validate()
            .map_err(|e| bad(format!("classifier: {e}")))?;
        if self.classifier.slice_size > self.model.d_model {
            return Err(bad(format!(
                "classifier.slice_size {} exceeds model.d_model {}",
                self.classifier.slice_size, self.model.d_model
            )));
        }
        for &b in &self.evaluate.bias_sweep {
            if !(b >= 1.0 && b.is_finite()) {
                return Err(bad(format!("evaluate.bias_sweep: bias {b} must be >= 1")));
            }
        }
        Ok(())
    }

    /// Configuration as recorded in the manifest: everything except the
    /// output directory.
    pub fn snapshot(&self) -> serde_json::Value {
        let mut c = self.clone();
        c.out_dir = None;
        serde_json::to_value(&c).expect("config serializes")
    }
}
