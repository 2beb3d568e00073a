// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{background_path, load_background, PipelineConfig};
use super::manifest::{stage_seed, Timings};
use crate::generator::{
    compare_perplexities, generate_library, perplexity, training_overlap, write_library_tsv,
    GeneratorError, SamplingParams,
};
use crate::libfilter::{
    embed_all, evaluate, filter_library, load_classifier, save_classifier, train_ensemble,
    EmbeddingSpec, EnsembleClassifier, FilterError, LrPlus, MetricsReport, Pooling,
};
use crate::seqdata::{
    deduplicate, filter_dataset, load_dataset, numbered_ids, parse_epitope_table, read_fasta_file,
    save_dataset, split, write_fasta, Dataset, FastaRecord, Label,
};
use crate::seqstats::{analyze, pca, write_report_bundle};
use crate::tinylm::{encode_dataset, load_checkpoint, save_checkpoint, train, LanguageModel};

pub(crate) type StageResult = Result<(), Box<dyn std::error::Error + Send + Sync>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    Train,
    Generate,
    Stats,
    TrainClassifier,
    Evaluate,
    Filter,
}

impl Stage {
    /// Execution order.
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Train,
        Stage::Generate,
        Stage::Stats,
        Stage::TrainClassifier,
        Stage::Evaluate,
        Stage::Filter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Train => "train",
            Stage::Generate => "generate",
            Stage::Stats => "stats",
            Stage::TrainClassifier => "train-classifier",
            Stage::Evaluate => "evaluate",
            Stage::Filter => "filter",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

/// A file a stage reads: an artifact of an earlier stage or an external file.
pub(crate) struct Input {
    pub key: String,
    pub path: PathBuf,
    pub producer: Option<Stage>,
}

fn artifact(root: &Path, producer: Stage, rel: &str) -> Input {
    Input {
        key: format!("{}/{rel}", producer.name()),
        path: root.join(producer.name()).join(rel),
        producer: Some(producer),
    }
}

fn external(base: &Path, written: &Path) -> Input {
    Input {
        key: format!("external:{}", written.display()),
        path: base.join(written),
        producer: None,
    }
}

pub(crate) fn inputs(stage: Stage, cfg: &PipelineConfig, base: &Path, root: &Path) -> Vec<Input> {
    use Stage::*;
    match stage {
        Ingest => vec![external(base, &cfg.ingest.input)],
        Train => vec![
            artifact(root, Ingest, "train.tsv"),
            artifact(root, Ingest, "val.tsv"),
        ],
        Generate => vec![
            artifact(root, Train, "model.eplm"),
            artifact(root, Ingest, "train.tsv"),
        ],
        Stats => {
            let mut v = vec![
                artifact(root, Generate, "library.fasta"),
                artifact(root, Train, "model.eplm"),
                artifact(root, Ingest, "train.tsv"),
                artifact(root, Ingest, "test.tsv"),
            ];
            if let Some(p) = background_path(&cfg.stats.background, Path::new("")) {
                v.push(external(base, &p));
            }
            v
        }
        TrainClassifier => vec![
            artifact(root, Train, "model.eplm"),
            artifact(root, Ingest, "train.tsv"),
        ],
        Evaluate => vec![
            artifact(root, TrainClassifier, "classifier.epcl"),
            artifact(root, Train, "model.eplm"),
            artifact(root, Ingest, "test.tsv"),
        ],
        Filter => vec![
            artifact(root, TrainClassifier, "classifier.epcl"),
            artifact(root, Train, "model.eplm"),
            artifact(root, Generate, "library.fasta"),
            artifact(root, Evaluate, "metrics.json"),
        ],
    }
}

/// Parameters hashed into the stage record.
pub(crate) fn params(stage: Stage, cfg: &PipelineConfig) -> serde_json::Value {
    use serde_json::json;
    match stage {
        Stage::Ingest => json!(cfg.ingest),
        Stage::Train => json!({ "model": cfg.model, "train": cfg.train }),
        Stage::Generate => json!({ "generate": cfg.generate, "workers": cfg.workers }),
        Stage::Stats => json!(cfg.stats),
        Stage::TrainClassifier => json!(cfg.classifier),
        Stage::Evaluate => json!(cfg.evaluate),
        Stage::Filter => json!(null),
    }
}

pub(crate) struct StageCtx<'a> {
    pub cfg: &'a PipelineConfig,
    pub base: &'a Path,
    pub root: &'a Path,
    pub out: &'a Path,
    pub seed: u64,
    pub timings: &'a mut Timings,
}

impl StageCtx<'_> {
    fn input(&self, producer: Stage, rel: &str) -> PathBuf {
        self.root.join(producer.name()).join(rel)
    }

    fn create(&self, rel: &str) -> std::io::Result<std::io::BufWriter<std::fs::File>> {
        Ok(std::io::BufWriter::new(std::fs::File::create(
            self.out.join(rel),
        )?))
    }

    fn write_json<T: Serialize>(&self, rel: &str, v: &T) -> StageResult {
        let text = serde_json::to_string_pretty(v)? + "\n";
        std::fs::write(self.out.join(rel), text)?;
        Ok(())
    }
}

pub(crate) fn execute(stage: Stage, ctx: &mut StageCtx<'_>) -> StageResult {
    match stage {
        Stage::Ingest => ingest(ctx),
        Stage::Train => train_stage(ctx),
        Stage::Generate => generate(ctx),
        Stage::Stats => stats(ctx),
        Stage::TrainClassifier => train_classifier(ctx),
        Stage::Evaluate => evaluate_stage(ctx),
        Stage::Filter => filter(ctx),
    }
}

fn ingest(ctx: &mut StageCtx<'_>) -> StageResult {
    let ic = &ctx.cfg.ingest;
    let parsed = parse_epitope_table(ctx.base.join(&ic.input), &ic.columns, ic.delimiter.into())?;
    let mut w = ctx.create("rejects.tsv")?;
    writeln!(w, "row\treason")?;
    for r in &parsed.rejects {
        writeln!(w, "{}\t{}", r.row, r.reason)?;
    }
    w.flush()?;
    let mut d = filter_dataset(&parsed.dataset, &ic.filter);
    if ic.deduplicate {
        d = deduplicate(&d);
    }
    if d.is_empty() {
        return Err("no records left after filtering".into());
    }
    save_dataset(&d, ctx.out.join("dataset.tsv"))?;
    let [a, b, c] = ic.ratios;
    let s = split(&d, (a, b, c), ctx.seed)?;
    save_dataset(&s.train, ctx.out.join("train.tsv"))?;
    save_dataset(&s.val, ctx.out.join("val.tsv"))?;
    save_dataset(&s.test, ctx.out.join("test.tsv"))?;
    log::info!(
        "ingest: {} rows parsed, {} rejected, {} kept ({} / {} / {})",
        parsed.dataset.len(),
        parsed.rejects.len(),
        d.len(),
        s.train.len(),
        s.val.len(),
        s.test.len()
    );
    Ok(())
}

/// Records the generator learns from: everything not labeled negative.
pub fn epitopes(d: &Dataset) -> Dataset {
    Dataset::new(
        d.records
            .iter()
            .filter(|r| r.label != Label::Negative)
            .cloned()
            .collect(),
    )
}

/// Sequences and labels of the positive and negative records.
pub fn labeled(d: &Dataset) -> (Vec<String>, Vec<bool>) {
    d.records
        .iter()
        .filter_map(|r| match r.label {
            Label::Positive => Some((r.sequence.clone(), true)),
            Label::Negative => Some((r.sequence.clone(), false)),
            Label::Unlabeled => None,
        })
        .unzip()
}

#[derive(Serialize)]
struct ModelSummary<'a> {
    config: &'a crate::tinylm::ModelConfig,
    num_params: usize,
    fingerprint: String,
}

fn train_stage(ctx: &mut StageCtx<'_>) -> StageResult {
    let tr = encode_dataset(&epitopes(&load_dataset(
        ctx.input(Stage::Ingest, "train.tsv"),
    )?))?;
    let va = encode_dataset(&epitopes(&load_dataset(
        ctx.input(Stage::Ingest, "val.tsv"),
    )?))?;
    if tr.is_empty() {
        return Err("training split has no epitope records".into());
    }
    let model = LanguageModel::init(ctx.cfg.model.model_config(ctx.seed))?;
    let tc = ctx.cfg.train.train_config(stage_seed(ctx.seed, "shuffle"));
    log::info!(
        "train: {} parameters, {} train / {} val sequences",
        model.num_params(),
        tr.len(),
        va.len()
    );
    let (best, mut report) = train(&model, &tr, &va, &tc)?;
    ctx.timings.train_epoch_seconds = std::mem::take(&mut report.epoch_seconds);
    save_checkpoint(&best, ctx.out.join("model.eplm"))?;
    ctx.write_json("train_report.json", &report)?;
    std::fs::write(ctx.out.join("train_report.tsv"), report.to_tsv())?;
    ctx.write_json(
        "model.json",
        &ModelSummary {
            config: best.config(),
            num_params: best.num_params(),
            fingerprint: best.fingerprint(),
        },
    )?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibrarySummary {
    pub n_requested: usize,
    pub n_generated: usize,
    pub attempts: usize,
    pub collisions: usize,
    pub partial: bool,
    /// Generated sequences that also occur in the training split.
    pub training_overlap: usize,
    pub mean_perplexity: f64,
    pub params: SamplingParams,
    pub source_model: String,
}

pub fn perplexities(m: &LanguageModel, seqs: &[String]) -> Result<Vec<f64>, GeneratorError> {
    seqs.par_iter().map(|s| perplexity(m, s)).collect()
}

fn generate(ctx: &mut StageCtx<'_>) -> StageResult {
    let gc = &ctx.cfg.generate;
    let m = load_checkpoint(ctx.input(Stage::Train, "model.eplm"))?;
    let lib = generate_library(
        &m,
        &gc.params(ctx.seed),
        gc.n,
        gc.attempts(),
        ctx.cfg.workers,
    )?;
    if lib.is_empty() {
        return Err(Box::new(GeneratorError::EmptyLibrary));
    }
    let ppl = perplexities(&m, &lib.sequences)?;
    let train_set = load_dataset(ctx.input(Stage::Ingest, "train.tsv"))?;
    let mut w = ctx.create("library.fasta")?;
    write_fasta(&mut w, numbered_ids("gen").zip(&lib.sequences))?;
    w.flush()?;
    let mut w = ctx.create("library.tsv")?;
    write_library_tsv(&mut w, &lib.sequences, &ppl)?;
    w.flush()?;
    let summary = LibrarySummary {
        n_requested: gc.n,
        n_generated: lib.len(),
        attempts: lib.attempts,
        collisions: lib.collisions,
        partial: lib.partial,
        training_overlap: training_overlap(&lib.sequences, train_set.sequences()),
        mean_perplexity: ppl.iter().sum::<f64>() / ppl.len() as f64,
        params: lib.params,
        source_model: lib.source_model.clone(),
    };
    log::info!(
        "generate: {} sequences from {} draws, {} also in training data",
        summary.n_generated,
        summary.attempts,
        summary.training_overlap
    );
    ctx.write_json("library.json", &summary)
}

fn fasta_sequences(path: &Path) -> Result<Vec<String>, crate::seqdata::SeqDataError> {
    Ok(read_fasta_file(path)?
        .into_iter()
        .map(|r| r.sequence)
        .collect())
}

fn stats(ctx: &mut StageCtx<'_>) -> StageResult {
    let sc = &ctx.cfg.stats;
    let bg = load_background(&sc.background, ctx.base, sc.pseudocount)?;
    let lib = fasta_sequences(&ctx.input(Stage::Generate, "library.fasta"))?;
    write_report_bundle(
        &analyze(&lib, &bg, sc.min_support)?,
        ctx.out.join("library"),
    )?;
    let train_set: Vec<String> = epitopes(&load_dataset(ctx.input(Stage::Ingest, "train.tsv"))?)
        .sequences()
        .map(String::from)
        .collect();
    write_report_bundle(
        &analyze(&train_set, &bg, sc.min_support)?,
        ctx.out.join("dataset"),
    )?;
    let held_out: Vec<String> = epitopes(&load_dataset(ctx.input(Stage::Ingest, "test.tsv"))?)
        .sequences()
        .map(String::from)
        .collect();
    if held_out.is_empty() {
        log::warn!("stats: no held-out epitopes; perplexity comparison skipped");
        return Ok(());
    }
    let m = load_checkpoint(ctx.input(Stage::Train, "model.eplm"))?;
    let cmp = compare_perplexities(&m, &lib, &held_out, sc.alpha)?;
    log::info!(
        "stats: mean perplexity {:.3} generated vs {:.3} held out, p = {:.4}",
        cmp.mean_a,
        cmp.mean_b,
        cmp.p_value
    );
    ctx.write_json("perplexity_comparison.json", &cmp)
}

fn embed_rows(
    m: &LanguageModel,
    seqs: &[String],
    pooling: Pooling,
) -> Result<Vec<Vec<f64>>, FilterError> {
    Ok(embed_all(m, seqs, pooling)?
        .into_iter()
        .map(|e| e.values)
        .collect())
}

/// Pooling the classifier was trained with; refuses a different model.
pub fn classifier_pooling(c: &EnsembleClassifier, m: &LanguageModel) -> Result<Pooling, String> {
    match &c.embedding {
        Some(spec) if spec.source_model == m.fingerprint() => Ok(spec.pooling),
        Some(spec) => Err(format!(
            "classifier was trained on embeddings of model {}, not {}",
            spec.source_model,
            m.fingerprint()
        )),
        None => Err("classifier file does not record its embedding source".into()),
    }
}

fn train_classifier(ctx: &mut StageCtx<'_>) -> StageResult {
    let cc = &ctx.cfg.classifier;
    let m = load_checkpoint(ctx.input(Stage::Train, "model.eplm"))?;
    let (seqs, y) = labeled(&load_dataset(ctx.input(Stage::Ingest, "train.tsv"))?);
    let x = embed_rows(&m, &seqs, cc.pooling)?;
    let mut c = train_ensemble(&x, &y, &cc.ensemble_config(ctx.seed))?;
    c.embedding = Some(EmbeddingSpec {
        pooling: cc.pooling,
        source_model: m.fingerprint(),
    });
    save_classifier(&c, ctx.out.join("classifier.epcl"))?;
    let fit = evaluate(&c, &x, &y)?;
    log::info!(
        "train-classifier: {} members on {} sequences, training accuracy {:.3}",
        c.members.len(),
        y.len(),
        fit.accuracy
    );
    ctx.write_json("training_metrics.json", &fit)
}

#[derive(Serialize)]
struct BiasPoint {
    bias: f64,
    metrics: MetricsReport,
}

#[derive(Serialize)]
struct PcaSummary {
    explained_variance: Vec<f64>,
    explained_ratio: Vec<f64>,
    total_variance: f64,
    components: Vec<Vec<f64>>,
}

fn evaluate_stage(ctx: &mut StageCtx<'_>) -> StageResult {
    let c = load_classifier(ctx.input(Stage::TrainClassifier, "classifier.epcl"))?;
    let m = load_checkpoint(ctx.input(Stage::Train, "model.eplm"))?;
    let pooling = classifier_pooling(&c, &m)?;
    let (seqs, y) = labeled(&load_dataset(ctx.input(Stage::Ingest, "test.tsv"))?);
    if seqs.is_empty() {
        return Err("test split has no labeled records".into());
    }
    let x = embed_rows(&m, &seqs, pooling)?;
    let metrics = evaluate(&c, &x, &y)?;
    log::info!(
        "evaluate: recall {:.3} precision {:.3} fpr {:.3} lr+ {:?}",
        metrics.recall,
        metrics.precision,
        metrics.fpr,
        metrics.lr_plus
    );
    ctx.write_json("metrics.json", &metrics)?;
    let sweep = ctx
        .cfg
        .evaluate
        .bias_sweep
        .iter()
        .map(|&b| {
            Ok(BiasPoint {
                bias: b,
                metrics: evaluate(&c.with_bias(b)?, &x, &y)?,
            })
        })
        .collect::<Result<Vec<_>, FilterError>>()?;
    ctx.write_json("bias_sweep.json", &sweep)?;
    let k = ctx.cfg.evaluate.pca_components.min(c.dim);
    if k > 0 {
        match pca(&x, k) {
            Ok(p) => {
                let mut w = ctx.create("pca.tsv")?;
                let cols: Vec<String> = (1..=k).map(|i| format!("pc{i}")).collect();
                writeln!(w, "sequence\tlabel\t{}", cols.join("\t"))?;
                for ((s, &l), row) in seqs.iter().zip(&y).zip(&p.projection) {
                    let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                    writeln!(
                        w,
                        "{s}\t{}\t{}",
                        if l { "positive" } else { "negative" },
                        vals.join("\t")
                    )?;
                }
                w.flush()?;
                ctx.write_json(
                    "pca.json",
                    &PcaSummary {
                        explained_variance: p.explained_variance,
                        explained_ratio: p.explained_ratio,
                        total_variance: p.total_variance,
                        components: p.components,
                    },
                )?;
            }
            Err(e) => log::warn!("evaluate: PCA skipped: {e}"),
        }
    }
    Ok(())
}

fn filter(ctx: &mut StageCtx<'_>) -> StageResult {
    let c = load_classifier(ctx.input(Stage::TrainClassifier, "classifier.epcl"))?;
    let m = load_checkpoint(ctx.input(Stage::Train, "model.eplm"))?;
    let pooling = classifier_pooling(&c, &m)?;
    let lib: Vec<FastaRecord> = read_fasta_file(ctx.input(Stage::Generate, "library.fasta"))?;
    let metrics: MetricsReport = serde_json::from_str(&std::fs::read_to_string(
        ctx.input(Stage::Evaluate, "metrics.json"),
    )?)?;
    let seqs: Vec<String> = lib.iter().map(|r| r.sequence.clone()).collect();
    let x = embed_rows(&m, &seqs, pooling)?;
    let idx: Vec<usize> = (0..lib.len()).collect();
    let out = filter_library(&idx, None, Some(metrics.lr_plus), |&i| {
        Ok(c.predict(&x[i])?.label)
    })?;
    let kept: Vec<&FastaRecord> = out.kept.iter().map(|&i| &lib[i]).collect();
    let mut w = ctx.create("filtered.fasta")?;
    write_fasta(
        &mut w,
        kept.iter().map(|r| (r.id.clone(), r.sequence.as_str())),
    )?;
    w.flush()?;
    let kept_seqs: Vec<String> = kept.iter().map(|r| r.sequence.clone()).collect();
    let mut w = ctx.create("filtered.tsv")?;
    write_library_tsv(&mut w, &kept_seqs, &perplexities(&m, &kept_seqs)?)?;
    w.flush()?;
    log::info!(
        "filter: kept {} of {} (held-out LR+ {})",
        out.report.n_after,
        out.report.n_before,
        match metrics.lr_plus {
            LrPlus::Finite(v) => format!("{v:.3}"),
            LrPlus::Infinite => "inf".into(),
            LrPlus::Undefined => "undefined".into(),
        }
    );
    ctx.write_json("composition.json", &out.report)
}
