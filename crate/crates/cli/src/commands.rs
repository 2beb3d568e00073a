// SPDX-License-Identifier: Apache-2.0

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, ValueEnum};
use serde::Serialize;

use epilib::generator::{
    compare_perplexities, generate_library, write_library_tsv, SamplingParams,
};
use epilib::libfilter::{
    embed_all, evaluate as evaluate_classifier, filter_library, load_classifier, save_classifier,
    train_ensemble, BaseLearnerKind, EmbeddingSpec, EnsembleConfig, MetricsReport, Pooling,
};
use epilib::pipeline::{
    classifier_pooling, epitopes, labeled, load_background, perplexities, run_config_file,
    stage_seed, LibrarySummary, PipelineConfig, Stage,
};
use epilib::seqdata::{
    deduplicate, filter_dataset, load_dataset, numbered_ids, parse_epitope_table, read_fasta_file,
    save_dataset, split, write_fasta, ColumnMap, Delimiter, FastaRecord, FilterSpec,
};
use epilib::seqstats::{analyze, pca as principal_components, write_report_bundle, Pca};
use epilib::tinylm::{
    load_checkpoint, save_checkpoint, train as train_model, LanguageModel, ModelConfig, TrainConfig,
};

use crate::{usage, Failure, Global};

type CmdResult = Result<(), Failure>;

struct Loaded {
    cfg: PipelineConfig,
    base: PathBuf,
}

fn load_config(g: &Global) -> Result<Option<Loaded>, Failure> {
    let Some(path) = &g.config else {
        return Ok(None);
    };
    let cfg = PipelineConfig::from_file(path).map_err(|e| anyhow!(e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Some(Loaded { cfg, base }))
}

fn require_out(g: &Global, what: &str) -> Result<PathBuf, Failure> {
    g.out
        .clone()
        .ok_or_else(|| usage(format!("--out <{what}> is required")))
}

fn domain<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Domain(e.into())
}

fn write_json_to<T: Serialize>(out: Option<&Path>, v: &T) -> CmdResult {
    let text = serde_json::to_string_pretty(v).map_err(domain)? + "\n";
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(domain)?,
    }
    Ok(())
}

fn create_dir(p: &Path) -> CmdResult {
    std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    Ok(())
}

fn model_at(p: &Path) -> Result<LanguageModel, Failure> {
    Ok(load_checkpoint(p).with_context(|| format!("loading model {}", p.display()))?)
}

fn is_table(p: &Path) -> bool {
    matches!(p.extension().and_then(|e| e.to_str()), Some("tsv" | "csv"))
}

/// FASTA records, or dataset TSV rows with generated `seq_` ids.
fn read_records(p: &Path) -> Result<Vec<FastaRecord>, Failure> {
    if is_table(p) {
        let d = load_dataset(p).with_context(|| format!("reading {}", p.display()))?;
        Ok(numbered_ids("seq")
            .zip(d.sequences())
            .map(|(id, s)| FastaRecord {
                id,
                sequence: s.to_string(),
            })
            .collect())
    } else {
        Ok(read_fasta_file(p).with_context(|| format!("reading {}", p.display()))?)
    }
}

fn read_sequences(p: &Path) -> Result<Vec<String>, Failure> {
    Ok(read_records(p)?.into_iter().map(|r| r.sequence).collect())
}

#[derive(Clone, Copy, ValueEnum)]
pub enum DelimiterArg {
    Auto,
    Tab,
    Comma,
}

#[derive(Args)]
pub struct IngestArgs {
    /// Input table (default: ingest.input from --config).
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    delimiter: Option<DelimiterArg>,
    /// Keep only this host (default human).
    #[arg(long)]
    host: Option<String>,
    /// Comma-separated assays to keep (default TCell,BCell,MHC).
    #[arg(long, value_delimiter = ',')]
    assays: Option<Vec<String>>,
    /// linear or conformational (default linear).
    #[arg(long)]
    structure: Option<String>,
    /// Comma-separated organisms to keep (default all).
    #[arg(long, value_delimiter = ',')]
    organisms: Option<Vec<String>>,
    /// Longest sequence kept (default 11).
    #[arg(long)]
    max_len: Option<usize>,
    /// Keep every parsed record.
    #[arg(long)]
    no_filter: bool,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    ratios: Option<Vec<f64>>,
    #[arg(long)]
    keep_duplicates: bool,
}

pub fn ingest(g: &Global, a: IngestArgs) -> CmdResult {
    let loaded = load_config(g)?;
    let section = loaded.as_ref().map(|l| (&l.cfg.ingest, &l.base));
    let input = match (&a.input, section) {
        (Some(p), _) => p.clone(),
        (None, Some((s, base))) => base.join(&s.input),
        (None, None) => return Err(usage("--in <table> is required")),
    };
    let out = require_out(g, "dir")?;
    let delimiter = match (a.delimiter, section) {
        (Some(DelimiterArg::Auto), _) => Delimiter::Auto,
        (Some(DelimiterArg::Tab), _) => Delimiter::Tab,
        (Some(DelimiterArg::Comma), _) => Delimiter::Comma,
        (None, Some((s, _))) => s.delimiter.into(),
        (None, None) => Delimiter::Auto,
    };
    let columns = section.map_or_else(ColumnMap::default, |(s, _)| s.columns.clone());
    let mut spec = if a.no_filter {
        FilterSpec::default()
    } else {
        section.map_or_else(FilterSpec::linear_human_epitopes, |(s, _)| s.filter.clone())
    };
    if let Some(h) = a.host {
        spec.host = Some(h);
    }
    if let Some(list) = a.assays {
        spec.assays = Some(
            list.iter()
                .map(|s| s.parse())
                .collect::<Result<_, _>>()
                .map_err(|e| usage(format!("--assays: {e}")))?,
        );
    }
    if let Some(s) = a.structure {
        spec.structure = Some(s.parse().map_err(|e| usage(format!("--structure: {e}")))?);
    }
    if let Some(list) = a.organisms {
        spec.organisms = Some(
            list.iter()
                .map(|s| s.parse())
                .collect::<Result<_, _>>()
                .map_err(|e| usage(format!("--organisms: {e}")))?,
        );
    }
    if a.max_len.is_some() {
        spec.max_len = a.max_len;
    }
    let ratios = match (a.ratios, section) {
        (Some(r), _) => (r[0], r[1], r[2]),
        (None, Some((s, _))) => (s.ratios[0], s.ratios[1], s.ratios[2]),
        (None, None) => (0.8, 0.1, 0.1),
    };
    let dedupe = !a.keep_duplicates && section.is_none_or(|(s, _)| s.deduplicate);

    let parsed = parse_epitope_table(&input, &columns, delimiter)
        .with_context(|| format!("reading {}", input.display()))?;
    for r in parsed.rejects.iter().take(20) {
        log::warn!("row {}: {}", r.row, r.reason);
    }
    let mut d = filter_dataset(&parsed.dataset, &spec);
    if dedupe {
        d = deduplicate(&d);
    }
    if d.is_empty() {
        return Err(domain(anyhow!("no records left after filtering")));
    }
    let s = split(&d, ratios, g.seed.unwrap_or(0)).map_err(domain)?;
    create_dir(&out)?;
    let mut w = std::fs::File::create(out.join("rejects.tsv")).map_err(domain)?;
    writeln!(w, "row\treason").map_err(domain)?;
    for r in &parsed.rejects {
        writeln!(w, "{}\t{}", r.row, r.reason).map_err(domain)?;
    }
    for (name, ds) in [
        ("dataset.tsv", &d),
        ("train.tsv", &s.train),
        ("val.tsv", &s.val),
        ("test.tsv", &s.test),
    ] {
        save_dataset(ds, out.join(name)).map_err(domain)?;
    }
    log::info!(
        "{} parsed, {} rejected, {} kept: {} train / {} val / {} test",
        parsed.dataset.len(),
        parsed.rejects.len(),
        d.len(),
        s.train.len(),
        s.val.len(),
        s.test.len()
    );
    Ok(())
}

#[derive(Args)]
pub struct TrainArgs {
    /// Training dataset TSV; records labeled negative are skipped.
    #[arg(long)]
    train: PathBuf,
    /// Validation dataset TSV used to pick the best epoch.
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    n_layers: Option<usize>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    n_heads: Option<usize>,
    #[arg(long)]
    d_ff: Option<usize>,
    #[arg(long)]
    max_context: Option<usize>,
    /// Numbered (learning rate, epochs, weight decay) setting, 1 to 5.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
    preset: Option<u8>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Serialize)]
struct ModelSummary<'a> {
    config: &'a ModelConfig,
    num_params: usize,
    fingerprint: String,
}

pub fn train(g: &Global, a: TrainArgs) -> CmdResult {
    let loaded = load_config(g)?;
    let out = require_out(g, "dir")?;
    let seed = g.seed.unwrap_or(0);
    let mut mc = loaded
        .as_ref()
        .map_or_else(ModelConfig::default, |l| l.cfg.model.model_config(seed));
    mc.seed = seed;
    mc.n_layers = a.n_layers.unwrap_or(mc.n_layers);
    mc.d_model = a.d_model.unwrap_or(mc.d_model);
    mc.n_heads = a.n_heads.unwrap_or(mc.n_heads);
    mc.d_ff = a.d_ff.unwrap_or(mc.d_ff);
    mc.max_context = a.max_context.unwrap_or(mc.max_context);
    let shuffle = stage_seed(seed, "shuffle");
    let mut tc = match (a.preset, &loaded) {
        (Some(p), _) => TrainConfig {
            seed: shuffle,
            ..TrainConfig::grid(p as usize)
        },
        (None, Some(l)) => l.cfg.train.train_config(shuffle),
        (None, None) => TrainConfig {
            seed: shuffle,
            ..TrainConfig::default()
        },
    };
    tc.learning_rate = a.learning_rate.unwrap_or(tc.learning_rate);
    tc.epochs = a.epochs.unwrap_or(tc.epochs);
    tc.weight_decay = a.weight_decay.unwrap_or(tc.weight_decay);
    tc.batch_size = a.batch_size.unwrap_or(tc.batch_size);

    let encode = |p: &Path| -> Result<Vec<_>, Failure> {
        let d = load_dataset(p).with_context(|| format!("reading {}", p.display()))?;
        encode_all(&epitopes(&d))
    };
    let tr = encode(&a.train)?;
    let va = match &a.val {
        Some(p) => encode(p)?,
        None => Vec::new(),
    };
    let model = LanguageModel::init(mc).map_err(domain)?;
    log::info!(
        "{} parameters, {} training sequences",
        model.num_params(),
        tr.len()
    );
    let (best, report) = train_model(&model, &tr, &va, &tc).map_err(domain)?;
    create_dir(&out)?;
    save_checkpoint(&best, out.join("model.eplm")).map_err(domain)?;
    write_json_to(Some(&out.join("train_report.json")), &report)?;
    std::fs::write(out.join("train_report.tsv"), report.to_tsv()).map_err(domain)?;
    write_json_to(
        Some(&out.join("model.json")),
        &ModelSummary {
            config: best.config(),
            num_params: best.num_params(),
            fingerprint: best.fingerprint(),
        },
    )?;
    log::info!("best epoch {} of {}", report.best_epoch, tc.epochs);
    Ok(())
}

fn encode_all(d: &epilib::Dataset) -> Result<Vec<epilib::TokenSequence>, Failure> {
    epilib::tinylm::encode_dataset(d).map_err(domain)
}

#[derive(Args)]
pub struct GenerateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Unique sequences to collect.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    repetition_penalty: Option<f64>,
    /// Residue cap per sequence.
    #[arg(long)]
    max_len: Option<usize>,
    /// Draw budget (default 20 per requested sequence).
    #[arg(long)]
    max_attempts: Option<usize>,
    /// Independent sampling streams; the library depends on this count.
    #[arg(long)]
    workers: Option<usize>,
    /// Also write sequence, length and perplexity as TSV.
    #[arg(long)]
    tsv: Option<PathBuf>,
    /// Also write a JSON summary of the draw.
    #[arg(long)]
    summary: Option<PathBuf>,
}

pub fn generate(g: &Global, a: GenerateArgs) -> CmdResult {
    let loaded = load_config(g)?;
    let section = loaded.as_ref().map(|l| l.cfg.generate);
    let defaults = SamplingParams::default();
    let n = a.n.or(section.map(|s| s.n)).unwrap_or(100);
    let p = SamplingParams {
        temperature: a
            .temperature
            .or(section.map(|s| s.temperature))
            .unwrap_or(defaults.temperature),
        repetition_penalty: a
            .repetition_penalty
            .or(section.map(|s| s.repetition_penalty))
            .unwrap_or(defaults.repetition_penalty),
        max_len: a
            .max_len
            .or(section.map(|s| s.max_len))
            .unwrap_or(defaults.max_len),
        seed: g.seed.unwrap_or(0),
    };
    let attempts = a
        .max_attempts
        .or(section.and_then(|s| s.max_attempts))
        .unwrap_or(n.saturating_mul(20));
    let workers = a
        .workers
        .or(loaded.as_ref().map(|l| l.cfg.workers))
        .unwrap_or(1);
    let m = model_at(&a.model)?;
    let lib = generate_library(&m, &p, n, attempts, workers).map_err(domain)?;
    let mut buf = Vec::new();
    write_fasta(&mut buf, numbered_ids("gen").zip(&lib.sequences)).map_err(domain)?;
    match &g.out {
        Some(path) => {
            std::fs::write(path, &buf).with_context(|| format!("writing {}", path.display()))?
        }
        None => std::io::stdout().write_all(&buf).map_err(domain)?,
    }
    let ppl = if a.tsv.is_some() || a.summary.is_some() {
        perplexities(&m, &lib.sequences).map_err(domain)?
    } else {
        vec![]
    };
    if let Some(path) = &a.tsv {
        let f =
            std::fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
        write_library_tsv(std::io::BufWriter::new(f), &lib.sequences, &ppl).map_err(domain)?;
    }
    if let Some(path) = &a.summary {
        let s = LibrarySummary {
            n_requested: n,
            n_generated: lib.len(),
            attempts: lib.attempts,
            collisions: lib.collisions,
            partial: lib.partial,
            training_overlap: 0,
            mean_perplexity: ppl.iter().sum::<f64>() / ppl.len().max(1) as f64,
            params: lib.params,
            source_model: lib.source_model.clone(),
        };
        write_json_to(Some(path), &s)?;
    }
    log::info!("{} unique sequences from {} draws", lib.len(), lib.attempts);
    Ok(())
}

#[derive(Args)]
pub struct StatsArgs {
    /// FASTA file or dataset TSV.
    #[arg(long = "in")]
    input: PathBuf,
    /// uniform, reference, or a residue<TAB>weight table.
    #[arg(long)]
    background: Option<String>,
    #[arg(long)]
    pseudocount: Option<f64>,
    /// Minimum sequences of one length for that length to be analyzed.
    #[arg(long)]
    min_support: Option<usize>,
}

pub fn stats(g: &Global, a: StatsArgs) -> CmdResult {
    let loaded = load_config(g)?;
    let out = require_out(g, "dir")?;
    let (bg_spec, bg_base) = match (&a.background, &loaded) {
        (Some(b), _) => (b.clone(), PathBuf::new()),
        (None, Some(l)) => (l.cfg.stats.background.clone(), l.base.clone()),
        (None, None) => ("uniform".to_string(), PathBuf::new()),
    };
    let pseudo = a
        .pseudocount
        .or(loaded.as_ref().map(|l| l.cfg.stats.pseudocount))
        .unwrap_or(0.0);
    let min_support = a
        .min_support
        .or(loaded.as_ref().map(|l| l.cfg.stats.min_support))
        .unwrap_or(20);
    let bg = load_background(&bg_spec, &bg_base, pseudo).map_err(domain)?;
    let seqs = read_sequences(&a.input)?;
    let report = analyze(&seqs, &bg, min_support).map_err(domain)?;
    let files = write_report_bundle(&report, &out).map_err(domain)?;
    log::info!(
        "{} sequences, {} lengths characterized, {} files",
        seqs.len(),
        report.per_length.len(),
        files.len()
    );
    Ok(())
}

#[derive(Args)]
pub struct ClassifierFlags {
    /// rightmost, sum, weighted_sum or weighted_sum:<w>.
    #[arg(long)]
    pooling: Option<Pooling>,
    #[arg(long)]
    n_members: Option<usize>,
    #[arg(long)]
    slice_size: Option<usize>,
    /// Weight of a positive member vote.
    #[arg(long)]
    bias: Option<f64>,
    #[arg(long, value_enum)]
    base_learner: Option<LearnerArg>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum LearnerArg {
    BoostedTrees,
    Logistic,
}

#[derive(Args)]
pub struct TrainClassifierArgs {
    #[arg(long)]
    model: PathBuf,
    /// Labeled dataset TSV; unlabeled records are skipped.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    flags: ClassifierFlags,
}

pub fn train_classifier(g: &Global, a: TrainClassifierArgs) -> CmdResult {
    let loaded = load_config(g)?;
    let out = require_out(g, "file")?;
    let seed = g.seed.unwrap_or(0);
    let (mut ec, mut pooling) = match &loaded {
        Some(l) => (
            l.cfg.classifier.ensemble_config(seed),
            l.cfg.classifier.pooling,
        ),
        None => (
            EnsembleConfig {
                seed,
                ..EnsembleConfig::default()
            },
            Pooling::default(),
        ),
    };
    let f = a.flags;
    pooling = f.pooling.unwrap_or(pooling);
    ec.n_members = f.n_members.unwrap_or(ec.n_members);
    ec.slice_size = f.slice_size.unwrap_or(ec.slice_size);
    ec.bias = f.bias.unwrap_or(ec.bias);
    ec.base_learner = match f.base_learner {
        Some(LearnerArg::BoostedTrees) => BaseLearnerKind::BoostedTrees,
        Some(LearnerArg::Logistic) => BaseLearnerKind::Logistic,
        None => ec.base_learner,
    };
    ec.rounds = f.rounds.unwrap_or(ec.rounds);
    ec.learning_rate = f.learning_rate.unwrap_or(ec.learning_rate);
    ec.max_depth = f.max_depth.unwrap_or(ec.max_depth);
    ec.lambda = f.lambda.unwrap_or(ec.lambda);
    ec.validate().map_err(|e| usage(e.to_string()))?;

    let m = model_at(&a.model)?;
    let d = load_dataset(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    let (seqs, y) = labeled(&d);
    let x: Vec<Vec<f64>> = embed_all(&m, &seqs, pooling)
        .map_err(domain)?
        .into_iter()
        .map(|e| e.values)
        .collect();
    let mut c = train_ensemble(&x, &y, &ec).map_err(domain)?;
    c.embedding = Some(EmbeddingSpec {
        pooling,
        source_model: m.fingerprint(),
    });
    save_classifier(&c, &out).map_err(domain)?;
    let fit = evaluate_classifier(&c, &x, &y).map_err(domain)?;
    log::info!(
        "{} members on {} sequences; training accuracy {:.3}",
        c.members.len(),
        y.len(),
        fit.accuracy
    );
    Ok(())
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    classifier: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Labeled dataset TSV.
    #[arg(long)]
    data: PathBuf,
    /// Vote bias to use instead of the trained one.
    #[arg(long)]
    bias: Option<f64>,
}

fn load_pair(
    classifier: &Path,
    model: &Path,
    bias: Option<f64>,
) -> Result<(epilib::EnsembleClassifier, LanguageModel, Pooling), Failure> {
    let mut c = load_classifier(classifier)
        .with_context(|| format!("loading classifier {}", classifier.display()))?;
    if let Some(b) = bias {
        c = c.with_bias(b).map_err(|e| usage(format!("--bias: {e}")))?;
    }
    let m = model_at(model)?;
    let pooling = classifier_pooling(&c, &m).map_err(|e| domain(anyhow!(e)))?;
    Ok((c, m, pooling))
}

pub fn evaluate(g: &Global, a: EvaluateArgs) -> CmdResult {
    let (c, m, pooling) = load_pair(&a.classifier, &a.model, a.bias)?;
    let d = load_dataset(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    let (seqs, y) = labeled(&d);
    let x: Vec<Vec<f64>> = embed_all(&m, &seqs, pooling)
        .map_err(domain)?
        .into_iter()
        .map(|e| e.values)
        .collect();
    let r = evaluate_classifier(&c, &x, &y).map_err(domain)?;
    write_json_to(g.out.as_deref(), &r)
}

#[derive(Args)]
pub struct FilterArgs {
    #[arg(long)]
    classifier: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Library FASTA, or a labeled dataset TSV to also report compositions.
    #[arg(long = "in")]
    input: PathBuf,
    /// Held-out metrics JSON supplying the LR+ reported with the result.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    bias: Option<f64>,
}

pub fn filter(g: &Global, a: FilterArgs) -> CmdResult {
    let out = require_out(g, "dir")?;
    let (c, m, pooling) = load_pair(&a.classifier, &a.model, a.bias)?;
    let records = read_records(&a.input)?;
    let truth: Option<Vec<bool>> = if is_table(&a.input) {
        let (_, y) = labeled(&load_dataset(&a.input).map_err(domain)?);
        (y.len() == records.len()).then_some(y)
    } else {
        None
    };
    let held_out = match &a.metrics {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let r: MetricsReport =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            Some(r.lr_plus)
        }
        None => None,
    };
    let seqs: Vec<String> = records.iter().map(|r| r.sequence.clone()).collect();
    let x: Vec<Vec<f64>> = embed_all(&m, &seqs, pooling)
        .map_err(domain)?
        .into_iter()
        .map(|e| e.values)
        .collect();
    let idx: Vec<usize> = (0..records.len()).collect();
    let outcome = filter_library(&idx, truth.as_deref(), held_out, |&i| {
        Ok(c.predict(&x[i])?.label)
    })
    .map_err(domain)?;
    create_dir(&out)?;
    let kept: Vec<&FastaRecord> = outcome.kept.iter().map(|&i| &records[i]).collect();
    let mut buf = Vec::new();
    write_fasta(
        &mut buf,
        kept.iter().map(|r| (r.id.clone(), r.sequence.as_str())),
    )
    .map_err(domain)?;
    std::fs::write(out.join("filtered.fasta"), buf).map_err(domain)?;
    let kept_seqs: Vec<String> = kept.iter().map(|r| r.sequence.clone()).collect();
    let f = std::fs::File::create(out.join("filtered.tsv")).map_err(domain)?;
    write_library_tsv(
        std::io::BufWriter::new(f),
        &kept_seqs,
        &perplexities(&m, &kept_seqs).map_err(domain)?,
    )
    .map_err(domain)?;
    write_json_to(Some(&out.join("composition.json")), &outcome.report)?;
    log::info!(
        "kept {} of {}",
        outcome.report.n_after,
        outcome.report.n_before
    );
    Ok(())
}

#[derive(Args)]
pub struct ComparePplArgs {
    #[arg(long)]
    model: PathBuf,
    /// First sequence set (FASTA or dataset TSV).
    #[arg(long)]
    a: PathBuf,
    /// Second sequence set (FASTA or dataset TSV).
    #[arg(long)]
    b: PathBuf,
    /// Significance level.
    #[arg(long)]
    alpha: Option<f64>,
}

pub fn compare_ppl(g: &Global, a: ComparePplArgs) -> CmdResult {
    let loaded = load_config(g)?;
    let alpha = a
        .alpha
        .or(loaded.as_ref().map(|l| l.cfg.stats.alpha))
        .unwrap_or(0.05);
    let m = model_at(&a.model)?;
    let r = compare_perplexities(&m, &read_sequences(&a.a)?, &read_sequences(&a.b)?, alpha)
        .map_err(domain)?;
    write_json_to(g.out.as_deref(), &r)
}

#[derive(Args)]
pub struct PcaArgs {
    #[arg(long)]
    model: PathBuf,
    /// Sequences to embed (FASTA or dataset TSV).
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    pooling: Option<Pooling>,
    /// Components to keep.
    #[arg(long, default_value_t = 2)]
    k: usize,
}

#[derive(Serialize)]
struct PcaOutput {
    ids: Vec<String>,
    pooling: Pooling,
    #[serde(flatten)]
    pca: Pca,
}

pub fn pca(g: &Global, a: PcaArgs) -> CmdResult {
    let loaded = load_config(g)?;
    let pooling = a
        .pooling
        .or(loaded.as_ref().map(|l| l.cfg.classifier.pooling))
        .unwrap_or_default();
    let m = model_at(&a.model)?;
    let records = read_records(&a.input)?;
    let seqs: Vec<String> = records.iter().map(|r| r.sequence.clone()).collect();
    let x: Vec<Vec<f64>> = embed_all(&m, &seqs, pooling)
        .map_err(domain)?
        .into_iter()
        .map(|e| e.values)
        .collect();
    let p = principal_components(&x, a.k).map_err(domain)?;
    write_json_to(
        g.out.as_deref(),
        &PcaOutput {
            ids: records.into_iter().map(|r| r.id).collect(),
            pooling,
            pca: p,
        },
    )
}

#[derive(Args)]
pub struct RunArgs {
    /// Comma-separated subset of ingest, train, generate, stats,
    /// train-classifier, evaluate, filter (default all).
    #[arg(long, value_delimiter = ',')]
    stages: Vec<Stage>,
}

pub fn run(g: &Global, a: RunArgs) -> CmdResult {
    let config = g
        .config
        .as_deref()
        .ok_or_else(|| usage("--config <file> is required"))?;
    let m = run_config_file(config, g.out.as_deref(), g.seed, &a.stages)
        .map_err(|e| domain(anyhow!(e)))?;
    log::info!(
        "manifest {} with {} stages",
        m.config_sha256,
        m.stages.len()
    );
    Ok(())
}
