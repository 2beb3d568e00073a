// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};

use super::*;

fn toy_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/toy_epitopes.tsv")
        .canonicalize()
        .unwrap()
}

fn tiny_config(extra: &str) -> PipelineConfig {
    let text = format!(
        r#"
seed = 11
workers = 2

[ingest]
input = "{}"

[model]
n_layers = 1
d_model = 16
n_heads = 2
d_ff = 32
max_context = 16

[train]
learning_rate = 0.01
epochs = 2
weight_decay = 0.01
batch_size = 32

[generate]
n = 40

[stats]
min_support = 5

[classifier]
n_members = 3
slice_size = 8
rounds = 5
{extra}
"#,
        toy_path().display()
    );
    PipelineConfig::from_toml(&text).unwrap()
}

const REPORT_FILES: &[&str] = &[
    "ingest/dataset.tsv",
    "ingest/dataset.tsv.provenance.json",
    "ingest/train.tsv",
    "ingest/rejects.tsv",
    "train/model.eplm",
    "train/train_report.json",
    "train/train_report.tsv",
    "generate/library.fasta",
    "generate/library.tsv",
    "generate/library.json",
    "stats/library/stats.json",
    "stats/dataset/stats.json",
    "stats/perplexity_comparison.json",
    "train-classifier/classifier.epcl",
    "evaluate/metrics.json",
    "evaluate/bias_sweep.json",
    "evaluate/pca.json",
    "filter/filtered.fasta",
    "filter/filtered.tsv",
    "filter/composition.json",
    "manifest.json",
    "timings.json",
];

#[test]
fn full_run_is_complete_deterministic_and_reusable() {
    let cfg = tiny_config("");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = run(&cfg, Path::new("/"), a.path(), &[]).unwrap();
    for f in REPORT_FILES {
        assert!(a.path().join(f).is_file(), "missing {f}");
    }
    assert_eq!(ma.stages.len(), 7);
    let mb = run(&cfg, Path::new("/"), b.path(), &[]).unwrap();
    assert_eq!(ma, mb);
    assert_eq!(
        std::fs::read(a.path().join(MANIFEST_FILE)).unwrap(),
        std::fs::read(b.path().join(MANIFEST_FILE)).unwrap()
    );
    assert_eq!(
        tree_digests(&a.path().join("filter")).unwrap(),
        tree_digests(&b.path().join("filter")).unwrap()
    );

    // Second run in place reuses every stage.
    let again = run(&cfg, Path::new("/"), a.path(), &[]).unwrap();
    assert_eq!(again, ma);
    let t: Timings =
        serde_json::from_str(&std::fs::read_to_string(a.path().join(TIMINGS_FILE)).unwrap())
            .unwrap();
    assert!(t.stages.iter().all(|s| s.status == "reused"));

    // Deleting one stage's output and rerunning that stage reproduces it.
    std::fs::remove_dir_all(a.path().join("stats")).unwrap();
    let redo = run(&cfg, Path::new("/"), a.path(), &[Stage::Stats]).unwrap();
    assert_eq!(redo, ma);
    assert!(!a.path().join(".staging").exists());
}

#[test]
fn missing_input_fails_before_writing() {
    let cfg = tiny_config("");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let err = run(&cfg, Path::new("/"), &out, &[Stage::Stats]).unwrap_err();
    match &err {
        PipelineError::MissingInput { stage, path } => {
            assert_eq!(stage, "stats");
            assert!(path.ends_with("generate/library.fasta"));
        }
        other => panic!("unexpected {other}"),
    }
    assert!(err.to_string().starts_with("stage stats: missing input"));
    assert!(!out.exists());
}

#[test]
fn failing_stage_is_quarantined() {
    let dir = tempfile::tempdir().unwrap();
    let bad_bg = dir.path().join("bg.tsv");
    std::fs::write(&bad_bg, "A\tnot-a-number\nC\t1\n").unwrap();
    let mut cfg = tiny_config("");
    cfg.stats.background = bad_bg.display().to_string();
    let out = dir.path().join("out");
    run(
        &cfg,
        Path::new("/"),
        &out,
        &[Stage::Ingest, Stage::Train, Stage::Generate],
    )
    .unwrap();
    let before = std::fs::read(out.join(MANIFEST_FILE)).unwrap();
    let err = run(&cfg, Path::new("/"), &out, &[Stage::Stats]).unwrap_err();
    assert!(
        matches!(&err, PipelineError::Stage { stage, .. } if stage == "stats"),
        "{err}"
    );
    assert!(out.join("quarantine/stats").is_dir());
    assert!(!out.join("stats").exists());
    assert_eq!(std::fs::read(out.join(MANIFEST_FILE)).unwrap(), before);
}

#[test]
fn config_errors() {
    let base = format!("[ingest]\ninput = \"{}\"\n", toy_path().display());
    assert!(PipelineConfig::from_toml(&base).is_ok());
    for bad in [
        format!("{base}typo = 1\n"),
        format!("{base}[train]\nepochs = 3\nlearnig_rate = 0.1\n"),
        format!("{base}[classifier]\nbias = 0.5\n"),
        format!("{base}[generate]\nmax_len = 40\n"),
        format!("{base}[classifier]\npooling = \"mean\"\n"),
        "[model]\nn_layers = 1\n".to_string(),
    ] {
        assert!(
            matches!(
                PipelineConfig::from_toml(&bad),
                Err(PipelineError::Config(_))
            ),
            "{bad}"
        );
    }
    let c = PipelineConfig::from_toml(&format!(
        "{base}[classifier]\npooling = \"weighted_sum:3\"\n"
    ))
    .unwrap();
    assert_eq!(
        c.classifier.pooling,
        crate::libfilter::Pooling::WeightedSum { weight: 3.0 }
    );
}

#[test]
fn snapshot_ignores_output_directory() {
    let mut a = tiny_config("");
    let b = a.clone();
    a.out_dir = Some("elsewhere".into());
    assert_eq!(a.snapshot(), b.snapshot());
}

#[test]
fn bundled_example_config_parses() {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/toy.toml");
    let c = PipelineConfig::from_file(&p).unwrap();
    assert!(p.parent().unwrap().join(&c.ingest.input).is_file());
}
