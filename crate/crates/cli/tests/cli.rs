// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_epilib"))
}

fn toy() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/toy_epitopes.tsv")
        .canonicalize()
        .unwrap()
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn epilib");
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Ingest and train a tiny model, returning (ingest dir, model path).
fn tiny_model(dir: &Path) -> (PathBuf, PathBuf) {
    let ingest = dir.join("ingest");
    let train = dir.join("train");
    assert!(run(&[
        "ingest",
        "--in",
        s(&toy()),
        "--out",
        s(&ingest),
        "--seed",
        "1"
    ])
    .status
    .success());
    let tr = ingest.join("train.tsv");
    let va = ingest.join("val.tsv");
    let args = [
        "train",
        "--train",
        s(&tr),
        "--val",
        s(&va),
        "--n-layers",
        "1",
        "--d-model",
        "16",
        "--n-heads",
        "2",
        "--d-ff",
        "32",
        "--max-context",
        "16",
        "--epochs",
        "1",
        "--out",
        s(&train),
    ];
    assert!(run(&args).status.success());
    (ingest, train.join("model.eplm"))
}

#[test]
fn subcommands_chain_end_to_end() {
    let t = tempfile::tempdir().unwrap();
    let (ingest, model) = tiny_model(t.path());
    for f in [
        "dataset.tsv",
        "train.tsv",
        "val.tsv",
        "test.tsv",
        "rejects.tsv",
    ] {
        assert!(ingest.join(f).is_file(), "{f}");
    }

    // FASTA goes to stdout without --out.
    let out = run(&[
        "generate",
        "--model",
        s(&model),
        "--n",
        "100",
        "--max-len",
        "11",
        "--seed",
        "4",
    ]);
    assert!(out.status.success());
    let fasta = String::from_utf8(out.stdout).unwrap();
    assert_eq!(fasta.lines().filter(|l| l.starts_with('>')).count(), 100);
    let lib = t.path().join("lib.fasta");
    std::fs::write(&lib, &fasta).unwrap();

    // Same seed, same library.
    let again = run(&[
        "generate",
        "--model",
        s(&model),
        "--n",
        "100",
        "--max-len",
        "11",
        "--seed",
        "4",
    ]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), fasta);

    let stats = t.path().join("stats");
    assert!(run(&[
        "stats",
        "--in",
        s(&lib),
        "--min-support",
        "5",
        "--out",
        s(&stats)
    ])
    .status
    .success());
    assert!(stats.join("stats.json").is_file());
    assert!(stats.join("length_histogram.tsv").is_file());

    let clf = t.path().join("c.epcl");
    let data = ingest.join("train.tsv");
    let args = [
        "train-classifier",
        "--model",
        s(&model),
        "--data",
        s(&data),
        "--slice-size",
        "8",
        "--rounds",
        "5",
        "--out",
        s(&clf),
    ];
    assert!(run(&args).status.success());

    let metrics = t.path().join("metrics.json");
    let test = ingest.join("test.tsv");
    let args = [
        "evaluate",
        "--classifier",
        s(&clf),
        "--model",
        s(&model),
        "--data",
        s(&test),
        "--out",
        s(&metrics),
    ];
    assert!(run(&args).status.success());
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&metrics).unwrap()).unwrap();
    let confusion: u64 = ["tp", "fp", "tn", "fn"]
        .iter()
        .map(|k| m[k].as_u64().unwrap())
        .sum();
    assert!(confusion > 0);

    let filtered = t.path().join("filtered");
    let args = [
        "filter",
        "--classifier",
        s(&clf),
        "--model",
        s(&model),
        "--in",
        s(&lib),
        "--metrics",
        s(&metrics),
        "--out",
        s(&filtered),
    ];
    assert!(run(&args).status.success());
    let comp: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(filtered.join("composition.json")).unwrap())
            .unwrap();
    assert_eq!(comp["n_before"], 100);
    let kept = std::fs::read_to_string(filtered.join("filtered.fasta")).unwrap();
    assert_eq!(
        kept.lines().filter(|l| l.starts_with('>')).count() as u64,
        comp["n_after"].as_u64().unwrap()
    );

    let out = run(&[
        "compare-ppl",
        "--model",
        s(&model),
        "--a",
        s(&lib),
        "--b",
        s(&test),
    ]);
    assert!(out.status.success());
    let cmp: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cmp["n_a"], 100);

    let out = run(&["pca", "--model", s(&model), "--in", s(&lib), "--k", "2"]);
    assert!(out.status.success());
    let p: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(p["ids"].as_array().unwrap().len(), 100);
}

#[test]
fn run_subcommand_writes_manifest() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("tiny.toml");
    std::fs::write(
        &cfg,
        format!(
            "seed = 2\nworkers = 2\n[ingest]\ninput = \"{}\"\n[model]\nn_layers = 1\nd_model = 16\nn_heads = 2\n\
             d_ff = 32\nmax_context = 16\n[train]\nepochs = 1\n[generate]\nn = 30\n[stats]\nmin_support = 5\n\
             [classifier]\nn_members = 3\nslice_size = 8\nrounds = 5\n",
            toy().display()
        ),
    )
    .unwrap();
    let out = t.path().join("run");
    assert!(run(&["run", "--config", s(&cfg), "--out", s(&out)])
        .status
        .success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["stages"].as_array().unwrap().len(), 7);
    assert!(out.join("timings.json").is_file());

    // Partial rerun of one stage leaves the others recorded.
    assert!(run(&[
        "run",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--stages",
        "generate,stats"
    ])
    .status
    .success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["stages"].as_array().unwrap().len(), 7);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        run(&["generate", "--model", "m.eplm", "--no-such-flag"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run(&["generate"]).status.code(), Some(2), "missing --model");
    assert_eq!(run(&["run"]).status.code(), Some(2), "missing --config");
    assert_eq!(
        run(&["stats", "--in", "x.fasta"]).status.code(),
        Some(2),
        "missing --out"
    );
    assert_eq!(
        run(&["train", "--train", "t.tsv", "--preset", "9", "--out", "x"])
            .status
            .code(),
        Some(2)
    );

    let t = tempfile::tempdir().unwrap();
    let missing = t.path().join("missing.eplm");
    let out = run(&["generate", "--model", s(&missing)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
    assert!(out.stdout.is_empty(), "errors go to stderr");

    let bad = t.path().join("bad.toml");
    std::fs::write(&bad, "seed = 1\nbogus_key = 3\n").unwrap();
    assert_eq!(
        run(&["run", "--config", s(&bad), "--out", s(&t.path().join("o"))])
            .status
            .code(),
        Some(1)
    );

    let fasta = t.path().join("bad.fasta");
    std::fs::write(&fasta, ">a\nAC1D\n").unwrap();
    assert_eq!(
        run(&["stats", "--in", s(&fasta), "--out", s(&t.path().join("st"))])
            .status
            .code(),
        Some(1)
    );
}
