// SPDX-License-Identifier: Apache-2.0

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use epilib::generator::{generate_library, SamplingParams};
use epilib::libfilter::{embed_all, train_ensemble, EnsembleConfig, Pooling};
use epilib::seqstats::{analyze, BackgroundModel};
use epilib::tinylm::{loss_and_grad, LanguageModel, ModelConfig};
use epilib::toy::PlantedSource;

fn small_model() -> LanguageModel {
    let cfg = ModelConfig {
        n_layers: 2,
        d_model: 32,
        n_heads: 4,
        d_ff: 64,
        max_context: 16,
        ..ModelConfig::default()
    };
    LanguageModel::init(cfg).expect("valid config")
}

fn corpus(n: usize) -> Vec<String> {
    PlantedSource::epitope_like().sample_n(n, 11)
}

fn bench_model(c: &mut Criterion) {
    let m = small_model();
    let batch: Vec<_> = corpus(32)
        .iter()
        .map(|s| epilib::seqdata::encode(s).unwrap())
        .collect();
    c.bench_function("loss_and_grad/32x2x32", |b| {
        b.iter(|| loss_and_grad(black_box(&m), black_box(&batch)).unwrap())
    });
}

fn bench_sampling(c: &mut Criterion) {
    let m = small_model();
    let p = SamplingParams {
        max_len: 11,
        ..SamplingParams::default()
    };
    c.bench_function("generate_library/200", |b| {
        b.iter(|| generate_library(&m, &p, 200, 4000, 4).unwrap())
    });
}

fn bench_stats(c: &mut Criterion) {
    let seqs = corpus(5000);
    let bg = BackgroundModel::uniform();
    c.bench_function("analyze/5000", |b| {
        b.iter(|| analyze(black_box(&seqs), &bg, 20).unwrap())
    });
}

fn bench_ensemble(c: &mut Criterion) {
    let m = small_model();
    let seqs = corpus(400);
    let x: Vec<Vec<f64>> = embed_all(&m, &seqs, Pooling::Sum)
        .unwrap()
        .into_iter()
        .map(|e| e.values)
        .collect();
    let y: Vec<bool> = (0..x.len()).map(|i| i % 2 == 0).collect();
    let cfg = EnsembleConfig {
        slice_size: 16,
        ..EnsembleConfig::default()
    };
    c.bench_function("embed_all/400", |b| {
        b.iter(|| embed_all(&m, black_box(&seqs), Pooling::Sum).unwrap())
    });
    c.bench_function("train_ensemble/400x32", |b| {
        b.iter(|| train_ensemble(black_box(&x), &y, &cfg).unwrap())
    });
}

criterion_group!(
    benches,
    bench_model,
    bench_sampling,
    bench_stats,
    bench_ensemble
);
criterion_main!(benches);
