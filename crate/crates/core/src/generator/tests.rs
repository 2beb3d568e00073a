// SPDX-License-Identifier: Apache-2.0

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::seqdata::{encode, residue_id, BOS, EOS, NUM_RESIDUES, RESIDUES, VOCAB_SIZE};
use crate::tinylm::{LanguageModel, ModelConfig};

/// Same logits at every step.
struct Fixed(Vec<f64>);

struct FixedStream<'a>(&'a [f64]);

impl LogitStream for FixedStream<'_> {
    fn feed(&mut self, _: usize) -> Result<Vec<f64>, GeneratorError> {
        Ok(self.0.to_vec())
    }
}

impl LogitModel for Fixed {
    type Stream<'a> = FixedStream<'a>;
    fn open(&self) -> FixedStream<'_> {
        FixedStream(&self.0)
    }
    fn model_id(&self) -> String {
        "fixed".into()
    }
}

/// Emits "AAA" then EOS with overwhelming confidence.
struct TripleA;

struct TripleAStream(usize);

impl LogitStream for TripleAStream {
    fn feed(&mut self, _: usize) -> Result<Vec<f64>, GeneratorError> {
        let mut l = vec![-50.0; VOCAB_SIZE];
        l[if self.0 < 3 { 0 } else { EOS }] = 50.0;
        self.0 += 1;
        Ok(l)
    }
}

impl LogitModel for TripleA {
    type Stream<'a> = TripleAStream;
    fn open(&self) -> TripleAStream {
        TripleAStream(0)
    }
    fn model_id(&self) -> String {
        "aaa".into()
    }
}

fn model(seed: u64) -> LanguageModel {
    LanguageModel::init(ModelConfig {
        n_layers: 2,
        d_model: 16,
        n_heads: 2,
        d_ff: 32,
        max_context: 16,
        vocab_size: VOCAB_SIZE,
        seed,
    })
    .unwrap()
}

#[test]
fn penalty_rule() {
    let mut l = vec![2.0, -2.0, 0.0, 3.0];
    apply_repetition_penalty(&mut l, &[true, true, true, false], 2.0);
    assert_eq!(l, vec![1.0, -4.0, 0.0, 3.0]);
}

#[test]
fn params_validation() {
    let ok = SamplingParams::default();
    assert_eq!(
        (ok.temperature, ok.repetition_penalty, ok.max_len),
        (1.0, 2.0, 14)
    );
    for bad in [
        SamplingParams {
            temperature: 0.0,
            ..ok
        },
        SamplingParams {
            repetition_penalty: 0.9,
            ..ok
        },
        SamplingParams { max_len: 0, ..ok },
    ] {
        assert!(matches!(bad.validate(), Err(GeneratorError::BadParams(_))));
    }
    let m = model(1);
    let too_long = SamplingParams { max_len: 15, ..ok };
    assert!(sample_one(&m, &too_long, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
}

/// Reference greedy decoder: argmax of penalized logits over residues (and
/// EOS once a residue exists), recomputing the full forward pass each step.
fn greedy_reference(m: &LanguageModel, penalty: f64, max_len: usize) -> String {
    let mut tokens = vec![BOS];
    let mut out = String::new();
    while out.len() < max_len {
        let raw = m.decoder_logits(&tokens);
        let mut best = None;
        for t in 0..VOCAB_SIZE {
            if t == BOS || t == crate::seqdata::PAD || (t == EOS && out.is_empty()) {
                continue;
            }
            let mut v = raw[t];
            if t < NUM_RESIDUES && out.as_bytes().contains(&RESIDUES[t]) {
                v = if v > 0.0 {
                    v / penalty
                } else if v < 0.0 {
                    v * penalty
                } else {
                    v
                };
            }
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((t, v));
            }
        }
        let (t, _) = best.unwrap();
        if t == EOS {
            break;
        }
        out.push(RESIDUES[t] as char);
        tokens.push(t);
    }
    out
}

trait RawLogits {
    fn decoder_logits(&self, tokens: &[usize]) -> Vec<f64>;
}

impl RawLogits for LanguageModel {
    fn decoder_logits(&self, tokens: &[usize]) -> Vec<f64> {
        let mut d = self.decoder();
        let mut last = Vec::new();
        for &t in tokens {
            last = d.step(t).unwrap().logits;
        }
        last
    }
}

#[test]
fn vanishing_temperature_is_greedy() {
    let m = model(21);
    for penalty in [1.0, 2.0] {
        let p = SamplingParams {
            temperature: 1e-7,
            repetition_penalty: penalty,
            max_len: 12,
            seed: 0,
        };
        let want = greedy_reference(&m, penalty, 12);
        for seed in 0..5 {
            let got = sample_one(&m, &p, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(got, want);
        }
    }
}

#[test]
fn two_equal_tokens_split_evenly() {
    let mut l = vec![f64::NEG_INFINITY; VOCAB_SIZE];
    l[0] = 0.0;
    l[1] = 0.0;
    let m = Fixed(l);
    let p = SamplingParams {
        temperature: 1.0,
        repetition_penalty: 1.0,
        max_len: 1,
        seed: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 10_000;
    let a = (0..n)
        .filter(|_| sample_one(&m, &p, &mut rng).unwrap() == "A")
        .count();
    let sigma = (n as f64 * 0.25).sqrt();
    assert!(
        (a as f64 - n as f64 / 2.0).abs() < 3.0 * sigma,
        "A drawn {a} times"
    );
}

#[test]
fn unit_penalty_and_temperature_give_raw_softmax() {
    let raw: Vec<f64> = (0..VOCAB_SIZE)
        .map(|i| ((i * 7919) % 13) as f64 * 0.37 - 2.0)
        .collect();
    let emitted: Vec<bool> = (0..VOCAB_SIZE).map(|i| i % 3 == 0).collect();
    let p = SamplingParams {
        temperature: 1.0,
        repetition_penalty: 1.0,
        max_len: 5,
        seed: 0,
    };
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = raw.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    let want: Vec<f64> = e.iter().map(|x| x / s).collect();
    assert_eq!(step_distribution(&raw, &emitted, &p), want);
}

#[test]
fn always_same_sequence_gives_partial_library() {
    let p = SamplingParams {
        temperature: 1.0,
        repetition_penalty: 1.0,
        max_len: 10,
        seed: 3,
    };
    let lib = generate_library(&TripleA, &p, 2, 50, 1).unwrap();
    assert_eq!(lib.sequences, vec!["AAA".to_string()]);
    assert!(lib.partial);
    assert_eq!(lib.attempts, 50);
    assert_eq!(lib.collisions, 49);
}

#[test]
fn library_is_unique_canonical_and_deterministic() {
    let m = model(31);
    let p = SamplingParams {
        temperature: 1.0,
        repetition_penalty: 2.0,
        max_len: 14,
        seed: 7,
    };
    let lib = generate_library(&m, &p, 100, 10_000, 3).unwrap();
    assert_eq!(lib.len(), 100);
    assert!(!lib.partial);
    let set: std::collections::HashSet<_> = lib.sequences.iter().collect();
    assert_eq!(set.len(), 100);
    for s in &lib.sequences {
        assert!(s.len() <= 14 && !s.is_empty());
        encode(s).unwrap();
    }
    assert_eq!(generate_library(&m, &p, 100, 10_000, 3).unwrap(), lib);
    assert_eq!(lib.source_model, m.fingerprint());
}

#[test]
fn uniform_model_perplexity_is_vocab_size() {
    let mut m = model(41);
    m.zero_output_projection();
    for s in ["A", "ACDEFGHIK", "WWWW"] {
        assert!((perplexity(&m, s).unwrap() - 23.0).abs() < 1e-9);
    }
    assert!(perplexity(&m, "AXC").is_err());
}

#[test]
fn perplexity_is_exp_of_single_sequence_loss() {
    let m = model(42);
    let s = "MKTAYIAK";
    let loss = m.clm_loss(&[encode(s).unwrap()]).unwrap();
    assert!((perplexity(&m, s).unwrap() - loss.exp()).abs() < 1e-9);
    assert!(perplexity(&m, s).unwrap() >= 1.0);
}

#[test]
fn identical_libraries_do_not_differ() {
    let m = model(43);
    let lib: Vec<String> = [
        "ACD", "KLMN", "WY", "PQRST", "GGH", "IKL", "MN", "STV", "AAC", "DEF", "HIK", "LMN", "PQ",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let r = compare_perplexities(&m, &lib, &lib, 0.05).unwrap();
    assert!((r.p_value - 1.0).abs() < 1e-12);
    assert!(!r.reject);
    assert_eq!(r.mean_a, r.mean_b);
}

#[test]
fn separated_libraries_are_rejected() {
    let m = model(44);
    let mut scored: Vec<(f64, String)> = (0..40)
        .map(|i| {
            let s: String = (0..6)
                .map(|j| RESIDUES[(i * 7 + j * (i % 5 + 1)) % 20] as char)
                .collect();
            (perplexity(&m, &s).unwrap(), s)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    scored.dedup_by(|a, b| a.1 == b.1);
    let low: Vec<String> = scored[..4].iter().map(|x| x.1.clone()).collect();
    let high: Vec<String> = scored[scored.len() - 4..]
        .iter()
        .map(|x| x.1.clone())
        .collect();
    let r = compare_perplexities(&m, &low, &high, 0.05).unwrap();
    // Exact oracle: 2 of the C(8,4) = 70 labelings are as extreme as U = 0.
    assert_eq!(r.u_statistic, 0.0);
    assert!((r.p_value - 2.0 / 70.0).abs() < 1e-12);
    assert!(r.reject);
}

#[test]
fn library_writers() {
    let seqs = vec!["ACD".to_string(), "WY".to_string()];
    let mut fa = Vec::new();
    write_library_fasta(&mut fa, &seqs).unwrap();
    assert_eq!(
        String::from_utf8(fa).unwrap(),
        ">gen_000001\nACD\n>gen_000002\nWY\n"
    );
    let mut tsv = Vec::new();
    write_library_tsv(&mut tsv, &seqs, &[3.5, 10.0]).unwrap();
    assert_eq!(
        String::from_utf8(tsv).unwrap(),
        "sequence\tlength\tperplexity\nACD\t3\t3.5\nWY\t2\t10\n"
    );
    assert_eq!(training_overlap(&seqs, ["WY", "KK"]), 1);
    assert!(residue_id(b'W').is_some());
}

#[test]
fn toy_draws_match_distribution() {
    // Chi-square goodness of fit over five residues at alpha = 0.001 (df = 4).
    let weights = [0.1, 0.15, 0.2, 0.25, 0.3];
    let mut l = vec![f64::NEG_INFINITY; VOCAB_SIZE];
    for (i, w) in weights.iter().enumerate() {
        l[i] = f64::ln(*w) + 1.7;
    }
    let m = Fixed(l);
    let p = SamplingParams {
        temperature: 1.0,
        repetition_penalty: 1.0,
        max_len: 1,
        seed: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 100_000;
    let mut counts = [0usize; 5];
    for _ in 0..n {
        let s = sample_one(&m, &p, &mut rng).unwrap();
        counts[residue_id(s.as_bytes()[0]).unwrap()] += 1;
    }
    let chi2: f64 = counts
        .iter()
        .zip(weights)
        .map(|(&c, w)| {
            let e = w * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    assert!(chi2 < 18.467, "chi2 = {chi2}");
}

mod props {
    use proptest::prelude::*;

    use super::super::*;
    use crate::seqdata::VOCAB_SIZE;

    fn logits() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-8.0f64..8.0, VOCAB_SIZE)
    }

    proptest! {
        #[test]
        fn penalty_never_raises_emitted_tokens(raw in logits(), mask in proptest::collection::vec(any::<bool>(), VOCAB_SIZE), r in 1.0f64..5.0, k in 0usize..VOCAB_SIZE) {
            let mut lo = raw.clone();
            apply_repetition_penalty(&mut lo, &mask, r);
            let mut hi = raw.clone();
            apply_repetition_penalty(&mut hi, &mask, r + 0.5);
            for t in 0..VOCAB_SIZE {
                prop_assert!(lo[t] <= raw[t]);
                prop_assert!(hi[t] <= lo[t]);
                if !mask[t] { prop_assert_eq!(lo[t], raw[t]); }
            }
            // Probability of an emitted token cannot go up when the penalty grows.
            let unit = SamplingParams { temperature: 1.0, repetition_penalty: 1.0, max_len: 5, seed: 0 };
            let mut only = vec![false; VOCAB_SIZE];
            only[k] = true;
            let p1 = step_distribution(&raw, &only, &SamplingParams { repetition_penalty: r, ..unit });
            let p2 = step_distribution(&raw, &only, &SamplingParams { repetition_penalty: r + 0.5, ..unit });
            prop_assert!(p2[k] <= p1[k] + 1e-12);
        }

        #[test]
        fn temperature_preserves_rank(raw in logits(), t in 0.05f64..10.0) {
            let p = SamplingParams { temperature: t, repetition_penalty: 1.0, max_len: 5, seed: 0 };
            let d = step_distribution(&raw, &[false; VOCAB_SIZE], &p);
            prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for i in 0..VOCAB_SIZE {
                for j in 0..VOCAB_SIZE {
                    if raw[i] < raw[j] { prop_assert!(d[i] <= d[j]); }
                }
            }
        }
    }
}
