// SPDX-License-Identifier: Apache-2.0

//! Synthetic peptide sources with known structure and the bundled toy corpus.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::seqdata::{
    residue_id, Assay, Dataset, EpitopeRecord, Label, Organism, Structure, NUM_RESIDUES, RESIDUES,
};

/// Approximate amino-acid composition of UniProtKB/Swiss-Prot, in
/// `RESIDUES` order.
pub const REFERENCE_COMPOSITION: [f64; NUM_RESIDUES] = [
    0.0825, 0.0137, 0.0545, 0.0675, 0.0386, 0.0707, 0.0227, 0.0596, 0.0584, 0.0966, 0.0242, 0.0406,
    0.0470, 0.0393, 0.0553, 0.0656, 0.0534, 0.0687, 0.0108, 0.0292,
];

pub const AROMATIC: [u8; 3] = *b"FWY";

fn normalized(w: [f64; NUM_RESIDUES]) -> [f64; NUM_RESIDUES] {
    let s: f64 = w.iter().sum();
    w.map(|x| x / s)
}

fn draw_length<R: Rng>(lengths: &[(usize, f64)], rng: &mut R) -> usize {
    let idx = WeightedIndex::new(lengths.iter().map(|l| l.1)).expect("positive length weights");
    lengths[idx.sample(rng)].0
}

/// Independent positions: reference composition with cysteine scaled by
/// `cysteine_factor` everywhere and F/W/Y scaled by `aromatic_factor` at the
/// final position.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSource {
    pub lengths: Vec<(usize, f64)>,
    pub cysteine_factor: f64,
    pub aromatic_factor: f64,
}

impl PlantedSource {
    pub fn new(lengths: Vec<(usize, f64)>) -> Self {
        Self {
            lengths,
            cysteine_factor: 0.2,
            aromatic_factor: 4.0,
        }
    }

    /// Peaked at 9 residues, spanning 8 to 11.
    pub fn epitope_like() -> Self {
        Self::new(vec![(8, 0.25), (9, 0.45), (10, 0.18), (11, 0.12)])
    }

    pub fn position_probs(&self, len: usize, pos: usize) -> [f64; NUM_RESIDUES] {
        let mut w = REFERENCE_COMPOSITION;
        w[residue_id(b'C').unwrap()] *= self.cysteine_factor;
        if pos + 1 == len {
            for a in AROMATIC {
                w[residue_id(a).unwrap()] *= self.aromatic_factor;
            }
        }
        normalized(w)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> String {
        let len = draw_length(&self.lengths, rng);
        (0..len)
            .map(|pos| {
                let d = WeightedIndex::new(self.position_probs(len, pos)).unwrap();
                RESIDUES[d.sample(rng)] as char
            })
            .collect()
    }

    pub fn sample_n(&self, n: usize, seed: u64) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample(&mut rng)).collect()
    }
}

/// First-order Markov chain over residues with a length drawn independently
/// of content.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovSource {
    pub initial: [f64; NUM_RESIDUES],
    pub transition: [[f64; NUM_RESIDUES]; NUM_RESIDUES],
    pub lengths: Vec<(usize, f64)>,
}

impl MarkovSource {
    /// Uniform start; each residue has four random successors with
    /// probabilities 0.55, 0.25, 0.15 and 0.05.
    pub fn sparse(lengths: Vec<(usize, f64)>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut transition = [[0.0; NUM_RESIDUES]; NUM_RESIDUES];
        for row in &mut transition {
            for (k, j) in sample(&mut rng, NUM_RESIDUES, 4).into_iter().enumerate() {
                row[j] = [0.55, 0.25, 0.15, 0.05][k];
            }
        }
        Self {
            initial: [1.0 / NUM_RESIDUES as f64; NUM_RESIDUES],
            transition,
            lengths,
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> String {
        let len = draw_length(&self.lengths, rng);
        let mut out = String::with_capacity(len);
        let mut cur = WeightedIndex::new(self.initial).unwrap().sample(rng);
        out.push(RESIDUES[cur] as char);
        for _ in 1..len {
            cur = WeightedIndex::new(self.transition[cur])
                .unwrap()
                .sample(rng);
            out.push(RESIDUES[cur] as char);
        }
        out
    }

    pub fn sample_n(&self, n: usize, seed: u64) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample(&mut rng)).collect()
    }
}

/// Size of [`toy_corpus`].
pub const TOY_CORPUS_SIZE: usize = 1000;

/// Labeled corpus behind `data/toy_epitopes.tsv`.
///
/// Positives come from [`PlantedSource::epitope_like`], negatives from the
/// unmodified reference composition with the same lengths. A few rows carry a
/// mouse host, a conformational structure or an over-long sequence so that
/// the default ingest filter has something to drop.
pub fn toy_corpus(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planted = PlantedSource::epitope_like();
    let plain = PlantedSource {
        cysteine_factor: 1.0,
        aromatic_factor: 1.0,
        ..planted.clone()
    };
    let long = PlantedSource {
        lengths: vec![(12, 1.0), (13, 1.0), (14, 1.0)],
        ..planted.clone()
    };
    let assays = [Assay::TCell, Assay::BCell, Assay::Mhc];
    let records = (0..TOY_CORPUS_SIZE)
        .map(|_| {
            let positive = rng.random_bool(0.6);
            let roll: f64 = rng.random();
            let source = if roll < 0.02 {
                &long
            } else if positive {
                &planted
            } else {
                &plain
            };
            EpitopeRecord {
                sequence: source.sample(&mut rng),
                host: if (0.02..0.05).contains(&roll) {
                    "mus musculus".into()
                } else {
                    "human".into()
                },
                organism: if rng.random_bool(0.5) {
                    Organism::Bacterial
                } else {
                    Organism::Viral
                },
                assay: assays[rng.random_range(0..3)],
                structure: if (0.05..0.07).contains(&roll) {
                    Structure::Conformational
                } else {
                    Structure::Linear
                },
                label: if positive {
                    Label::Positive
                } else {
                    Label::Negative
                },
            }
        })
        .collect();
    Dataset::new(records)
}

/// Seed that produced the bundled file.
pub const TOY_CORPUS_SEED: u64 = 20240917;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqdata::write_dataset_tsv;

    fn bundled_path() -> std::path::PathBuf {
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/toy_epitopes.tsv")
    }

    #[test]
    fn bundled_corpus_matches_generator() {
        let mut buf = Vec::new();
        write_dataset_tsv(&toy_corpus(TOY_CORPUS_SEED), &mut buf).unwrap();
        if std::env::var_os("EPILIB_REGENERATE_TOY").is_some() {
            std::fs::write(bundled_path(), &buf).unwrap();
        }
        let shipped = std::fs::read(bundled_path()).unwrap();
        assert!(
            shipped == buf,
            "data/toy_epitopes.tsv is stale; rerun with EPILIB_REGENERATE_TOY=1"
        );
    }

    #[test]
    fn planted_profile_shape() {
        let s = PlantedSource::epitope_like();
        let c = residue_id(b'C').unwrap();
        for len in 8..=11 {
            for pos in 0..len {
                let p = s.position_probs(len, pos);
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(p[c] < REFERENCE_COMPOSITION[c]);
            }
            let last = s.position_probs(len, len - 1);
            for a in AROMATIC {
                assert!(
                    last[residue_id(a).unwrap()] > REFERENCE_COMPOSITION[residue_id(a).unwrap()]
                );
            }
        }
    }

    #[test]
    fn markov_rows_are_distributions() {
        let m = MarkovSource::sparse(vec![(6, 1.0)], 3);
        for row in &m.transition {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(row.iter().filter(|&&p| p > 0.0).count(), 4);
        }
        let seqs = m.sample_n(50, 1);
        assert!(seqs.iter().all(|s| s.len() == 6));
        assert_eq!(seqs, m.sample_n(50, 1));
    }

    #[test]
    fn bundled_background_is_reference_composition() {
        use crate::seqstats::{BackgroundModel, ProbabilityVector};
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../data/background_reference.tsv");
        let got = BackgroundModel::from_file(path, 0.0).unwrap();
        let want = ProbabilityVector::from_weights(REFERENCE_COMPOSITION).unwrap();
        let BackgroundModel::Global(p) = got else {
            panic!("expected a global background")
        };
        for i in 0..NUM_RESIDUES {
            assert!((p.get(i) - want.get(i)).abs() < 1e-15);
        }
    }

    #[test]
    fn reference_composition_sums_to_one() {
        // Rounded to four places, so only approximately normalized.
        assert!((REFERENCE_COMPOSITION.iter().sum::<f64>() - 1.0).abs() < 2e-3);
    }
}
