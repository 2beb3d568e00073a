// SPDX-License-Identifier: Apache-2.0

use std::collections::HashSet;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampling::{sample_one, LogitModel, SamplingParams};
use super::GeneratorError;
use crate::seqdata::{numbered_ids, write_fasta};

/// Draws per worker per merge round.
const ROUND_BLOCK: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedLibrary {
    /// Distinct sequences in the order they were first drawn.
    pub sequences: Vec<String>,
    pub params: SamplingParams,
    pub source_model: String,
    /// Raw draws consumed, duplicates included.
    pub attempts: usize,
    /// Draws discarded because the sequence was already in the library.
    pub collisions: usize,
    /// Set when `max_attempts` ran out before `n_unique` was reached.
    pub partial: bool,
}

impl GeneratedLibrary {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }
}

/// Samples until `n_unique` distinct sequences are collected or
/// `max_attempts` draws are spent.
///
/// Worker `w` owns a ChaCha stream `(seed, w)`. Each round every worker draws
/// a fixed block; blocks are merged by worker index then draw index, so the
/// library depends only on `(model, params, workers)`.
pub fn generate_library<M: LogitModel + ?Sized>(
    m: &M,
    p: &SamplingParams,
    n_unique: usize,
    max_attempts: usize,
    workers: usize,
) -> Result<GeneratedLibrary, GeneratorError> {
    p.validate()?;
    if n_unique == 0 {
        return Err(GeneratorError::BadParams("n_unique must be >= 1".into()));
    }
    let workers = workers.max(1);
    let mut rngs: Vec<ChaCha8Rng> = (0..workers)
        .map(|w| {
            let mut r = ChaCha8Rng::seed_from_u64(p.seed);
            r.set_stream(w as u64);
            r
        })
        .collect();
    let mut seen = HashSet::with_capacity(n_unique);
    let mut lib = GeneratedLibrary {
        sequences: Vec::with_capacity(n_unique),
        params: *p,
        source_model: m.model_id(),
        attempts: 0,
        collisions: 0,
        partial: false,
    };
    'rounds: while lib.sequences.len() < n_unique {
        if lib.attempts >= max_attempts {
            lib.partial = true;
            break;
        }
        let blocks: Vec<Vec<String>> = rngs
            .par_iter_mut()
            .map(|rng| {
                (0..ROUND_BLOCK)
                    .map(|_| sample_one(m, p, rng))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;
        for s in blocks.into_iter().flatten() {
            if lib.attempts >= max_attempts {
                lib.partial = true;
                break 'rounds;
            }
            lib.attempts += 1;
            if seen.insert(s.clone()) {
                lib.sequences.push(s);
                if lib.sequences.len() == n_unique {
                    break 'rounds;
                }
            } else {
                lib.collisions += 1;
            }
        }
    }
    if lib.partial {
        log::warn!(
            "library incomplete: {} of {} unique sequences after {} attempts",
            lib.sequences.len(),
            n_unique,
            lib.attempts
        );
    }
    Ok(lib)
}

/// How many library sequences also occur in `training`.
pub fn training_overlap<'a>(
    library: &[String],
    training: impl IntoIterator<Item = &'a str>,
) -> usize {
    let train: HashSet<&str> = training.into_iter().collect();
    library
        .iter()
        .filter(|s| train.contains(s.as_str()))
        .count()
}

/// FASTA with ids `gen_000001`, `gen_000002`, ...
pub fn write_library_fasta<W: Write>(w: W, sequences: &[String]) -> std::io::Result<()> {
    write_fasta(w, numbered_ids("gen").zip(sequences))
}

/// TSV with columns sequence, length, perplexity.
pub fn write_library_tsv<W: Write>(
    mut w: W,
    sequences: &[String],
    perplexities: &[f64],
) -> std::io::Result<()> {
    writeln!(w, "sequence\tlength\tperplexity")?;
    for (s, p) in sequences.iter().zip(perplexities) {
        writeln!(w, "{s}\t{}\t{p}", s.len())?;
    }
    Ok(())
}
