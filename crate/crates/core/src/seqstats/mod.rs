// SPDX-License-Identifier: Apache-2.0

//! Statistics for sets of peptides: lengths, per-position frequencies,
//! relative entropy, propensity, Shannon entropy, positional mutual
//! information, the Mann-Whitney U test and PCA. All logarithms are natural.

mod distribution;
mod mutual_info;
mod mwu;
mod pca;
mod report;

use std::collections::BTreeMap;

pub use distribution::{
    positional_frequencies, positional_frequencies_smoothed, propensity, relative_entropy,
    shannon_entropy, BackgroundModel, PositionFrequencyMatrix, ProbabilityVector,
};
pub use mutual_info::{mutual_information, MutualInformationMatrix};
pub use mwu::{mann_whitney_u, normal_approximation_p, MannWhitney, MwuMethod, EXACT_MAX_POOLED};
pub use pca::{pca, Pca};
pub use report::{analyze, write_report_bundle, LengthStats, StatsReport, REPORT_VERSION};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("no sequences of length {0}")]
    NoSequencesOfLength(usize),
    #[error("need at least {needed} sequences of length {length}, got {got}")]
    TooFewSequences {
        length: usize,
        needed: usize,
        got: usize,
    },
    #[error("P has mass at residue index {0} where Q is zero")]
    UnsupportedMass(usize),
    #[error("background probability is zero at residue index {0}")]
    ZeroBackground(usize),
    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),
    #[error("empty sample")]
    EmptySample,
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("sequence {0:?} contains a non-canonical residue")]
    NonCanonical(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for StatsError {
    fn from(e: std::io::Error) -> Self {
        StatsError::Io(e.to_string())
    }
}

/// Exact count of sequences per length.
pub fn length_histogram<S: AsRef<str>>(seqs: &[S]) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for s in seqs {
        *h.entry(s.as_ref().len()).or_insert(0) += 1;
    }
    h
}

/// Most frequent length; ties go to the shorter length.
pub fn length_mode(hist: &BTreeMap<usize, usize>) -> Option<usize> {
    hist.iter()
        .fold(
            None,
            |best: Option<(usize, usize)>, (&len, &count)| match best {
                Some((_, c)) if c >= count => best,
                _ => Some((len, count)),
            },
        )
        .map(|(len, _)| len)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_examples() {
        let h = length_histogram(&["AA", "AAA", "AA"]);
        assert_eq!(h, BTreeMap::from([(2, 2), (3, 1)]));
        assert!(length_histogram::<&str>(&[]).is_empty());
        assert_eq!(length_mode(&h), Some(2));
        assert_eq!(length_mode(&BTreeMap::from([(3, 5), (9, 5)])), Some(3));
        assert_eq!(length_mode(&BTreeMap::new()), None);
    }
}
