// SPDX-License-Identifier: Apache-2.0

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::GeneratorError;
use crate::seqdata::encode;
use crate::seqstats::mann_whitney_u;
use crate::tinylm::LanguageModel;

/// `exp(-(1/t) sum log p(x_i | x_<i))` over the residues and the closing EOS.
pub fn perplexity(m: &LanguageModel, s: &str) -> Result<f64, GeneratorError> {
    let t = encode(s)?;
    let lp = m.sequence_log_prob(&t)?;
    Ok((-lp / (t.len() + 1) as f64).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub mean_a: f64,
    pub mean_b: f64,
    pub u_statistic: f64,
    pub p_value: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub alpha: f64,
    pub reject: bool,
}

/// Scores both libraries and runs a two-sided Mann-Whitney U test on the
/// per-sequence perplexities.
pub fn compare_perplexities(
    m: &LanguageModel,
    lib_a: &[String],
    lib_b: &[String],
    alpha: f64,
) -> Result<ComparisonReport, GeneratorError> {
    if lib_a.is_empty() || lib_b.is_empty() {
        return Err(GeneratorError::EmptyLibrary);
    }
    let score = |lib: &[String]| -> Result<Vec<f64>, GeneratorError> {
        lib.par_iter().map(|s| perplexity(m, s)).collect()
    };
    let (a, b) = (score(lib_a)?, score(lib_b)?);
    let test = mann_whitney_u(&a, &b)?;
    Ok(ComparisonReport {
        mean_a: a.iter().sum::<f64>() / a.len() as f64,
        mean_b: b.iter().sum::<f64>() / b.len() as f64,
        u_statistic: test.u,
        p_value: test.p_two_sided,
        n_a: a.len(),
        n_b: b.len(),
        alpha,
        reject: test.p_two_sided < alpha,
    })
}
