// SPDX-License-Identifier: Apache-2.0

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::train::loss_and_grad;
use super::{LanguageModel, TinyLmError};
use crate::seqdata::TokenSequence;

/// Scale floor for the relative error. Central differences carry roundoff of
/// order `1e-16 / epsilon`, so gradients smaller than this are judged on
/// absolute error in units of the floor.
const SCALE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    pub worst_index: Option<usize>,
    pub checked: usize,
}

/// `k` distinct parameter indices, sorted.
pub fn random_subset(m: &LanguageModel, k: usize, seed: u64) -> Vec<usize> {
    let n = m.num_params();
    let mut idx = sample(&mut ChaCha8Rng::seed_from_u64(seed), n, k.min(n)).into_vec();
    idx.sort_unstable();
    idx
}

/// Compares the analytic gradient of the batch loss with central differences
/// at the given parameter indices.
pub fn grad_check(
    m: &LanguageModel,
    batch: &[TokenSequence],
    epsilon: f64,
    subset: &[usize],
) -> Result<GradCheck, TinyLmError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(TinyLmError::BadConfig(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if let Some(&bad) = subset.iter().find(|&&i| i >= m.num_params()) {
        return Err(TinyLmError::BadConfig(format!(
            "parameter index {bad} out of range"
        )));
    }
    if subset.is_empty() {
        return Ok(GradCheck {
            max_relative_error: 0.0,
            worst_index: None,
            checked: 0,
        });
    }
    let (_, analytic) = loss_and_grad(m, batch)?;
    let mut probe = m.clone();
    let mut worst = (0.0, None);
    for &i in subset {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + epsilon;
        let plus = probe.clm_loss(batch)?;
        probe.params_mut()[i] = orig - epsilon;
        let minus = probe.clm_loss(batch)?;
        probe.params_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(SCALE_FLOOR);
        if rel > worst.0 {
            worst = (rel, Some(i));
        }
    }
    Ok(GradCheck {
        max_relative_error: worst.0,
        worst_index: worst.1,
        checked: subset.len(),
    })
}
