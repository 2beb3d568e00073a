// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::metrics::LrPlus;
use super::FilterError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LibraryComposition {
    pub p_plus: f64,
    pub p_minus: f64,
}

impl LibraryComposition {
    pub fn from_counts(positives: usize, total: usize) -> Option<Self> {
        (total > 0).then(|| {
            let p_plus = positives as f64 / total as f64;
            LibraryComposition {
                p_plus,
                p_minus: (total - positives) as f64 / total as f64,
            }
        })
    }

    /// `p_plus / p_minus`, infinite for an all-positive library.
    pub fn ratio(&self) -> f64 {
        if self.p_minus > 0.0 {
            self.p_plus / self.p_minus
        } else {
            f64::INFINITY
        }
    }
}

/// Composition summary written next to a filtered library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionReport {
    pub version: u32,
    pub n_before: usize,
    pub n_after: usize,
    pub all_rejected: bool,
    /// Present only when truth labels were supplied.
    pub before: Option<LibraryComposition>,
    pub after: Option<LibraryComposition>,
    pub empirical_lr_plus: Option<LrPlus>,
    /// LR+ measured on a held-out evaluation set.
    pub held_out_lr_plus: Option<LrPlus>,
    /// `held_out_lr_plus * before_ratio`, when both are known.
    pub expected_after_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome<T> {
    pub kept: Vec<T>,
    pub kept_indices: Vec<usize>,
    pub report: CompositionReport,
}

/// Keeps the items `accept` calls positive.
///
/// With `truth` (simulation mode) the before and after compositions and the
/// empirical LR+ on this library are reported; the after ratio then equals
/// that LR+ times the before ratio. Without it only counts and the supplied
/// held-out LR+ are reported.
pub fn filter_library<T: Clone>(
    items: &[T],
    truth: Option<&[bool]>,
    held_out_lr_plus: Option<LrPlus>,
    mut accept: impl FnMut(&T) -> Result<bool, FilterError>,
) -> Result<FilterOutcome<T>, FilterError> {
    if items.is_empty() {
        return Err(FilterError::Empty);
    }
    if let Some(t) = truth {
        if t.len() != items.len() {
            return Err(FilterError::LengthMismatch(items.len(), t.len()));
        }
    }
    let mut kept = Vec::new();
    let mut kept_indices = Vec::new();
    for (i, it) in items.iter().enumerate() {
        if accept(it)? {
            kept.push(it.clone());
            kept_indices.push(i);
        }
    }
    let all_rejected = kept.is_empty();
    if all_rejected {
        log::warn!("classifier rejected all {} library sequences", items.len());
    }
    let (mut before, mut after, mut empirical) = (None, None, None);
    if let Some(t) = truth {
        let pos = t.iter().filter(|&&v| v).count();
        let neg = t.len() - pos;
        let tp = kept_indices.iter().filter(|&&i| t[i]).count();
        let fp = kept.len() - tp;
        before = LibraryComposition::from_counts(pos, t.len());
        after = LibraryComposition::from_counts(tp, kept.len());
        let rate = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        empirical = Some(LrPlus::from_rates(rate(tp, pos), rate(fp, neg)));
    }
    let expected_after_ratio = match (before, held_out_lr_plus) {
        (Some(b), Some(lr)) => Some(lr.value() * b.ratio()),
        _ => None,
    };
    Ok(FilterOutcome {
        report: CompositionReport {
            version: 1,
            n_before: items.len(),
            n_after: kept.len(),
            all_rejected,
            before,
            after,
            empirical_lr_plus: empirical,
            held_out_lr_plus,
            expected_after_ratio,
        },
        kept,
        kept_indices,
    })
}
