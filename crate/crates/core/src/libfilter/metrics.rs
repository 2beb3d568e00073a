// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ensemble::EnsembleClassifier;
use super::FilterError;

/// Positive likelihood ratio TPR / FPR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrPlus {
    Finite(f64),
    /// FPR = 0 with TPR > 0; written as the string `"inf"`.
    Infinite,
    /// TPR = FPR = 0; written as `null`.
    Undefined,
}

impl LrPlus {
    pub fn from_rates(tpr: f64, fpr: f64) -> Self {
        if fpr > 0.0 {
            LrPlus::Finite(tpr / fpr)
        } else if tpr > 0.0 {
            LrPlus::Infinite
        } else {
            LrPlus::Undefined
        }
    }

    pub fn value(&self) -> f64 {
        match self {
            LrPlus::Finite(v) => *v,
            LrPlus::Infinite => f64::INFINITY,
            LrPlus::Undefined => f64::NAN,
        }
    }
}

impl Serialize for LrPlus {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            LrPlus::Finite(v) => s.serialize_f64(*v),
            LrPlus::Infinite => s.serialize_str("inf"),
            LrPlus::Undefined => s.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for LrPlus {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
            Null(()),
        }
        match Option::<Raw>::deserialize(d)? {
            Some(Raw::Num(v)) => Ok(LrPlus::Finite(v)),
            Some(Raw::Str(s)) if s == "inf" => Ok(LrPlus::Infinite),
            Some(Raw::Str(s)) => Err(serde::de::Error::custom(format!("bad lr_plus {s:?}"))),
            Some(Raw::Null(())) | None => Ok(LrPlus::Undefined),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub f1: f64,
    pub accuracy: f64,
    pub recall: f64,
    pub precision: f64,
    /// Absent when only one class was evaluated.
    pub roc_auc: Option<f64>,
    pub pr_auc: Option<f64>,
    pub lr_plus: LrPlus,
    pub fpr: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub single_class: bool,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Midranks (1-based) of `scores`.
fn midranks(scores: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Area under the ROC curve from the rank-sum statistic, ties counting one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let p = labels.iter().filter(|&&l| l).count();
    let n = labels.len() - p;
    if p == 0 || n == 0 {
        return None;
    }
    let ranks = midranks(scores);
    let rsum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(r, _)| r)
        .sum();
    Some((rsum - (p * (p + 1)) as f64 / 2.0) / (p as f64 * n as f64))
}

/// Area under the precision-recall curve as average precision, stepping once
/// per distinct score so tied items enter together.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let p = labels.iter().filter(|&&l| l).count();
    if p == 0 || p == labels.len() {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp, mut ap) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        let mut group_pos = 0;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if labels[idx[j]] {
                group_pos += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        tp += group_pos;
        ap += group_pos as f64 / p as f64 * (tp as f64 / (tp + fp) as f64);
        i = j;
    }
    Some(ap)
}

pub fn metrics_from_predictions(
    labels: &[bool],
    predicted: &[bool],
    scores: &[f64],
) -> Result<MetricsReport, FilterError> {
    if labels.len() != predicted.len() || labels.len() != scores.len() {
        return Err(FilterError::LengthMismatch(predicted.len(), labels.len()));
    }
    if labels.is_empty() {
        return Err(FilterError::Empty);
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&l, &p) in labels.iter().zip(predicted) {
        match (l, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
            (true, false) => fn_ += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let fpr = ratio(fp, fp + tn);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let roc = roc_auc(scores, labels);
    let single_class = roc.is_none();
    if single_class {
        log::warn!("evaluation set has a single class; AUCs omitted");
    }
    Ok(MetricsReport {
        f1,
        accuracy: ratio(tp + tn, labels.len()),
        recall,
        precision,
        roc_auc: roc,
        pr_auc: average_precision(scores, labels),
        lr_plus: LrPlus::from_rates(recall, fpr),
        fpr,
        tp,
        fp,
        tn,
        fn_,
        single_class,
    })
}

/// Scores each row with the normalized positive weight.
pub fn evaluate<V: AsRef<[f64]>>(
    c: &EnsembleClassifier,
    x: &[V],
    labels: &[bool],
) -> Result<MetricsReport, FilterError> {
    if x.len() != labels.len() {
        return Err(FilterError::LengthMismatch(x.len(), labels.len()));
    }
    let mut predicted = Vec::with_capacity(x.len());
    let mut scores = Vec::with_capacity(x.len());
    for v in x {
        let p = c.predict(v.as_ref())?;
        predicted.push(p.label);
        scores.push(p.score());
    }
    metrics_from_predictions(labels, &predicted, &scores)
}
