// SPDX-License-Identifier: Apache-2.0

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::backprop::sequence_nll_and_grad;
use super::{LanguageModel, TinyLmError, TrainConfig};
use crate::seqdata::{encode, Dataset, TokenSequence};

/// Sequences per gradient work unit. Fixed so the summation order, and
/// therefore the result, does not depend on the thread count.
const GRAD_CHUNK: usize = 8;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// 1-based epoch with the lowest validation loss (last epoch when there
    /// is no validation data).
    pub best_epoch: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epoch_seconds: Vec<f64>,
}

impl TrainReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\ttrain_loss\tval_loss\n");
        for (i, tl) in self.train_loss.iter().enumerate() {
            let vl = self
                .val_loss
                .get(i)
                .map_or(String::from("NA"), |v| format!("{v}"));
            out.push_str(&format!("{}\t{tl}\t{vl}\n", i + 1));
        }
        out
    }
}

/// Mean NLL per predicted token and its gradient over the batch.
pub fn loss_and_grad(
    m: &LanguageModel,
    batch: &[TokenSequence],
) -> Result<(f64, Vec<f64>), TinyLmError> {
    if batch.is_empty() {
        return Err(TinyLmError::EmptyBatch);
    }
    for s in batch {
        m.check_tokens(s.tokens())?;
    }
    let refs: Vec<&TokenSequence> = batch.iter().collect();
    Ok(batch_grad(m, &refs))
}

fn batch_grad(m: &LanguageModel, batch: &[&TokenSequence]) -> (f64, Vec<f64>) {
    let n_pred: usize = batch.iter().map(|s| s.tokens().len() - 1).sum();
    let weight = 1.0 / n_pred as f64;
    let n = m.num_params();
    let parts: Vec<(f64, Vec<f64>)> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; n];
            let nll: f64 = chunk
                .iter()
                .map(|s| sequence_nll_and_grad(m, s.tokens(), weight, &mut g))
                .sum();
            (nll, g)
        })
        .collect();
    let mut parts = parts.into_iter();
    let (mut nll, mut grad) = parts.next().expect("non-empty batch");
    for (part_nll, g) in parts {
        nll += part_nll;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    (nll * weight, grad)
}

struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    decay: Vec<bool>,
    step: i32,
}

impl AdamW {
    fn new(model: &LanguageModel) -> Self {
        let n = model.num_params();
        let mut decay = vec![false; n];
        for r in &model.layout().decayed {
            decay[r.clone()].fill(true);
        }
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            decay,
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64, weight_decay: f64) {
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step);
        let bc2 = 1.0 - BETA2.powi(self.step);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            if self.decay[i] {
                params[i] -= lr * weight_decay * params[i];
            }
            params[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }
}

pub fn encode_dataset(d: &Dataset) -> Result<Vec<TokenSequence>, TinyLmError> {
    d.sequences()
        .map(|s| encode(s).map_err(TinyLmError::from))
        .collect()
}

/// AdamW over shuffled minibatches. Returns the parameters of the epoch with
/// the lowest validation loss.
pub fn train(
    model: &LanguageModel,
    train_set: &[TokenSequence],
    val_set: &[TokenSequence],
    tc: &TrainConfig,
) -> Result<(LanguageModel, TrainReport), TinyLmError> {
    tc.validate()?;
    if train_set.is_empty() {
        return Err(TinyLmError::EmptyBatch);
    }
    for s in train_set.iter().chain(val_set) {
        model.check_tokens(s.tokens())?;
    }
    let mut current = model.clone();
    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut opt = AdamW::new(model);
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);

    for epoch in 1..=tc.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut nll_sum = 0.0;
        let mut tokens = 0usize;
        for batch_idx in order.chunks(tc.batch_size) {
            let batch: Vec<&TokenSequence> = batch_idx.iter().map(|&i| &train_set[i]).collect();
            let n_pred: usize = batch.iter().map(|s| s.tokens().len() - 1).sum();
            let (loss, grad) = batch_grad(&current, &batch);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                report.best_epoch = if report.val_loss.is_empty() {
                    epoch - 1
                } else {
                    report.best_epoch
                };
                return Err(TinyLmError::DivergenceDetected {
                    epoch,
                    report: Box::new(report),
                });
            }
            nll_sum += loss * n_pred as f64;
            tokens += n_pred;
            opt.update(
                current.params_mut(),
                &grad,
                tc.learning_rate,
                tc.weight_decay,
            );
        }
        let train_loss = nll_sum / tokens as f64;
        report.train_loss.push(train_loss);
        if val_set.is_empty() {
            best = current.clone();
            report.best_epoch = epoch;
        } else {
            let val = current.clm_loss(val_set)?;
            if !val.is_finite() {
                return Err(TinyLmError::DivergenceDetected {
                    epoch,
                    report: Box::new(report),
                });
            }
            report.val_loss.push(val);
            if val < best_val {
                best_val = val;
                best = current.clone();
                report.best_epoch = epoch;
            }
        }
        report.epoch_seconds.push(started.elapsed().as_secs_f64());
        log::info!(
            "epoch {epoch}/{}: train {train_loss:.4} val {}",
            tc.epochs,
            report
                .val_loss
                .last()
                .map_or("-".into(), |v| format!("{v:.4}"))
        );
    }
    Ok((best, report))
}

/// [`train`] on datasets, tokenizing every record first.
pub fn train_on_datasets(
    model: &LanguageModel,
    train_set: &Dataset,
    val_set: &Dataset,
    tc: &TrainConfig,
) -> Result<(LanguageModel, TrainReport), TinyLmError> {
    train(
        model,
        &encode_dataset(train_set)?,
        &encode_dataset(val_set)?,
        tc,
    )
}
