// SPDX-License-Identifier: Apache-2.0

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::GeneratorError;
use crate::seqdata::{BOS, EOS, NUM_RESIDUES, PAD, RESIDUES, VOCAB_SIZE};
use crate::tinylm::{Decoder as LmDecoder, LanguageModel};

/// Temperatures below this decode greedily.
pub const GREEDY_TEMPERATURE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingParams {
    pub temperature: f64,
    pub repetition_penalty: f64,
    /// Residue cap per sequence.
    pub max_len: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            repetition_penalty: 2.0,
            max_len: 14,
            seed: 0,
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(GeneratorError::BadParams(format!(
                "temperature {} must be > 0",
                self.temperature
            )));
        }
        if !(self.repetition_penalty >= 1.0 && self.repetition_penalty.is_finite()) {
            return Err(GeneratorError::BadParams(format!(
                "repetition penalty {} must be >= 1",
                self.repetition_penalty
            )));
        }
        if self.max_len == 0 {
            return Err(GeneratorError::BadParams("max_len must be >= 1".into()));
        }
        Ok(())
    }
}

/// Anything that yields next-token logits one token at a time.
pub trait LogitModel: Sync {
    type Stream<'a>: LogitStream
    where
        Self: 'a;

    fn open(&self) -> Self::Stream<'_>;

    fn model_id(&self) -> String;

    /// Longest residue string the model can score, if bounded.
    fn max_residues(&self) -> Option<usize> {
        None
    }
}

pub trait LogitStream {
    /// Appends `token` and returns logits for the following position.
    fn feed(&mut self, token: usize) -> Result<Vec<f64>, GeneratorError>;
}

impl LogitModel for LanguageModel {
    type Stream<'a> = LmDecoder<'a>;

    fn open(&self) -> LmDecoder<'_> {
        self.decoder()
    }

    fn model_id(&self) -> String {
        self.fingerprint()
    }

    fn max_residues(&self) -> Option<usize> {
        Some(self.config().max_residues())
    }
}

impl LogitStream for LmDecoder<'_> {
    fn feed(&mut self, token: usize) -> Result<Vec<f64>, GeneratorError> {
        Ok(self.step(token)?.logits)
    }
}

/// Positive logits of already-emitted tokens are divided by `penalty`,
/// negative ones multiplied; zero stays zero.
pub fn apply_repetition_penalty(logits: &mut [f64], emitted: &[bool], penalty: f64) {
    for (l, _) in logits.iter_mut().zip(emitted).filter(|(_, &e)| e) {
        if *l > 0.0 {
            *l /= penalty;
        } else if *l < 0.0 {
            *l *= penalty;
        }
    }
}

pub fn apply_temperature(logits: &mut [f64], temperature: f64) {
    for l in logits.iter_mut() {
        *l /= temperature;
    }
}

/// The sampling distribution over the full vocabulary for one step:
/// repetition penalty, then temperature, then softmax.
pub fn step_distribution(raw_logits: &[f64], emitted: &[bool], p: &SamplingParams) -> Vec<f64> {
    let mut l = raw_logits.to_vec();
    apply_repetition_penalty(&mut l, emitted, p.repetition_penalty);
    apply_temperature(&mut l, p.temperature);
    let max = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in l.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    l.iter_mut().for_each(|x| *x /= sum);
    l
}

fn allowed(token: usize, n_residues: usize) -> bool {
    match token {
        BOS | PAD => false,
        EOS => n_residues > 0,
        _ => true,
    }
}

fn choose<R: Rng + ?Sized>(
    raw: &[f64],
    emitted: &[bool],
    n_residues: usize,
    p: &SamplingParams,
    rng: &mut R,
) -> Result<usize, GeneratorError> {
    if p.temperature < GREEDY_TEMPERATURE {
        let mut l = raw.to_vec();
        apply_repetition_penalty(&mut l, emitted, p.repetition_penalty);
        let mut best: Option<usize> = None;
        for (t, &v) in l.iter().enumerate() {
            if allowed(t, n_residues) && v.is_finite() && best.is_none_or(|b| v > l[b]) {
                best = Some(t);
            }
        }
        return best.ok_or(GeneratorError::DegenerateModel);
    }
    let mut probs = step_distribution(raw, emitted, p);
    for (t, q) in probs.iter_mut().enumerate() {
        if !allowed(t, n_residues) || !q.is_finite() {
            *q = 0.0;
        }
    }
    let total: f64 = probs.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(GeneratorError::DegenerateModel);
    }
    let mut r = rng.random::<f64>() * total;
    let mut last = None;
    for (t, &q) in probs.iter().enumerate() {
        if q > 0.0 {
            if r < q {
                return Ok(t);
            }
            r -= q;
            last = Some(t);
        }
    }
    last.ok_or(GeneratorError::DegenerateModel)
}

/// Draws one residue string, starting from BOS and stopping at EOS or after
/// `max_len` residues. BOS and PAD are never sampled, and EOS is unavailable
/// until at least one residue has been emitted.
pub fn sample_one<M, R>(m: &M, p: &SamplingParams, rng: &mut R) -> Result<String, GeneratorError>
where
    M: LogitModel + ?Sized,
    R: Rng + ?Sized,
{
    p.validate()?;
    if let Some(cap) = m.max_residues() {
        if p.max_len > cap {
            return Err(GeneratorError::BadParams(format!(
                "max_len {} exceeds model capacity {cap}",
                p.max_len
            )));
        }
    }
    let mut stream = m.open();
    let mut logits = stream.feed(BOS)?;
    if logits.len() != VOCAB_SIZE {
        return Err(GeneratorError::BadParams(format!(
            "model emits {} logits, expected {VOCAB_SIZE}",
            logits.len()
        )));
    }
    let mut emitted = [false; VOCAB_SIZE];
    let mut out = String::with_capacity(p.max_len);
    while out.len() < p.max_len {
        let tok = choose(&logits, &emitted, out.len(), p, rng)?;
        if tok == EOS {
            break;
        }
        debug_assert!(tok < NUM_RESIDUES);
        out.push(RESIDUES[tok] as char);
        emitted[tok] = true;
        if out.len() < p.max_len {
            logits = stream.feed(tok)?;
        }
    }
    Ok(out)
}
