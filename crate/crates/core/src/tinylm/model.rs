// SPDX-License-Identifier: Apache-2.0

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::layout::Layout;
use super::ops::{affine, gelu, layer_norm, log_softmax};
use super::{ModelConfig, TinyLmError};
use crate::seqdata::TokenSequence;

const INIT_STD: f64 = 0.02;

/// A decoder-only causal transformer over the amino-acid vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageModel {
    config: ModelConfig,
    layout: Layout,
    params: Vec<f64>,
}

/// Closed-form parameter count for a configuration.
pub fn parameter_count(c: &ModelConfig) -> usize {
    let (v, d, f) = (c.vocab_size, c.d_model, c.d_ff);
    let per_layer = 4 * d * d + 2 * d * f + 9 * d + f;
    v * d + c.max_context * d + c.n_layers * per_layer + 2 * d + d * v + v
}

impl LanguageModel {
    /// Scaled-normal weights, unit layer-norm gains, zero biases. Residual
    /// output projections are shrunk by `1/sqrt(2 * n_layers)`.
    pub fn init(config: ModelConfig) -> Result<Self, TinyLmError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, INIT_STD).unwrap();
        let resid = Normal::new(0.0, INIT_STD / (2.0 * config.n_layers as f64).sqrt()).unwrap();
        let (d, f, v) = (config.d_model, config.d_ff, config.vocab_size);
        let mut fill = |params: &mut [f64], start: usize, n: usize, dist: &Normal<f64>| {
            for p in &mut params[start..start + n] {
                *p = dist.sample(&mut rng);
            }
        };
        fill(&mut params, layout.tok_emb, v * d, &normal);
        fill(&mut params, layout.pos_emb, config.max_context * d, &normal);
        for l in &layout.layers {
            fill(&mut params, l.w_qkv, 3 * d * d, &normal);
            fill(&mut params, l.w_o, d * d, &resid);
            fill(&mut params, l.w_fc, d * f, &normal);
            fill(&mut params, l.w_proj, f * d, &resid);
        }
        fill(&mut params, layout.w_out, d * v, &normal);
        for r in &layout.gains {
            params[r.clone()].fill(1.0);
        }
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    pub fn from_parts(config: ModelConfig, params: Vec<f64>) -> Result<Self, TinyLmError> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(TinyLmError::BadConfig(format!(
                "expected {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(TinyLmError::BadConfig("non-finite parameter".into()));
        }
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Zeroes the output projection weights and bias, making every
    /// next-token distribution uniform.
    pub fn zero_output_projection(&mut self) {
        let (d, v) = (self.config.d_model, self.config.vocab_size);
        let w = self.layout.w_out;
        self.params[w..w + d * v].fill(0.0);
        let b = self.layout.b_out;
        self.params[b..b + v].fill(0.0);
    }

    /// Short content hash identifying this parameter set.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for x in [
            self.config.n_layers,
            self.config.d_model,
            self.config.n_heads,
            self.config.d_ff,
            self.config.max_context,
            self.config.vocab_size,
        ] {
            h.update((x as u64).to_le_bytes());
        }
        for p in &self.params {
            h.update(p.to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }

    pub fn decoder(&self) -> Decoder<'_> {
        Decoder::new(self)
    }

    pub(crate) fn check_tokens(&self, tokens: &[usize]) -> Result<(), TinyLmError> {
        if tokens.len() > self.config.max_context {
            return Err(TinyLmError::ContextOverflow {
                len: tokens.len(),
                max: self.config.max_context,
            });
        }
        if let Some(&t) = tokens.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(TinyLmError::InvalidToken(t));
        }
        Ok(())
    }

    /// Next-token log-probabilities at every input position: row `i`
    /// conditions on `tokens[..=i]`.
    pub fn forward(&self, tokens: &[usize]) -> Result<Vec<Vec<f64>>, TinyLmError> {
        self.check_tokens(tokens)?;
        let mut dec = self.decoder();
        tokens
            .iter()
            .map(|&t| {
                let mut row = dec.step(t)?.logits;
                log_softmax(&mut row);
                Ok(row)
            })
            .collect()
    }

    pub fn forward_batch(
        &self,
        batch: &[TokenSequence],
    ) -> Result<Vec<Vec<Vec<f64>>>, TinyLmError> {
        batch.par_iter().map(|s| self.forward(s.tokens())).collect()
    }

    /// Final hidden states (after the last layer norm), one row per token.
    pub fn hidden_states(&self, tokens: &[usize]) -> Result<Vec<Vec<f64>>, TinyLmError> {
        self.check_tokens(tokens)?;
        let mut dec = self.decoder();
        tokens.iter().map(|&t| Ok(dec.step(t)?.hidden)).collect()
    }

    /// `sum_i log p(w_i | w_<i)` over every residue and the closing EOS.
    pub fn sequence_log_prob(&self, s: &TokenSequence) -> Result<f64, TinyLmError> {
        let tokens = s.tokens();
        let logp = self.forward(tokens)?;
        Ok(tokens[1..]
            .iter()
            .zip(&logp)
            .map(|(&next, row)| row[next])
            .sum())
    }

    /// Mean negative log-likelihood per predicted token over the batch.
    pub fn clm_loss(&self, batch: &[TokenSequence]) -> Result<f64, TinyLmError> {
        if batch.is_empty() {
            return Err(TinyLmError::EmptyBatch);
        }
        let per_seq: Vec<f64> = batch
            .par_iter()
            .map(|s| self.sequence_log_prob(s))
            .collect::<Result<_, _>>()?;
        let predicted: usize = batch.iter().map(|s| s.tokens().len() - 1).sum();
        Ok(-per_seq.iter().sum::<f64>() / predicted as f64)
    }
}

pub struct StepOutput {
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Incremental decoder with a key/value cache; each step costs one position.
pub struct Decoder<'m> {
    model: &'m LanguageModel,
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    pos: usize,
}

impl<'m> Decoder<'m> {
    fn new(model: &'m LanguageModel) -> Self {
        let n = model.config.n_layers;
        let cap = model.config.max_context * model.config.d_model;
        Self {
            model,
            keys: (0..n).map(|_| Vec::with_capacity(cap)).collect(),
            values: (0..n).map(|_| Vec::with_capacity(cap)).collect(),
            pos: 0,
        }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn step(&mut self, token: usize) -> Result<StepOutput, TinyLmError> {
        let m = self.model;
        let c = &m.config;
        if self.pos >= c.max_context {
            return Err(TinyLmError::ContextOverflow {
                len: self.pos + 1,
                max: c.max_context,
            });
        }
        if token >= c.vocab_size {
            return Err(TinyLmError::InvalidToken(token));
        }
        let (d, f, nh, hd) = (c.d_model, c.d_ff, c.n_heads, c.head_dim());
        let p = &m.params;
        let lay = &m.layout;
        let scale = 1.0 / (hd as f64).sqrt();

        let mut x: Vec<f64> = (0..d)
            .map(|i| p[lay.tok_emb + token * d + i] + p[lay.pos_emb + self.pos * d + i])
            .collect();
        let mut a = vec![0.0; d];
        let mut qkv = vec![0.0; 3 * d];
        let mut o = vec![0.0; d];
        let mut proj = vec![0.0; d];
        let mut u = vec![0.0; f];
        let n_ctx = self.pos + 1;
        let mut scores = vec![0.0; n_ctx];

        for (li, l) in lay.layers.iter().enumerate() {
            layer_norm(
                &x,
                &p[l.ln1_g..l.ln1_g + d],
                &p[l.ln1_b..l.ln1_b + d],
                &mut a,
            );
            affine(
                &a,
                &p[l.w_qkv..l.w_qkv + 3 * d * d],
                &p[l.b_qkv..l.b_qkv + 3 * d],
                &mut qkv,
            );
            self.keys[li].extend_from_slice(&qkv[d..2 * d]);
            self.values[li].extend_from_slice(&qkv[2 * d..3 * d]);
            let (ks, vs) = (&self.keys[li], &self.values[li]);
            for h in 0..nh {
                let q = &qkv[h * hd..(h + 1) * hd];
                for (s, sc) in scores.iter_mut().enumerate() {
                    let k = &ks[s * d + h * hd..s * d + (h + 1) * hd];
                    *sc = q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale;
                }
                super::ops::softmax(&mut scores);
                let oh = &mut o[h * hd..(h + 1) * hd];
                oh.fill(0.0);
                for (s, &w) in scores.iter().enumerate() {
                    let v = &vs[s * d + h * hd..s * d + (h + 1) * hd];
                    for (oo, &vv) in oh.iter_mut().zip(v) {
                        *oo += w * vv;
                    }
                }
            }
            affine(
                &o,
                &p[l.w_o..l.w_o + d * d],
                &p[l.b_o..l.b_o + d],
                &mut proj,
            );
            for (xi, pi) in x.iter_mut().zip(&proj) {
                *xi += pi;
            }
            layer_norm(
                &x,
                &p[l.ln2_g..l.ln2_g + d],
                &p[l.ln2_b..l.ln2_b + d],
                &mut a,
            );
            affine(
                &a,
                &p[l.w_fc..l.w_fc + d * f],
                &p[l.b_fc..l.b_fc + f],
                &mut u,
            );
            for ui in u.iter_mut() {
                *ui = gelu(*ui);
            }
            affine(
                &u,
                &p[l.w_proj..l.w_proj + f * d],
                &p[l.b_proj..l.b_proj + d],
                &mut proj,
            );
            for (xi, pi) in x.iter_mut().zip(&proj) {
                *xi += pi;
            }
        }
        let mut hidden = vec![0.0; d];
        layer_norm(
            &x,
            &p[lay.lnf_g..lay.lnf_g + d],
            &p[lay.lnf_b..lay.lnf_b + d],
            &mut hidden,
        );
        let v = c.vocab_size;
        let mut logits = vec![0.0; v];
        affine(
            &hidden,
            &p[lay.w_out..lay.w_out + d * v],
            &p[lay.b_out..lay.b_out + v],
            &mut logits,
        );
        self.pos += 1;
        Ok(StepOutput { hidden, logits })
    }
}
