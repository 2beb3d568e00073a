// SPDX-License-Identifier: Apache-2.0

//! Offsets of every tensor inside the flat parameter vector. Weight matrices
//! are stored input-major: `w[i * n_out + j]` maps input `i` to output `j`.

use std::ops::Range;

use super::ModelConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerOffsets {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub w_qkv: usize,
    pub b_qkv: usize,
    pub w_o: usize,
    pub b_o: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub w_fc: usize,
    pub b_fc: usize,
    pub w_proj: usize,
    pub b_proj: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub tok_emb: usize,
    pub pos_emb: usize,
    pub layers: Vec<LayerOffsets>,
    pub lnf_g: usize,
    pub lnf_b: usize,
    pub w_out: usize,
    pub b_out: usize,
    pub total: usize,
    /// Ranges that receive weight decay (matrices and embeddings).
    pub decayed: Vec<Range<usize>>,
    /// Ranges holding layer-norm gains.
    pub gains: Vec<Range<usize>>,
}

struct Cursor {
    at: usize,
}

impl Cursor {
    fn take(&mut self, n: usize) -> usize {
        let start = self.at;
        self.at += n;
        start
    }
}

impl Layout {
    pub fn new(c: &ModelConfig) -> Self {
        let (v, d, f) = (c.vocab_size, c.d_model, c.d_ff);
        let mut cur = Cursor { at: 0 };
        let mut decayed = Vec::new();
        let mut gains = Vec::new();
        let mut matrix = |cur: &mut Cursor, n: usize| {
            let s = cur.take(n);
            decayed.push(s..s + n);
            s
        };
        let tok_emb = matrix(&mut cur, v * d);
        let pos_emb = matrix(&mut cur, c.max_context * d);
        let mut layers = Vec::with_capacity(c.n_layers);
        for _ in 0..c.n_layers {
            let ln1_g = cur.take(d);
            let ln1_b = cur.take(d);
            let w_qkv = matrix(&mut cur, d * 3 * d);
            let b_qkv = cur.take(3 * d);
            let w_o = matrix(&mut cur, d * d);
            let b_o = cur.take(d);
            let ln2_g = cur.take(d);
            let ln2_b = cur.take(d);
            let w_fc = matrix(&mut cur, d * f);
            let b_fc = cur.take(f);
            let w_proj = matrix(&mut cur, f * d);
            let b_proj = cur.take(d);
            gains.push(ln1_g..ln1_g + d);
            gains.push(ln2_g..ln2_g + d);
            layers.push(LayerOffsets {
                ln1_g,
                ln1_b,
                w_qkv,
                b_qkv,
                w_o,
                b_o,
                ln2_g,
                ln2_b,
                w_fc,
                b_fc,
                w_proj,
                b_proj,
            });
        }
        let lnf_g = cur.take(d);
        let lnf_b = cur.take(d);
        gains.push(lnf_g..lnf_g + d);
        let w_out = matrix(&mut cur, d * v);
        let b_out = cur.take(v);
        Layout {
            tok_emb,
            pos_emb,
            layers,
            lnf_g,
            lnf_b,
            w_out,
            b_out,
            total: cur.at,
            decayed,
            gains,
        }
    }
}
