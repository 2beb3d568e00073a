// SPDX-License-Identifier: Apache-2.0

//! Cached forward pass and reverse-mode gradient of the sequence NLL.

use super::model::LanguageModel;
use super::ops::{
    affine, affine_backward, gelu, gelu_grad, layer_norm, layer_norm_backward, log_softmax, softmax,
};

struct LayerCache {
    x_in: Vec<f64>,
    a: Vec<f64>,
    ln1: Vec<(f64, f64)>,
    qkv: Vec<f64>,
    /// `probs[(h * t_len + t) * t_len + s]`, zero for `s > t`.
    probs: Vec<f64>,
    o: Vec<f64>,
    x_mid: Vec<f64>,
    c: Vec<f64>,
    ln2: Vec<(f64, f64)>,
    u: Vec<f64>,
    g: Vec<f64>,
}

/// Returns `-sum log p(tokens[t+1] | tokens[..=t])` and adds `weight` times its
/// gradient into `grad`.
pub(crate) fn sequence_nll_and_grad(
    m: &LanguageModel,
    tokens: &[usize],
    weight: f64,
    grad: &mut [f64],
) -> f64 {
    let c = m.config();
    let lay = m.layout();
    let p = m.params();
    let (d, f, nh, hd, v) = (c.d_model, c.d_ff, c.n_heads, c.head_dim(), c.vocab_size);
    let t_len = tokens.len();
    let scale = 1.0 / (hd as f64).sqrt();

    // Forward.
    let mut x = vec![0.0; t_len * d];
    for (t, &tok) in tokens.iter().enumerate() {
        for i in 0..d {
            x[t * d + i] = p[lay.tok_emb + tok * d + i] + p[lay.pos_emb + t * d + i];
        }
    }
    let mut caches = Vec::with_capacity(lay.layers.len());
    for l in &lay.layers {
        let x_in = x.clone();
        let mut a = vec![0.0; t_len * d];
        let mut ln1 = Vec::with_capacity(t_len);
        let mut qkv = vec![0.0; t_len * 3 * d];
        for t in 0..t_len {
            ln1.push(layer_norm(
                &x[t * d..(t + 1) * d],
                &p[l.ln1_g..l.ln1_g + d],
                &p[l.ln1_b..l.ln1_b + d],
                &mut a[t * d..(t + 1) * d],
            ));
            affine(
                &a[t * d..(t + 1) * d],
                &p[l.w_qkv..l.w_qkv + 3 * d * d],
                &p[l.b_qkv..l.b_qkv + 3 * d],
                &mut qkv[t * 3 * d..(t + 1) * 3 * d],
            );
        }
        let mut probs = vec![0.0; nh * t_len * t_len];
        let mut o = vec![0.0; t_len * d];
        for h in 0..nh {
            for t in 0..t_len {
                let q = &qkv[t * 3 * d + h * hd..t * 3 * d + (h + 1) * hd];
                let row = &mut probs[(h * t_len + t) * t_len..(h * t_len + t) * t_len + t + 1];
                for (s, sc) in row.iter_mut().enumerate() {
                    let k = &qkv[s * 3 * d + d + h * hd..s * 3 * d + d + (h + 1) * hd];
                    *sc = q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale;
                }
                softmax(row);
                let oh = &mut o[t * d + h * hd..t * d + (h + 1) * hd];
                for (s, &w) in row.iter().enumerate() {
                    let vv = &qkv[s * 3 * d + 2 * d + h * hd..s * 3 * d + 2 * d + (h + 1) * hd];
                    for (oo, &val) in oh.iter_mut().zip(vv) {
                        *oo += w * val;
                    }
                }
            }
        }
        let mut proj = vec![0.0; d];
        for t in 0..t_len {
            affine(
                &o[t * d..(t + 1) * d],
                &p[l.w_o..l.w_o + d * d],
                &p[l.b_o..l.b_o + d],
                &mut proj,
            );
            for i in 0..d {
                x[t * d + i] += proj[i];
            }
        }
        let x_mid = x.clone();
        let mut cc = vec![0.0; t_len * d];
        let mut ln2 = Vec::with_capacity(t_len);
        let mut u = vec![0.0; t_len * f];
        let mut g = vec![0.0; t_len * f];
        for t in 0..t_len {
            ln2.push(layer_norm(
                &x[t * d..(t + 1) * d],
                &p[l.ln2_g..l.ln2_g + d],
                &p[l.ln2_b..l.ln2_b + d],
                &mut cc[t * d..(t + 1) * d],
            ));
            affine(
                &cc[t * d..(t + 1) * d],
                &p[l.w_fc..l.w_fc + d * f],
                &p[l.b_fc..l.b_fc + f],
                &mut u[t * f..(t + 1) * f],
            );
            for k in 0..f {
                g[t * f + k] = gelu(u[t * f + k]);
            }
            affine(
                &g[t * f..(t + 1) * f],
                &p[l.w_proj..l.w_proj + f * d],
                &p[l.b_proj..l.b_proj + d],
                &mut proj,
            );
            for i in 0..d {
                x[t * d + i] += proj[i];
            }
        }
        caches.push(LayerCache {
            x_in,
            a,
            ln1,
            qkv,
            probs,
            o,
            x_mid,
            c: cc,
            ln2,
            u,
            g,
        });
    }
    let x_final = x;
    let mut z = vec![0.0; t_len * d];
    let mut lnf = Vec::with_capacity(t_len);
    let n_pred = t_len.saturating_sub(1);
    let mut dlogits = vec![0.0; n_pred * v];
    let mut nll = 0.0;
    for t in 0..t_len {
        lnf.push(layer_norm(
            &x_final[t * d..(t + 1) * d],
            &p[lay.lnf_g..lay.lnf_g + d],
            &p[lay.lnf_b..lay.lnf_b + d],
            &mut z[t * d..(t + 1) * d],
        ));
        if t < n_pred {
            let row = &mut dlogits[t * v..(t + 1) * v];
            affine(
                &z[t * d..(t + 1) * d],
                &p[lay.w_out..lay.w_out + d * v],
                &p[lay.b_out..lay.b_out + v],
                row,
            );
            log_softmax(row);
            let target = tokens[t + 1];
            nll -= row[target];
            for (k, r) in row.iter_mut().enumerate() {
                *r = weight * (r.exp() - if k == target { 1.0 } else { 0.0 });
            }
        }
    }

    // Backward.
    let mut dx = vec![0.0; t_len * d];
    let mut dz = vec![0.0; d];
    for t in 0..n_pred {
        dz.fill(0.0);
        {
            let (before, rest) = grad.split_at_mut(lay.b_out);
            let dw = &mut before[lay.w_out..lay.w_out + d * v];
            affine_backward(
                &z[t * d..(t + 1) * d],
                &p[lay.w_out..lay.w_out + d * v],
                &dlogits[t * v..(t + 1) * v],
                dw,
                &mut rest[..v],
                Some(&mut dz),
            );
        }
        let (mean, rstd) = lnf[t];
        let (gg, gb) = grad[lay.lnf_g..lay.lnf_b + d].split_at_mut(d);
        layer_norm_backward(
            &x_final[t * d..(t + 1) * d],
            &p[lay.lnf_g..lay.lnf_g + d],
            mean,
            rstd,
            &dz,
            gg,
            gb,
            &mut dx[t * d..(t + 1) * d],
        );
    }

    let mut dtmp_d = vec![0.0; d];
    let mut dg = vec![0.0; f];
    let mut dqkv = vec![0.0; t_len * 3 * d];
    let mut do_ = vec![0.0; t_len * d];
    for (l, cache) in lay.layers.iter().zip(&caches).rev() {
        // Feed-forward sub-block.
        for t in 0..t_len {
            let dy = dx[t * d..(t + 1) * d].to_vec();
            dg.fill(0.0);
            {
                let (before, rest) = grad.split_at_mut(l.b_proj);
                affine_backward(
                    &cache.g[t * f..(t + 1) * f],
                    &p[l.w_proj..l.w_proj + f * d],
                    &dy,
                    &mut before[l.w_proj..l.w_proj + f * d],
                    &mut rest[..d],
                    Some(&mut dg),
                );
            }
            for k in 0..f {
                dg[k] *= gelu_grad(cache.u[t * f + k]);
            }
            dtmp_d.fill(0.0);
            {
                let (before, rest) = grad.split_at_mut(l.b_fc);
                affine_backward(
                    &cache.c[t * d..(t + 1) * d],
                    &p[l.w_fc..l.w_fc + d * f],
                    &dg,
                    &mut before[l.w_fc..l.w_fc + d * f],
                    &mut rest[..f],
                    Some(&mut dtmp_d),
                );
            }
            let (mean, rstd) = cache.ln2[t];
            let (gg, gb) = grad[l.ln2_g..l.ln2_b + d].split_at_mut(d);
            layer_norm_backward(
                &cache.x_mid[t * d..(t + 1) * d],
                &p[l.ln2_g..l.ln2_g + d],
                mean,
                rstd,
                &dtmp_d,
                gg,
                gb,
                &mut dx[t * d..(t + 1) * d],
            );
        }
        // Attention sub-block.
        do_.fill(0.0);
        for t in 0..t_len {
            let (before, rest) = grad.split_at_mut(l.b_o);
            affine_backward(
                &cache.o[t * d..(t + 1) * d],
                &p[l.w_o..l.w_o + d * d],
                &dx[t * d..(t + 1) * d],
                &mut before[l.w_o..l.w_o + d * d],
                &mut rest[..d],
                Some(&mut do_[t * d..(t + 1) * d]),
            );
        }
        dqkv.fill(0.0);
        let mut dp = vec![0.0; t_len];
        for h in 0..nh {
            for t in 0..t_len {
                let probs = &cache.probs[(h * t_len + t) * t_len..(h * t_len + t) * t_len + t + 1];
                let dot = &do_[t * d + h * hd..t * d + (h + 1) * hd];
                let mut weighted = 0.0;
                for s in 0..=t {
                    let vv =
                        &cache.qkv[s * 3 * d + 2 * d + h * hd..s * 3 * d + 2 * d + (h + 1) * hd];
                    dp[s] = dot.iter().zip(vv).map(|(a, b)| a * b).sum::<f64>();
                    weighted += probs[s] * dp[s];
                    let dv =
                        &mut dqkv[s * 3 * d + 2 * d + h * hd..s * 3 * d + 2 * d + (h + 1) * hd];
                    for (dvi, &doi) in dv.iter_mut().zip(dot) {
                        *dvi += probs[s] * doi;
                    }
                }
                for s in 0..=t {
                    let ds = probs[s] * (dp[s] - weighted) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    for i in 0..hd {
                        let qi = t * 3 * d + h * hd + i;
                        let ki = s * 3 * d + d + h * hd + i;
                        dqkv[qi] += ds * cache.qkv[ki];
                        dqkv[ki] += ds * cache.qkv[qi];
                    }
                }
            }
        }
        for t in 0..t_len {
            dtmp_d.fill(0.0);
            {
                let (before, rest) = grad.split_at_mut(l.b_qkv);
                affine_backward(
                    &cache.a[t * d..(t + 1) * d],
                    &p[l.w_qkv..l.w_qkv + 3 * d * d],
                    &dqkv[t * 3 * d..(t + 1) * 3 * d],
                    &mut before[l.w_qkv..l.w_qkv + 3 * d * d],
                    &mut rest[..3 * d],
                    Some(&mut dtmp_d),
                );
            }
            let (mean, rstd) = cache.ln1[t];
            let (gg, gb) = grad[l.ln1_g..l.ln1_b + d].split_at_mut(d);
            layer_norm_backward(
                &cache.x_in[t * d..(t + 1) * d],
                &p[l.ln1_g..l.ln1_g + d],
                mean,
                rstd,
                &dtmp_d,
                gg,
                gb,
                &mut dx[t * d..(t + 1) * d],
            );
        }
    }
    for (t, &tok) in tokens.iter().enumerate() {
        for i in 0..d {
            grad[lay.tok_emb + tok * d + i] += dx[t * d + i];
            grad[lay.pos_emb + t * d + i] += dx[t * d + i];
        }
    }
    nll
}
