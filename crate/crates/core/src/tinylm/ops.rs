// SPDX-License-Identifier: Apache-2.0

//! Row-wise kernels shared by inference and training.

pub const LN_EPS: f64 = 1e-5;
const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

/// `out[j] = b[j] + sum_i x[i] * w[i * n_out + j]`
#[inline]
pub fn affine(x: &[f64], w: &[f64], b: &[f64], out: &mut [f64]) {
    let n_out = out.len();
    out.copy_from_slice(b);
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &w[i * n_out..(i + 1) * n_out];
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += xi * wij;
        }
    }
}

/// Backward of [`affine`]: accumulates `dw`, `db`, and `dx` (if given).
#[inline]
pub fn affine_backward(
    x: &[f64],
    w: &[f64],
    dout: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    let n_out = dout.len();
    for (g, &d) in db.iter_mut().zip(dout) {
        *g += d;
    }
    for (i, &xi) in x.iter().enumerate() {
        let row = &mut dw[i * n_out..(i + 1) * n_out];
        for (g, &d) in row.iter_mut().zip(dout) {
            *g += xi * d;
        }
    }
    if let Some(dx) = dx {
        for (i, dxi) in dx.iter_mut().enumerate() {
            let row = &w[i * n_out..(i + 1) * n_out];
            *dxi += row.iter().zip(dout).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

/// Layer norm of one row. Returns `(mean, rstd)` for the backward pass.
#[inline]
pub fn layer_norm(x: &[f64], g: &[f64], b: &[f64], out: &mut [f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let rstd = 1.0 / (var + LN_EPS).sqrt();
    for i in 0..x.len() {
        out[i] = (x[i] - mean) * rstd * g[i] + b[i];
    }
    (mean, rstd)
}

#[inline]
pub fn layer_norm_backward(
    x: &[f64],
    g: &[f64],
    mean: f64,
    rstd: f64,
    dout: &[f64],
    dg: &mut [f64],
    db: &mut [f64],
    dx: &mut [f64],
) {
    let n = x.len() as f64;
    let mut sum_dxhat = 0.0;
    let mut sum_dxhat_xhat = 0.0;
    for i in 0..x.len() {
        let xhat = (x[i] - mean) * rstd;
        let dxhat = dout[i] * g[i];
        dg[i] += dout[i] * xhat;
        db[i] += dout[i];
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * xhat;
    }
    let m1 = sum_dxhat / n;
    let m2 = sum_dxhat_xhat / n;
    for i in 0..x.len() {
        let xhat = (x[i] - mean) * rstd;
        let dxhat = dout[i] * g[i];
        dx[i] += rstd * (dxhat - m1 - xhat * m2);
    }
}

/// Tanh-approximated GELU.
#[inline]
pub fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_K * (u + GELU_C * u * u * u)).tanh())
}

#[inline]
pub fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_K * (u + GELU_C * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_K * (1.0 + 3.0 * GELU_C * u * u)
}

/// In-place log-softmax; returns the log normalizer.
#[inline]
pub fn log_softmax(v: &mut [f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = v.iter().map(|x| (x - max).exp()).sum();
    let lse = max + sum.ln();
    for x in v.iter_mut() {
        *x -= lse;
    }
    lse
}

/// In-place softmax.
#[inline]
pub fn softmax(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_grad_matches_central_difference() {
        for &u in &[-3.0, -1.2, -0.1, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(u + h) - gelu(u - h)) / (2.0 * h);
            assert!((fd - gelu_grad(u)).abs() < 1e-8, "u={u}");
        }
    }

    #[test]
    fn layer_norm_backward_matches_central_difference() {
        let x = [0.3, -1.2, 2.0, 0.7];
        let g = [1.1, 0.9, -0.4, 1.5];
        let b = [0.0, 0.1, 0.2, -0.3];
        let dout = [0.5, -0.25, 1.0, 0.75];
        let loss = |x: &[f64]| {
            let mut out = [0.0; 4];
            layer_norm(x, &g, &b, &mut out);
            out.iter().zip(&dout).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut out = [0.0; 4];
        let (mean, rstd) = layer_norm(&x, &g, &b, &mut out);
        let (mut dg, mut db, mut dx) = ([0.0; 4], [0.0; 4], [0.0; 4]);
        layer_norm_backward(&x, &g, mean, rstd, &dout, &mut dg, &mut db, &mut dx);
        for i in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += 1e-6;
            xm[i] -= 1e-6;
            let fd = (loss(&xp) - loss(&xm)) / 2e-6;
            assert!((fd - dx[i]).abs() < 1e-7, "i={i} fd={fd} an={}", dx[i]);
        }
    }

    #[test]
    fn log_softmax_normalizes() {
        let mut v = vec![1.0, 2.0, -3.0, 1000.0];
        log_softmax(&mut v);
        let s: f64 = v.iter().map(|x| x.exp()).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}
