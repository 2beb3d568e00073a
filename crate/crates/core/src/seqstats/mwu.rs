// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::StatsError;

/// Pooled sample sizes up to this use exact enumeration of all labelings.
pub const EXACT_MAX_POOLED: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MwuMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U of the first sample: its rank sum minus `n_a (n_a + 1) / 2`.
    pub u: f64,
    pub p_two_sided: f64,
    pub method: MwuMethod,
}

/// Midranks (1-based) of the pooled values, plus the tie term `sum(t^3 - t)`.
fn midranks(pooled: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    (ranks, ties)
}

/// Two-sided Mann-Whitney U test with midranks for ties. Exact permutation
/// p-value when the pooled size is at most [`EXACT_MAX_POOLED`], otherwise a
/// tie-corrected normal approximation with continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(StatsError::InvalidArgument("NaN in sample".into()));
    }
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let offset = (na * (na + 1)) as f64 / 2.0;
    let u = ranks[..na].iter().sum::<f64>() - offset;
    let mean = (na * nb) as f64 / 2.0;

    if na + nb <= EXACT_MAX_POOLED {
        let observed = (u - mean).abs();
        let mut extreme = 0u64;
        let mut total = 0u64;
        for mask in 0u32..(1 << (na + nb)) {
            if mask.count_ones() as usize != na {
                continue;
            }
            let rank_sum: f64 = (0..na + nb)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| ranks[i])
                .sum();
            total += 1;
            if ((rank_sum - offset) - mean).abs() >= observed - 1e-9 {
                extreme += 1;
            }
        }
        return Ok(MannWhitney {
            u,
            p_two_sided: extreme as f64 / total as f64,
            method: MwuMethod::Exact,
        });
    }

    let p = normal_p(u, na, nb, ties);
    Ok(MannWhitney {
        u,
        p_two_sided: p,
        method: MwuMethod::Normal,
    })
}

fn normal_p(u: f64, na: usize, nb: usize, ties: f64) -> f64 {
    let mean = (na * nb) as f64 / 2.0;
    let n = (na + nb) as f64;
    let var = (na * nb) as f64 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

/// Normal-approximation p-value regardless of sample size.
pub fn normal_approximation_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let u = ranks[..a.len()].iter().sum::<f64>() - (a.len() * (a.len() + 1)) as f64 / 2.0;
    normal_p(u, a.len(), b.len(), ties)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_samples() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert!((r.p_two_sided - 0.1).abs() < 1e-15);
        assert_eq!(r.method, MwuMethod::Exact);
    }

    #[test]
    fn identical_samples() {
        let a = [3.0, 1.0, 4.0, 1.0, 5.0];
        let r = mann_whitney_u(&a, &a).unwrap();
        assert_eq!(r.u, 12.5);
        assert_eq!(r.p_two_sided, 1.0);
        let big: Vec<f64> = (0..50).map(|i| (i % 7) as f64).collect();
        let r = mann_whitney_u(&big, &big).unwrap();
        assert_eq!(r.method, MwuMethod::Normal);
        assert_eq!(r.u, 1250.0);
        assert_eq!(r.p_two_sided, 1.0);
    }

    #[test]
    fn empty_sample() {
        assert_eq!(
            mann_whitney_u(&[], &[1.0]).unwrap_err(),
            StatsError::EmptySample
        );
    }

    #[test]
    fn normal_tracks_exact_for_six_and_six() {
        // Every split of twelve distinct values into two groups of six.
        let mut worst: f64 = 0.0;
        for mask in 0u32..(1 << 12) {
            if mask.count_ones() != 6 {
                continue;
            }
            let (a, b): (Vec<usize>, Vec<usize>) = (0..12).partition(|i| mask >> i & 1 == 1);
            let a: Vec<f64> = a.into_iter().map(|x| x as f64).collect();
            let b: Vec<f64> = b.into_iter().map(|x| x as f64).collect();
            let exact = mann_whitney_u(&a, &b).unwrap().p_two_sided;
            worst = worst.max((exact - normal_approximation_p(&a, &b)).abs());
        }
        assert!(worst < 0.02, "worst gap {worst}");
    }

    #[test]
    fn u_is_invariant_under_monotone_transform() {
        let a = [0.3, 1.7, 2.2, 2.2, 9.0, 0.1, 4.4];
        let b = [1.0, 2.2, 5.5, 0.7, 3.3, 8.1, 6.0, 0.3];
        let r = mann_whitney_u(&a, &b).unwrap();
        let f = |x: &f64| x.exp() * 3.0 - 1.0;
        let ta: Vec<f64> = a.iter().map(f).collect();
        let tb: Vec<f64> = b.iter().map(f).collect();
        assert_eq!(mann_whitney_u(&ta, &tb).unwrap(), r);
    }
}
