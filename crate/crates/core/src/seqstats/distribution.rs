// SPDX-License-Identifier: Apache-2.0

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::seqdata::{residue_id, NUM_RESIDUES, RESIDUES};

const SUM_TOL: f64 = 1e-9;

/// A distribution over the 20 residues, indexed by residue id.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbabilityVector([f64; NUM_RESIDUES]);

impl ProbabilityVector {
    pub fn new(probs: [f64; NUM_RESIDUES]) -> Result<Self, StatsError> {
        if let Some(i) = probs.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(StatsError::InvalidDistribution(format!(
                "entry {i} is {}",
                probs[i]
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(StatsError::InvalidDistribution(format!("sums to {sum}")));
        }
        Ok(Self(probs))
    }

    pub fn uniform() -> Self {
        Self([1.0 / NUM_RESIDUES as f64; NUM_RESIDUES])
    }

    /// Normalizes non-negative weights (counts, percentages, ...).
    pub fn from_weights(w: [f64; NUM_RESIDUES]) -> Result<Self, StatsError> {
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(StatsError::InvalidDistribution(
                "negative or non-finite weight".into(),
            ));
        }
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            return Err(StatsError::InvalidDistribution(
                "all weights are zero".into(),
            ));
        }
        Ok(Self(w.map(|x| x / total)))
    }

    pub fn probs(&self) -> &[f64; NUM_RESIDUES] {
        &self.0
    }

    pub fn get(&self, residue: usize) -> f64 {
        self.0[residue]
    }
}

/// Per-position residue distributions for sequences of one length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionFrequencyMatrix {
    pub length: usize,
    pub rows: Vec<ProbabilityVector>,
    /// Sequences observed at each position.
    pub support: Vec<usize>,
}

fn position_counts<S: AsRef<str>>(
    seqs: &[S],
    n: usize,
) -> Result<(Vec<[f64; NUM_RESIDUES]>, usize), StatsError> {
    let mut counts = vec![[0.0; NUM_RESIDUES]; n];
    let mut used = 0;
    for s in seqs.iter().map(AsRef::as_ref).filter(|s| s.len() == n) {
        for (pos, b) in s.bytes().enumerate() {
            let id = residue_id(b).ok_or_else(|| StatsError::NonCanonical(s.to_string()))?;
            counts[pos][id] += 1.0;
        }
        used += 1;
    }
    if used == 0 {
        return Err(StatsError::NoSequencesOfLength(n));
    }
    Ok((counts, used))
}

/// Maximum-likelihood frequencies over the sequences of exactly length `n`.
pub fn positional_frequencies<S: AsRef<str>>(
    seqs: &[S],
    n: usize,
) -> Result<PositionFrequencyMatrix, StatsError> {
    positional_frequencies_smoothed(seqs, n, 0.0)
}

/// Add-`alpha` smoothed frequencies; `alpha = 0` gives raw counts / total.
pub fn positional_frequencies_smoothed<S: AsRef<str>>(
    seqs: &[S],
    n: usize,
    alpha: f64,
) -> Result<PositionFrequencyMatrix, StatsError> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(StatsError::InvalidArgument(format!(
            "smoothing alpha {alpha}"
        )));
    }
    if n == 0 {
        return Err(StatsError::NoSequencesOfLength(0));
    }
    let (counts, used) = position_counts(seqs, n)?;
    let denom = used as f64 + alpha * NUM_RESIDUES as f64;
    let rows = counts
        .into_iter()
        .map(|c| ProbabilityVector(c.map(|x| (x + alpha) / denom)))
        .collect();
    Ok(PositionFrequencyMatrix {
        length: n,
        rows,
        support: vec![used; n],
    })
}

/// `sum P(x) ln(P(x)/Q(x))`, with `0 ln(0/q) = 0`.
pub fn relative_entropy(p: &ProbabilityVector, q: &ProbabilityVector) -> Result<f64, StatsError> {
    let mut s = 0.0;
    for (i, (&pi, &qi)) in p.0.iter().zip(&q.0).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(StatsError::UnsupportedMass(i));
        }
        s += pi * (pi / qi).ln();
    }
    // Rounding can leave a tiny negative value when P and Q nearly coincide.
    Ok(s.max(0.0))
}

/// `-sum P(x) ln P(x)`, with `0 ln 0 = 0`.
pub fn shannon_entropy(p: &ProbabilityVector) -> f64 {
    -p.0.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// Reference residue usage: one distribution for every position, or one per
/// position.
#[derive(Debug, Clone, PartialEq)]
pub enum BackgroundModel {
    Global(ProbabilityVector),
    Positional(PositionFrequencyMatrix),
}

impl BackgroundModel {
    pub fn uniform() -> Self {
        BackgroundModel::Global(ProbabilityVector::uniform())
    }

    /// Reads `residue<TAB>weight` lines (header and `#` comments allowed).
    /// Weights are normalized; add-`alpha` smoothing is applied before
    /// normalizing. Residues missing from the table get weight zero.
    pub fn from_table(text: &str, alpha: f64) -> Result<Self, StatsError> {
        let mut w = [0.0; NUM_RESIDUES];
        let mut seen = [false; NUM_RESIDUES];
        let mut first = true;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let header_allowed = std::mem::replace(&mut first, false);
            let mut fields = line.split(['\t', ',', ' ']).filter(|f| !f.is_empty());
            let (Some(res), Some(val)) = (fields.next(), fields.next()) else {
                return Err(StatsError::InvalidArgument(format!(
                    "background line {}: expected two fields",
                    lineno + 1
                )));
            };
            let Ok(val) = val.parse::<f64>() else {
                if header_allowed {
                    continue;
                }
                return Err(StatsError::InvalidArgument(format!(
                    "background line {}: bad number {val:?}",
                    lineno + 1
                )));
            };
            let id = match res.as_bytes() {
                [b] => residue_id(b.to_ascii_uppercase()),
                _ => None,
            }
            .ok_or_else(|| {
                StatsError::InvalidArgument(format!(
                    "background line {}: unknown residue {res:?}",
                    lineno + 1
                ))
            })?;
            if seen[id] {
                return Err(StatsError::InvalidArgument(format!(
                    "background: residue {res} listed twice"
                )));
            }
            seen[id] = true;
            w[id] = val;
        }
        Ok(BackgroundModel::Global(ProbabilityVector::from_weights(
            w.map(|x| x + alpha),
        )?))
    }

    pub fn from_file(path: impl AsRef<Path>, alpha: f64) -> Result<Self, StatsError> {
        Self::from_table(&std::fs::read_to_string(path)?, alpha)
    }

    pub fn at(&self, position: usize) -> Result<&ProbabilityVector, StatsError> {
        match self {
            BackgroundModel::Global(p) => Ok(p),
            BackgroundModel::Positional(m) => m.rows.get(position).ok_or_else(|| {
                StatsError::InvalidArgument(format!(
                    "background has {} positions, asked for {}",
                    m.length,
                    position + 1
                ))
            }),
        }
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("residue\tfrequency\n");
        if let BackgroundModel::Global(p) = self {
            for (i, &r) in RESIDUES.iter().enumerate() {
                out.push_str(&format!("{}\t{}\n", r as char, p.0[i]));
            }
        }
        out
    }
}

/// `p[y][x] / q[y][x]` for every position `y` and residue `x`.
pub fn propensity(
    p: &PositionFrequencyMatrix,
    q: &BackgroundModel,
) -> Result<Vec<[f64; NUM_RESIDUES]>, StatsError> {
    p.rows
        .iter()
        .enumerate()
        .map(|(y, row)| {
            let bg = q.at(y)?;
            let mut out = [0.0; NUM_RESIDUES];
            for x in 0..NUM_RESIDUES {
                if bg.0[x] <= 0.0 {
                    return Err(StatsError::ZeroBackground(x));
                }
                out[x] = row.0[x] / bg.0[x];
            }
            Ok(out)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(pairs: &[(usize, f64)]) -> ProbabilityVector {
        let mut a = [0.0; NUM_RESIDUES];
        for &(i, p) in pairs {
            a[i] = p;
        }
        ProbabilityVector::new(a).unwrap()
    }

    #[test]
    fn frequency_examples() {
        let m = positional_frequencies(&["AC", "AD", "ACD"], 2).unwrap();
        assert_eq!(m.rows[0].get(0), 1.0);
        assert_eq!(m.rows[1].get(1), 0.5);
        assert_eq!(m.rows[1].get(2), 0.5);
        assert_eq!(m.support, vec![2, 2]);
        let one = positional_frequencies(&["WY"], 2).unwrap();
        assert_eq!(one.rows[0].get(18), 1.0);
        assert_eq!(one.rows[1].get(19), 1.0);
        assert_eq!(
            positional_frequencies(&["AC"], 3).unwrap_err(),
            StatsError::NoSequencesOfLength(3)
        );
        let s = positional_frequencies_smoothed(&["A"], 1, 1.0).unwrap();
        assert!((s.rows[0].get(0) - 2.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn relative_entropy_examples() {
        let p = pv(&[(0, 0.5), (1, 0.5)]);
        let q = pv(&[(0, 0.75), (1, 0.25)]);
        let want = 0.5 * (0.5f64 / 0.75).ln() + 0.5 * (0.5f64 / 0.25).ln();
        assert!((want - 0.143841).abs() < 1e-6);
        assert!((relative_entropy(&p, &q).unwrap() - want).abs() < 1e-15);
        assert_eq!(relative_entropy(&p, &p).unwrap(), 0.0);
        let onehot = pv(&[(4, 1.0)]);
        assert!(
            (relative_entropy(&onehot, &ProbabilityVector::uniform()).unwrap() - 20f64.ln()).abs()
                < 1e-12
        );
        assert_eq!(
            relative_entropy(&p, &onehot).unwrap_err(),
            StatsError::UnsupportedMass(0)
        );
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(shannon_entropy(&pv(&[(3, 1.0)])), 0.0);
        assert!((shannon_entropy(&ProbabilityVector::uniform()) - 2.995732).abs() < 1e-6);
        assert!(
            (shannon_entropy(&pv(&[(0, 0.5), (7, 0.5)])) - std::f64::consts::LN_2).abs() < 1e-12
        );
    }

    #[test]
    fn propensity_examples() {
        let m = positional_frequencies(&["AC", "AD", "WC", "WD"], 2).unwrap();
        let same = BackgroundModel::Positional(m.clone());
        // A zero background entry is an error even where P is zero too.
        assert_eq!(
            propensity(&m, &same).unwrap_err(),
            StatsError::ZeroBackground(1)
        );
        let q = [0.05; NUM_RESIDUES];
        let mut p = [0.0; NUM_RESIDUES];
        p[0] = 0.10;
        p[1] = 0.90;
        let pm = PositionFrequencyMatrix {
            length: 1,
            rows: vec![ProbabilityVector::new(p).unwrap()],
            support: vec![10],
        };
        let out = propensity(
            &pm,
            &BackgroundModel::Global(ProbabilityVector::new(q).unwrap()),
        )
        .unwrap();
        assert!((out[0][0] - 2.0).abs() < 1e-12);
        assert_eq!(out[0][5], 0.0);
        let uni = positional_frequencies_smoothed(&["AC"], 2, 1.0).unwrap();
        let ones = propensity(&uni, &BackgroundModel::Positional(uni.clone())).unwrap();
        assert!(ones.iter().flatten().all(|&x| x == 1.0));
    }

    #[test]
    fn background_table_parsing() {
        let text = "residue\tfrequency\n# comment\nA\t2\nC\t1\n";
        let BackgroundModel::Global(p) = BackgroundModel::from_table(text, 0.0).unwrap() else {
            panic!()
        };
        assert!((p.get(0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(p.get(2), 0.0);
        let BackgroundModel::Global(s) = BackgroundModel::from_table(text, 1.0).unwrap() else {
            panic!()
        };
        assert!((s.get(2) - 1.0 / 23.0).abs() < 1e-15);
        assert!(BackgroundModel::from_table("A\t1\nA\t2\n", 0.0).is_err());
        assert!(BackgroundModel::from_table("B\t1\n", 0.0).is_err());
        let round = BackgroundModel::uniform().to_table();
        let BackgroundModel::Global(u) = BackgroundModel::from_table(&round, 0.0).unwrap() else {
            panic!()
        };
        assert!(u.probs().iter().all(|&x| (x - 0.05).abs() < 1e-15));
    }

    fn arb_pv() -> impl Strategy<Value = ProbabilityVector> {
        prop::collection::vec(0.0f64..1.0, NUM_RESIDUES).prop_filter_map("all zero", |w| {
            let mut a = [0.0; NUM_RESIDUES];
            a.copy_from_slice(&w);
            ProbabilityVector::from_weights(a).ok()
        })
    }

    proptest! {
        #[test]
        fn kl_nonnegative_and_entropy_bounded(p in arb_pv(), q in arb_pv()) {
            prop_assert!(relative_entropy(&p, &q).unwrap() >= 0.0);
            prop_assert!(relative_entropy(&p, &p).unwrap().abs() <= 1e-12);
            let h = shannon_entropy(&p);
            prop_assert!(h >= 0.0 && h <= 20f64.ln() + 1e-12);
        }

        #[test]
        fn kl_equals_expected_log_propensity(p in arb_pv(), q in arb_pv()) {
            let pm = PositionFrequencyMatrix { length: 1, rows: vec![p], support: vec![1] };
            let prop = propensity(&pm, &BackgroundModel::Global(q)).unwrap();
            let via: f64 = (0..NUM_RESIDUES).filter(|&x| p.get(x) > 0.0).map(|x| p.get(x) * prop[0][x].ln()).sum();
            prop_assert!((relative_entropy(&p, &q).unwrap() - via.max(0.0)).abs() <= 1e-12);
        }
    }
}
