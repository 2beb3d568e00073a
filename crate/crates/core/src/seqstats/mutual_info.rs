// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::seqdata::{residue_id, NUM_RESIDUES};

/// Plug-in pairwise statistics between positions of equal-length sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutualInformationMatrix {
    pub length: usize,
    /// `mi[i][j] = H(i) + H(j) - H(i,j)`; the diagonal is `H(i)`.
    pub mi: Vec<Vec<f64>>,
    /// `joint_entropy[i][j] = H(i,j)`; the diagonal is `H(i)`.
    pub joint_entropy: Vec<Vec<f64>>,
    /// Number of sequences the estimates rest on.
    pub support: usize,
}

fn plugin_entropy(counts: &[u32], total: f64) -> f64 {
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            p * p.ln()
        })
        .sum::<f64>()
}

pub fn mutual_information<S: AsRef<str>>(
    seqs: &[S],
    n: usize,
) -> Result<MutualInformationMatrix, StatsError> {
    let mut ids: Vec<Vec<usize>> = Vec::new();
    for s in seqs.iter().map(AsRef::as_ref).filter(|s| s.len() == n) {
        let row = s
            .bytes()
            .map(residue_id)
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| StatsError::NonCanonical(s.to_string()))?;
        ids.push(row);
    }
    if n == 0 || ids.is_empty() {
        return Err(StatsError::NoSequencesOfLength(n));
    }
    if ids.len() < 2 {
        return Err(StatsError::TooFewSequences {
            length: n,
            needed: 2,
            got: ids.len(),
        });
    }
    let total = ids.len() as f64;
    let single: Vec<f64> = (0..n)
        .map(|i| {
            let mut c = [0u32; NUM_RESIDUES];
            for r in &ids {
                c[r[i]] += 1;
            }
            plugin_entropy(&c, total)
        })
        .collect();
    let mut mi = vec![vec![0.0; n]; n];
    let mut joint = vec![vec![0.0; n]; n];
    let mut c = vec![0u32; NUM_RESIDUES * NUM_RESIDUES];
    for i in 0..n {
        mi[i][i] = single[i];
        joint[i][i] = single[i];
        for j in i + 1..n {
            c.fill(0);
            for r in &ids {
                c[r[i] * NUM_RESIDUES + r[j]] += 1;
            }
            let h_ij = plugin_entropy(&c, total);
            let m = (single[i] + single[j] - h_ij).max(0.0);
            mi[i][j] = m;
            mi[j][i] = m;
            joint[i][j] = h_ij;
            joint[j][i] = h_ij;
        }
    }
    Ok(MutualInformationMatrix {
        length: n,
        mi,
        joint_entropy: joint,
        support: ids.len(),
    })
}
