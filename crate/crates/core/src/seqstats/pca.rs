// SPDX-License-Identifier: Apache-2.0

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::StatsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `k` orthonormal rows of length `d`.
    pub components: Vec<Vec<f64>>,
    /// Eigenvalues of the sample covariance (denominator `m - 1`), non-increasing.
    pub explained_variance: Vec<f64>,
    /// `explained_variance / total variance`.
    pub explained_ratio: Vec<f64>,
    pub total_variance: f64,
    /// `m` rows of `k` scores.
    pub projection: Vec<Vec<f64>>,
}

/// PCA through the eigendecomposition of the covariance matrix. Each
/// component is signed so its largest-magnitude entry is positive.
pub fn pca(data: &[Vec<f64>], k: usize) -> Result<Pca, StatsError> {
    let m = data.len();
    if m < 2 {
        return Err(StatsError::InvalidArgument(format!(
            "need at least 2 rows, got {m}"
        )));
    }
    let d = data[0].len();
    if data.iter().any(|r| r.len() != d) {
        return Err(StatsError::InvalidArgument("rows differ in length".into()));
    }
    if k == 0 || k > m.min(d) {
        return Err(StatsError::InvalidArgument(format!(
            "k={k} outside 1..={}",
            m.min(d)
        )));
    }
    if data.iter().flatten().any(|x| !x.is_finite()) {
        return Err(StatsError::InvalidArgument("non-finite value".into()));
    }
    let mean: Vec<f64> = (0..d)
        .map(|j| data.iter().map(|r| r[j]).sum::<f64>() / m as f64)
        .collect();
    let centered = DMatrix::from_fn(m, d, |i, j| data[i][j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (m as f64 - 1.0);
    let total_variance = cov.trace();
    if total_variance <= 0.0 {
        return Err(StatsError::DegenerateData(
            "all rows are identical; total variance is 0".into(),
        ));
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let mut components = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    for &c in order.iter().take(k) {
        let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
        let lead = v.iter().enumerate().fold(
            0,
            |best, (i, x)| if x.abs() > v[best].abs() { i } else { best },
        );
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        explained_variance.push(eig.eigenvalues[c].max(0.0));
    }
    let projection = (0..m)
        .map(|i| {
            components
                .iter()
                .map(|c| (0..d).map(|j| centered[(i, j)] * c[j]).sum())
                .collect()
        })
        .collect();
    let explained_ratio = explained_variance
        .iter()
        .map(|v| v / total_variance)
        .collect();
    Ok(Pca {
        mean,
        components,
        explained_variance,
        explained_ratio,
        total_variance,
        projection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_aligned_points() {
        let r = pca(&[vec![1.0, 0.0], vec![-1.0, 0.0]], 1).unwrap();
        assert!((r.components[0][0] - 1.0).abs() < 1e-12);
        assert!(r.components[0][1].abs() < 1e-12);
        assert!((r.explained_ratio[0] - 1.0).abs() < 1e-12);
        assert!((r.projection[0][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_rank_reconstructs_centered_data() {
        let data = vec![
            vec![2.0, 0.5, -1.0],
            vec![0.0, 1.5, 3.0],
            vec![1.0, -2.0, 0.0],
            vec![4.0, 0.0, 1.0],
            vec![-1.0, 1.0, 2.5],
        ];
        let r = pca(&data, 3).unwrap();
        for (i, row) in data.iter().enumerate() {
            for j in 0..3 {
                let back: f64 = (0..3)
                    .map(|c| r.projection[i][c] * r.components[c][j])
                    .sum();
                assert!((back - (row[j] - r.mean[j])).abs() < 1e-9);
            }
        }
        assert!((r.explained_variance.iter().sum::<f64>() - r.total_variance).abs() < 1e-9);
        assert!(r.explained_variance.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn degenerate_and_bad_k() {
        let same = vec![vec![1.0, 2.0]; 4];
        assert!(matches!(pca(&same, 1), Err(StatsError::DegenerateData(_))));
        let data = vec![vec![1.0, 2.0], vec![3.0, 1.0]];
        assert!(pca(&data, 0).is_err());
        assert!(pca(&data, 3).is_err());
    }
}
