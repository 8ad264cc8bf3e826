use nalgebra::{DMatrix, SymmetricEigen};

use crate::diffcore::Tensor;
use crate::{Error, Real, Result};

/// Top principal components of a feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    /// Row projections onto the components, `R × k'` with `k' ≤ k`.
    pub components: Tensor,
    /// Principal directions, `D × k'`.
    pub directions: Vec<Vec<f64>>,
    /// Variance fraction per returned component.
    pub explained_variance_ratio: Vec<f64>,
}

/// Projects the column-centered `R × D` features onto their top `k`
/// covariance eigenvectors.
///
/// Each direction's largest-magnitude coefficient is made positive so the
/// output is sign-stable. Components with (numerically) zero variance are
/// dropped with a warning.
pub fn pca_features(features: &Tensor, k: usize) -> Result<Pca> {
    let (r, d) = features.dims2()?;
    if k == 0 || r <= k {
        return Err(Error::Domain(format!("PCA needs R > k ≥ 1, got R = {r}, k = {k}")));
    }
    let x = features.data();
    let mut mean = vec![0.0f64; d];
    for row in x.chunks_exact(d) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= r as f64);
    let centered = DMatrix::from_fn(r, d, |i, j| x[i * d + j] as f64 - mean[j]);
    let cov = (centered.transpose() * &centered) / (r as f64 - 1.0).max(1.0);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let top = eig.eigenvalues[order[0]].max(0.0);
    let mut directions = Vec::new();
    let mut ratios = Vec::new();
    for &i in order.iter().take(k.min(d)) {
        let lambda = eig.eigenvalues[i];
        if !(lambda > 1e-12 * top) {
            break;
        }
        let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().cloned().collect();
        let pivot = v.iter().cloned().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if pivot < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
        directions.push(v);
        ratios.push(lambda / total);
    }
    if directions.len() < k {
        log::warn!(
            "features have rank {} below the requested {k} components",
            directions.len()
        );
    }
    let kk = directions.len();
    let mut comps = vec![0.0 as Real; r * kk];
    for i in 0..r {
        for (c, dir) in directions.iter().enumerate() {
            let p: f64 = (0..d).map(|j| centered[(i, j)] * dir[j]).sum();
            comps[i * kk + c] = p as Real;
        }
    }
    Ok(Pca {
        components: Tensor::new(vec![r, kk], comps)?,
        directions,
        explained_variance_ratio: ratios,
    })
}
