use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::{DesignMatrices, Fit};
use crate::error::{Error, Result};
use crate::linalg::{sqrt, symmetrize};

pub fn cluster_count(clusters: &[u64]) -> usize {
    let mut v = clusters.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

/// Sums the rows of `scores` within clusters, in ascending key order.
pub(crate) fn cluster_sums(scores: &DMatrix<f64>, clusters: &[u64]) -> Vec<DVector<f64>> {
    let mut sums: BTreeMap<u64, DVector<f64>> = BTreeMap::new();
    let k = scores.ncols();
    for (i, &g) in clusters.iter().enumerate() {
        let acc = sums.entry(g).or_insert_with(|| DVector::zeros(k));
        for c in 0..k {
            acc[c] += scores[(i, c)];
        }
    }
    sums.into_values().collect()
}

/// Cluster-robust sandwich `A^{-1} B A^{-1}` for the 2SLS coefficients,
/// scaled by the CR1 factor `G/(G-1) * (n-1)/(n-k)`.
///
/// `clusters` aligns with the design rows.
pub fn cluster_covariance(fit: &Fit, dm: &DesignMatrices, clusters: &[u64]) -> Result<DMatrix<f64>> {
    let n = dm.n();
    if clusters.len() != n {
        return Err(Error::LengthMismatch {
            what: "cluster ids",
            expected: n,
            found: clusters.len(),
        });
    }
    let k = fit.projected.ncols();
    if n <= k {
        return Err(Error::TooFewObservations { n, k });
    }
    // Score of row i: w_i e_i x_hat_i = (sqrt(w_i) e_i) (sqrt(w_i) x_hat_i).
    let mut scores = fit.projected.clone();
    for i in 0..n {
        let se = sqrt(dm.weights[i]) * fit.residuals[i];
        scores.row_mut(i).scale_mut(se);
    }
    let sums = cluster_sums(&scores, clusters);
    let g = sums.len();
    if g < 2 {
        return Err(Error::TooFewClusters(g));
    }
    let mut meat = DMatrix::zeros(k, k);
    for u in &sums {
        meat += u * u.transpose();
    }
    let factor = (g as f64 / (g as f64 - 1.0)) * ((n as f64 - 1.0) / (n as f64 - k as f64));
    let cov = &fit.bread * meat * &fit.bread * factor;
    Ok(symmetrize(&cov))
}
