use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::covariance::cluster_sums;
use super::{DesignMatrices, Fit};
use crate::error::{Error, Result};
use crate::linalg::{column, scale_rows, Qr, SymEigen};

/// Hansen over-identification statistic. The p-value is attached by the
/// reporting layer from a chi-squared law with `dof` degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JTest {
    pub stat: f64,
    pub dof: usize,
    pub just_identified: bool,
}

/// Hansen J with a cluster-robust weighting matrix.
///
/// The weighting matrix `Omega = sum_g u_g u_g'` sums the moment
/// contributions `w_i e_i s_i` (2SLS residuals `e`, exogenous rows `s`)
/// within clusters. The statistic is the minimized efficient GMM objective
/// `min_b g(b)' Omega^{-1} g(b)`, `g(b) = sum_i w_i (y_i - x_i' b) s_i`.
/// Degrees of freedom are instruments minus endogenous regressors.
pub fn j_test(fit: &Fit, dm: &DesignMatrices, clusters: &[u64], rcond_threshold: f64) -> Result<JTest> {
    let n = dm.n();
    let dof = dm.instruments.ncols().saturating_sub(dm.k_endogenous());
    if dof == 0 {
        return Ok(JTest {
            stat: 0.0,
            dof: 0,
            just_identified: true,
        });
    }
    if clusters.len() != n {
        return Err(Error::LengthMismatch {
            what: "cluster ids",
            expected: n,
            found: clusters.len(),
        });
    }
    let s = dm.sqrt_weights();
    let mut exog = scale_rows(&dm.exogenous(), &s);
    // J is invariant to column scaling of the moments; equilibrate so the
    // conditioning check reflects collinearity rather than units.
    for mut col in exog.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let mut contrib = exog.clone();
    for (i, si) in s.iter().enumerate() {
        contrib.row_mut(i).scale_mut(si * fit.residuals[i]);
    }
    let sums = cluster_sums(&contrib, clusters);
    if sums.len() < 2 {
        return Err(Error::TooFewClusters(sums.len()));
    }
    let l = exog.ncols();
    if sums.len() <= l {
        return Err(Error::TooFewClustersForJ {
            clusters: sums.len(),
            moments: l,
        });
    }
    let mut omega = DMatrix::zeros(l, l);
    for u in &sums {
        omega += u * u.transpose();
    }
    let eig = SymEigen::new(&omega);
    let rcond = eig.rcond();
    if !(rcond >= rcond_threshold) {
        return Err(Error::Singular {
            what: "J-test weighting matrix",
            rcond,
        });
    }
    let chol = omega.cholesky().ok_or(Error::Singular {
        what: "J-test weighting matrix",
        rcond,
    })?;
    let lower = chol.l();

    let xs = scale_rows(&dm.regressors(), &s);
    let ys: Vec<f64> = dm.y.iter().zip(&s).map(|(y, s)| y * s).collect();
    let jac = exog.tr_mul(&xs);
    let gy = exog.tr_mul(&column(&ys));
    let a = lower.solve_lower_triangular(&jac).ok_or(Error::Singular {
        what: "J-test weighting matrix",
        rcond,
    })?;
    let b = lower.solve_lower_triangular(&gy).ok_or(Error::Singular {
        what: "J-test weighting matrix",
        rcond,
    })?;
    let qr = Qr::new(a, rcond_threshold, "J-test moment Jacobian")?;
    let resid: DVector<f64> = (&b - qr.project(&b)).column(0).into();
    let stat = resid.norm_squared();
    Ok(JTest {
        stat,
        dof,
        just_identified: false,
    })
}
