use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::DesignMatrices;
use crate::error::{Error, Result};
use crate::linalg::{column, hcat, scale_rows, Qr};

/// Second-stage solution with the pieces the covariance and J test reuse.
#[derive(Debug, Clone)]
pub struct Fit {
    pub beta: Vec<f64>,
    pub eta: Vec<f64>,
    /// Structural residuals `y - [X | C] b` on the original scale.
    pub residuals: Vec<f64>,
    /// `sqrt(w) * [X_hat | C]`.
    pub(crate) projected: DMatrix<f64>,
    /// `([X_hat | C]' W [X_hat | C])^{-1}`.
    pub(crate) bread: DMatrix<f64>,
}

impl Fit {
    pub fn coefficients(&self) -> Vec<f64> {
        self.beta.iter().chain(&self.eta).copied().collect()
    }
}

/// Weighted 2SLS via QR of the `sqrt(w)`-scaled blocks: project the
/// endogenous columns on `[instruments | controls]`, then regress `y` on
/// `[fitted endogenous | controls]`.
pub fn weighted_2sls(dm: &DesignMatrices, rcond_threshold: f64) -> Result<Fit> {
    let n = dm.n();
    if n == 0 {
        return Err(Error::NoPositiveWeights);
    }
    let k = dm.k_endogenous();
    let s = dm.sqrt_weights();
    let first = Qr::new(
        scale_rows(&dm.exogenous(), &s),
        rcond_threshold,
        "first-stage normal equations",
    )?;
    let endo_hat = first.project(&scale_rows(&dm.endogenous, &s));
    let controls_s = scale_rows(&dm.controls, &s);
    let projected = hcat(&[&endo_hat, &controls_s]);
    let second = Qr::new(projected.clone(), rcond_threshold, "second-stage design")?;
    let ys: Vec<f64> = dm.y.iter().zip(&s).map(|(y, s)| y * s).collect();
    let coef = second.solve(&column(&ys));

    let fitted = dm.regressors() * &coef;
    let residuals = (0..n).map(|i| dm.y[i] - fitted[(i, 0)]).collect();
    let coef: Vec<f64> = coef.iter().copied().collect();
    Ok(Fit {
        beta: coef[..k].to_vec(),
        eta: coef[k..].to_vec(),
        residuals,
        bread: second.gram_inverse(),
        projected,
    })
}
