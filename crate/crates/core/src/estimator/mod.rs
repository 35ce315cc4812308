//! Kernel-weighted two-stage least squares.
//!
//! The treatment indicators are instrumented with `D = 1(Z >= 0)` and its
//! interactions with the cell dummies `W`; the controls let intercept and
//! slope in `Z` differ by cell and side of the cutoff, which makes the fit a
//! two-sided local linear regression within every cell.

mod covariance;
mod design;
mod first_stage;
mod overid;
mod tsls;

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, EstimationConfig, ModelSpec};
use crate::error::{Error, Result};

pub use covariance::{cluster_count, cluster_covariance};
pub use design::{build_design, DesignMatrices};
pub use first_stage::{first_stage_diagnostics, FirstStage, FirstStageFlag};
pub use overid::{j_test, JTest};
pub use tsls::{weighted_2sls, Fit};

/// Point estimates, sandwich covariance and specification diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Names of all second-stage coefficients, endogenous first.
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub eta: Vec<f64>,
    /// Covariance of `(beta, eta)`, row-major.
    pub cov: Vec<Vec<f64>>,
    pub j: JTest,
    /// Why the J statistic could not be computed; `j.stat` is NaN then.
    pub j_note: Option<String>,
    pub n_effective: usize,
    pub n_clusters: usize,
    pub first_stage: Vec<FirstStage>,
    pub m: usize,
}

impl FitResult {
    pub fn k_endogenous(&self) -> usize {
        self.beta.len()
    }

    pub fn endogenous_names(&self) -> &[String] {
        &self.names[..self.beta.len()]
    }

    /// Standard errors of `beta`.
    pub fn se(&self) -> Vec<f64> {
        (0..self.beta.len())
            .map(|i| crate::linalg::sqrt(self.cov[i][i].max(0.0)))
            .collect()
    }

    pub fn cov_matrix(&self) -> DMatrix<f64> {
        let k = self.cov.len();
        DMatrix::from_fn(k, k, |r, c| self.cov[r][c])
    }
}

/// Full pipeline: design, 2SLS, cluster covariance, J test and first-stage
/// diagnostics.
pub fn estimate(ds: &Dataset, spec: &ModelSpec, cfg: &EstimationConfig) -> Result<FitResult> {
    let dm = build_design(ds, spec, cfg)?;
    estimate_design(&dm, cfg.rcond_threshold)
}

/// [`estimate`] on a prepared design.
pub fn estimate_design(dm: &DesignMatrices, rcond_threshold: f64) -> Result<FitResult> {
    let fit = weighted_2sls(dm, rcond_threshold)?;
    let cov = cluster_covariance(&fit, dm, &dm.clusters)?;
    let (j, j_note) = match j_test(&fit, dm, &dm.clusters, rcond_threshold) {
        Ok(j) => (j, None),
        Err(e @ (Error::TooFewClustersForJ { .. } | Error::Singular { .. })) => (
            JTest {
                stat: f64::NAN,
                dof: dm.instruments.ncols().saturating_sub(dm.k_endogenous()),
                just_identified: false,
            },
            Some(e.to_string()),
        ),
        Err(e) => return Err(e),
    };
    let first_stage = first_stage_diagnostics(dm, rcond_threshold)?;
    let k = cov.nrows();
    Ok(FitResult {
        names: dm.coefficient_names(),
        beta: fit.beta.clone(),
        eta: fit.eta.clone(),
        cov: (0..k).map(|r| cov.row(r).iter().copied().collect()).collect(),
        j,
        j_note,
        n_effective: dm.n(),
        n_clusters: cluster_count(&dm.clusters),
        first_stage,
        m: dm.m,
    })
}
