//! Regression discontinuity estimators for an ordered treatment with
//! several levels.
//!
//! The treatment `T` with levels `t_0 < ... < t_d` is encoded as cumulative
//! indicators `X_j = 1(T >= t_j)`. Discrete covariates split the sample into
//! cells; the variation of the first-stage jumps across cells identifies the
//! marginal effects of every indicator. This crate provides:
//!
//! - [`data`]: dataset representation and treatment/cell encoders,
//! - [`kernels`]: kernel weights and one-sided kernel moments,
//! - [`discontinuities`]: cell-wise local linear jumps, the relevance matrix,
//!   separating weights and the plug-in estimator,
//! - [`estimator`]: the kernel-weighted 2SLS with cluster-robust covariance,
//!   over-identification test and first-stage diagnostics,
//! - [`dgp`]: synthetic designs with known population targets.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, p-values, the
//! Monte Carlo harness and the command line live in the `rdmulti` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod data;
pub mod dgp;
pub mod discontinuities;
pub mod error;
pub mod estimator;
pub mod kernels;
pub mod linalg;

pub use data::{
    decode_treatment, encode_cells, encode_treatment, validate_dataset, CellEncoding, ClusterBy, Dataset,
    EstimationConfig, ModelSpec, ValidationReport,
};
pub use dgp::{generate, generate_stream, population_targets, DgpSpec, PopulationTargets};
pub use discontinuities::{
    cell_jump, cell_table, plugin_estimator, ratio_late, relevance, twlate_weights, wlate_feasibility, CellTable,
    RatioLate, TwlateWeights,
};
pub use error::{Error, Result};
pub use estimator::{
    build_design, cluster_covariance, estimate, first_stage_diagnostics, j_test, weighted_2sls, DesignMatrices,
    FitResult,
};
pub use kernels::KernelKind;
