//! Synthetic designs with known population targets.
//!
//! Treatment indicators share one latent uniform per observation:
//! `X_j = 1(U <= p_j(w) + d_j(w) * D)`. With thresholds ordered in `j` this
//! yields cumulative indicators, and nonnegative jumps give monotone
//! compliance.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{CellEncoding, Dataset};
use crate::discontinuities::{relevance, CellTable};
use crate::error::{Error, Result};

/// Outcome trend in the running variable, continuous at the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Trend {
    pub slope_left: f64,
    pub slope_right: f64,
    pub curvature_left: f64,
    pub curvature_right: f64,
}

impl Trend {
    pub fn at(&self, z: f64) -> f64 {
        if z >= 0.0 {
            self.slope_right * z + self.curvature_right * z * z
        } else {
            self.slope_left * z + self.curvature_left * z * z
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ZDist {
    Uniform { lo: f64, hi: f64 },
}

impl Default for ZDist {
    fn default() -> Self {
        ZDist::Uniform { lo: -1.0, hi: 1.0 }
    }
}

/// Full data-generating process. Per-cell vectors are indexed
/// `[cell][treatment]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub cell_probs: Vec<f64>,
    /// Crossing probabilities below the cutoff, `p_j(w)`.
    pub base_probs: Vec<Vec<f64>>,
    /// Increase in crossing probability at the cutoff, `d_j(w)`.
    pub jumps: Vec<Vec<f64>>,
    /// Effects `beta(w)` of each indicator.
    pub betas: Vec<Vec<f64>>,
    /// Untreated outcome level `alpha(w)`.
    pub intercepts: Vec<f64>,
    #[serde(default)]
    pub trend: Trend,
    pub noise_sd: f64,
    #[serde(default)]
    pub z_dist: ZDist,
    #[serde(default)]
    pub seed: u64,
}

const PROB_TOL: f64 = 1e-9;

impl DgpSpec {
    pub fn q(&self) -> usize {
        self.cell_probs.len()
    }

    pub fn d(&self) -> usize {
        self.jumps.first().map_or(0, Vec::len)
    }

    /// Homogeneous-effect design.
    pub fn homogeneous(
        cell_probs: Vec<f64>,
        base_probs: Vec<Vec<f64>>,
        jumps: Vec<Vec<f64>>,
        beta: &[f64],
        noise_sd: f64,
    ) -> Self {
        let q = cell_probs.len();
        DgpSpec {
            betas: (0..q).map(|_| beta.to_vec()).collect(),
            intercepts: (0..q).map(|l| l as f64 * 0.1).collect(),
            cell_probs,
            base_probs,
            jumps,
            trend: Trend::default(),
            noise_sd,
            z_dist: ZDist::default(),
            seed: 0,
        }
    }

    /// Checks shapes, probability bounds, nonnegative jumps and ordered
    /// crossing probabilities on both sides of the cutoff.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidDgp(msg));
        let q = self.q();
        let d = self.d();
        if q == 0 {
            return bad(String::from("cell_probs is empty"));
        }
        if d == 0 {
            return bad(String::from("jumps must have at least one treatment indicator"));
        }
        for (name, len) in [
            ("base_probs", self.base_probs.len()),
            ("jumps", self.jumps.len()),
            ("betas", self.betas.len()),
            ("intercepts", self.intercepts.len()),
        ] {
            if len != q {
                return bad(format!("{name} has {len} cells, expected {q}"));
            }
        }
        if self.cell_probs.iter().any(|p| !(*p >= 0.0)) {
            return bad(String::from("cell probabilities must be nonnegative"));
        }
        let total: f64 = self.cell_probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return bad(format!("cell probabilities sum to {total}, expected 1"));
        }
        for l in 0..q {
            for (name, v) in [
                ("base_probs", &self.base_probs[l]),
                ("jumps", &self.jumps[l]),
                ("betas", &self.betas[l]),
            ] {
                if v.len() != d {
                    return bad(format!("{name}[{l}] has {} entries, expected {d}", v.len()));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return bad(format!("{name}[{l}] is not finite"));
                }
            }
            if self.jumps[l].iter().any(|&j| j < 0.0) {
                return bad(format!("monotonicity: jumps[{l}] has a negative entry"));
            }
            for side in [0.0, 1.0] {
                let thresholds: Vec<f64> = (0..d)
                    .map(|j| self.base_probs[l][j] + self.jumps[l][j] * side)
                    .collect();
                if thresholds.iter().any(|&t| !(-PROB_TOL..=1.0 + PROB_TOL).contains(&t)) {
                    return bad(format!(
                        "crossing probabilities of cell {l} leave [0, 1] {} the cutoff",
                        if side > 0.0 { "above" } else { "below" }
                    ));
                }
                if thresholds.windows(2).any(|w| w[0] < w[1] - PROB_TOL) {
                    return bad(format!(
                        "ordered thresholds: cell {l} has p_j + d_j increasing in j {} the cutoff",
                        if side > 0.0 { "above" } else { "below" }
                    ));
                }
            }
        }
        if !self.intercepts.iter().all(|v| v.is_finite()) {
            return bad(String::from("intercepts must be finite"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd {} must be nonnegative", self.noise_sd));
        }
        match self.z_dist {
            ZDist::Uniform { lo, hi } => {
                if !(lo < 0.0 && hi > 0.0 && lo.is_finite() && hi.is_finite()) {
                    return bad(format!("running-variable support [{lo}, {hi}] must straddle 0"));
                }
            }
        }
        Ok(())
    }
}

/// Population jumps and the separating-weight target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationTargets {
    pub identified: bool,
    /// `M^{-1} sum_l p_l delta_x(l) delta_x(l)' beta(l)`; `None` when `M` is singular.
    pub beta_bar: Option<Vec<f64>>,
    pub delta_x: Vec<Vec<f64>>,
    pub delta_y: Vec<f64>,
    pub m: Vec<Vec<f64>>,
    pub omega: Vec<Vec<Vec<f64>>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

/// Closed-form targets: `delta_x(w) = d(w)`, `delta_y(w) = beta(w)' d(w)`
/// and `beta_bar = sum_l omega(l) beta(l) p_l`.
pub fn population_targets(dgp: &DgpSpec) -> Result<PopulationTargets> {
    dgp.validate()?;
    let delta_x = dgp.jumps.clone();
    let delta_y: Vec<f64> = (0..dgp.q())
        .map(|l| dgp.betas[l].iter().zip(&dgp.jumps[l]).map(|(b, d)| b * d).sum())
        .collect();
    let ct = CellTable::from_jumps(&delta_x, &delta_y, &dgp.cell_probs)?;
    let tw = relevance(&ct, 1e-10);
    let m = rows_of(&tw.m_hat);
    if !tw.passed {
        return Ok(PopulationTargets {
            identified: false,
            beta_bar: None,
            delta_x,
            delta_y,
            m,
            omega: Vec::new(),
        });
    }
    let omegas = crate::discontinuities::twlate_weights(&tw)?;
    let d = dgp.d();
    // Weights sum to the identity, so common effects are their own target.
    let beta_bar = if dgp.betas.iter().all(|b| *b == dgp.betas[0]) {
        dgp.betas[0].clone()
    } else {
        let mut acc = alloc::vec![0.0; d];
        for (l, om) in omegas.iter().enumerate() {
            for (r, a) in acc.iter_mut().enumerate() {
                let v: f64 = (0..d).map(|c| om[(r, c)] * dgp.betas[l][c]).sum();
                *a += ct.cells[l].p_hat * v;
            }
        }
        acc
    };
    Ok(PopulationTargets {
        identified: true,
        beta_bar: Some(beta_bar),
        delta_x,
        delta_y,
        m,
        omega: omegas.iter().map(rows_of).collect(),
    })
}

/// Draws `n` observations; identical inputs give identical datasets.
pub fn generate(dgp: &DgpSpec, n: usize, seed: u64) -> Result<Dataset> {
    generate_stream(dgp, n, seed, 0)
}

/// [`generate`] on substream `stream` of the ChaCha8 generator seeded with
/// `seed`. Distinct streams are independent.
pub fn generate_stream(dgp: &DgpSpec, n: usize, seed: u64, stream: u64) -> Result<Dataset> {
    dgp.validate()?;
    if n == 0 {
        return Err(Error::Empty("sample size"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let q = dgp.q();
    let d = dgp.d();
    let mut cum = Vec::with_capacity(q);
    let mut acc = 0.0;
    for p in &dgp.cell_probs {
        acc += p;
        cum.push(acc);
    }
    let ZDist::Uniform { lo, hi } = dgp.z_dist;

    let mut y = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut cells = Vec::with_capacity(n);
    let mut x = DMatrix::zeros(n, d);
    for i in 0..n {
        let uc: f64 = rng.random::<f64>() * acc;
        let cell = cum.iter().position(|&c| uc < c).unwrap_or(q - 1);
        let zi = lo + (hi - lo) * rng.random::<f64>();
        let latent: f64 = rng.random();
        let eps: f64 = rng.sample(StandardNormal);
        let above = if zi >= 0.0 { 1.0 } else { 0.0 };
        let mut yi = dgp.intercepts[cell] + dgp.trend.at(zi) + dgp.noise_sd * eps;
        for j in 0..d {
            if latent <= dgp.base_probs[cell][j] + dgp.jumps[cell][j] * above {
                x[(i, j)] = 1.0;
                yi += dgp.betas[cell][j];
            }
        }
        y.push(yi);
        z.push(zi);
        cells.push(cell);
    }
    let width = digits(q - 1);
    let labels = (0..q).map(|l| format!("w{l:0width$}")).collect();
    Dataset::new(y, &z, 0.0, x, CellEncoding::from_indices(cells, labels)?)
}

fn digits(mut v: usize) -> usize {
    let mut w = 1;
    while v >= 10 {
        v /= 10;
        w += 1;
    }
    w
}
