use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::data::{Dataset, EstimationConfig, ModelSpec};
use crate::error::{Error, Result};
use crate::kernels::weights_vector;
use crate::linalg::{hcat, scale_rows, sqrt, Qr};

/// Regression blocks of the kernel-weighted 2SLS, restricted to rows with
/// positive kernel weight.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrices {
    pub y: Vec<f64>,
    pub endogenous: DMatrix<f64>,
    /// Excluded instruments `(D, D*W)`.
    pub instruments: DMatrix<f64>,
    /// Exogenous controls `(1, W, Z, D*Z, Z*W, D*Z*W)` plus any extra controls.
    pub controls: DMatrix<f64>,
    pub weights: Vec<f64>,
    pub clusters: Vec<u64>,
    /// Original dataset row of each design row.
    pub rows: Vec<usize>,
    pub endogenous_names: Vec<String>,
    pub instrument_names: Vec<String>,
    pub control_names: Vec<String>,
    /// Number of covariate columns `W` used to build instruments.
    pub m: usize,
}

impl DesignMatrices {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn k_endogenous(&self) -> usize {
        self.endogenous.ncols()
    }

    /// `[instruments | controls]`
    pub fn exogenous(&self) -> DMatrix<f64> {
        hcat(&[&self.instruments, &self.controls])
    }

    /// `[endogenous | controls]`
    pub fn regressors(&self) -> DMatrix<f64> {
        hcat(&[&self.endogenous, &self.controls])
    }

    pub fn sqrt_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|&w| sqrt(w)).collect()
    }

    pub fn coefficient_names(&self) -> Vec<String> {
        self.endogenous_names
            .iter()
            .chain(&self.control_names)
            .cloned()
            .collect()
    }

    /// Copy with every weight multiplied by `c`.
    pub fn scaled_weights(&self, c: f64) -> Self {
        let mut out = self.clone();
        for w in &mut out.weights {
            *w *= c;
        }
        out
    }
}

fn pick(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Covariate columns `W` and their names for the chosen model.
fn covariate_block(ds: &Dataset, spec: &ModelSpec, rows: &[usize]) -> (DMatrix<f64>, Vec<String>) {
    let w = pick(ds.w_dummies(), rows);
    let w_names: Vec<String> = ds.cell_labels()[1..].iter().map(|l| format!("W[{l}]")).collect();
    match spec {
        ModelSpec::Homogeneous | ModelSpec::Parametric { .. } => (w, w_names),
        ModelSpec::ConditionalOnR { strata, labels } => {
            // Stratum indicators (reference dropped) and, within each
            // stratum, one dummy per cell present in the window except the
            // stratum's smallest: a saturated cell design per stratum.
            let n = rows.len();
            let cell = ds.cell_index();
            let mut cols: Vec<Vec<f64>> = Vec::new();
            let mut names = Vec::new();
            for (s, ls) in labels.iter().enumerate().skip(1) {
                cols.push(rows.iter().map(|&r| f64::from(u8::from(strata[r] == s))).collect());
                names.push(format!("R[{ls}]"));
            }
            for (s, ls) in labels.iter().enumerate() {
                let mut present = alloc::vec![false; ds.q()];
                for &r in rows.iter().filter(|&&r| strata[r] == s) {
                    present[cell[r]] = true;
                }
                for c in (0..ds.q()).filter(|&c| present[c]).skip(1) {
                    cols.push(
                        rows.iter()
                            .map(|&r| f64::from(u8::from(strata[r] == s && cell[r] == c)))
                            .collect(),
                    );
                    names.push(format!("R[{ls}]*W[{}]", ds.cell_labels()[c]));
                }
            }
            let m = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
            (m, names)
        }
    }
}

fn endogenous_block(ds: &Dataset, spec: &ModelSpec, rows: &[usize]) -> (DMatrix<f64>, Vec<String>) {
    let x = pick(ds.x(), rows);
    let names = ds.treatment_names();
    let d = ds.d();
    match spec {
        ModelSpec::Homogeneous => (x, names.to_vec()),
        ModelSpec::Parametric { w_tilde, names: wn } => {
            let c = w_tilde.ncols();
            let mut out = DMatrix::zeros(rows.len(), d * (1 + c));
            let mut labels = names.to_vec();
            out.view_mut((0, 0), (rows.len(), d)).copy_from(&x);
            for k in 0..c {
                for j in 0..d {
                    for (i, &r) in rows.iter().enumerate() {
                        out[(i, d * (k + 1) + j)] = w_tilde[(r, k)] * x[(i, j)];
                    }
                    labels.push(format!("{}*{}", wn[k], names[j]));
                }
            }
            (out, labels)
        }
        ModelSpec::ConditionalOnR { strata, labels } => {
            let q_r = labels.len();
            let mut out = DMatrix::zeros(rows.len(), d * q_r);
            let mut out_names = Vec::with_capacity(d * q_r);
            for (s, ls) in labels.iter().enumerate() {
                for j in 0..d {
                    for (i, &r) in rows.iter().enumerate() {
                        if strata[r] == s {
                            out[(i, s * d + j)] = x[(i, j)];
                        }
                    }
                    out_names.push(format!("{}[{ls}]", names[j]));
                }
            }
            (out, out_names)
        }
    }
}

/// Builds instruments, controls and endogenous regressors for the kernel
/// weighted 2SLS. Only rows with positive kernel weight are kept.
pub fn build_design(ds: &Dataset, spec: &ModelSpec, cfg: &EstimationConfig) -> Result<DesignMatrices> {
    cfg.validate()?;
    spec.validate(ds)?;
    let all_weights = weights_vector(cfg.kernel, cfg.bandwidth, ds.z())?;
    let rows: Vec<usize> = (0..ds.n()).filter(|&i| all_weights[i] > 0.0).collect();
    if rows.is_empty() {
        return Err(Error::NoPositiveWeights);
    }
    let n = rows.len();
    let (w, w_names) = covariate_block(ds, spec, &rows);
    let m = w.ncols();
    let (endogenous, endogenous_names) = endogenous_block(ds, spec, &rows);
    if endogenous.ncols() > m + 1 {
        return Err(Error::UnderIdentified {
            instruments: m + 1,
            endogenous: endogenous.ncols(),
        });
    }

    let z: Vec<f64> = rows.iter().map(|&r| ds.z()[r]).collect();
    let dz: Vec<f64> = z.iter().map(|&v| if v >= 0.0 { 1.0 } else { 0.0 }).collect();

    let mut instruments = DMatrix::zeros(n, 1 + m);
    let mut instrument_names = Vec::with_capacity(1 + m);
    instrument_names.push(String::from("D"));
    for i in 0..n {
        instruments[(i, 0)] = dz[i];
        for k in 0..m {
            instruments[(i, 1 + k)] = dz[i] * w[(i, k)];
        }
    }
    instrument_names.extend(w_names.iter().map(|n| format!("D*{n}")));

    let extra = ds.extra_controls();
    let n_extra = extra.map_or(0, |(c, _)| c.ncols());
    let mut controls = DMatrix::zeros(n, 3 + 3 * m + n_extra);
    let mut control_names = Vec::with_capacity(controls.ncols());
    control_names.push(String::from("const"));
    control_names.extend(w_names.iter().cloned());
    control_names.push(String::from("Z"));
    control_names.push(String::from("D*Z"));
    control_names.extend(w_names.iter().map(|n| format!("Z*{n}")));
    control_names.extend(w_names.iter().map(|n| format!("D*Z*{n}")));
    for i in 0..n {
        controls[(i, 0)] = 1.0;
        controls[(i, 1 + m)] = z[i];
        controls[(i, 2 + m)] = dz[i] * z[i];
        for k in 0..m {
            controls[(i, 1 + k)] = w[(i, k)];
            controls[(i, 3 + m + k)] = z[i] * w[(i, k)];
            controls[(i, 3 + 2 * m + k)] = dz[i] * z[i] * w[(i, k)];
        }
    }
    if let Some((c, names)) = extra {
        for (j, name) in names.iter().enumerate() {
            for (i, &r) in rows.iter().enumerate() {
                controls[(i, 3 + 3 * m + j)] = c[(r, j)];
            }
            control_names.push(name.clone());
        }
    }

    let weights: Vec<f64> = rows.iter().map(|&r| all_weights[r]).collect();
    let clusters_all = ds.cluster_ids(cfg.cluster_by);
    let dm = DesignMatrices {
        y: rows.iter().map(|&r| ds.y()[r]).collect(),
        endogenous,
        instruments,
        controls,
        clusters: rows.iter().map(|&r| clusters_all[r]).collect(),
        weights,
        rows,
        endogenous_names,
        instrument_names,
        control_names,
        m,
    };

    let s = dm.sqrt_weights();
    Qr::new(scale_rows(&dm.exogenous(), &s), cfg.rcond_threshold, "instrument block")?;
    Ok(dm)
}
