//! Dataset representation, treatment and covariate-cell encoders, and
//! structural validation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelKind;

/// Default cap on distinct values per covariate column.
pub const DEFAULT_MAX_LEVELS: usize = 64;

/// Cumulative indicators `x[i, j] = 1(t_i >= levels[j + 1])`.
///
/// `levels` must be strictly increasing with at least two entries; the
/// result has `levels.len() - 1` columns.
pub fn encode_treatment(t: &[i64], levels: &[i64]) -> Result<DMatrix<f64>> {
    if levels.len() < 2 || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidLevels);
    }
    let d = levels.len() - 1;
    let mut x = DMatrix::zeros(t.len(), d);
    for (row, &ti) in t.iter().enumerate() {
        let pos = levels
            .binary_search(&ti)
            .map_err(|_| Error::UnknownTreatmentLevel { row, value: ti })?;
        for j in 0..pos {
            x[(row, j)] = 1.0;
        }
    }
    Ok(x)
}

/// Inverse of [`encode_treatment`]: the largest level whose indicator is on.
pub fn decode_treatment(x: &DMatrix<f64>, levels: &[i64]) -> Vec<i64> {
    (0..x.nrows())
        .map(|i| {
            let on = (0..x.ncols()).rev().find(|&j| x[(i, j)] > 0.5);
            on.map_or(levels[0], |j| levels[j + 1])
        })
        .collect()
}

/// Cell assignment derived from discrete covariates.
///
/// Cell 0 is the reference cell and has no dummy column.
#[derive(Debug, Clone, PartialEq)]
pub struct CellEncoding {
    pub index: Vec<usize>,
    pub labels: Vec<String>,
    pub dummies: DMatrix<f64>,
}

impl CellEncoding {
    /// Builds dummies for cells `1..q` from a precomputed assignment.
    pub fn from_indices(index: Vec<usize>, labels: Vec<String>) -> Result<Self> {
        let q = labels.len();
        if q == 0 {
            return Err(Error::Empty("cell labels"));
        }
        if let Some((row, _)) = index.iter().enumerate().find(|(_, &c)| c >= q) {
            return Err(Error::InvalidConfig(format!("row {row} has cell index outside 0..{q}")));
        }
        let mut dummies = DMatrix::zeros(index.len(), q - 1);
        for (i, &c) in index.iter().enumerate() {
            if c > 0 {
                dummies[(i, c - 1)] = 1.0;
            }
        }
        Ok(CellEncoding { index, labels, dummies })
    }

    pub fn q(&self) -> usize {
        self.labels.len()
    }

    /// A single cell covering every row.
    pub fn single(n: usize) -> Self {
        CellEncoding {
            index: vec![0; n],
            labels: vec![String::from("all")],
            dummies: DMatrix::zeros(n, 0),
        }
    }
}

/// Encodes the observed combinations of discrete covariates as cells.
///
/// Cells are ordered lexicographically by their value tuples, so the
/// reference cell (index 0) is the smallest label. Labels join the values
/// with `/`.
pub fn encode_cells<S: AsRef<str>>(columns: &[&[S]], max_levels: usize) -> Result<CellEncoding> {
    let n = match columns.first() {
        Some(c) => c.len(),
        None => return Err(Error::Empty("covariate columns")),
    };
    for (ci, col) in columns.iter().enumerate() {
        if col.len() != n {
            return Err(Error::LengthMismatch {
                what: "covariate column",
                expected: n,
                found: col.len(),
            });
        }
        let mut distinct: Vec<&str> = col.iter().map(|s| s.as_ref()).collect();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() > max_levels {
            return Err(Error::TooManyLevels {
                column: ci,
                levels: distinct.len(),
                max: max_levels,
            });
        }
    }
    let key = |i: usize| -> Vec<&str> { columns.iter().map(|c| c[i].as_ref()).collect() };
    let mut combos: BTreeMap<Vec<&str>, usize> = BTreeMap::new();
    for i in 0..n {
        combos.entry(key(i)).or_insert(0);
    }
    let mut labels = Vec::with_capacity(combos.len());
    for (pos, (k, slot)) in combos.iter_mut().enumerate() {
        *slot = pos;
        labels.push(k.join("/"));
    }
    let index = (0..n).map(|i| combos[&key(i)]).collect();
    CellEncoding::from_indices(index, labels)
}

/// How observations are grouped for cluster-robust inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterBy {
    /// Every observation is its own cluster.
    #[default]
    Observation,
    /// Observations sharing a running-variable value form a cluster.
    Running,
    /// The dataset's cluster key column.
    Column,
}

/// Observations on a recentered running variable with cumulative treatment
/// indicators and covariate cells. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    z: Vec<f64>,
    cutoff: f64,
    x: DMatrix<f64>,
    treatment_names: Vec<String>,
    cells: CellEncoding,
    cluster: Vec<u64>,
    extra_controls: Option<(DMatrix<f64>, Vec<String>)>,
}

impl Dataset {
    /// `z_raw` is on the original scale; it is stored recentered at `cutoff`.
    pub fn new(y: Vec<f64>, z_raw: &[f64], cutoff: f64, x: DMatrix<f64>, cells: CellEncoding) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::Empty("dataset"));
        }
        let check = |what: &'static str, found: usize| {
            if found == n {
                Ok(())
            } else {
                Err(Error::LengthMismatch {
                    what,
                    expected: n,
                    found,
                })
            }
        };
        check("running variable", z_raw.len())?;
        check("treatment indicators", x.nrows())?;
        check("cell assignment", cells.index.len())?;
        if x.ncols() == 0 {
            return Err(Error::InvalidLevels);
        }
        if !cutoff.is_finite() {
            return Err(Error::InvalidConfig(format!("cutoff {cutoff} is not finite")));
        }
        for (row, v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { what: "outcome", row });
            }
        }
        for (row, v) in z_raw.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    what: "running variable",
                    row,
                });
            }
        }
        let d = x.ncols();
        Ok(Dataset {
            y,
            z: z_raw.iter().map(|v| v - cutoff).collect(),
            cutoff,
            x,
            treatment_names: (1..=d).map(|j| format!("X{j}")).collect(),
            cells,
            cluster: (0..n as u64).collect(),
            extra_controls: None,
        })
    }

    pub fn with_treatment_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.d() {
            return Err(Error::LengthMismatch {
                what: "treatment names",
                expected: self.d(),
                found: names.len(),
            });
        }
        self.treatment_names = names;
        Ok(self)
    }

    pub fn with_clusters(mut self, keys: Vec<u64>) -> Result<Self> {
        if keys.len() != self.n() {
            return Err(Error::LengthMismatch {
                what: "cluster keys",
                expected: self.n(),
                found: keys.len(),
            });
        }
        self.cluster = keys;
        Ok(self)
    }

    pub fn with_extra_controls(mut self, controls: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if controls.nrows() != self.n() || controls.ncols() != names.len() {
            return Err(Error::LengthMismatch {
                what: "extra controls",
                expected: self.n(),
                found: controls.nrows(),
            });
        }
        if controls.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "extra controls",
                row: 0,
            });
        }
        self.extra_controls = (controls.ncols() > 0).then_some((controls, names));
        Ok(self)
    }

    /// Re-expresses the running variable relative to a new cutoff. The
    /// original scale is kept, so applying the same cutoff twice is a no-op.
    pub fn recentered(mut self, cutoff: f64) -> Self {
        let shift = cutoff - self.cutoff;
        for z in &mut self.z {
            *z -= shift;
        }
        self.cutoff = cutoff;
        self
    }

    /// Restriction to `rows`; cells are re-indexed over those still observed.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        if rows.is_empty() {
            return Err(Error::Empty("row selection"));
        }
        let mut present = vec![false; self.q()];
        for &r in rows {
            present[self.cells.index[r]] = true;
        }
        let mut remap = vec![usize::MAX; self.q()];
        let mut labels = Vec::new();
        for (c, &p) in present.iter().enumerate() {
            if p {
                remap[c] = labels.len();
                labels.push(self.cells.labels[c].clone());
            }
        }
        let index = rows.iter().map(|&r| remap[self.cells.index[r]]).collect();
        let cells = CellEncoding::from_indices(index, labels)?;
        let pick = |m: &DMatrix<f64>| DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)]);
        Ok(Dataset {
            y: rows.iter().map(|&r| self.y[r]).collect(),
            z: rows.iter().map(|&r| self.z[r]).collect(),
            cutoff: self.cutoff,
            x: pick(&self.x),
            treatment_names: self.treatment_names.clone(),
            cells,
            cluster: rows.iter().map(|&r| self.cluster[r]).collect(),
            extra_controls: self.extra_controls.as_ref().map(|(m, names)| (pick(m), names.clone())),
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.cells.q()
    }

    /// Number of cell dummies, `q - 1`.
    pub fn m(&self) -> usize {
        self.cells.dummies.ncols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Running variable recentered so the cutoff is at zero.
    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn treatment_names(&self) -> &[String] {
        &self.treatment_names
    }

    pub fn cells(&self) -> &CellEncoding {
        &self.cells
    }

    pub fn cell_index(&self) -> &[usize] {
        &self.cells.index
    }

    pub fn cell_labels(&self) -> &[String] {
        &self.cells.labels
    }

    pub fn w_dummies(&self) -> &DMatrix<f64> {
        &self.cells.dummies
    }

    pub fn cluster(&self) -> &[u64] {
        &self.cluster
    }

    pub fn extra_controls(&self) -> Option<(&DMatrix<f64>, &[String])> {
        self.extra_controls.as_ref().map(|(m, n)| (m, n.as_slice()))
    }

    /// `D = 1(z >= 0)`; observations at the cutoff are treated.
    pub fn above(&self, i: usize) -> bool {
        self.z[i] >= 0.0
    }

    /// Cluster ids under the requested grouping.
    pub fn cluster_ids(&self, by: ClusterBy) -> Vec<u64> {
        match by {
            ClusterBy::Observation => (0..self.n() as u64).collect(),
            ClusterBy::Column => self.cluster.clone(),
            ClusterBy::Running => self.z.iter().map(|z| (z + 0.0).to_bits()).collect(),
        }
    }
}

/// Which restriction on effect heterogeneity the estimator imposes.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    /// Effects do not vary across cells.
    Homogeneous,
    /// Effects may vary with a discrete stratifier `R`; one coefficient
    /// block per stratum.
    ConditionalOnR { strata: Vec<usize>, labels: Vec<String> },
    /// Effects linear in the columns of `w_tilde` (n x c).
    Parametric { w_tilde: DMatrix<f64>, names: Vec<String> },
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Homogeneous => "homogeneous",
            ModelSpec::ConditionalOnR { .. } => "conditional",
            ModelSpec::Parametric { .. } => "parametric",
        }
    }

    /// Checks shapes against `ds` and the instrument-count constraint
    /// `d (1 + c) <= m + 1` for the parametric model.
    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        match self {
            ModelSpec::Homogeneous => Ok(()),
            ModelSpec::ConditionalOnR { strata, labels } => {
                if strata.len() != ds.n() {
                    return Err(Error::LengthMismatch {
                        what: "strata",
                        expected: ds.n(),
                        found: strata.len(),
                    });
                }
                let mut seen = vec![false; labels.len()];
                for (row, &s) in strata.iter().enumerate() {
                    match seen.get_mut(s) {
                        Some(flag) => *flag = true,
                        None => {
                            return Err(Error::InvalidConfig(format!(
                                "row {row} has stratum index {s} outside 0..{}",
                                labels.len()
                            )))
                        }
                    }
                }
                if let Some(s) = seen.iter().position(|v| !v) {
                    return Err(Error::InvalidConfig(format!(
                        "stratum '{}' has no observations",
                        labels[s]
                    )));
                }
                Ok(())
            }
            ModelSpec::Parametric { w_tilde, names } => {
                if w_tilde.nrows() != ds.n() || w_tilde.ncols() != names.len() {
                    return Err(Error::LengthMismatch {
                        what: "parametric effect modifiers",
                        expected: ds.n(),
                        found: w_tilde.nrows(),
                    });
                }
                let k = ds.d() * (1 + w_tilde.ncols());
                if k > ds.m() + 1 {
                    return Err(Error::UnderIdentified {
                        instruments: ds.m() + 1,
                        endogenous: k,
                    });
                }
                Ok(())
            }
        }
    }
}

/// Estimation settings shared by every estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationConfig {
    pub kernel: KernelKind,
    pub bandwidth: f64,
    pub cluster_by: ClusterBy,
    pub rcond_threshold: f64,
    /// Floor on jump magnitudes treated as zero by the identification screens.
    pub jump_tol: f64,
}

impl EstimationConfig {
    pub fn new(kernel: KernelKind, bandwidth: f64) -> Self {
        EstimationConfig {
            kernel,
            bandwidth,
            cluster_by: ClusterBy::Observation,
            rcond_threshold: 1e-10,
            jump_tol: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::InvalidBandwidth(self.bandwidth));
        }
        if !(self.rcond_threshold > 0.0 && self.rcond_threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rcond threshold {} outside (0, 1)",
                self.rcond_threshold
            )));
        }
        if !(self.jump_tol >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "jump tolerance {} is negative",
                self.jump_tol
            )));
        }
        Ok(())
    }
}

/// Per-cell observation counts inside the bandwidth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSupport {
    pub cell: usize,
    pub label: String,
    pub n_left: usize,
    pub n_right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Rows where some `x[i, j] < x[i, j + 1]`.
    pub monotonicity_violations: Vec<usize>,
    pub cell_support: Vec<CellSupport>,
    /// Names of columns without variation.
    pub constant_columns: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.monotonicity_violations.is_empty() && self.warnings.is_empty()
    }
}

/// Structural checks; never fails. Support is counted for `-h <= z < 0` and
/// `0 <= z <= h`.
pub fn validate_dataset(ds: &Dataset, bandwidth: f64) -> ValidationReport {
    let d = ds.d();
    let x = ds.x();
    let monotonicity_violations: Vec<usize> = (0..ds.n())
        .filter(|&i| (0..d.saturating_sub(1)).any(|j| x[(i, j)] < x[(i, j + 1)]))
        .collect();

    let mut support: Vec<CellSupport> = ds
        .cell_labels()
        .iter()
        .enumerate()
        .map(|(cell, label)| CellSupport {
            cell,
            label: label.clone(),
            n_left: 0,
            n_right: 0,
        })
        .collect();
    for (i, &z) in ds.z().iter().enumerate() {
        if z.abs() > bandwidth {
            continue;
        }
        let s = &mut support[ds.cell_index()[i]];
        if z >= 0.0 {
            s.n_right += 1;
        } else {
            s.n_left += 1;
        }
    }

    let mut warnings = Vec::new();
    for s in &support {
        if s.n_right == 0 {
            warnings.push(format!("cell '{}' has no observations with 0 <= z <= h", s.label));
        }
        if s.n_left == 0 {
            warnings.push(format!("cell '{}' has no observations with -h <= z < 0", s.label));
        }
    }
    if !monotonicity_violations.is_empty() {
        warnings.push(format!(
            "{} rows violate cumulative treatment ordering",
            monotonicity_violations.len()
        ));
    }

    let mut constant_columns = Vec::new();
    if is_constant(ds.y().iter().copied()) {
        constant_columns.push(String::from("outcome"));
    }
    for j in 0..d {
        if is_constant(x.column(j).iter().copied()) {
            constant_columns.push(ds.treatment_names()[j].clone());
        }
    }
    if let Some((m, names)) = ds.extra_controls() {
        for (j, name) in names.iter().enumerate() {
            if is_constant(m.column(j).iter().copied()) {
                constant_columns.push(name.clone());
            }
        }
    }
    for name in &constant_columns {
        warnings.push(format!("column '{name}' is constant"));
    }

    ValidationReport {
        monotonicity_violations,
        cell_support: support,
        constant_columns,
        warnings,
    }
}

fn is_constant(mut values: impl Iterator<Item = f64>) -> bool {
    match values.next() {
        Some(first) => values.all(|v| v == first),
        None => true,
    }
}
