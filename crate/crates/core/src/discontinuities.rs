//! Cell-wise local linear discontinuities and the identification objects
//! built from them.
//!
//! For every covariate cell the jumps of the treatment indicators
//! (`delta_x`) and of the outcome (`delta_y`) at the cutoff are estimated by
//! separate kernel-weighted linear fits on each side. From these the
//! relevance matrix `M = sum_l p_l delta_x(l) delta_x(l)'`, the separating
//! weights `omega(l) = M^{-1} delta_x(l) delta_x(l)'` and the plug-in
//! estimator `M^{-1} sum_l p_l delta_x(l) delta_y(l)` follow.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, EstimationConfig};
use crate::error::{Error, Result, Side};
use crate::kernels::weights_vector;
use crate::linalg::{sqrt, SymEigen};

/// Estimated jump at the cutoff with a naive heteroskedasticity-robust
/// standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub estimate: f64,
    pub se_naive: f64,
}

struct SideFit {
    intercept: f64,
    var: f64,
}

/// Weighted linear fit `v = a + b z` on one side; returns `a` and its HC0
/// variance.
fn side_fit(values: &[f64], z: &[f64], weights: &[f64], rows: &[usize], cell: usize, side: Side) -> Result<SideFit> {
    let unusable = Error::CellUnusable { cell, side };
    let (mut sw, mut swz, mut swv) = (0.0, 0.0, 0.0);
    for &i in rows {
        sw += weights[i];
        swz += weights[i] * z[i];
        swv += weights[i] * values[i];
    }
    if rows.len() < 2 || !(sw > 0.0) {
        return Err(unusable);
    }
    let zbar = swz / sw;
    let vbar = swv / sw;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &i in rows {
        let dz = z[i] - zbar;
        sxx += weights[i] * dz * dz;
        sxy += weights[i] * dz * (values[i] - vbar);
    }
    let spread = rows.iter().fold(0.0_f64, |a, &i| a.max((z[i] - zbar).abs()));
    // All z equal (up to rounding) leaves the slope unidentified.
    if !(sxx > sw * spread * spread * 1e-24) || spread == 0.0 {
        return Err(unusable);
    }
    let slope = sxy / sxx;
    let intercept = vbar - slope * zbar;
    let mut var = 0.0;
    for &i in rows {
        let c = 1.0 / sw - zbar * (z[i] - zbar) / sxx;
        let e = values[i] - intercept - slope * z[i];
        let g = weights[i] * c * e;
        var += g * g;
    }
    Ok(SideFit { intercept, var })
}

/// Rows of `mask` with positive weight, split by side of the cutoff.
fn split_rows(z: &[f64], weights: &[f64], mask: impl Fn(usize) -> bool) -> (Vec<usize>, Vec<usize>) {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for i in 0..z.len() {
        if weights[i] > 0.0 && mask(i) {
            if z[i] >= 0.0 {
                right.push(i);
            } else {
                left.push(i);
            }
        }
    }
    (left, right)
}

fn distinct_count(z: &[f64], rows: &[usize]) -> usize {
    let mut v: Vec<f64> = rows.iter().map(|&i| z[i]).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

/// Local linear jump of `values` at zero within the rows selected by `mask`.
///
/// `cell` only labels errors.
pub fn cell_jump(
    values: &[f64],
    z: &[f64],
    weights: &[f64],
    mask: impl Fn(usize) -> bool,
    cell: usize,
) -> Result<Jump> {
    let (left, right) = split_rows(z, weights, mask);
    for (rows, side) in [(&left, Side::Left), (&right, Side::Right)] {
        if distinct_count(z, rows) < 2 {
            return Err(Error::CellUnusable { cell, side });
        }
    }
    let l = side_fit(values, z, weights, &left, cell, Side::Left)?;
    let r = side_fit(values, z, weights, &right, cell, Side::Right)?;
    Ok(Jump {
        estimate: r.intercept - l.intercept,
        se_naive: sqrt(l.var + r.var),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEstimate {
    pub cell: usize,
    pub label: String,
    pub delta_x: Vec<f64>,
    pub se_x: Vec<f64>,
    pub delta_y: f64,
    pub se_y: f64,
    pub p_hat: f64,
    pub n_left: usize,
    pub n_right: usize,
    pub weight_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedCell {
    pub cell: usize,
    pub label: String,
    pub side: Side,
    /// Share of the total kernel weight carried by the cell.
    pub weight_share: f64,
}

/// First-stage and reduced-form jumps for every usable cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTable {
    pub d: usize,
    pub cells: Vec<CellEstimate>,
    pub dropped: Vec<DroppedCell>,
}

impl CellTable {
    /// Builds a table from known jumps, for oracles and population targets.
    /// Probabilities are normalized to sum to one.
    pub fn from_jumps(delta_x: &[Vec<f64>], delta_y: &[f64], probs: &[f64]) -> Result<Self> {
        let q = delta_x.len();
        if q == 0 {
            return Err(Error::NoUsableCells);
        }
        let d = delta_x[0].len();
        if delta_y.len() != q || probs.len() != q || delta_x.iter().any(|v| v.len() != d) {
            return Err(Error::LengthMismatch {
                what: "cell jumps",
                expected: q,
                found: delta_y.len().min(probs.len()),
            });
        }
        let total: f64 = probs.iter().sum();
        if !(total > 0.0) || probs.iter().any(|p| *p < 0.0) {
            return Err(Error::InvalidConfig(String::from(
                "cell probabilities must be nonnegative with positive sum",
            )));
        }
        let cells = (0..q)
            .map(|l| CellEstimate {
                cell: l,
                label: alloc::format!("cell{l}"),
                delta_x: delta_x[l].clone(),
                se_x: vec![0.0; d],
                delta_y: delta_y[l],
                se_y: 0.0,
                p_hat: probs[l] / total,
                n_left: 0,
                n_right: 0,
                weight_sum: probs[l],
            })
            .collect();
        Ok(CellTable {
            d,
            cells,
            dropped: Vec::new(),
        })
    }

    pub fn q_usable(&self) -> usize {
        self.cells.len()
    }

    pub fn find(&self, cell: usize) -> Option<&CellEstimate> {
        self.cells.iter().find(|c| c.cell == cell)
    }

    /// Kernel-weight share of the dropped cells.
    pub fn dropped_share(&self) -> f64 {
        self.dropped.iter().map(|c| c.weight_share).sum()
    }
}

/// Applies [`cell_jump`] to the outcome and every treatment indicator in
/// each cell; cells without support on both sides are dropped and the
/// remaining kernel-weighted probabilities renormalized.
pub fn cell_table(ds: &Dataset, cfg: &EstimationConfig) -> Result<CellTable> {
    cfg.validate()?;
    let weights = weights_vector(cfg.kernel, cfg.bandwidth, ds.z())?;
    cell_table_with_weights(ds, &weights)
}

/// [`cell_table`] with caller-supplied observation weights.
pub fn cell_table_with_weights(ds: &Dataset, weights: &[f64]) -> Result<CellTable> {
    if weights.len() != ds.n() {
        return Err(Error::LengthMismatch {
            what: "weights",
            expected: ds.n(),
            found: weights.len(),
        });
    }
    let z = ds.z();
    let cells = ds.cell_index();
    let d = ds.d();
    let x_cols: Vec<Vec<f64>> = (0..d).map(|j| ds.x().column(j).iter().copied().collect()).collect();

    let mut mass = vec![0.0; ds.q()];
    for i in 0..ds.n() {
        if weights[i] > 0.0 {
            mass[cells[i]] += weights[i];
        }
    }
    let total: f64 = mass.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NoPositiveWeights);
    }

    let mut usable = Vec::new();
    let mut dropped = Vec::new();
    for (l, label) in ds.cell_labels().iter().enumerate() {
        let in_cell = |i: usize| cells[i] == l;
        let fit = (|| -> Result<CellEstimate> {
            let jy = cell_jump(ds.y(), z, weights, in_cell, l)?;
            let mut delta_x = Vec::with_capacity(d);
            let mut se_x = Vec::with_capacity(d);
            for col in &x_cols {
                let jx = cell_jump(col, z, weights, in_cell, l)?;
                delta_x.push(jx.estimate);
                se_x.push(jx.se_naive);
            }
            let (left, right) = split_rows(z, weights, in_cell);
            Ok(CellEstimate {
                cell: l,
                label: label.clone(),
                delta_x,
                se_x,
                delta_y: jy.estimate,
                se_y: jy.se_naive,
                p_hat: 0.0,
                n_left: left.len(),
                n_right: right.len(),
                weight_sum: mass[l],
            })
        })();
        match fit {
            Ok(c) => usable.push(c),
            Err(Error::CellUnusable { side, .. }) => dropped.push(DroppedCell {
                cell: l,
                label: label.clone(),
                side,
                weight_share: mass[l] / total,
            }),
            Err(e) => return Err(e),
        }
    }
    if usable.is_empty() {
        return Err(Error::NoUsableCells);
    }
    let usable_mass: f64 = usable.iter().map(|c| c.weight_sum).sum();
    for c in &mut usable {
        c.p_hat = c.weight_sum / usable_mass;
    }
    Ok(CellTable {
        d,
        cells: usable,
        dropped,
    })
}

/// Relevance matrix, its spectrum and, when well conditioned, the
/// separating weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TwlateWeights {
    pub m_hat: DMatrix<f64>,
    /// Eigenvalues of the symmetrized `m_hat`, ascending.
    pub eigenvalues: Vec<f64>,
    pub min_eigenvalue: f64,
    pub rcond: f64,
    pub rank: usize,
    pub passed: bool,
    m_inv: Option<DMatrix<f64>>,
    omega: Vec<DMatrix<f64>>,
}

impl TwlateWeights {
    pub fn m_inverse(&self) -> Result<&DMatrix<f64>> {
        self.m_inv.as_ref().ok_or(Error::RelevanceFailed {
            rcond: self.rcond,
            min_eigenvalue: self.min_eigenvalue,
        })
    }
}

fn outer(v: &[f64]) -> DMatrix<f64> {
    let d = v.len();
    DMatrix::from_fn(d, d, |r, c| v[r] * v[c])
}

/// `M = sum_l p_l delta_x(l) delta_x(l)'` with its spectrum. Relevance
/// fails when `rcond < rcond_threshold`; failure is recorded rather than
/// raised.
pub fn relevance(ct: &CellTable, rcond_threshold: f64) -> TwlateWeights {
    let d = ct.d;
    let mut m_hat = DMatrix::zeros(d, d);
    for c in &ct.cells {
        m_hat += outer(&c.delta_x) * c.p_hat;
    }
    let eig = SymEigen::new(&m_hat);
    let rcond = eig.rcond();
    let passed = d > 0 && rcond >= rcond_threshold && eig.min() > 0.0;
    let (m_inv, omega) = if passed {
        let inv = eig.inverse();
        let omega = ct.cells.iter().map(|c| &inv * outer(&c.delta_x)).collect();
        (Some(inv), omega)
    } else {
        (None, Vec::new())
    };
    TwlateWeights {
        m_hat,
        min_eigenvalue: eig.min(),
        rank: eig.rank(),
        eigenvalues: eig.values,
        rcond,
        passed,
        m_inv,
        omega,
    }
}

/// Per-cell weight matrices `omega(l)`, aligned with `ct.cells`.
pub fn twlate_weights(tw: &TwlateWeights) -> Result<&[DMatrix<f64>]> {
    tw.m_inverse()?;
    Ok(&tw.omega)
}

/// `M^{-1} sum_l p_l delta_x(l) delta_y(l)`.
pub fn plugin_estimator(ct: &CellTable, tw: &TwlateWeights) -> Result<DVector<f64>> {
    let inv = tw.m_inverse()?;
    let mut rhs = DVector::zeros(ct.d);
    for c in &ct.cells {
        rhs += DVector::from_column_slice(&c.delta_x) * (c.p_hat * c.delta_y);
    }
    Ok(inv * rhs)
}

/// Outcome of the single-cell ratio screen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RatioLate {
    Identified { value: f64 },
    NotIdentified { own_jump: f64, max_other_jump: f64 },
}

impl RatioLate {
    pub fn value(&self) -> Option<f64> {
        match self {
            RatioLate::Identified { value } => Some(*value),
            RatioLate::NotIdentified { .. } => None,
        }
    }
}

fn max_other(delta_x: &[f64], j: usize) -> f64 {
    delta_x
        .iter()
        .enumerate()
        .filter(|(s, _)| *s != j)
        .fold(0.0_f64, |a, (_, v)| a.max(v.abs()))
}

/// Effect of indicator `j` (0-based) in `cell` as `delta_y / delta_x[j]`,
/// available only when every other indicator has no jump in that cell.
pub fn ratio_late(ct: &CellTable, cell: usize, j: usize, tol: f64) -> Result<RatioLate> {
    let c = ct.find(cell).ok_or(Error::CellUnusable { cell, side: Side::Left })?;
    if j >= ct.d {
        return Err(Error::InvalidConfig(alloc::format!(
            "treatment index {j} outside 0..{}",
            ct.d
        )));
    }
    let own = c.delta_x[j];
    let other = max_other(&c.delta_x, j);
    if other <= tol && own.abs() > tol {
        Ok(RatioLate::Identified { value: c.delta_y / own })
    } else {
        Ok(RatioLate::NotIdentified {
            own_jump: own.abs(),
            max_other_jump: other,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityViolation {
    pub cell: usize,
    pub label: String,
    pub weight: f64,
    pub max_other_jump: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub feasible: bool,
    /// Every weight is zero (within tolerance).
    pub trivial: bool,
    pub violations: Vec<FeasibilityViolation>,
}

/// Whether scalar cell weights on indicator `j` define an identified
/// weighted average: every cell with nonzero weight must have no jump in
/// the other indicators. `weights` align with `ct.cells`.
pub fn wlate_feasibility(ct: &CellTable, weights: &[f64], j: usize, tol: f64) -> Result<Feasibility> {
    if weights.len() != ct.cells.len() {
        return Err(Error::LengthMismatch {
            what: "cell weights",
            expected: ct.cells.len(),
            found: weights.len(),
        });
    }
    if j >= ct.d {
        return Err(Error::InvalidConfig(alloc::format!(
            "treatment index {j} outside 0..{}",
            ct.d
        )));
    }
    let violations: Vec<FeasibilityViolation> = ct
        .cells
        .iter()
        .zip(weights)
        .filter(|(_, w)| w.abs() > tol)
        .filter_map(|(c, &w)| {
            let other = max_other(&c.delta_x, j);
            (other > tol).then(|| FeasibilityViolation {
                cell: c.cell,
                label: c.label.clone(),
                weight: w,
                max_other_jump: other,
            })
        })
        .collect();
    Ok(Feasibility {
        feasible: violations.is_empty(),
        trivial: weights.iter().all(|w| w.abs() <= tol),
        violations,
    })
}

/// Basis of directions orthogonal to `delta_x`: `delta_x[k] e_1 -
/// delta_x[0] e_k` for `k = 2..d`. Adding any of them to a solution of
/// `delta_y = beta' delta_x` leaves the cell's equation satisfied.
pub fn null_directions(delta_x: &[f64]) -> Vec<Vec<f64>> {
    let d = delta_x.len();
    (1..d)
        .map(|k| {
            let mut v = vec![0.0; d];
            v[0] = delta_x[k];
            v[k] = -delta_x[0];
            v
        })
        .collect()
}

/// Residual `delta_y - beta' delta_x` of one cell's identifying equation.
pub fn identifying_residual(delta_y: f64, delta_x: &[f64], beta: &[f64]) -> f64 {
    delta_y - delta_x.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CellEncoding;
    use crate::kernels::KernelKind;
    use alloc::format;

    fn grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn jump_exact_on_linear_data() {
        let z = grid(41, -1.0, 1.0);
        let v: Vec<f64> = z
            .iter()
            .map(|&z| 2.0 + 0.5 * z + if z >= 0.0 { 3.0 } else { 0.0 })
            .collect();
        for k in KernelKind::ALL {
            for h in [0.15, 0.5, 1.0, 3.0] {
                let w = weights_vector(k, h, &z).unwrap();
                let j = cell_jump(&v, &z, &w, |_| true, 0).unwrap();
                assert!((j.estimate - 3.0).abs() < 1e-12, "{k} h={h}: {}", j.estimate);
                assert!(j.se_naive < 1e-10);
            }
        }
        let c = vec![7.5; z.len()];
        let w = weights_vector(KernelKind::Triangular, 0.7, &z).unwrap();
        assert!(cell_jump(&c, &z, &w, |_| true, 0).unwrap().estimate.abs() < 1e-13);
    }

    #[test]
    fn jump_quadratic_matches_normal_equations() {
        // Independent route: solve the 2x2 normal equations per side directly.
        let z = grid(21, -1.0, 1.0);
        let v: Vec<f64> = z.iter().map(|z| 1.0 + z * z).collect();
        let w = weights_vector(KernelKind::Uniform, 1.0, &z).unwrap();
        let side = |pos: bool| {
            let (mut a, mut b, mut c, mut r0, mut r1) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..z.len() {
                if (z[i] >= 0.0) == pos && w[i] > 0.0 {
                    a += w[i];
                    b += w[i] * z[i];
                    c += w[i] * z[i] * z[i];
                    r0 += w[i] * v[i];
                    r1 += w[i] * z[i] * v[i];
                }
            }
            (c * r0 - b * r1) / (a * c - b * b)
        };
        let oracle = side(true) - side(false);
        let j = cell_jump(&v, &z, &w, |_| true, 0).unwrap();
        assert!((j.estimate - oracle).abs() < 1e-12);
        // Left side lacks z = 0, so the fitted intercepts differ slightly.
        assert!(j.estimate.abs() < 0.2);
    }

    #[test]
    fn jump_needs_two_points_per_side() {
        let z = [-0.5, 0.1, 0.2, 0.3];
        let v = [0.0; 4];
        let w = [1.0; 4];
        assert_eq!(
            cell_jump(&v, &z, &w, |_| true, 4),
            Err(Error::CellUnusable {
                cell: 4,
                side: Side::Left
            })
        );
        let z = [-0.5, -0.5, 0.1, 0.2];
        assert_eq!(
            cell_jump(&v, &z, &w, |_| true, 1),
            Err(Error::CellUnusable {
                cell: 1,
                side: Side::Left
            })
        );
    }

    fn two_cell_dataset() -> Dataset {
        let z = grid(20, -1.0, 1.0);
        let mut zs = Vec::new();
        let mut cells = Vec::new();
        let mut x = Vec::new();
        let mut y = Vec::new();
        let dx = [[1.0, 0.0], [0.0, 1.0]];
        let dy = [0.5, -0.3];
        for l in 0..2 {
            for &zi in &z {
                let d = if zi >= 0.0 { 1.0 } else { 0.0 };
                zs.push(zi);
                cells.push(l);
                // Fractional "indicators" are fine for jump estimation.
                x.push(0.2 + 0.1 * zi + dx[l][0] * d * 0.5);
                x.push(0.1 + 0.05 * zi + dx[l][1] * d * 0.5);
                y.push(1.0 + 0.3 * zi + dy[l] * d);
            }
        }
        let n = zs.len();
        let enc = CellEncoding::from_indices(cells, vec!["a".into(), "b".into()]).unwrap();
        Dataset::new(y, &zs, 0.0, DMatrix::from_row_slice(n, 2, &x), enc).unwrap()
    }

    #[test]
    fn cell_table_recovers_noiseless_jumps() {
        let ds = two_cell_dataset();
        let ct = cell_table(&ds, &EstimationConfig::new(KernelKind::Triangular, 2.0)).unwrap();
        assert_eq!(ct.q_usable(), 2);
        let c0 = &ct.cells[0];
        assert!((c0.delta_x[0] - 0.5).abs() < 1e-12 && c0.delta_x[1].abs() < 1e-12);
        assert!((c0.delta_y - 0.5).abs() < 1e-12);
        assert!((ct.cells[1].delta_y + 0.3).abs() < 1e-12);
        let total: f64 = ct.cells.iter().map(|c| c.p_hat).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cell_table_drops_unsupported_cells() {
        let ds = two_cell_dataset();
        // Move cell "b" to the right side only.
        let keep: Vec<usize> = (0..ds.n())
            .filter(|&i| ds.cell_index()[i] == 0 || ds.z()[i] >= 0.0)
            .collect();
        let sub = ds.select_rows(&keep).unwrap();
        let ct = cell_table(&sub, &EstimationConfig::new(KernelKind::Uniform, 2.0)).unwrap();
        assert_eq!(ct.q_usable(), 1);
        assert_eq!(ct.dropped.len(), 1);
        assert_eq!(ct.dropped[0].side, Side::Left);
        assert_eq!(ct.cells[0].p_hat, 1.0);
        assert!(ct.dropped_share() > 0.0);
    }

    #[test]
    fn relevance_examples() {
        let ct = CellTable::from_jumps(&[vec![0.4, 0.2]], &[0.0], &[1.0]).unwrap();
        let tw = relevance(&ct, 1e-10);
        assert_eq!(tw.rank, 1);
        assert!(!tw.passed);
        assert!(twlate_weights(&tw).is_err());
        assert!(plugin_estimator(&ct, &tw).is_err());

        let ct = CellTable::from_jumps(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[0.5, -0.3], &[0.5, 0.5]).unwrap();
        let tw = relevance(&ct, 1e-10);
        assert!(tw.passed);
        assert!((tw.min_eigenvalue - 0.5).abs() < 1e-15);
        let om = twlate_weights(&tw).unwrap();
        assert!(
            (om[0].clone() - DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]))
                .abs()
                .max()
                < 1e-14
        );
        assert!(
            (om[1].clone() - DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.0]))
                .abs()
                .max()
                < 1e-14
        );
        let b = plugin_estimator(&ct, &tw).unwrap();
        assert!((b[0] - 0.5).abs() < 1e-14 && (b[1] + 0.3).abs() < 1e-14);
    }

    #[test]
    fn ratio_late_examples() {
        let ct = CellTable::from_jumps(
            &[vec![0.0, 0.3], vec![0.05, 0.3], vec![0.0, 0.0]],
            &[0.06, 0.06, 0.1],
            &[1.0, 1.0, 1.0],
        )
        .unwrap();
        let r = ratio_late(&ct, 0, 1, 1e-6).unwrap();
        assert!((r.value().unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(
            ratio_late(&ct, 1, 1, 1e-6).unwrap(),
            RatioLate::NotIdentified {
                own_jump: 0.3,
                max_other_jump: 0.05
            }
        );
        for j in 0..2 {
            assert!(ratio_late(&ct, 2, j, 1e-6).unwrap().value().is_none());
        }
        assert!(ratio_late(&ct, 9, 0, 1e-6).is_err());
    }

    #[test]
    fn feasibility_examples() {
        let ct = CellTable::from_jumps(&[vec![0.0, 0.4], vec![0.2, 0.4]], &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let f = wlate_feasibility(&ct, &[1.0, 0.0], 1, 1e-6).unwrap();
        assert!(f.feasible && !f.trivial);
        let f = wlate_feasibility(&ct, &[0.5, 0.5], 1, 1e-6).unwrap();
        assert!(!f.feasible);
        assert_eq!(f.violations[0].cell, 1);
        assert_eq!(f.violations[0].max_other_jump, 0.2);
        let f = wlate_feasibility(&ct, &[0.0, 0.0], 1, 1e-6).unwrap();
        assert!(f.feasible && f.trivial);
        assert!(wlate_feasibility(&ct, &[1.0], 1, 1e-6).is_err());
    }

    #[test]
    fn null_direction_leaves_residual_unchanged() {
        let dx = [0.3, -0.7, 0.2];
        let beta = [0.5, -0.3, 1.1];
        let dy = 0.25;
        let r0 = identifying_residual(dy, &dx, &beta);
        for n in null_directions(&dx) {
            let moved: Vec<f64> = beta.iter().zip(&n).map(|(b, v)| b + 2.5 * v).collect();
            assert!(
                (identifying_residual(dy, &dx, &moved) - r0).abs() < 1e-15,
                "{}",
                format!("{n:?}")
            );
        }
    }
}
