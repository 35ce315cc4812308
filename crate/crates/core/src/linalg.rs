//! Small dense linear-algebra helpers on top of `nalgebra`.
//!
//! Every solve goes through an orthogonal decomposition with an explicit
//! reciprocal-condition check so that rank problems surface as errors
//! instead of as huge coefficients.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Thin QR factorization of a tall matrix with a rank check.
#[derive(Debug, Clone)]
pub struct Qr {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    rcond: f64,
}

impl Qr {
    /// Factorizes `a` (n x k, n >= k) and fails if `sigma_min / sigma_max`
    /// falls below `rcond_threshold`.
    pub fn new(a: DMatrix<f64>, rcond_threshold: f64, what: &'static str) -> Result<Self> {
        let (n, k) = a.shape();
        if n < k {
            return Err(Error::TooFewObservations { n, k });
        }
        let qr = a.qr();
        let q = qr.q();
        let r = qr.r();
        let rcond = triangular_rcond(&r);
        if !(rcond >= rcond_threshold) {
            return Err(Error::Singular { what, rcond });
        }
        Ok(Qr { q, r, rcond })
    }

    pub fn rcond(&self) -> f64 {
        self.rcond
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// Least-squares coefficients `R^{-1} Q' b` for every column of `b`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let qtb = self.q.tr_mul(b);
        self.r
            .solve_upper_triangular(&qtb)
            .expect("rank checked at construction")
    }

    /// Orthogonal projection `Q Q' b` onto the column space.
    pub fn project(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        &self.q * self.q.tr_mul(b)
    }

    /// `(A'A)^{-1} = R^{-1} R^{-T}`.
    pub fn gram_inverse(&self) -> DMatrix<f64> {
        let k = self.r.ncols();
        let r_inv = self
            .r
            .solve_upper_triangular(&DMatrix::identity(k, k))
            .expect("rank checked at construction");
        &r_inv * r_inv.transpose()
    }
}

fn triangular_rcond(r: &DMatrix<f64>) -> f64 {
    if r.ncols() == 0 {
        return 1.0;
    }
    let sv = r.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if max > 0.0 && max.is_finite() {
        min / max
    } else {
        0.0
    }
}

/// Eigen-decomposition of the symmetric part of `m`, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn new(m: &DMatrix<f64>) -> Self {
        let sym = symmetrize(m);
        let n = sym.nrows();
        if n == 0 {
            return SymEigen {
                values: Vec::new(),
                vectors: DMatrix::zeros(0, 0),
            };
        }
        let eig = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        SymEigen { values, vectors }
    }

    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// `lambda_min / lambda_max`, clamped to `[0, 1]`; zero for a zero matrix.
    pub fn rcond(&self) -> f64 {
        let max = self.max();
        if max > 0.0 {
            (self.min() / max).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    /// Numerical rank with tolerance `n * eps * lambda_max * 16`.
    pub fn rank(&self) -> usize {
        let n = self.values.len();
        let scale = self.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if scale == 0.0 {
            return 0;
        }
        let tol = scale * (n as f64) * f64::EPSILON * 16.0;
        self.values.iter().filter(|&&v| v > tol).count()
    }

    /// `V diag(1/lambda) V'`; caller checks conditioning first.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for c in 0..n {
            let inv = 1.0 / self.values[c];
            scaled.column_mut(c).scale_mut(inv);
        }
        scaled * self.vectors.transpose()
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Inverse of a symmetric positive semidefinite matrix, refusing when
/// `lambda_min / lambda_max < rcond_threshold`.
pub fn spd_inverse(m: &DMatrix<f64>, rcond_threshold: f64, what: &'static str) -> Result<DMatrix<f64>> {
    let eig = SymEigen::new(m);
    let rcond = eig.rcond();
    if !(rcond >= rcond_threshold) || eig.min() <= 0.0 {
        return Err(Error::Singular { what, rcond });
    }
    Ok(eig.inverse())
}

/// Multiplies row `i` of `m` by `s[i]`.
pub fn scale_rows(m: &DMatrix<f64>, s: &[f64]) -> DMatrix<f64> {
    debug_assert_eq!(m.nrows(), s.len());
    let mut out = m.clone();
    for (i, &si) in s.iter().enumerate() {
        out.row_mut(i).scale_mut(si);
    }
    out
}

/// Column-wise concatenation of blocks with equal row counts.
pub fn hcat(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let n = blocks.first().map_or(0, |b| b.nrows());
    let k: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(n, k);
    let mut c0 = 0;
    for b in blocks {
        debug_assert_eq!(b.nrows(), n);
        out.view_mut((0, c0), (n, b.ncols())).copy_from(b);
        c0 += b.ncols();
    }
    out
}

pub fn column(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v)
}

pub fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}
