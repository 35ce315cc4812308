//! Test-only oracles: direct normal-equation algebra with LU inverses,
//! independent of the QR/Cholesky routes in the library.
#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdmulti_core::{CellEncoding, Dataset, DesignMatrices};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn inv(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().try_inverse().expect("oracle matrix invertible")
}

fn diag_w(dm: &DesignMatrices) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_vec(dm.weights.clone()))
}

pub struct OracleFit {
    pub coef: DVector<f64>,
    pub resid: DVector<f64>,
    pub xhat: DMatrix<f64>,
}

/// `b = (X'WZ (Z'WZ)^{-1} Z'WX)^{-1} X'WZ (Z'WZ)^{-1} Z'Wy`.
pub fn tsls(dm: &DesignMatrices) -> OracleFit {
    let w = diag_w(dm);
    let z = dm.exogenous();
    let x = dm.regressors();
    let y = DVector::from_vec(dm.y.clone());
    let zwz_inv = inv(&(z.transpose() * &w * &z));
    let xwz = x.transpose() * &w * &z;
    let a = &xwz * &zwz_inv * xwz.transpose();
    let rhs = &xwz * &zwz_inv * (z.transpose() * &w * &y);
    let coef = inv(&a) * rhs;
    let resid = &y - &x * &coef;
    let xhat = &z * &zwz_inv * (z.transpose() * &w * &x);
    OracleFit { coef, resid, xhat }
}

fn group_outer(scores: &DMatrix<f64>, clusters: &[u64]) -> (DMatrix<f64>, usize) {
    let k = scores.ncols();
    let mut sums: BTreeMap<u64, DVector<f64>> = BTreeMap::new();
    for (i, g) in clusters.iter().enumerate() {
        let e = sums.entry(*g).or_insert_with(|| DVector::zeros(k));
        *e += scores.row(i).transpose();
    }
    let mut b = DMatrix::zeros(k, k);
    for u in sums.values() {
        b += u * u.transpose();
    }
    (b, sums.len())
}

/// CR1 sandwich assembled from the textbook formula.
pub fn sandwich(dm: &DesignMatrices, clusters: &[u64]) -> DMatrix<f64> {
    let f = tsls(dm);
    let n = dm.n();
    let k = f.xhat.ncols();
    let mut scores = f.xhat.clone();
    for i in 0..n {
        let s = dm.weights[i] * f.resid[i];
        scores.row_mut(i).scale_mut(s);
    }
    let (b, g) = group_outer(&scores, clusters);
    let w = diag_w(dm);
    let a_inv = inv(&(f.xhat.transpose() * &w * &f.xhat));
    let c = (g as f64 / (g as f64 - 1.0)) * ((n as f64 - 1.0) / (n as f64 - k as f64));
    &a_inv * b * &a_inv * c
}

/// Two-step efficient GMM objective with the 2SLS-residual weighting matrix.
pub fn hansen_j(dm: &DesignMatrices, clusters: &[u64]) -> f64 {
    let f = tsls(dm);
    let z = dm.exogenous();
    let x = dm.regressors();
    let y = DVector::from_vec(dm.y.clone());
    let w = diag_w(dm);
    let mut contrib = z.clone();
    for i in 0..dm.n() {
        let s = dm.weights[i] * f.resid[i];
        contrib.row_mut(i).scale_mut(s);
    }
    let (omega, _) = group_outer(&contrib, clusters);
    let om_inv = inv(&omega);
    let zwx = z.transpose() * &w * &x;
    let zwy = z.transpose() * &w * &y;
    let b2 = inv(&(zwx.transpose() * &om_inv * &zwx)) * (zwx.transpose() * &om_inv * &zwy);
    let g = zwy - zwx * b2;
    (g.transpose() * om_inv * g)[(0, 0)]
}

fn wrss(target: &DVector<f64>, basis: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    let coef = inv(&(basis.transpose() * w * basis)) * (basis.transpose() * w * target);
    let e = target - basis * coef;
    (e.transpose() * w * e)[(0, 0)]
}

/// Partial F of the excluded instruments for endogenous column `j`.
pub fn partial_f(dm: &DesignMatrices, j: usize) -> f64 {
    let w = diag_w(dm);
    let t: DVector<f64> = dm.endogenous.column(j).into();
    let rss_u = wrss(&t, &dm.exogenous(), &w);
    let rss_r = wrss(&t, &dm.controls, &w);
    let l = dm.instruments.ncols() as f64;
    let df = (dm.n() - dm.exogenous().ncols()) as f64;
    ((rss_r - rss_u) / l) / (rss_u / df)
}

/// Weighted least-squares fitted values of `target` on `basis`.
pub fn wls_fitted(target: &DVector<f64>, basis: &DMatrix<f64>, weights: &[f64]) -> DVector<f64> {
    let w = DMatrix::from_diagonal(&DVector::from_vec(weights.to_vec()));
    let coef = inv(&(basis.transpose() * &w * basis)) * (basis.transpose() * &w * target);
    basis * coef
}

/// Random noisy design with `q = m + 1` cells; every cell gets at least
/// three observations on each side of the cutoff.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize, m: usize) -> Dataset {
    let q = m + 1;
    let mut z = Vec::with_capacity(n);
    let mut cells = Vec::with_capacity(n);
    let mut x = DMatrix::zeros(n, d);
    let mut y = Vec::with_capacity(n);
    let jumps: Vec<Vec<f64>> = (0..q)
        .map(|_| (0..d).map(|_| rng.random_range(0.1..0.5)).collect())
        .collect();
    for i in 0..n {
        let cell = (i / 2) % q;
        let side = i % 2 == 0;
        let zi: f64 = if side {
            rng.random_range(0.0..1.0)
        } else {
            -rng.random_range(0.01..1.0)
        };
        let u: f64 = rng.random();
        let mut t = 0.3 + 0.1 * zi;
        for j in 0..d {
            // cumulative thresholds decrease in j
            let thr = t + if side { jumps[cell][j] } else { 0.0 };
            if u <= thr {
                x[(i, j)] = 1.0;
            }
            t -= 0.12;
        }
        let eps: f64 = rng.random_range(-1.0..1.0);
        let xb: f64 = (0..d).map(|j| x[(i, j)] * (0.5 - 0.4 * j as f64)).sum();
        y.push(0.2 * cell as f64 + 0.7 * zi + xb + eps);
        z.push(zi);
        cells.push(cell);
    }
    let labels = (0..q).map(|c| format!("c{c}")).collect();
    Dataset::new(y, &z, 0.0, x, CellEncoding::from_indices(cells, labels).unwrap()).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

pub fn max_rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = b.abs().max().max(1e-300);
    (a - b).abs().max() / scale
}

/// Adaptive Simpson quadrature.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let m = 0.5 * (a + b);
        (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
    }
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let left = simpson(f, a, m);
        let right = simpson(f, m, b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, left, tol / 2.0, depth - 1) + rec(f, m, b, right, tol / 2.0, depth - 1)
    }
    rec(f, a, b, simpson(f, a, b), tol, 50)
}
