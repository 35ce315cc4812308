mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rdmulti_core::discontinuities::{identifying_residual, null_directions};
use rdmulti_core::kernels::one_sided_moment;
use rdmulti_core::{
    build_design, cluster_covariance, decode_treatment, encode_cells, encode_treatment, estimate, generate, j_test,
    plugin_estimator, relevance, twlate_weights, weighted_2sls, CellTable, Dataset, DgpSpec, EstimationConfig,
    KernelKind, ModelSpec,
};

fn kind() -> impl Strategy<Value = KernelKind> {
    prop_oneof![
        Just(KernelKind::Uniform),
        Just(KernelKind::Triangular),
        Just(KernelKind::Epanechnikov)
    ]
}

/// Random cell table: `q` cells of `d` jumps with outcome jumps generated
/// from cell-specific effects.
fn table(max_d: usize, max_q: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>)> {
    (1..=max_d, 1..=max_q).prop_flat_map(|(d, q)| {
        (
            prop::collection::vec(prop::collection::vec(-1.0..1.0f64, d), q),
            prop::collection::vec(prop::collection::vec(-2.0..2.0f64, d), q),
            prop::collection::vec(0.05..1.0f64, q),
        )
    })
}

fn delta_y(dx: &[Vec<f64>], betas: &[Vec<f64>]) -> Vec<f64> {
    dx.iter()
        .zip(betas)
        .map(|(x, b)| x.iter().zip(b).map(|(a, c)| a * c).sum())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_symmetric_with_unit_mass(k in kind(), u in -1.5..1.5f64) {
        prop_assert_eq!(k.evaluate(u), k.evaluate(-u));
        prop_assert!(k.evaluate(u) >= 0.0);
        let mass = integrate(&|t| k.evaluate(t), -1.0, 1.0, 1e-13);
        prop_assert!((mass - 1.0).abs() < 1e-10);
    }

    #[test]
    fn kernel_moments_match_quadrature(k in kind(), l in 0u32..5, sq in any::<bool>()) {
        let f = |t: f64| {
            let v = k.evaluate(t);
            t.powi(l as i32) * if sq { v * v } else { v }
        };
        let num = integrate(&f, 0.0, 1.0, 1e-14);
        prop_assert!((num - one_sided_moment(k, l, sq)).abs() < 1e-10);
    }

    #[test]
    fn treatment_roundtrip(levels in prop::collection::btree_set(-50i64..50, 2..6),
                           picks in prop::collection::vec(any::<prop::sample::Index>(), 1..40)) {
        let levels: Vec<i64> = levels.into_iter().collect();
        let t: Vec<i64> = picks.iter().map(|p| levels[p.index(levels.len())]).collect();
        let x = encode_treatment(&t, &levels).unwrap();
        prop_assert_eq!(x.ncols(), levels.len() - 1);
        for i in 0..t.len() {
            for j in 1..x.ncols() {
                prop_assert!(x[(i, j)] <= x[(i, j - 1)]);
            }
        }
        prop_assert_eq!(decode_treatment(&x, &levels), t);
    }

    #[test]
    fn cell_encoding_ignores_row_order(a in prop::collection::vec(0u8..3, 2..30), b in prop::collection::vec(0u8..2, 30),
                                       seed in any::<u64>()) {
        let n = a.len();
        let ca: Vec<String> = a.iter().map(|v| format!("a{v}")).collect();
        let cb: Vec<String> = b[..n].iter().map(|v| format!("b{v}")).collect();
        let enc = encode_cells(&[&ca[..], &cb[..]], 64).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut r = rng(seed);
        use rand::seq::SliceRandom;
        perm.shuffle(&mut r);
        let pa: Vec<String> = perm.iter().map(|&i| ca[i].clone()).collect();
        let pb: Vec<String> = perm.iter().map(|&i| cb[i].clone()).collect();
        let enc2 = encode_cells(&[&pa[..], &pb[..]], 64).unwrap();
        prop_assert_eq!(&enc.labels, &enc2.labels);
        for (k, &i) in perm.iter().enumerate() {
            prop_assert_eq!(enc2.index[k], enc.index[i]);
        }
        prop_assert_eq!(enc.dummies.ncols(), enc.labels.len() - 1);
    }

    #[test]
    fn separation_identity((dx, betas, probs) in table(4, 6)) {
        let dy = delta_y(&dx, &betas);
        let ct = CellTable::from_jumps(&dx, &dy, &probs).unwrap();
        let tw = relevance(&ct, 1e-8);
        let d = ct.d;
        prop_assert!(tw.rank <= d.min(ct.q_usable()));
        if tw.passed {
            let omegas = twlate_weights(&tw).unwrap();
            let mut sum = DMatrix::zeros(d, d);
            let mut mix = DVector::zeros(d);
            for (l, om) in omegas.iter().enumerate() {
                sum += om * ct.cells[l].p_hat;
                mix += om * DVector::from_column_slice(&betas[l]) * ct.cells[l].p_hat;
            }
            let tol = 1e-9 / tw.rcond.max(1e-6);
            prop_assert!((sum - DMatrix::identity(d, d)).abs().max() < tol);
            let plug = plugin_estimator(&ct, &tw).unwrap();
            prop_assert!((plug - mix).abs().max() < tol * (1.0 + betas.iter().flatten().fold(0.0f64, |a, b| a.max(b.abs()))));
        }
    }

    #[test]
    fn plugin_equivariance((dx, betas, probs) in table(3, 6), a in 0.1..5.0f64, shift in prop::collection::vec(-1.0..1.0f64, 3)) {
        let dy = delta_y(&dx, &betas);
        let ct = CellTable::from_jumps(&dx, &dy, &probs).unwrap();
        let tw = relevance(&ct, 1e-6);
        prop_assume!(tw.passed);
        let base = plugin_estimator(&ct, &tw).unwrap();
        let d = ct.d;
        let dy2: Vec<f64> = dx.iter().zip(&dy).map(|(x, y)| {
            a * y + x.iter().zip(&shift).map(|(u, v)| u * v).sum::<f64>()
        }).collect();
        let ct2 = CellTable::from_jumps(&dx, &dy2, &probs).unwrap();
        let got = plugin_estimator(&ct2, &relevance(&ct2, 1e-6)).unwrap();
        let want = base * a + DVector::from_column_slice(&shift[..d]);
        prop_assert!((got - &want).abs().max() < 1e-7 * (1.0 + want.abs().max()));
    }

    #[test]
    fn null_directions_leave_residual_unchanged(dx in prop::collection::vec(-1.0..1.0f64, 2..6),
                                               t in -3.0..3.0f64, dy in -1.0..1.0f64) {
        let d = dx.len();
        let beta: Vec<f64> = (0..d).map(|j| 0.3 * j as f64 - 0.2).collect();
        let r0 = identifying_residual(dy, &dx, &beta);
        let dirs = null_directions(&dx);
        prop_assert_eq!(dirs.len(), d - 1);
        for v in dirs {
            let moved: Vec<f64> = beta.iter().zip(&v).map(|(b, e)| b + t * e).collect();
            prop_assert!((identifying_residual(dy, &dx, &moved) - r0).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn estimates_invariant_to_kernel_scale(seed in any::<u64>(), c in 0.01..100.0f64) {
        let mut r = rng(seed);
        let ds = random_dataset(&mut r, 80, 2, 3);
        let dm = build_design(&ds, &ModelSpec::Homogeneous, &EstimationConfig::new(KernelKind::Epanechnikov, 1.4)).unwrap();
        let scaled = dm.scaled_weights(c);
        let a = weighted_2sls(&dm, 1e-12);
        prop_assume!(a.is_ok());
        let a = a.unwrap();
        let b = weighted_2sls(&scaled, 1e-12).unwrap();
        for (x, y) in a.beta.iter().zip(&b.beta) {
            prop_assert!(rel_err(*y, *x) < 1e-9);
        }
        let va = cluster_covariance(&a, &dm, &dm.clusters).unwrap();
        let vb = cluster_covariance(&b, &scaled, &scaled.clusters).unwrap();
        prop_assert!(max_rel_err(&vb, &va) < 1e-9);
        let ja = j_test(&a, &dm, &dm.clusters, 1e-14).unwrap();
        let jb = j_test(&b, &scaled, &scaled.clusters, 1e-14).unwrap();
        prop_assert!(rel_err(jb.stat, ja.stat) < 1e-9);
    }

    #[test]
    fn affine_outcome_equivariance(seed in any::<u64>(), a in -5.0..5.0f64, b in 0.1..10.0f64) {
        let mut r = rng(seed);
        let ds = random_dataset(&mut r, 80, 2, 2);
        let cfg = EstimationConfig::new(KernelKind::Triangular, 1.5);
        let base = estimate(&ds, &ModelSpec::Homogeneous, &cfg);
        prop_assume!(base.is_ok());
        let base = base.unwrap();
        let y2: Vec<f64> = ds.y().iter().map(|y| a + b * y).collect();
        let ds2 = Dataset::new(y2, ds.z(), 0.0, ds.x().clone(), ds.cells().clone()).unwrap();
        let res = estimate(&ds2, &ModelSpec::Homogeneous, &cfg).unwrap();
        for j in 0..2 {
            prop_assert!(rel_err(res.beta[j], b * base.beta[j]) < 1e-9);
            prop_assert!(rel_err(res.se()[j], b * base.se()[j]) < 1e-9);
        }
        prop_assert!(rel_err(res.j.stat, base.j.stat) < 1e-8);
    }

    #[test]
    fn conditional_model_equals_stratum_fits(seed in any::<u64>()) {
        let mut r = rng(seed);
        let ds = random_dataset(&mut r, 240, 1, 2);
        // Strata assigned in blocks of six rows so every stratum keeps
        // every cell on both sides.
        let strata: Vec<usize> = (0..ds.n()).map(|i| (i / 6) % 2).collect();
        let cfg = EstimationConfig::new(KernelKind::Uniform, 2.0);
        let spec = ModelSpec::ConditionalOnR { strata: strata.clone(), labels: vec!["r0".into(), "r1".into()] };
        let joint = estimate(&ds, &spec, &cfg);
        prop_assume!(joint.is_ok());
        let joint = joint.unwrap();
        for s in 0..2 {
            let rows: Vec<usize> = (0..ds.n()).filter(|&i| strata[i] == s).collect();
            let sub = ds.select_rows(&rows).unwrap();
            let fit = estimate(&sub, &ModelSpec::Homogeneous, &cfg).unwrap();
            prop_assert!(rel_err(joint.beta[s], fit.beta[0]) < 1e-8,
                "stratum {}: {} vs {}", s, joint.beta[s], fit.beta[0]);
        }
    }

    #[test]
    fn generated_treatments_are_monotone(seed in any::<u64>()) {
        let dgp = DgpSpec::homogeneous(
            vec![0.3, 0.3, 0.4],
            vec![vec![0.4, 0.1], vec![0.5, 0.05], vec![0.3, 0.2]],
            vec![vec![0.3, 0.1], vec![0.1, 0.5], vec![0.2, 0.2]],
            &[0.5, -0.3],
            1.0,
        );
        let ds = generate(&dgp, 500, seed).unwrap();
        for i in 0..ds.n() {
            prop_assert!(ds.x()[(i, 1)] <= ds.x()[(i, 0)]);
        }
        let again = generate(&dgp, 500, seed).unwrap();
        prop_assert_eq!(ds.y(), again.y());
    }

    #[test]
    fn linear_designs_are_recovered_exactly(seed in any::<u64>(), b0 in -2.0..2.0f64, b1 in -2.0..2.0f64,
                                            sl in -1.0..1.0f64, sr in -1.0..1.0f64) {
        let mut dgp = DgpSpec::homogeneous(
            vec![0.3, 0.3, 0.4],
            vec![vec![0.4, 0.1], vec![0.5, 0.05], vec![0.3, 0.2]],
            vec![vec![0.3, 0.1], vec![0.1, 0.5], vec![0.2, 0.2]],
            &[b0, b1],
            0.0,
        );
        dgp.trend.slope_left = sl;
        dgp.trend.slope_right = sr;
        let ds = generate(&dgp, 600, seed).unwrap();
        let res = estimate(&ds, &ModelSpec::Homogeneous, &EstimationConfig::new(KernelKind::Triangular, 0.8)).unwrap();
        prop_assert!((res.beta[0] - b0).abs() < 1e-8);
        prop_assert!((res.beta[1] - b1).abs() < 1e-8);
    }
}

#[test]
fn sample_cell_frequencies_track_probabilities() {
    let probs = [0.15, 0.35, 0.5];
    let dgp = DgpSpec::homogeneous(
        probs.to_vec(),
        vec![vec![0.4], vec![0.5], vec![0.3]],
        vec![vec![0.3], vec![0.1], vec![0.2]],
        &[1.0],
        1.0,
    );
    let n = 200_000;
    let ds = generate(&dgp, n, 42).unwrap();
    for (l, p) in probs.iter().enumerate() {
        let freq = ds.cell_index().iter().filter(|&&c| c == l).count() as f64 / n as f64;
        let bound = 4.5 * (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() < bound, "cell {l}: {freq} vs {p}");
    }
}

#[test]
fn quadrature_reference_values() {
    assert!((one_sided_moment(KernelKind::Triangular, 2, false) - 1.0 / 12.0).abs() < 1e-15);
    assert!((one_sided_moment(KernelKind::Uniform, 1, true) - 0.125).abs() < 1e-15);
}
