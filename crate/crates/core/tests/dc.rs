mod common;

use common::{alignment_error, random_tridiag, reference_values, to_na};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tridc::dc::{base_solve, merge, split, top_merge_comparison, update_dense, update_hss};
use tridc::hss::{compress_randomized, ClusterTree, HssOptions};
use tridc::jacobi::jacobi_eigh;
use tridc::matgen::{
    clement_spectrum, gen_clement, gen_hermite, gen_toeplitz211, toeplitz211_spectrum,
};
use tridc::secular::{
    lowner_reweight, normalize_rankone, solve_secular, CauchyEigvecs, SecularSystem,
};
use tridc::{
    solve, verify, DcOptions, DenseMatrix, EigenDecomposition, FlopCounter, PathChoice,
    PathOverride, SymTridiagonal,
};

fn forced(path: PathOverride, leaf: usize) -> DcOptions {
    DcOptions {
        path,
        leaf_size: leaf,
        switch_threshold: 2 * leaf,
        seed: 3,
        ..DcOptions::default()
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn split_reconstructs_exactly() {
    let t = random_tridiag(37, 5);
    for k in [1, 18, 36] {
        let (t1, t2, b) = split(&t, k).unwrap();
        let mut m = DenseMatrix::zeros(37, 37);
        m.set_block(0, 0, &t1.to_dense());
        m.set_block(k, k, &t2.to_dense());
        for (i, j) in [(k - 1, k - 1), (k - 1, k), (k, k - 1), (k, k)] {
            m.set(i, j, m.get(i, j) + b);
        }
        assert_eq!(m, t.to_dense());
    }
}

#[test]
fn two_by_two_merge_matches_base_case() {
    let t = SymTridiagonal::new(vec![2.0, 2.0], vec![1.0]).unwrap();
    let (t1, t2, b) = split(&t, 1).unwrap();
    let (e, stats) = merge(
        &base_solve(&t1, None),
        &base_solve(&t2, None),
        b,
        &DcOptions::default(),
        0,
        0,
        1,
    )
    .unwrap();
    let base = base_solve(&t, None);
    assert!(max_diff(&e.values, &base.values) <= 4.0 * f64::EPSILON);
    for j in 0..2 {
        let s = if e.vectors.get(0, j) * base.vectors.get(0, j) < 0.0 {
            -1.0
        } else {
            1.0
        };
        for i in 0..2 {
            assert!((e.vectors.get(i, j) - s * base.vectors.get(i, j)).abs() <= 4.0 * f64::EPSILON);
        }
    }
    assert_eq!(stats.n_merge, 2);
}

#[test]
fn clement_64_paths_agree() {
    let t = gen_clement(64).unwrap();
    for leaf in [128, 8] {
        let (ed, sd) = solve(&t, &forced(PathOverride::ForceDense, leaf)).unwrap();
        let (eh, sh) = solve(&t, &forced(PathOverride::ForceHss, leaf)).unwrap();
        assert_eq!(sd.merges.len(), 1);
        assert_eq!(sh.top_merge().unwrap().path, PathChoice::Hss);
        assert!(max_diff(&ed.values, &eh.values) <= 1e-13);
        let err = alignment_error(&ed.values, &ed.vectors, &eh.vectors, 1e-10);
        assert!(err <= 1e-12, "leaf {leaf}: {err:e}");
    }
}

#[test]
fn toeplitz211_128_spectrum() {
    let (e, _) = solve(&gen_toeplitz211(128).unwrap(), &DcOptions::default()).unwrap();
    assert!(max_diff(&e.values, &toeplitz211_spectrum(128)) <= 1e-12);
}

#[test]
fn toeplitz211_2000_spectrum_and_orthogonality() {
    let t = gen_toeplitz211(2000).unwrap();
    let (e, _) = solve(&t, &DcOptions::default()).unwrap();
    let m = verify(&t, &e).unwrap();
    eprintln!("toeplitz211 n=2000: {m:?}");
    assert!(max_diff(&e.values, &toeplitz211_spectrum(2000)) <= 1e-12);
    assert!(m.orthogonality <= 5e-13);
}

#[test]
fn clement_spectrum_matches() {
    let (e, _) = solve(&gen_clement(200).unwrap(), &DcOptions::default()).unwrap();
    assert!(max_diff(&e.values, &clement_spectrum(200)) <= 1e-9);
}

#[test]
fn random_tridiagonal_against_jacobi() {
    let t = random_tridiag(150, 42);
    let (e, _) = solve(&t, &DcOptions::default()).unwrap();
    let (jv, _) = jacobi_eigh(&t.to_dense(), None);
    let fro = t.frobenius_norm();
    assert!(max_diff(&e.values, &jv) <= 1e-12 * fro);
    assert!(max_diff(&e.values, &reference_values(&t)) <= 1e-12 * fro);
    assert!(verify(&t, &e).unwrap().residual <= 1e-12);
}

#[test]
fn update_dense_everything_deflated() {
    let q1 = jacobi_eigh(&random_tridiag(3, 1).to_dense(), None).1;
    let q2 = jacobi_eigh(&random_tridiag(2, 2).to_dense(), None).1;
    let outcome = normalize_rankone(&[0.5, -1.0, 2.0, 0.1, 0.2], &[0.0; 5], 1.0, 8.0).unwrap();
    assert_eq!(outcome.k, 0);
    let f = FlopCounter::new();
    let out = update_dense(&q1, &q2, &outcome, None, &f).unwrap();
    let mut w = DenseMatrix::zeros(5, 5);
    w.set_block(0, 0, &q1);
    w.set_block(3, 3, &q2);
    assert_eq!(out, w.select_cols(&outcome.perm));
    assert_eq!(f.get(), 0);
}

#[test]
fn update_dense_without_deflation() {
    let q1 = jacobi_eigh(&random_tridiag(4, 3).to_dense(), None).1;
    let q2 = jacobi_eigh(&random_tridiag(4, 4).to_dense(), None).1;
    let d = [0.0, 0.3, 0.7, 1.0, 1.4, 2.0, 2.2, 3.0];
    let z: Vec<f64> = (0..8).map(|i| 0.2 + 0.05 * i as f64).collect();
    let outcome = normalize_rankone(&d, &z, 0.8, 8.0).unwrap();
    assert_eq!(outcome.k, 8);
    let roots = solve_secular(&outcome.system, None).unwrap();
    let zhat = lowner_reweight(&outcome.system, &roots, None).unwrap();
    let c = CauchyEigvecs::new(&outcome.system, &zhat, &roots, None);
    let f = FlopCounter::new();
    let out = update_dense(&q1, &q2, &outcome, Some(&c), &f).unwrap();
    let mut w = DenseMatrix::zeros(8, 8);
    w.set_block(0, 0, &q1);
    w.set_block(4, 4, &q2);
    let expect = w.select_cols(&outcome.perm).matmul(&c.to_dense());
    assert!(out.sub(&expect).max_abs() <= 1e-15);
}

fn random_merge(n: usize, seed: u64) -> (EigenDecomposition, EigenDecomposition, f64) {
    let t = random_tridiag(n, seed);
    let (t1, t2, b) = split(&t, n / 2).unwrap();
    let o = DcOptions::default();
    (solve(&t1, &o).unwrap().0, solve(&t2, &o).unwrap().0, b)
}

#[test]
fn random_merge_200_is_orthogonal() {
    let (l, r, b) = random_merge(200, 9);
    let (e, _) = merge(&l, &r, b, &DcOptions::default(), 0, 0, 0).unwrap();
    let u = to_na(&e.vectors);
    let g = u.transpose() * &u - nalgebra::DMatrix::identity(200, 200);
    assert!(g.amax() <= 1e-13, "{:e}", g.amax());
}

#[test]
fn update_hss_matches_dense_on_random_merge() {
    let (l, r, b) = random_merge(300, 17);
    let o = forced(PathOverride::ForceHss, 16);
    let (eh, sh) = merge(&l, &r, b, &o, 0, 0, 5).unwrap();
    let (ed, _) = merge(&l, &r, b, &forced(PathOverride::ForceDense, 16), 0, 0, 5).unwrap();
    assert_eq!(sh.path, PathChoice::Hss);
    assert!(sh.hss_rank.unwrap() > 0);
    assert_eq!(eh.values, ed.values);
    assert!(alignment_error(&ed.values, &ed.vectors, &eh.vectors, 1e-10) <= 1e-10);
    // Reach the public entry point directly too.
    let d: Vec<f64> = l.values.iter().chain(&r.values).copied().collect();
    let z: Vec<f64> = (0..150)
        .map(|j| l.vectors.get(149, j))
        .chain((0..150).map(|j| r.vectors.get(0, j)))
        .collect();
    let outcome = normalize_rankone(&d, &z, b, 8.0).unwrap();
    let roots = solve_secular(&outcome.system, None).unwrap();
    let zhat = lowner_reweight(&outcome.system, &roots, None).unwrap();
    let c = CauchyEigvecs::new(&outcome.system, &zhat, &roots, None);
    let (out, diag) = update_hss(
        &l.vectors,
        &r.vectors,
        &outcome,
        &c,
        &o.hss_options(1),
        &FlopCounter::new(),
    )
    .unwrap();
    assert_eq!((out.rows(), out.cols()), (300, 300));
    assert!(diag.samples > 0);
}

fn fig2_system(n: usize) -> (SecularSystem, Vec<f64>, Vec<tridc::secular::SecularRoot>) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let d: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
    let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let nz = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let z: Vec<f64> = z.iter().map(|v| v / nz).collect();
    let outcome = tridc::secular::deflate(&d, &z, 1.0, 8.0).unwrap();
    assert_eq!(outcome.k, n, "setup must not deflate");
    let sys = outcome.system;
    let roots = solve_secular(&sys, None).unwrap();
    let zhat = lowner_reweight(&sys, &roots, None).unwrap();
    (sys, zhat, roots)
}

#[test]
fn cauchy_eigenvectors_are_off_diagonally_low_rank() {
    let (sys, zhat, roots) = fig2_system(1000);
    let c = CauchyEigvecs::new(&sys, &zhat, &roots, None);
    let q = c.to_dense();
    let block = to_na(&q.block(0, 500, 500, 1000));
    let sv = block.singular_values();
    let mut s: Vec<f64> = sv.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    eprintln!("sigma_100 / sigma_1 = {:e}", s[99] / s[0]);
    assert!(s[99] / s[0] <= 1e-10);
    let tree = ClusterTree::new(1000, 128).unwrap();
    let h = compress_randomized(&c, &tree, &HssOptions::default()).unwrap();
    eprintln!("fig2 hss rank {}", h.hss_rank());
    assert!(h.hss_rank() <= 200);
    let err = h.to_dense().sub(&q).frobenius_norm() / q.frobenius_norm();
    assert!(err <= 1e-13, "{err:e}");
}

#[test]
fn verify_detects_corruption() {
    let t = SymTridiagonal::new(vec![2.0, 2.0], vec![1.0]).unwrap();
    let mut e = base_solve(&t, None);
    let m = verify(&t, &e).unwrap();
    assert!(m.orthogonality <= 4.0 * f64::EPSILON && m.ascending);
    e.vectors.col_mut(0).iter_mut().for_each(|v| *v *= 1.01);
    let m = verify(&t, &e).unwrap();
    assert!(
        (m.orthogonality - 0.0201).abs() < 1e-3,
        "{}",
        m.orthogonality
    );
}

#[test]
fn identity_matrix() {
    let t = SymTridiagonal::new(vec![1.0; 70], vec![0.0; 69]).unwrap();
    let (e, _) = solve(&t, &DcOptions::default()).unwrap();
    assert!(e.values.iter().all(|&v| v == 1.0));
    let m = verify(&t, &e).unwrap();
    assert_eq!(m.residual, 0.0);
}

#[test]
fn near_identity_deflates_heavily() {
    let n = 1000;
    let mut off = vec![0.0; n - 1];
    off[n.div_ceil(2) - 1] = 0.25;
    let t = SymTridiagonal::new(vec![1.0; n], off).unwrap();
    let (e, stats) = solve(&t, &DcOptions::default()).unwrap();
    let top = stats.top_merge().unwrap();
    assert!(top.deflation_fraction > 0.9, "{}", top.deflation_fraction);
    assert!(verify(&t, &e).unwrap().orthogonality <= 5e-13);
}

#[test]
fn flop_totals_are_consistent() {
    let t = gen_hermite(300).unwrap();
    let (_, s) = solve(&t, &forced(PathOverride::Auto, 32)).unwrap();
    let sum: u64 = s
        .merges
        .iter()
        .map(|m| m.flops_secular + m.flops_update)
        .sum();
    assert_eq!(s.flops_total, sum + s.flops_base);
    assert!(s.flops_base > 0);
    assert!(s.merges.iter().any(|m| m.path == PathChoice::Hss));
}

#[test]
fn solve_is_deterministic() {
    let t = gen_clement(400).unwrap();
    let o = forced(PathOverride::ForceHss, 32);
    let (e1, s1) = solve(&t, &o).unwrap();
    let (e2, s2) = solve(&t, &o).unwrap();
    assert_eq!(e1, e2);
    assert_eq!(s1, s2);
}

#[test]
fn single_entry_matrix() {
    let t = SymTridiagonal::new(vec![-3.5], vec![]).unwrap();
    let (e, s) = solve(&t, &DcOptions::default()).unwrap();
    assert_eq!(e.values, vec![-3.5]);
    assert!(s.merges.is_empty());
}

#[test]
fn top_merge_comparison_reports_both_paths() {
    let t = gen_clement(512).unwrap();
    let (d, h) = top_merge_comparison(&t, &forced(PathOverride::Auto, 64)).unwrap();
    assert_eq!((d.path, h.path), (PathChoice::Dense, PathChoice::Hss));
    assert_eq!(d.k, h.k);
    eprintln!(
        "clement 512 top merge: dense {} hss {} (k {}, rank {:?})",
        d.flops_update, h.flops_update, d.k, h.hss_rank
    );
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, failure_persistence: None, ..ProptestConfig::default() })]
    #[test]
    fn random_tridiagonals_small(n in 1usize..90, seed in 0u64..10_000, base in 2usize..12) {
        let t = random_tridiag(n, seed);
        let o = DcOptions { base_size: base, ..DcOptions::default() };
        let (e, s) = solve(&t, &o).unwrap();
        let fro = t.frobenius_norm().max(f64::MIN_POSITIVE);
        prop_assert!(max_diff(&e.values, &reference_values(&t)) <= 1e-12 * fro);
        let m = verify(&t, &e).unwrap();
        prop_assert!(m.ascending);
        prop_assert!(m.orthogonality <= 1e-13);
        prop_assert!(m.residual <= 1e-12);
        for j in 0..n {
            let norm = e.vectors.col(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() <= 4.0 * n as f64 * f64::EPSILON);
        }
        for mstat in &s.merges {
            prop_assert!((0.0..=1.0).contains(&mstat.deflation_fraction));
        }
    }
}
