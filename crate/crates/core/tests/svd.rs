mod support;

use diffembed_core::embedding::{embed, normalize_rates, truncated_svd, EmbedOptions, Normalization};
use diffembed_core::linalg::{CsrMatrix, DenseMatrix};
use diffembed_core::RateMatrix;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use support::*;

fn random_dense(r: &mut impl Rng, m: usize, n: usize) -> DenseMatrix {
    DenseMatrix::from_fn(m, n, |_, _| r.gen_range(-1.0..1.0))
}

fn oracle_singular_values(a: &DenseMatrix) -> Vec<f64> {
    let m = DMatrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)]);
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

fn tail_norm(sigma: &[f64], d: usize) -> f64 {
    sigma[d..].iter().map(|s| s * s).sum::<f64>().sqrt()
}

#[test]
fn top_ten_match_full_decomposition() {
    let mut r = rng(30);
    for _ in 0..5 {
        let a = random_dense(&mut r, 100, 100);
        let exact = oracle_singular_values(&a);
        let svd = truncated_svd(&CsrMatrix::from_dense(&a), 10, &mut r).unwrap();
        for k in 0..10 {
            assert!(rel_err(svd.sigma[k], exact[k]) <= 1e-6, "sigma_{k}: {} vs {}", svd.sigma[k], exact[k]);
        }
        let err = a.sub(&svd.reconstruct()).frobenius_norm();
        assert!(rel_err(err, tail_norm(&exact, 10)) <= 1e-6);
    }
}

#[test]
fn sparse_rectangular_input() {
    let mut r = rng(31);
    let triplets: Vec<(usize, usize, f64)> = (0..400)
        .map(|_| (r.gen_range(0..80), r.gen_range(0..50), r.gen_range(0.0..1.0)))
        .collect();
    let a = CsrMatrix::from_triplets(80, 50, triplets);
    let exact = oracle_singular_values(&a.to_dense());
    let svd = truncated_svd(&a, 8, &mut r).unwrap();
    for k in 0..8 {
        assert!(rel_err(svd.sigma[k], exact[k]) <= 1e-6);
    }
}

fn orthonormality_error(m: &DenseMatrix) -> f64 {
    let g = m.tmatmul(m);
    let mut worst: f64 = 0.0;
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

#[test]
fn embedding_rows_follow_node_permutation() {
    let mut r = rng(32);
    let n = 20;
    let rates = dense_rates(&mut r, n, 0.0..1.0);
    let perm: Vec<usize> = {
        let mut p: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(&mut p[..], &mut r);
        p
    };
    let mut permuted = RateMatrix::new(n);
    for ((i, j), a) in rates.iter() {
        permuted.set(perm[i], perm[j], a).unwrap();
    }
    let opts = EmbedOptions::default();
    let y = embed(&rates, 4, opts, &mut rng(1)).unwrap();
    let z = embed(&permuted, 4, opts, &mut rng(1)).unwrap();
    // singular vectors are unique up to sign per column
    for k in 0..4 {
        let sign = (0..n)
            .map(|v| y.row(v)[k] * z.row(perm[v])[k])
            .sum::<f64>()
            .signum();
        for v in 0..n {
            assert!((y.row(v)[k] - sign * z.row(perm[v])[k]).abs() < 1e-7);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn factors_are_orthonormal(seed in any::<u64>(), m in 2usize..30, n in 2usize..30, d in 1usize..6) {
        let mut r = rng(seed);
        let d = d.min(m).min(n);
        let a = random_dense(&mut r, m, n);
        let svd = truncated_svd(&CsrMatrix::from_dense(&a), d, &mut r).unwrap();
        prop_assert!(orthonormality_error(&svd.u) < 1e-9);
        prop_assert!(orthonormality_error(&svd.v) < 1e-9);
        prop_assert!(svd.sigma.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn reconstruction_error_shrinks_with_rank(seed in any::<u64>(), n in 3usize..20) {
        let mut r = rng(seed);
        let rates = dense_rates(&mut r, n, 0.0..1.0);
        let a = normalize_rates(&rates, Normalization::Row);
        let dense = a.to_dense();
        let mut prev = f64::INFINITY;
        for d in 1..=n {
            let svd = truncated_svd(&a, d, &mut rng(seed)).unwrap();
            let err = dense.sub(&svd.reconstruct()).frobenius_norm();
            prop_assert!(err <= prev + 1e-9, "d={}: {} > {}", d, err, prev);
            prev = err;
        }
        prop_assert!(prev < 1e-8);
    }

    #[test]
    fn row_normalized_rows_sum_to_one(seed in any::<u64>(), n in 2usize..15) {
        let mut r = rng(seed);
        let mut rates = RateMatrix::new(n);
        for _ in 0..3 * n {
            let (i, j) = (r.gen_range(0..n), r.gen_range(0..n));
            if i != j {
                rates.set(i, j, r.gen_range(0.001..10.0)).unwrap();
            }
        }
        let a = normalize_rates(&rates, Normalization::Row);
        for i in 0..n {
            let s: f64 = a.row(i).map(|(_, v)| v).sum();
            prop_assert!(s == 0.0 || (s - 1.0).abs() < 1e-12);
        }
    }
}
