mod common;

use common::*;
use lrsketch::csanky::projection_rowspace;
use lrsketch::densela::{fro_sq, numerical_rank};
use lrsketch::sketch_scw::{row_sketch, sample_oblivious_sketch, sample_oblivious_sketch_with, scw, scw_alt, scw_closed_form_k1, scw_loss};
use lrsketch::{DenseMatrix, SparseSketch};
use proptest::prelude::*;
use rand::Rng;

/// `‖A‖²_F − Σ_{i≤k} σᵢ²(AΠ)` with `Π` a Gram–Schmidt projector onto the
/// row space of `SA` and the spectrum from Jacobi rotations.
fn oracle_loss(s: &SparseSketch, a: &DenseMatrix, k: usize) -> f64 {
    let sa = s.to_dense().matmul(a).unwrap();
    let q = orthonormal_columns(&sa.transpose(), 1e-10);
    let api = a.matmul(&q).unwrap().matmul(&q.transpose()).unwrap();
    let ev = jacobi_eigenvalues(&api.tmul(&api).unwrap());
    fro_sq(a) - ev.iter().take(k).sum::<f64>()
}

/// Normalized Gaussian `A` with a random oblivious sketch and `k ≤ m`.
fn instance(g: &mut impl Rng, max_nd: usize, max_m: usize) -> (DenseMatrix, SparseSketch, usize) {
    let n = g.random_range(1..=max_nd);
    let d = g.random_range(1..=max_nd);
    let m = g.random_range(1..=max_m.min(n));
    let s = g.random_range(1..=m);
    let k = g.random_range(1..=m);
    let a = gaussian(n, d, g);
    let a = a.scale(1.0 / fro_sq(&a).sqrt());
    (a, sample_oblivious_sketch_with(m, n, s, g).unwrap(), k)
}

#[test]
fn loss_matches_spectral_oracle() {
    let mut g = rng(21);
    for _ in 0..1000 {
        let (a, s, k) = instance(&mut g, 12, 6);
        let loss = scw_loss(&s, &a, k).unwrap();
        let oracle = oracle_loss(&s, &a, k);
        assert!((loss - oracle).abs() <= 1e-9, "{loss} vs {oracle}");
        assert!((-1e-12..=1.0 + 1e-12).contains(&loss));
    }
}

#[test]
fn alternative_formula_agrees() {
    let mut g = rng(22);
    for _ in 0..1000 {
        let (a, s, k) = instance(&mut g, 12, 6);
        let alt = fro_sq(&a.sub(&scw_alt(&a, k, &s).unwrap()).unwrap());
        assert!((scw_loss(&s, &a, k).unwrap() - alt).abs() <= 1e-8);
    }
}

#[test]
fn output_rank_is_at_most_k() {
    let mut g = rng(23);
    for _ in 0..300 {
        let (a, s, k) = instance(&mut g, 10, 6);
        assert!(numerical_rank(&scw(&a, k, &s).unwrap()).unwrap() <= k);
    }
}

#[test]
fn zero_sketch_returns_zero() {
    let a = gaussian(5, 4, &mut rng(24));
    let s = sample_oblivious_sketch(3, 5, 2, 1).unwrap().zeroed();
    assert_eq!(scw(&a, 2, &s).unwrap(), DenseMatrix::zeros(5, 4));
    assert_eq!(scw_alt(&a, 2, &s).unwrap(), DenseMatrix::zeros(5, 4));
    assert_eq!(scw_loss(&s, &a, 2).unwrap(), fro_sq(&a));
}

#[test]
fn rank_k_input_is_recovered() {
    let mut g = rng(25);
    for _ in 0..200 {
        let k = g.random_range(1..=3);
        let a = gaussian(10, k, &mut g).matmul(&gaussian(k, 8, &mut g)).unwrap();
        let s = sample_oblivious_sketch_with(k + 2, 10, 2, &mut g).unwrap();
        let sa = s.apply(&a).unwrap();
        if numerical_rank(&sa).unwrap() < k {
            continue;
        }
        assert!(scw_loss(&s, &a, k).unwrap() <= 1e-10 * fro_sq(&a));
    }
}

#[test]
fn truncation_is_vacuous_when_m_equals_k() {
    let mut g = rng(26);
    for _ in 0..200 {
        let k = g.random_range(1..=4);
        let a = gaussian(8, 6, &mut g);
        let s = sample_oblivious_sketch_with(k, 8, 1, &mut g).unwrap();
        let pi = projection_rowspace(&s.apply(&a).unwrap());
        assert!(max_abs_diff(&scw_alt(&a, k, &s).unwrap(), &a.matmul(&pi).unwrap()) < 1e-9);
    }
}

#[test]
fn appending_rows_never_hurts() {
    let mut g = rng(27);
    for _ in 0..500 {
        let (a, s1, k) = instance(&mut g, 10, 4);
        let s2 = sample_oblivious_sketch_with(g.random_range(1..=a.rows()), a.rows(), 1, &mut g).unwrap();
        let stacked = s1.stack(&s2).unwrap();
        assert!(scw_loss(&stacked, &a, k).unwrap() <= scw_loss(&s1, &a, k).unwrap() + 1e-8);
    }
}

#[test]
fn closed_form_branches() {
    let u = [1.0, 2.0, -1.0];
    let v = [0.5, -0.5];
    let a = DenseMatrix::from_fn(3, 2, |i, j| u[i] * v[j]);
    assert!(scw_closed_form_k1(&a, &[1.0, 0.0, 0.0]).unwrap().abs() < 1e-10);
    // wᵀu = 0 kills every column.
    assert_eq!(scw_closed_form_k1(&a, &[1.0, 0.0, 1.0]).unwrap(), fro_sq(&a));
    assert!(scw_closed_form_k1(&a, &[1.0, 0.0]).is_err());
}

#[test]
fn closed_form_matches_algorithm() {
    let mut g = rng(28);
    for _ in 0..1000 {
        let n = g.random_range(1..=10);
        let a = gaussian(n, g.random_range(1..=10), &mut g);
        let w: Vec<f64> = (0..n).map(|_| g.sample(rand_distr::StandardNormal)).collect();
        let cf = scw_closed_form_k1(&a, &w).unwrap();
        let alg = scw_loss(&row_sketch(&w), &a, 1).unwrap();
        assert!((cf - alg).abs() <= 1e-8 * (1.0 + fro_sq(&a)), "{cf} vs {alg}");
    }
}

#[test]
fn oblivious_sampler_contract() {
    let full = sample_oblivious_sketch(3, 7, 3, 5).unwrap();
    assert!(full.patterns().iter().all(|p| p == &[0, 1, 2]));
    assert_eq!(sample_oblivious_sketch(4, 9, 2, 8).unwrap(), sample_oblivious_sketch(4, 9, 2, 8).unwrap());
    assert!(sample_oblivious_sketch(5, 4, 1, 0).is_err());
    assert!(sample_oblivious_sketch(3, 4, 0, 0).is_err());
    assert!(sample_oblivious_sketch(3, 4, 4, 0).is_err());
    let s = sample_oblivious_sketch(5, 30, 3, 9).unwrap();
    assert!(s.values().iter().all(|v| v.abs() == 1.0));
    assert_eq!(s.to_dense().as_slice().iter().filter(|v| **v != 0.0).count(), 90);
}

#[test]
fn row_choice_is_uniform() {
    // m = 4, n = 100, s = 1 over 200 seeds: 400 cells with expectation 50,
    // so χ² has 300 degrees of freedom (mean 300, sd ≈ 24.5).
    let mut counts = vec![[0u32; 4]; 100];
    for seed in 0..200 {
        let s = sample_oblivious_sketch(4, 100, 1, seed).unwrap();
        for (col, c) in counts.iter_mut().enumerate() {
            c[s.pattern(col)[0]] += 1;
        }
    }
    let chi2: f64 = counts.iter().flatten().map(|&c| (f64::from(c) - 50.0).powi(2) / 50.0).sum();
    assert!(chi2 < 300.0 + 5.0 * 24.5, "χ² = {chi2}");
    let signs: f64 = (0..200).map(|seed| sample_oblivious_sketch(4, 100, 1, seed).unwrap().values().iter().sum::<f64>()).sum();
    assert!(signs.abs() < 5.0 * (20000f64).sqrt());
}

proptest! {
    #![proptest_config(config(200))]

    #[test]
    fn loss_is_bounded_by_input_energy(seed in any::<u64>()) {
        let (a, s, k) = instance(&mut rng(seed), 8, 5);
        let a = a.scale(3.0);
        let loss = scw_loss(&s, &a, k).unwrap();
        prop_assert!(loss >= -1e-12 && loss <= fro_sq(&a) + 1e-12);
    }

    #[test]
    fn pattern_survives_zero_values(seed in any::<u64>()) {
        let s = sample_oblivious_sketch(4, 9, 2, seed).unwrap();
        let z = s.with_values(vec![0.0; s.n_params()]).unwrap();
        prop_assert!(z.same_pattern(&s));
        prop_assert_eq!(z.patterns(), s.patterns());
    }
}
