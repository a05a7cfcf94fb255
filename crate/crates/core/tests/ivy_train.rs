mod common;

use common::*;
use lrsketch::densela::fro_sq;
use lrsketch::ivy_train::{empirical_loss, fd_sgd, few_shot_loss, safeguard, sgd_train, Dataset, TrainConfig};
use lrsketch::sketch_scw::{sample_oblivious_sketch, sample_oblivious_sketch_with, scw_loss};
use lrsketch::{DenseMatrix, SparseSketch};
use proptest::prelude::*;
use rand::Rng;

/// `Q₁·diag(σ)·Q₂ᵀ` with Gram–Schmidt factors, so the singular vectors are
/// known without a decomposition.
fn with_spectrum(n: usize, d: usize, sigma: &[f64], g: &mut impl Rng) -> (DenseMatrix, DenseMatrix) {
    let r = sigma.len();
    let q1 = orthonormal_columns(&gaussian(n, r, g), 1e-8);
    let q2 = orthonormal_columns(&gaussian(d, r, g), 1e-8);
    let a = q1.matmul(&DenseMatrix::diag(sigma)).unwrap().matmul(&q2.transpose()).unwrap();
    (a, q1)
}

fn cfg(epochs: usize, step_size: f64, batch_size: usize, seed: u64) -> TrainConfig {
    TrainConfig { epochs, step_size, batch_size, fd_step: 1e-5, seed }
}

#[test]
fn singleton_rank_k_with_m_equal_k() {
    let mut g = rng(31);
    for k in 1..=3 {
        let a = gaussian(6, k, &mut g).matmul(&gaussian(k, 5, &mut g)).unwrap();
        let data = Dataset::new(vec![a]).unwrap();
        // A perfect sketch exists only when the pattern reaches every row.
        let init = loop {
            let s = sample_oblivious_sketch_with(k, 6, 1, &mut g).unwrap();
            let used: std::collections::BTreeSet<usize> = s.patterns().iter().flatten().copied().collect();
            if used.len() == k {
                break s;
            }
        };
        let out = sgd_train(&init, &data, k, &cfg(20, 0.1, 1, 3)).unwrap();
        let (first, last) = (out.history[0], *out.history.last().unwrap());
        assert!(last <= 0.01 * first + 1e-12, "k={k}: {first} -> {last}");
    }
}

#[test]
fn single_row_sketch_reaches_best_direction() {
    // σ² = (0.7, 0.3) and k = m = 1: the optimum 0.3 is attained at w = u₁.
    let mut g = rng(32);
    let (a, _) = with_spectrum(6, 5, &[0.7f64.sqrt(), 0.3f64.sqrt()], &mut g);
    let data = Dataset::new(vec![a]).unwrap();
    let init = sample_oblivious_sketch(1, 6, 1, 4).unwrap();
    let out = sgd_train(&init, &data, 1, &cfg(300, 0.5, 1, 0)).unwrap();
    let (first, last) = (out.history[0], *out.history.last().unwrap());
    assert!(first > 0.35, "initial loss {first} already near the optimum");
    assert!(last - 0.3 <= 0.01 * (first - 0.3), "{first} -> {last}");
}

#[test]
fn fd_gradient_matches_four_point_stencil() {
    let mut g = rng(33);
    let mut checked = 0;
    for _ in 0..20 {
        let a = gaussian(8, 6, &mut g);
        let data = Dataset::new(vec![a.clone()]).unwrap();
        let s = sample_oblivious_sketch_with(3, 8, 2, &mut g).unwrap();
        let a = &data.matrices()[0];
        let f = |v: &[f64]| scw_loss(&s.with_values(v.to_vec()).unwrap(), a, 2).unwrap();
        // One full-batch step with unit step size exposes θ − ∇L.
        let theta = s.values().to_vec();
        let step = fd_sgd(theta.clone(), 1, &cfg(1, 1.0, 1, 0), "probe", |t, _| Ok(f(t))).unwrap();
        for j in 0..theta.len() {
            let fd = theta[j] - step.params[j];
            let h = 1e-3;
            let at = |dx: f64| {
                let mut t = theta.clone();
                t[j] += dx;
                f(&t)
            };
            let stencil = (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h);
            // A stencil disagreeing with a half-width one sits near a kink.
            let h2 = h / 2.0;
            let stencil2 = (-at(2.0 * h2) + 8.0 * at(h2) - 8.0 * at(-h2) + at(-2.0 * h2)) / (12.0 * h2);
            if (stencil - stencil2).abs() > 1e-6 * (1.0 + stencil.abs()) || stencil.abs() < 1e-6 {
                continue;
            }
            assert!((fd - stencil).abs() <= 1e-3 * stencil.abs(), "fd {fd} vs stencil {stencil}");
            checked += 1;
        }
    }
    assert!(checked > 200, "only {checked} smooth coordinates");
}

#[test]
fn training_is_deterministic() {
    let mut g = rng(34);
    let data = Dataset::new((0..6).map(|_| gaussian(8, 5, &mut g)).collect()).unwrap();
    let init = sample_oblivious_sketch(4, 8, 2, 9).unwrap();
    let c = cfg(3, 0.2, 2, 17);
    let a = sgd_train(&init, &data, 2, &c).unwrap();
    let b = sgd_train(&init, &data, 2, &c).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(a.sketch.values()), bits(b.sketch.values()));
    assert_eq!(bits(&a.history), bits(&b.history));
    let other = sgd_train(&init, &data, 2, &cfg(3, 0.2, 2, 18)).unwrap();
    assert_ne!(bits(a.sketch.values()), bits(other.sketch.values()));
}

#[test]
fn empirical_loss_examples() {
    let mut g = rng(35);
    let a = gaussian(7, 5, &mut g);
    let data = Dataset::new(vec![a]).unwrap();
    let s = sample_oblivious_sketch(3, 7, 1, 2).unwrap();
    assert_eq!(empirical_loss(&s, &data, 2).unwrap(), scw_loss(&s, &data.matrices()[0], 2).unwrap());
    // Every matrix shares one rank-2 row space, which any rank-2 SA spans.
    let basis = gaussian(2, 5, &mut g);
    let ranked = Dataset::new((0..5).map(|_| gaussian(7, 2, &mut g).matmul(&basis).unwrap()).collect()).unwrap();
    let s = sample_oblivious_sketch(2, 7, 2, 3).unwrap();
    assert!(empirical_loss(&s, &ranked, 2).unwrap() < 1e-12);
}

#[test]
fn few_shot_matches_known_factor() {
    let mut g = rng(36);
    for _ in 0..200 {
        let n = g.random_range(2..=8);
        let d = g.random_range(2..=8);
        let r = g.random_range(1..=n.min(d));
        let mut sigma: Vec<f64> = (0..r).map(|_| g.random_range(0.1..2.0)).collect();
        sigma.sort_by(|x, y| y.partial_cmp(x).unwrap());
        // Keep the top-k subspace well separated.
        for i in 1..r {
            sigma[i] = sigma[i].min(sigma[i - 1] * 0.8);
        }
        let (a, q1) = with_spectrum(n, d, &sigma, &mut g);
        let k = g.random_range(1..=r);
        let m = g.random_range(1..=n);
        let s = sample_oblivious_sketch_with(m, n, g.random_range(1..=m), &mut g).unwrap();
        let s = s.with_values((0..s.n_params()).map(|_| g.sample(rand_distr::StandardNormal)).collect()).unwrap();
        // ‖U_kᵀ(SᵀS − I)U‖_F = ‖(SᵀS − I)U_k‖_F since U is orthogonal.
        let sd = s.to_dense();
        let m_sym = sd.tmul(&sd).unwrap().sub(&DenseMatrix::identity(n)).unwrap();
        let uk = q1.select_columns(&(0..k).collect::<Vec<_>>());
        let oracle = fro_sq(&m_sym.matmul(&uk).unwrap());
        let got = few_shot_loss(&s, &a, k).unwrap();
        assert!((got - oracle).abs() <= 1e-9 * (1.0 + oracle), "{got} vs {oracle}");
    }
}

#[test]
fn safeguard_examples() {
    let s1 = sample_oblivious_sketch(3, 9, 2, 1).unwrap();
    let s2 = sample_oblivious_sketch(2, 9, 1, 2).unwrap();
    let st = safeguard(&s1, &s2).unwrap();
    assert_eq!((st.m(), st.n(), st.s()), (5, 9, 3));
    assert!(safeguard(&s1, &sample_oblivious_sketch(2, 8, 1, 2).unwrap()).is_err());
    let a = gaussian(9, 6, &mut rng(37));
    let with_zero = safeguard(&s1, &s2.zeroed()).unwrap();
    assert!((scw_loss(&with_zero, &a, 2).unwrap() - scw_loss(&s1, &a, 2).unwrap()).abs() < 1e-12);
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn pattern_is_immutable(seed in any::<u64>(), m in 1usize..5, s in 1usize..3, epochs in 0usize..3) {
        let s = s.min(m);
        let mut g = rng(seed);
        let data = Dataset::new((0..3).map(|_| gaussian(6, 4, &mut g)).collect()).unwrap();
        let init = sample_oblivious_sketch_with(m, 6, s, &mut g).unwrap();
        let out = sgd_train(&init, &data, 1, &cfg(epochs, 0.3, 2, seed)).unwrap();
        prop_assert!(out.sketch.same_pattern(&init));
        prop_assert_eq!(out.sketch.patterns(), init.patterns());
        prop_assert_eq!(out.history.len(), epochs + 1);
    }

    #[test]
    fn safeguard_never_hurts(seed in any::<u64>()) {
        let mut g = rng(seed);
        let n = g.random_range(2..=10);
        let a = gaussian(n, g.random_range(1..=10), &mut g);
        let m1 = g.random_range(1..=n);
        let m2 = g.random_range(1..=n);
        let k = g.random_range(1..=m1.min(m2));
        let s1: SparseSketch = sample_oblivious_sketch_with(m1, n, g.random_range(1..=m1), &mut g).unwrap();
        let s1 = s1.with_values((0..s1.n_params()).map(|_| g.sample(rand_distr::StandardNormal)).collect()).unwrap();
        let s2 = sample_oblivious_sketch_with(m2, n, g.random_range(1..=m2), &mut g).unwrap();
        let both = scw_loss(&safeguard(&s1, &s2).unwrap(), &a, k).unwrap();
        let best = scw_loss(&s1, &a, k).unwrap().min(scw_loss(&s2, &a, k).unwrap());
        prop_assert!(both <= best + 1e-8);
    }
}
