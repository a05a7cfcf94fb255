//! Learned sketches: fixed-pattern SGD on the empirical SCW loss,
//! safeguarding by stacking, and the few-shot loss.
//!
//! Gradients are central finite differences over the trainable values; the
//! same loop ([`fd_sgd`]) also trains AMG prolongation values.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::densela::{fro_sq, gaussian, orthonormal_completion, random_orthonormal_rows, svd, DenseMatrix};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::SeedStreams;
use crate::sketch_scw::{scw_loss, SparseSketch};

/// Tolerance on `fro_sq = 1` for already-normalized inputs.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub step_size: f64,
    pub batch_size: usize,
    /// Half-step of the central difference.
    pub fd_step: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 20, step_size: 0.05, batch_size: 8, fd_step: 1e-5, seed: 0 }
    }
}

impl TrainConfig {
    /// Every violated constraint, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            out.push(format!("step_size must be positive, got {}", self.step_size));
        }
        if self.batch_size == 0 {
            out.push("batch_size must be at least 1".into());
        }
        if !(self.fd_step > 0.0 && self.fd_step <= 1e-3) {
            out.push(format!("fd_step must lie in (0, 1e-3], got {}", self.fd_step));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }
}

/// A nonempty set of equally shaped matrices, each with unit squared
/// Frobenius norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    matrices: Vec<DenseMatrix>,
}

impl Dataset {
    /// Rescales every matrix to `fro_sq = 1`. Zero matrices are rejected.
    pub fn new(matrices: Vec<DenseMatrix>) -> Result<Self> {
        let Some(first) = matrices.first() else {
            return Err(Error::InvalidParameter("dataset is empty".into()));
        };
        let shape = first.shape();
        let mut out = Vec::with_capacity(matrices.len());
        for (i, a) in matrices.into_iter().enumerate() {
            if a.shape() != shape {
                return Err(Error::DimensionMismatch(format!("matrix {i} is {:?}, expected {shape:?}", a.shape())));
            }
            let f = fro_sq(&a);
            if f == 0.0 {
                return Err(Error::InvalidParameter(format!("matrix {i} is zero and cannot be normalized")));
            }
            out.push(if (f - 1.0).abs() <= NORMALIZATION_TOL { a } else { a.scale(1.0 / f.sqrt()) });
        }
        Ok(Self { matrices: out })
    }

    pub fn matrices(&self) -> &[DenseMatrix] {
        &self.matrices
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.matrices[0].shape()
    }

    /// First `n_train` matrices and the rest.
    pub fn split(&self, n_train: usize) -> Result<(Dataset, Dataset)> {
        if n_train == 0 || n_train >= self.len() {
            return Err(Error::InvalidParameter(format!("cannot split {} matrices at {n_train}", self.len())));
        }
        let (a, b) = self.matrices.split_at(n_train);
        Ok((Dataset { matrices: a.to_vec() }, Dataset { matrices: b.to_vec() }))
    }

    fn subset<'a>(&'a self, idx: &'a [usize]) -> impl Iterator<Item = &'a DenseMatrix> + 'a {
        idx.iter().map(|&i| &self.matrices[i])
    }
}

fn check_sketch(s: &SparseSketch, data: &Dataset) -> Result<()> {
    if s.n() != data.shape().0 {
        return Err(Error::DimensionMismatch(format!("sketch has {} columns, data has {} rows", s.n(), data.shape().0)));
    }
    Ok(())
}

/// Mean SCW loss over the dataset, evaluated concurrently.
pub fn empirical_loss(s: &SparseSketch, data: &Dataset, k: usize) -> Result<f64> {
    check_sketch(s, data)?;
    let losses = par::map_slice(data.matrices(), |a| scw_loss(s, a, k));
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / data.len() as f64)
}

fn batch_loss(s: &SparseSketch, data: &Dataset, idx: &[usize], k: usize) -> Result<f64> {
    let mut total = 0.0;
    for a in data.subset(idx) {
        total += scw_loss(s, a, k)?;
    }
    Ok(total / idx.len() as f64)
}

/// Parameters after training and the full-data loss before the first epoch
/// and after each epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdSgdOutcome {
    pub params: Vec<f64>,
    pub history: Vec<f64>,
}

/// Mini-batch SGD with central finite-difference gradients.
///
/// `loss(θ, batch)` is the mean loss over the item indices in `batch`. Each
/// epoch shuffles `0..n_items` with the stream `(stream, epoch)` of
/// `cfg.seed`. The gradient coordinates are evaluated concurrently but the
/// update is a single sequential write, so trajectories are bit-identical
/// across thread counts.
pub fn fd_sgd<L>(init: Vec<f64>, n_items: usize, cfg: &TrainConfig, stream: &str, loss: L) -> Result<FdSgdOutcome>
where
    L: Fn(&[f64], &[usize]) -> Result<f64> + Sync,
{
    cfg.validate()?;
    if n_items == 0 {
        return Err(Error::InvalidParameter("no training items".into()));
    }
    let seeds = SeedStreams::new(cfg.seed);
    let all: Vec<usize> = (0..n_items).collect();
    let checked = |theta: &[f64], idx: &[usize], what: &str| -> Result<f64> {
        let v = loss(theta, idx)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteLoss(format!("{what} evaluated to {v}")))
        }
    };

    let mut theta = init;
    let mut history = vec![checked(&theta, &all, "initial loss")?];
    let h = cfg.fd_step;
    for epoch in 0..cfg.epochs {
        let mut order = all.clone();
        order.shuffle(&mut seeds.indexed(stream, epoch as u64));
        for batch in order.chunks(cfg.batch_size) {
            let grad = par::map_indexed(theta.len(), |j| -> Result<f64> {
                let mut plus = theta.clone();
                plus[j] += h;
                let mut minus = theta.clone();
                minus[j] -= h;
                let lp = checked(&plus, batch, "perturbed loss")?;
                let lm = checked(&minus, batch, "perturbed loss")?;
                Ok((lp - lm) / (2.0 * h))
            });
            for (t, g) in theta.iter_mut().zip(grad) {
                *t -= cfg.step_size * g?;
            }
            if let Some(bad) = theta.iter().find(|t| !t.is_finite()) {
                return Err(Error::NonFiniteLoss(format!("parameter became {bad} in epoch {epoch}")));
            }
        }
        history.push(checked(&theta, &all, &format!("loss after epoch {epoch}"))?);
    }
    Ok(FdSgdOutcome { params: theta, history })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub sketch: SparseSketch,
    /// Empirical loss before training and after each epoch.
    pub history: Vec<f64>,
}

/// Train the values of `init` on `data`; the pattern never changes.
pub fn sgd_train(init: &SparseSketch, data: &Dataset, k: usize, cfg: &TrainConfig) -> Result<TrainOutcome> {
    check_sketch(init, data)?;
    let out = fd_sgd(init.values().to_vec(), data.len(), cfg, "sgd-shuffle", |theta, idx| {
        batch_loss(&init.with_values(theta.to_vec())?, data, idx, k)
    })?;
    Ok(TrainOutcome { sketch: init.with_values(out.params)?, history: out.history })
}

/// Stack a learned sketch on top of an oblivious one.
pub fn safeguard(learned: &SparseSketch, oblivious: &SparseSketch) -> Result<SparseSketch> {
    learned.stack(oblivious)
}

/// `‖U_kᵀ Sᵀ S U − I₀‖²_F` with `U` the full `n×n` left factor of `A`
/// (completed to an orthonormal basis) and `I₀ = [I_k | 0]`.
pub fn few_shot_loss(s: &SparseSketch, a: &DenseMatrix, k: usize) -> Result<f64> {
    let n = a.rows();
    if s.n() != n {
        return Err(Error::DimensionMismatch(format!("sketch has {} columns but A has {n} rows", s.n())));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k = {k} must lie in 1..={n}")));
    }
    let u = orthonormal_completion(&svd(a)?.u);
    let su = s.apply(&u)?;
    let suk = su.select_columns(&(0..k).collect::<Vec<_>>());
    let g = suk.tmul(&su)?;
    let mut loss = 0.0;
    for i in 0..k {
        for j in 0..n {
            let r = g[(i, j)] - if i == j { 1.0 } else { 0.0 };
            loss += r * r;
        }
    }
    Ok(loss)
}

/// Matrices `Q·C / ‖Q·C‖_F + noise·G / ‖G‖_F`, normalized, with a fixed
/// `n×k` orthonormal `Q` and fresh Gaussian `C` (k×d) and `G` (n×d).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikedDistribution {
    pub signal: DenseMatrix,
    pub d: usize,
    pub noise: f64,
}

impl SpikedDistribution {
    pub fn new<R: Rng + ?Sized>(n: usize, d: usize, k: usize, noise: f64, rng: &mut R) -> Result<Self> {
        if k == 0 || k > n || d == 0 {
            return Err(Error::InvalidParameter(format!("need 1 ≤ k ≤ n and d ≥ 1, got n={n}, d={d}, k={k}")));
        }
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise level {noise} must be non-negative")));
        }
        Ok(Self { signal: random_orthonormal_rows(k, n, rng).transpose(), d, noise })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DenseMatrix {
        let k = self.signal.cols();
        let c = gaussian(k, self.d, rng);
        let x = self.signal.matmul(&c).expect("shapes");
        let mut out = x.scale(1.0 / fro_sq(&x).sqrt());
        if self.noise > 0.0 {
            let g = DenseMatrix::from_fn(self.signal.rows(), self.d, |_, _| rng.sample(StandardNormal));
            out = out.add(&g.scale(self.noise / fro_sq(&g).sqrt())).expect("shapes");
        }
        out.scale(1.0 / fro_sq(&out).sqrt())
    }

    pub fn dataset<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Dataset> {
        Dataset::new((0..count).map(|_| self.sample(rng)).collect())
    }
}
