//! Two-level algebraic multigrid for `Ax = b`: Gauss–Seidel smoothing with
//! the lower triangle of `A`, Galerkin coarse correction through a
//! prolongation `P` (n×m), the closed-form error propagation, and the
//! learned-prolongation loss `‖Ax^{(q)} − b‖²`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::csanky::is_full_rank;
use crate::densela::{dot, norm2, DenseMatrix, Lu};
use crate::error::{Error, Result};
use crate::ivy_train::{fd_sgd, TrainConfig};
use crate::par;

/// Diagonal entries of `A` below this in magnitude make `L` singular.
pub const MIN_DIAGONAL: f64 = 1e-12;

/// Iterates with a larger Euclidean norm count as divergence.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmgProblem {
    pub a: DenseMatrix,
    pub b: Vec<f64>,
    /// n×m prolongation; only `pattern` positions are trainable.
    pub p: DenseMatrix,
    /// Row-major sorted `(row, col)` positions of `P`'s nonzero pattern.
    pub pattern: Vec<(usize, usize)>,
    pub s1: usize,
    pub s2: usize,
    pub x0: Vec<f64>,
}

impl AmgProblem {
    /// Validates shapes, the diagonal of `A`, and the coarse operator.
    pub fn new(a: DenseMatrix, b: Vec<f64>, p: DenseMatrix, s1: usize, s2: usize, x0: Vec<f64>) -> Result<Self> {
        let n = a.rows();
        if !a.is_square() || b.len() != n || x0.len() != n || p.rows() != n {
            return Err(Error::DimensionMismatch(format!(
                "A is {:?}, b has {}, x0 has {}, P is {:?}",
                a.shape(),
                b.len(),
                x0.len(),
                p.shape()
            )));
        }
        if p.cols() == 0 || p.cols() > n {
            return Err(Error::InvalidParameter(format!("coarse dimension {} must lie in 1..={n}", p.cols())));
        }
        let mut pattern = Vec::new();
        for i in 0..n {
            for j in 0..p.cols() {
                if p[(i, j)] != 0.0 {
                    pattern.push((i, j));
                }
            }
        }
        let prob = Self { a, b, p, pattern, s1, s2, x0 };
        check_diagonal(&prob.a)?;
        prob.coarse_operator()?;
        Ok(prob)
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn m(&self) -> usize {
        self.p.cols()
    }

    pub fn p_values(&self) -> Vec<f64> {
        self.pattern.iter().map(|&(i, j)| self.p[(i, j)]).collect()
    }

    /// Same problem with new values on the fixed pattern. Does not re-check
    /// the coarse operator; stepping does.
    pub fn with_p_values(&self, values: &[f64]) -> Result<Self> {
        if values.len() != self.pattern.len() {
            return Err(Error::DimensionMismatch(format!("{} values for {} pattern positions", values.len(), self.pattern.len())));
        }
        let mut out = self.clone();
        for (&(i, j), &v) in self.pattern.iter().zip(values) {
            out.p[(i, j)] = v;
        }
        Ok(out)
    }

    /// `PᵀAP`, rejected when it fails the free-coefficient rank test.
    pub fn coarse_operator(&self) -> Result<DenseMatrix> {
        let c = self.p.tmul(&self.a.matmul(&self.p)?)?;
        if !is_full_rank(&c)? {
            return Err(Error::Singular("coarse operator PᵀAP".into()));
        }
        Ok(c)
    }

    /// `x*` by elimination.
    pub fn exact_solution(&self) -> Result<Vec<f64>> {
        Ok(Lu::factor(&self.a)?.solve(&self.b))
    }
}

fn check_diagonal(a: &DenseMatrix) -> Result<()> {
    for i in 0..a.rows() {
        if a[(i, i)].abs() < MIN_DIAGONAL {
            return Err(Error::Singular(format!("diagonal entry {i} of A is {:e}", a[(i, i)])));
        }
    }
    Ok(())
}

/// Solve `L y = r` with `L` the lower triangle of `a` (diagonal included).
fn forward_substitute(a: &DenseMatrix, r: &[f64]) -> Vec<f64> {
    let n = a.rows();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let row = a.row(i);
        let s = r[i] - dot(&row[..i], &y[..i]);
        y[i] = s / row[i];
    }
    y
}

fn residual(a: &DenseMatrix, b: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    Ok(a.mul_vec(x)?.iter().zip(b).map(|(ax, bi)| bi - ax).collect())
}

fn axpy(x: &mut [f64], c: f64, y: &[f64]) {
    x.iter_mut().zip(y).for_each(|(a, b)| *a += c * b);
}

/// One Gauss–Seidel sweep `x + L⁻¹(b − Ax)`.
pub fn smoothing_sweep(a: &DenseMatrix, b: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    check_diagonal(a)?;
    let r = residual(a, b, x)?;
    let mut out = x.to_vec();
    axpy(&mut out, 1.0, &forward_substitute(a, &r));
    Ok(out)
}

/// `s1` sweeps, coarse correction `x + P(PᵀAP)⁻¹Pᵀ(b − Ax)`, `s2` sweeps.
pub fn amg_step_explicit(prob: &AmgProblem, x: &[f64]) -> Result<Vec<f64>> {
    let coarse = Lu::factor(&prob.coarse_operator()?)?;
    step_with(prob, &coarse, x)
}

fn step_with(prob: &AmgProblem, coarse: &Lu, x: &[f64]) -> Result<Vec<f64>> {
    let mut x = x.to_vec();
    for _ in 0..prob.s1 {
        x = smoothing_sweep(&prob.a, &prob.b, &x)?;
    }
    let r = residual(&prob.a, &prob.b, &x)?;
    let rc = prob.p.transpose().mul_vec(&r)?;
    let ec = coarse.solve(&rc);
    axpy(&mut x, 1.0, &prob.p.mul_vec(&ec)?);
    for _ in 0..prob.s2 {
        x = smoothing_sweep(&prob.a, &prob.b, &x)?;
    }
    Ok(x)
}

/// `I − L⁻¹A`.
pub fn smoother_error_matrix(a: &DenseMatrix) -> Result<DenseMatrix> {
    check_diagonal(a)?;
    let n = a.rows();
    let mut e = DenseMatrix::identity(n);
    for j in 0..n {
        let col = forward_substitute(a, &a.column(j));
        for i in 0..n {
            e[(i, j)] -= col[i];
        }
    }
    Ok(e)
}

/// `I − P(PᵀAP)⁻¹PᵀA`.
pub fn coarse_error_matrix(prob: &AmgProblem) -> Result<DenseMatrix> {
    let n = prob.n();
    let coarse = Lu::factor(&prob.coarse_operator()?)?;
    let pta = prob.p.tmul(&prob.a)?;
    let mut out = DenseMatrix::identity(n);
    for j in 0..n {
        let ec = coarse.solve(&pta.column(j));
        let pe = prob.p.mul_vec(&ec)?;
        for i in 0..n {
            out[(i, j)] -= pe[i];
        }
    }
    Ok(out)
}

fn matrix_power(m: &DenseMatrix, e: usize) -> Result<DenseMatrix> {
    let mut out = DenseMatrix::identity(m.rows());
    for _ in 0..e {
        out = m.matmul(&out)?;
    }
    Ok(out)
}

/// `(I − L⁻¹A)^{s2} · (I − P(PᵀAP)⁻¹PᵀA) · (I − L⁻¹A)^{s1}`.
pub fn error_propagation_matrix(prob: &AmgProblem) -> Result<DenseMatrix> {
    let s = smoother_error_matrix(&prob.a)?;
    let c = coarse_error_matrix(prob)?;
    matrix_power(&s, prob.s2)?.matmul(&c)?.matmul(&matrix_power(&s, prob.s1)?)
}

/// `x* + E·(x − x*)` with `E` from [`error_propagation_matrix`].
pub fn amg_step_formula(prob: &AmgProblem, x: &[f64], x_star: &[f64]) -> Result<Vec<f64>> {
    let e = error_propagation_matrix(prob)?;
    let diff: Vec<f64> = x.iter().zip(x_star).map(|(a, b)| a - b).collect();
    let mut out = e.mul_vec(&diff)?;
    axpy(&mut out, 1.0, x_star);
    Ok(out)
}

fn loss_at(prob: &AmgProblem, x: &[f64]) -> Result<f64> {
    let r = residual(&prob.a, &prob.b, x)?;
    Ok(dot(&r, &r))
}

fn check_divergence(x: &[f64], iter: usize) -> Result<()> {
    let nrm = norm2(x);
    if nrm.is_finite() && nrm <= DIVERGENCE_NORM {
        Ok(())
    } else {
        Err(Error::Divergence(format!("‖x‖ = {nrm:e} after {iter} steps")))
    }
}

/// `‖Ax^{(q)} − b‖²` after `q` explicit steps from `x0`.
pub fn amg_loss(prob: &AmgProblem, q: usize) -> Result<f64> {
    let coarse = Lu::factor(&prob.coarse_operator()?)?;
    let mut x = prob.x0.clone();
    for it in 0..q {
        x = step_with(prob, &coarse, &x)?;
        check_divergence(&x, it + 1)?;
    }
    loss_at(prob, &x)
}

/// The same loss through `x^{(q)} = x* + E^q (x⁰ − x*)`.
pub fn amg_loss_via_error_matrix(prob: &AmgProblem, q: usize) -> Result<f64> {
    let x_star = prob.exact_solution()?;
    let e = error_propagation_matrix(prob)?;
    let mut err: Vec<f64> = prob.x0.iter().zip(&x_star).map(|(a, b)| a - b).collect();
    for _ in 0..q {
        err = e.mul_vec(&err)?;
    }
    let mut x = err;
    axpy(&mut x, 1.0, &x_star);
    check_divergence(&x, q)?;
    loss_at(prob, &x)
}

/// Aggregation prolongation: fine index `i` maps to coarse index `⌊i·m/n⌋`
/// with the given values (one per fine index).
pub fn aggregation_prolongation(n: usize, m: usize, values: &[f64]) -> Result<DenseMatrix> {
    if m == 0 || m > n || values.len() != n {
        return Err(Error::InvalidParameter(format!("aggregation needs 1 ≤ m ≤ n and n values, got n={n}, m={m}, {} values", values.len())));
    }
    let mut p = DenseMatrix::zeros(n, m);
    for (i, &v) in values.iter().enumerate() {
        p[(i, i * m / n)] = v;
    }
    Ok(p)
}

/// `A = diag(U[1,2]) + 0.1·G`, aggregation `P` with values in `U[0.5,1.5]`,
/// `b ~ N(0, I)`, `x⁰ = 0`. Redraws on the (rare) singular coarse operator.
pub fn random_problem<R: Rng + ?Sized>(n: usize, m: usize, s1: usize, s2: usize, rng: &mut R) -> Result<AmgProblem> {
    if m == 0 || m > n {
        return Err(Error::InvalidParameter(format!("need 1 ≤ m ≤ n, got n={n}, m={m}")));
    }
    loop {
        let a = DenseMatrix::from_fn(n, n, |i, j| {
            let g: f64 = rng.sample(StandardNormal);
            0.1 * g + if i == j { rng.random_range(1.0..2.0) } else { 0.0 }
        });
        let b: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let vals: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
        let p = aggregation_prolongation(n, m, &vals)?;
        match AmgProblem::new(a, b, p, s1, s2, vec![0.0; n]) {
            Err(Error::Singular(_)) => continue,
            other => return other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProlongationOutcome {
    pub values: Vec<f64>,
    /// Mean loss before training and after each epoch.
    pub history: Vec<f64>,
}

/// Train shared prolongation values (one pattern for every problem) to
/// minimize the mean `amg_loss` after `q` steps.
pub fn train_prolongation(problems: &[AmgProblem], q: usize, cfg: &TrainConfig) -> Result<ProlongationOutcome> {
    let first = problems.first().ok_or_else(|| Error::InvalidParameter("no training problems".into()))?;
    if problems.iter().any(|p| p.pattern != first.pattern || p.n() != first.n() || p.m() != first.m()) {
        return Err(Error::DimensionMismatch("training problems must share P's shape and pattern".into()));
    }
    let out = fd_sgd(first.p_values(), problems.len(), cfg, "amg-shuffle", |theta, idx| {
        let losses = par::map_indexed_sequential(idx.len(), |t| amg_loss(&problems[idx[t]].with_p_values(theta)?, q));
        let mut total = 0.0;
        for l in losses {
            total += l?;
        }
        Ok(total / idx.len() as f64)
    })?;
    Ok(ProlongationOutcome { values: out.params, history: out.history })
}

/// Mean `amg_loss` over `problems` with the given prolongation values.
pub fn mean_amg_loss(problems: &[AmgProblem], values: &[f64], q: usize) -> Result<f64> {
    let losses = par::map_slice(problems, |p| amg_loss(&p.with_p_values(values)?, q));
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / problems.len() as f64)
}
