//! One-sided Jacobi SVD and the routines built on it.

use serde::{Deserialize, Serialize};

use super::matrix::{dot, fro_sq, norm2, DenseMatrix};
use crate::error::{Error, Result};

/// Singular values at or below `RANK_RTOL · σ_max` are treated as zero.
pub const RANK_RTOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 80;

/// Thin SVD `A = U · diag(σ) · Vᵀ` restricted to the numerical rank.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvdResult {
    /// n×r, orthonormal columns.
    pub u: DenseMatrix,
    /// Non-increasing, length r.
    pub singular_values: Vec<f64>,
    /// d×r, orthonormal columns.
    pub v: DenseMatrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// `U_k · diag(σ_k) · V_kᵀ` using the leading `k` triplets (clamped to r).
    pub fn truncated(&self, k: usize) -> DenseMatrix {
        let k = k.min(self.rank());
        let (n, d) = (self.u.rows(), self.v.rows());
        let mut out = DenseMatrix::zeros(n, d);
        for t in 0..k {
            let s = self.singular_values[t];
            for i in 0..n {
                let ui = self.u[(i, t)] * s;
                if ui == 0.0 {
                    continue;
                }
                for (o, j) in out.row_mut(i).iter_mut().zip(0..d) {
                    *o += ui * self.v[(j, t)];
                }
            }
        }
        out
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.truncated(self.rank())
    }

    /// Top-`k` right singular vectors as rows (k×d).
    pub fn vk_t(&self, k: usize) -> DenseMatrix {
        let k = k.min(self.rank());
        DenseMatrix::from_fn(k, self.v.rows(), |i, j| self.v[(j, i)])
    }
}

/// Thin SVD of `a`, truncated at the numerical rank.
pub fn svd(a: &DenseMatrix) -> Result<SvdResult> {
    let (n, d) = a.shape();
    if n >= d {
        let (u, s, v) = jacobi_tall(a)?;
        Ok(SvdResult { u, singular_values: s, v })
    } else {
        let (v, s, u) = jacobi_tall(&a.transpose())?;
        Ok(SvdResult { u, singular_values: s, v })
    }
}

/// Hestenes one-sided Jacobi on a matrix with at least as many rows as columns.
fn jacobi_tall(a: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    let (n, d) = a.shape();
    let mut w: Vec<Vec<f64>> = (0..d).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            e
        })
        .collect();

    // Pairs count as orthogonal once |w_p·w_q| is within rounding of the dot
    // product itself; columns below the noise floor are left alone.
    let orth_tol = f64::EPSILON * (n.max(1) as f64);
    let noise_floor = {
        let f = f64::EPSILON * fro_sq(a).sqrt();
        f * f
    };
    let mut converged = d < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..d {
            for q in (p + 1)..d {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if alpha <= noise_floor || beta <= noise_floor || gamma.abs() <= orth_tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::SvdNoConvergence { sweeps: MAX_SWEEPS });
    }

    let mut order: Vec<(usize, f64)> = w.iter().map(|c| norm2(c)).enumerate().collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    let sigma_max = order.first().map_or(0.0, |x| x.1);
    let kept: Vec<(usize, f64)> = if sigma_max > 0.0 {
        order.into_iter().filter(|&(_, s)| s > RANK_RTOL * sigma_max).collect()
    } else {
        Vec::new()
    };

    let r = kept.len();
    let mut u = DenseMatrix::zeros(n, r);
    let mut vm = DenseMatrix::zeros(d, r);
    let mut sv = Vec::with_capacity(r);
    for (t, &(j, s)) in kept.iter().enumerate() {
        let col: Vec<f64> = w[j].iter().map(|x| x / s).collect();
        u.set_column(t, &col);
        vm.set_column(t, &v[j]);
        sv.push(s);
    }
    Ok((u, sv, vm))
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    for (xp, xq) in left[p].iter_mut().zip(right[0].iter_mut()) {
        let (a, b) = (*xp, *xq);
        *xp = c * a - s * b;
        *xq = s * a + c * b;
    }
}

/// Best rank-`k` approximation `[A]_k` in the Frobenius norm.
pub fn best_rank_k(a: &DenseMatrix, k: usize) -> Result<DenseMatrix> {
    if k == 0 {
        return Err(Error::InvalidParameter("target rank k must be at least 1".into()));
    }
    Ok(svd(a)?.truncated(k))
}

/// Moore–Penrose pseudo-inverse.
pub fn pinv(m: &DenseMatrix) -> Result<DenseMatrix> {
    let f = svd(m)?;
    let (n, d) = m.shape();
    let mut out = DenseMatrix::zeros(d, n);
    for (t, &s) in f.singular_values.iter().enumerate() {
        for i in 0..d {
            let vi = f.v[(i, t)] / s;
            for j in 0..n {
                out[(i, j)] += vi * f.u[(j, t)];
            }
        }
    }
    Ok(out)
}

/// Orthogonal projector onto the column space of `m` (`M M†`).
pub fn column_space_projector(m: &DenseMatrix) -> Result<DenseMatrix> {
    let u = svd(m)?.u;
    Ok(u.mul_unchecked(&u.transpose()))
}

/// Extend orthonormal columns `u` (n×r) to an orthonormal basis of ℝⁿ.
///
/// The new columns come from Gram–Schmidt (applied twice) over the standard
/// basis in index order, so the completion is deterministic.
pub fn orthonormal_completion(u: &DenseMatrix) -> DenseMatrix {
    let n = u.rows();
    let mut basis: Vec<Vec<f64>> = (0..u.cols()).map(|j| u.column(j)).collect();
    for e in 0..n {
        if basis.len() == n {
            break;
        }
        let mut cand = vec![0.0; n];
        cand[e] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &cand);
                for (x, y) in cand.iter_mut().zip(b) {
                    *x -= c * y;
                }
            }
        }
        let nrm = norm2(&cand);
        if nrm > 1e-8 {
            cand.iter_mut().for_each(|x| *x /= nrm);
            basis.push(cand);
        }
    }
    let mut out = DenseMatrix::zeros(n, n);
    for (j, b) in basis.iter().enumerate() {
        out.set_column(j, b);
    }
    out
}

/// Numerical rank under the `RANK_RTOL` cutoff.
pub fn numerical_rank(a: &DenseMatrix) -> Result<usize> {
    Ok(svd(a)?.rank())
}

/// `‖A − [A]_k‖²_F` from the singular value tail.
pub fn rank_k_residual(a: &DenseMatrix, k: usize) -> Result<f64> {
    let f = svd(a)?;
    let tail: f64 = f.singular_values.iter().skip(k).map(|s| s * s).sum();
    // Dropped (sub-tolerance) singular values are not in the factor list.
    let captured: f64 = f.singular_values.iter().map(|s| s * s).sum();
    Ok(tail + (fro_sq(a) - captured).max(0.0))
}
