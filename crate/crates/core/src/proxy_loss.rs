//! The proxy loss `L̂_{k,ε}`: projection onto the sketch row space,
//! standard-basis initial subspaces, power refinement and best-candidate
//! selection.
//!
//! `L̂ − L_SCW ∈ [0, ε]` for normalized `A` once `q` is large enough; the
//! default `q_constant` comes from the calibration sweep in
//! `examples/calibrate_q.rs`.

use serde::{Deserialize, Serialize};

use crate::csanky::{projection_colspace, projection_rowspace};
use crate::densela::{dot, fro_sq, norm2, svd, DenseMatrix};
use crate::error::{Error, Result};
use crate::gjtrace::programs::k_subsets;
use crate::par;
use crate::sketch_scw::SparseSketch;

/// Rows of `V_kᵀ` must be orthonormal to this tolerance.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// A column whose Gram–Schmidt residual falls below this fraction of its
/// norm is dropped from the refined basis.
const DEFLATION_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyConfig {
    pub epsilon: f64,
    pub subset_cap: usize,
    pub q_constant: f64,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        Self { epsilon: 0.1, subset_cap: 1000, q_constant: 4.0 }
    }
}

impl ProxyConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            out.push(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if self.subset_cap == 0 {
            out.push("subset_cap must be at least 1".into());
        }
        if !(self.q_constant > 0.0 && self.q_constant.is_finite()) {
            out.push(format!("q_constant must be positive, got {}", self.q_constant));
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

/// `q = ceil(q_constant · ε⁻¹ · ln(max(d,2)/ε))`, at least 1.
pub fn q_iterations(epsilon: f64, d: usize, q_constant: f64) -> usize {
    let q = (q_constant / epsilon * ((d.max(2) as f64) / epsilon).ln()).ceil();
    (q as usize).max(1)
}

/// Output of the residual-projection greedy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyBasis {
    /// Chosen standard-basis indices `j₁..j_k`, in selection order.
    pub indices: Vec<usize>,
    /// `d×k` selection matrix with column `i` equal to `e_{jᵢ}`.
    pub p: DenseMatrix,
    /// `k×k`; column `i` is the residual `zⁱ_{jᵢ}` at selection time.
    pub residuals: DenseMatrix,
}

/// Greedy choice of `k` standard-basis vectors from `V_kᵀ` (k×d, orthonormal
/// rows): repeatedly take the column of largest residual norm (lowest index on
/// ties) and project every column against it.
pub fn greedy_basis_selection(vk_t: &DenseMatrix) -> Result<GreedyBasis> {
    let (k, d) = vk_t.shape();
    if k > d {
        return Err(Error::InvalidParameter(format!("{k} rows cannot be orthonormal in dimension {d}")));
    }
    let gram = vk_t.matmul(&vk_t.transpose())?;
    let dev = gram.sub(&DenseMatrix::identity(k))?.max_abs();
    if dev > ORTHONORMAL_TOL {
        return Err(Error::InvalidParameter(format!("rows of V_kᵀ are not orthonormal (‖VVᵀ − I‖_max = {dev:e})")));
    }
    let mut z: Vec<Vec<f64>> = (0..d).map(|j| vk_t.column(j)).collect();
    let mut indices = Vec::with_capacity(k);
    let mut residuals = DenseMatrix::zeros(k, k);
    for i in 0..k {
        let mut best = 0;
        let mut best_norm = f64::NEG_INFINITY;
        for (j, col) in z.iter().enumerate() {
            let nrm = dot(col, col);
            if !indices.contains(&j) && nrm > best_norm {
                best = j;
                best_norm = nrm;
            }
        }
        let u = z[best].clone();
        residuals.set_column(i, &u);
        indices.push(best);
        let uu = dot(&u, &u);
        if uu > 0.0 {
            for col in z.iter_mut() {
                let c = dot(col, &u) / uu;
                col.iter_mut().zip(&u).for_each(|(x, y)| *x -= c * y);
            }
        }
    }
    Ok(GreedyBasis { p: selection_matrix(d, &indices), indices, residuals })
}

/// `d×k` matrix whose columns are `e_j` for `j` in `indices`.
pub fn selection_matrix(d: usize, indices: &[usize]) -> DenseMatrix {
    let mut p = DenseMatrix::zeros(d, indices.len());
    for (c, &j) in indices.iter().enumerate() {
        p[(j, c)] = 1.0;
    }
    p
}

/// Candidate initial subspaces as index sets into the standard basis of ℝᵈ.
///
/// All `k`-subsets in lexicographic order when there are at most
/// `subset_cap` of them; otherwise the single greedy selection from the top-k
/// right singular vectors of `B`, padded with the lowest unused indices when
/// `rank(B) < k`.
pub fn candidate_bases(b: &DenseMatrix, k: usize, cfg: &ProxyConfig) -> Result<Vec<Vec<usize>>> {
    let d = b.cols();
    let k = k.min(d);
    if binomial_at_most(d, k, cfg.subset_cap) {
        return Ok(k_subsets(d, k));
    }
    let vk_t = svd(b)?.vk_t(k);
    let mut idx = greedy_basis_selection(&vk_t)?.indices;
    for j in 0..d {
        if idx.len() == k {
            break;
        }
        if !idx.contains(&j) {
            idx.push(j);
        }
    }
    Ok(vec![idx])
}

fn binomial_at_most(d: usize, k: usize, cap: usize) -> bool {
    let mut c: u128 = 1;
    for i in 0..k.min(d - k) {
        c = c * (d - i) as u128 / (i + 1) as u128;
        if c > cap as u128 {
            return false;
        }
    }
    true
}

/// Orthonormalize columns in order (Gram–Schmidt applied twice), dropping
/// columns that are numerically dependent on earlier ones.
fn orthonormal_columns(cols: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(cols.len());
    for mut c in cols {
        let before = norm2(&c);
        if before == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for q in &out {
                let t = dot(q, &c);
                c.iter_mut().zip(q).for_each(|(x, y)| *x -= t * y);
            }
        }
        let after = norm2(&c);
        if after > DEFLATION_RTOL * before {
            c.iter_mut().for_each(|x| *x /= after);
            out.push(c);
        }
    }
    out
}

fn from_columns(rows: usize, cols: &[Vec<f64>]) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

/// A matrix with the column space of `(BBᵀ)^q·B·P`.
///
/// For `q = 0` this is `BP` itself. Otherwise each multiplication by `BBᵀ`
/// is followed by re-orthonormalization of the columns, which leaves the
/// column space (and so `ZZ†`) unchanged while keeping the smaller singular
/// directions above the floating-point floor.
pub fn power_refine(b: &DenseMatrix, p: &DenseMatrix, q: usize) -> Result<DenseMatrix> {
    let n = b.rows();
    let mut z = b.matmul(p)?;
    if q == 0 {
        return Ok(z);
    }
    let bt = b.transpose();
    for _ in 0..q {
        let cols = orthonormal_columns((0..z.cols()).map(|j| z.column(j)).collect());
        let basis = from_columns(n, &cols);
        z = b.matmul(&bt.matmul(&basis)?)?;
    }
    let cols = orthonormal_columns((0..z.cols()).map(|j| z.column(j)).collect());
    Ok(from_columns(n, &cols))
}

/// Everything the proxy computation decides along the way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyOutcome {
    /// `‖A − ZZ†B‖²_F`.
    pub loss: f64,
    /// `‖B − ZZ†B‖²_F` of the chosen candidate.
    pub residual: f64,
    /// Index of the chosen candidate.
    pub chosen: usize,
    pub n_candidates: usize,
    pub q: usize,
}

/// The proxy loss and its intermediate choices.
pub fn proxy_loss_detailed(s: &SparseSketch, a: &DenseMatrix, k: usize, cfg: &ProxyConfig) -> Result<ProxyOutcome> {
    cfg.validate()?;
    if s.n() != a.rows() {
        return Err(Error::DimensionMismatch(format!("sketch has {} columns but A has {} rows", s.n(), a.rows())));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("target rank k must be at least 1".into()));
    }
    let d = a.cols();
    let b = a.matmul(&projection_rowspace(&s.apply(a)?))?;
    let candidates = candidate_bases(&b, k, cfg)?;
    let q = q_iterations(cfg.epsilon, d, cfg.q_constant);
    let evaluated = par::map_slice(&candidates, |idx| -> Result<(f64, DenseMatrix)> {
        let z = power_refine(&b, &selection_matrix(d, idx), q)?;
        let zb = projection_colspace(&z).matmul(&b)?;
        Ok((fro_sq(&b.sub(&zb)?), zb))
    });
    let mut best: Option<(usize, f64, DenseMatrix)> = None;
    for (i, r) in evaluated.into_iter().enumerate() {
        let (res, zb) = r?;
        if best.as_ref().is_none_or(|(_, b, _)| res < *b) {
            best = Some((i, res, zb));
        }
    }
    let (chosen, residual, zb) = best.expect("at least one candidate");
    Ok(ProxyOutcome { loss: fro_sq(&a.sub(&zb)?), residual, chosen, n_candidates: candidates.len(), q })
}

/// `L̂_{k,ε}(S, A)`.
pub fn proxy_loss(s: &SparseSketch, a: &DenseMatrix, k: usize, cfg: &ProxyConfig) -> Result<f64> {
    Ok(proxy_loss_detailed(s, a, k, cfg)?.loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch_scw::scw_loss;

    #[test]
    fn q_formula() {
        assert_eq!(q_iterations(1.0 - 1e-12, 2, 1.0), 1);
        assert!(q_iterations(0.05, 10, 4.0) >= 2 * q_iterations(0.1, 10, 4.0) - 1);
    }

    #[test]
    fn greedy_on_coordinate_rows() {
        let v = DenseMatrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        let g = greedy_basis_selection(&v).unwrap();
        assert_eq!(g.indices, vec![0, 1]);
        let bad = DenseMatrix::from_rows(&[[1.0, 1.0, 0.0]]).unwrap();
        assert!(greedy_basis_selection(&bad).is_err());
    }

    #[test]
    fn candidate_counts() {
        let cfg = ProxyConfig::default();
        let b = DenseMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64);
        assert_eq!(candidate_bases(&b, 2, &cfg).unwrap().len(), 3);
        let wide = DenseMatrix::from_fn(6, 30, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        assert_eq!(candidate_bases(&wide, 5, &cfg).unwrap().len(), 1);
    }

    #[test]
    fn refine_keeps_invariant_direction() {
        let b = DenseMatrix::diag(&[1.0, 0.0, 0.0]);
        let p = selection_matrix(3, &[0]);
        for q in [0, 1, 7] {
            let z = power_refine(&b, &p, q).unwrap();
            assert!((z[(0, 0)].abs() - 1.0).abs() < 1e-15 && z[(1, 0)] == 0.0 && z[(2, 0)] == 0.0);
        }
        assert_eq!(power_refine(&b, &p, 0).unwrap(), b.matmul(&p).unwrap());
    }

    #[test]
    fn zero_sketch_proxy_is_full_loss() {
        let a = crate::densela::normalized(&DenseMatrix::from_fn(5, 4, |i, j| ((i + 2 * j) % 3) as f64 + 0.5));
        let s = crate::sketch_scw::sample_oblivious_sketch(3, 5, 2, 1).unwrap().zeroed();
        let cfg = ProxyConfig::default();
        let p = proxy_loss(&s, &a, 2, &cfg).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
        assert!((p - scw_loss(&s, &a, 2).unwrap()).abs() < 1e-12);
    }
}
