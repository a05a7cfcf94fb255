//! Sparse sketching matrices and the SCW sketch-and-solve low-rank
//! approximation.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::csanky::projection_rowspace;
use crate::densela::{best_rank_k, dot, fro_sq, norm2, svd, DenseMatrix};
use crate::error::{Error, Result};
use crate::rng::SeedStreams;

/// Entries at or below this magnitude make `SA` the zero matrix.
pub const ZERO_SKETCH_TOL: f64 = 1e-14;

/// `‖Aᵀw‖ ≤ W_ORTH_RTOL · ‖A‖_F · ‖w‖` counts as `wᵀA = 0`.
pub const W_ORTH_RTOL: f64 = 1e-12;

/// An `m×n` sketch with exactly `s` pattern positions per column.
///
/// The pattern is fixed at construction; the values (stored column by
/// column, aligned with the sorted pattern) are the trainable parameters and
/// may be zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseSketch {
    m: usize,
    n: usize,
    s: usize,
    pattern: Vec<Vec<usize>>,
    values: Vec<f64>,
}

impl SparseSketch {
    /// Build from per-column row indices and aligned values. Each column's
    /// indices are sorted (values permuted along) and must be distinct.
    pub fn new(m: usize, n: usize, pattern: Vec<Vec<usize>>, values: Vec<f64>) -> Result<Self> {
        if pattern.len() != n {
            return Err(Error::DimensionMismatch(format!("pattern has {} columns, expected {n}", pattern.len())));
        }
        let s = pattern.first().map_or(0, Vec::len);
        if values.len() != s * n {
            return Err(Error::DimensionMismatch(format!("{} values for {n} columns of sparsity {s}", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite sketch value {v}")));
        }
        let mut sorted_pattern = Vec::with_capacity(n);
        let mut sorted_values = Vec::with_capacity(values.len());
        for (j, col) in pattern.into_iter().enumerate() {
            if col.len() != s {
                return Err(Error::InvalidParameter(format!("column {j} has {} entries, expected {s}", col.len())));
            }
            let mut pairs: Vec<(usize, f64)> = col.into_iter().zip(values[j * s..(j + 1) * s].iter().copied()).collect();
            pairs.sort_by_key(|p| p.0);
            if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidParameter(format!("column {j} repeats a row index")));
            }
            if let Some(&(r, _)) = pairs.iter().find(|p| p.0 >= m) {
                return Err(Error::InvalidParameter(format!("row index {r} out of range for m = {m}")));
            }
            sorted_pattern.push(pairs.iter().map(|p| p.0).collect());
            sorted_values.extend(pairs.iter().map(|p| p.1));
        }
        Ok(Self { m, n, s, pattern: sorted_pattern, values: sorted_values })
    }

    /// Sketch whose pattern covers every entry of `dense` (`s = m`).
    pub fn from_dense(dense: &DenseMatrix) -> Self {
        let (m, n) = dense.shape();
        let pattern = (0..n).map(|_| (0..m).collect()).collect();
        let values = (0..n).flat_map(|j| (0..m).map(move |i| (i, j))).map(|(i, j)| dense[(i, j)]).collect();
        Self { m, n, s: m, pattern, values }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn pattern(&self, col: usize) -> &[usize] {
        &self.pattern[col]
    }

    pub fn patterns(&self) -> &[Vec<usize>] {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column_values(&self, col: usize) -> &[f64] {
        &self.values[col * self.s..(col + 1) * self.s]
    }

    pub fn n_params(&self) -> usize {
        self.values.len()
    }

    /// Same pattern, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values supplied for {} pattern positions",
                values.len(),
                self.values.len()
            )));
        }
        Ok(Self { values, ..self.clone() })
    }

    pub fn zeroed(&self) -> Self {
        Self { values: vec![0.0; self.values.len()], ..self.clone() }
    }

    pub fn same_pattern(&self, other: &Self) -> bool {
        self.m == other.m && self.n == other.n && self.s == other.s && self.pattern == other.pattern
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.m, self.n);
        for j in 0..self.n {
            for (&i, &v) in self.pattern[j].iter().zip(self.column_values(j)) {
                out[(i, j)] = v;
            }
        }
        out
    }

    /// `S·A` using the column sparsity.
    pub fn apply(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        if a.rows() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "sketch has {} columns but A has {} rows",
                self.n,
                a.rows()
            )));
        }
        let mut out = DenseMatrix::zeros(self.m, a.cols());
        for j in 0..self.n {
            let arow = a.row(j);
            for (&i, &v) in self.pattern[j].iter().zip(self.column_values(j)) {
                if v == 0.0 {
                    continue;
                }
                for (o, &x) in out.row_mut(i).iter_mut().zip(arow) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }

    /// Vertical concatenation `[self; other]`; per-column sparsity adds.
    pub fn stack(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch(format!("cannot stack sketches with {} and {} columns", self.n, other.n)));
        }
        let pattern = self
            .pattern
            .iter()
            .zip(&other.pattern)
            .map(|(a, b)| a.iter().copied().chain(b.iter().map(|r| r + self.m)).collect())
            .collect();
        let values = (0..self.n)
            .flat_map(|j| self.column_values(j).iter().chain(other.column_values(j)).copied())
            .collect();
        Self::new(self.m + other.m, self.n, pattern, values)
    }
}

/// Oblivious sparse sketch: per column, `s` distinct rows uniformly without
/// replacement, each value a uniform random sign.
pub fn sample_oblivious_sketch(m: usize, n: usize, s: usize, seed: u64) -> Result<SparseSketch> {
    let mut rng = SeedStreams::new(seed).stream("oblivious-sketch");
    sample_oblivious_sketch_with(m, n, s, &mut rng)
}

pub fn sample_oblivious_sketch_with<R: Rng + ?Sized>(m: usize, n: usize, s: usize, rng: &mut R) -> Result<SparseSketch> {
    if !(1 <= s && s <= m && m <= n) {
        return Err(Error::InvalidParameter(format!("need 1 ≤ s ≤ m ≤ n, got s = {s}, m = {m}, n = {n}")));
    }
    let mut pattern = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n * s);
    for _ in 0..n {
        let mut rows = index::sample(rng, m, s).into_vec();
        rows.sort_unstable();
        pattern.push(rows);
        values.extend((0..s).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }));
    }
    SparseSketch::new(m, n, pattern, values)
}

fn check_scw_args(a: &DenseMatrix, k: usize, s: &SparseSketch) -> Result<()> {
    if s.n() != a.rows() {
        return Err(Error::DimensionMismatch(format!("sketch has {} columns but A has {} rows", s.n(), a.rows())));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("target rank k must be at least 1".into()));
    }
    Ok(())
}

/// The SCW algorithm: `SA`; zero shortcut; SVD `UΣVᵀ` of `SA`; `AV`;
/// return `[AV]_k Vᵀ`.
pub fn scw(a: &DenseMatrix, k: usize, s: &SparseSketch) -> Result<DenseMatrix> {
    check_scw_args(a, k, s)?;
    let sa = s.apply(a)?;
    if sa.max_abs() <= ZERO_SKETCH_TOL {
        return Ok(DenseMatrix::zeros(a.rows(), a.cols()));
    }
    let v = svd(&sa)?.v;
    let av = a.matmul(&v)?;
    best_rank_k(&av, k)?.matmul(&v.transpose())
}

/// `[A·(SA)†(SA)]_k`, with the projector from the division-structured
/// routine.
pub fn scw_alt(a: &DenseMatrix, k: usize, s: &SparseSketch) -> Result<DenseMatrix> {
    check_scw_args(a, k, s)?;
    let pi = projection_rowspace(&s.apply(a)?);
    best_rank_k(&a.matmul(&pi)?, k)
}

/// `‖A − SCW_k(S, A)‖²_F`.
pub fn scw_loss(s: &SparseSketch, a: &DenseMatrix, k: usize) -> Result<f64> {
    Ok(fro_sq(&a.sub(&scw(a, k, s)?)?))
}

/// Closed-form SCW loss for a single sketch row `w` and `k = 1`:
/// `‖A − AAᵀwwᵀA / ‖Aᵀw‖²‖²_F`, or `‖A‖²_F` when `wᵀA = 0`.
pub fn scw_closed_form_k1(a: &DenseMatrix, w: &[f64]) -> Result<f64> {
    if w.len() != a.rows() {
        return Err(Error::DimensionMismatch(format!("w has length {} but A has {} rows", w.len(), a.rows())));
    }
    let atw = a.transpose().mul_vec(w)?;
    let nrm = norm2(&atw);
    if nrm <= W_ORTH_RTOL * fro_sq(a).sqrt() * norm2(w) {
        return Ok(fro_sq(a));
    }
    let aatw = a.mul_vec(&atw)?;
    let inv = 1.0 / dot(&atw, &atw);
    let mut loss = 0.0;
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let r = a[(i, j)] - inv * aatw[i] * atw[j];
            loss += r * r;
        }
    }
    Ok(loss)
}

/// A `1×n` sketch holding `w` (pattern covers every column at row 0).
pub fn row_sketch(w: &[f64]) -> SparseSketch {
    SparseSketch::from_dense(&DenseMatrix::from_fn(1, w.len(), |_, j| w[j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a_example() -> DenseMatrix {
        DenseMatrix::from_rows(&[[1.0, 0.0, 2.0], [0.0, 1.0, 1.0], [1.0, 1.0, 0.0], [2.0, 0.0, 1.0]]).unwrap()
    }

    #[test]
    fn sketch_validation() {
        assert!(SparseSketch::new(2, 2, vec![vec![0], vec![2]], vec![1.0, 1.0]).is_err());
        assert!(SparseSketch::new(2, 2, vec![vec![0, 0], vec![0, 1]], vec![1.0; 4]).is_err());
        assert!(SparseSketch::new(2, 2, vec![vec![0], vec![0, 1]], vec![1.0; 3]).is_err());
        let s = SparseSketch::new(3, 2, vec![vec![2, 0], vec![1, 2]], vec![5.0, 7.0, 1.0, 2.0]).unwrap();
        assert_eq!(s.pattern(0), &[0, 2]);
        assert_eq!(s.column_values(0), &[7.0, 5.0]);
    }

    #[test]
    fn oblivious_full_pattern_and_determinism() {
        let s = sample_oblivious_sketch(3, 7, 3, 11).unwrap();
        assert!(s.patterns().iter().all(|p| p == &[0, 1, 2]));
        assert!(s.values().iter().all(|v| v.abs() == 1.0));
        assert_eq!(sample_oblivious_sketch(3, 9, 2, 5).unwrap(), sample_oblivious_sketch(3, 9, 2, 5).unwrap());
        assert!(sample_oblivious_sketch(4, 3, 1, 0).is_err());
        assert!(sample_oblivious_sketch(2, 3, 3, 0).is_err());
        assert!(sample_oblivious_sketch(2, 3, 0, 0).is_err());
    }

    #[test]
    fn dense_materialization_has_ns_positions() {
        let s = sample_oblivious_sketch(4, 10, 2, 3).unwrap();
        let d = s.to_dense();
        assert_eq!(d.as_slice().iter().filter(|v| **v != 0.0).count(), 20);
        let sa = s.apply(&DenseMatrix::identity(10)).unwrap();
        assert_eq!(sa, d);
    }

    #[test]
    fn zero_sketch_returns_zero() {
        let a = a_example();
        let s = sample_oblivious_sketch(2, 4, 1, 1).unwrap().zeroed();
        assert_eq!(scw(&a, 1, &s).unwrap(), DenseMatrix::zeros(4, 3));
        assert_eq!(scw_loss(&s, &a, 1).unwrap(), fro_sq(&a));
        assert_eq!(scw_alt(&a, 1, &s).unwrap(), DenseMatrix::zeros(4, 3));
    }

    #[test]
    fn closed_form_branches() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]]).unwrap();
        assert!(scw_closed_form_k1(&a, &[1.0, 0.0, 5.0]).unwrap().abs() < 1e-12);
        assert_eq!(scw_closed_form_k1(&a, &[2.0, -1.0, 3.0]).unwrap(), fro_sq(&a));
        assert_eq!(scw_closed_form_k1(&a, &[0.0, 0.0, 1.0]).unwrap(), fro_sq(&a));
    }

    #[test]
    fn stacking_adds_sparsity() {
        let s1 = sample_oblivious_sketch(3, 6, 2, 1).unwrap();
        let s2 = sample_oblivious_sketch(2, 6, 1, 2).unwrap();
        let st = s1.stack(&s2).unwrap();
        assert_eq!((st.m(), st.n(), st.s()), (5, 6, 3));
        assert_eq!(st.to_dense(), s1.to_dense().vstack(&s2.to_dense()).unwrap());
        assert!(s1.stack(&sample_oblivious_sketch(2, 5, 1, 2).unwrap()).is_err());
    }
}
