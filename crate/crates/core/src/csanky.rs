//! Division-structured rational routines: Faddeev–LeVerrier inversion and
//! characteristic polynomial, the free-coefficient rank test, greedy row-basis
//! extraction and the row-space projector `Z†Z`.
//!
//! Every routine is written once over [`GjField`] and instantiated at `f64`
//! for numerics; the same code runs under the GJ tracer for complexity
//! accounting.

use serde::{Deserialize, Serialize};

use crate::densela::{fro_sq, DenseMatrix};
use crate::error::{Error, Result};
use crate::gjtrace::{FMat, GjField};

/// `|c_k| ≤ SINGULAR_RTOL · max(1, ‖M‖_F^k)` counts as singular.
pub const SINGULAR_RTOL: f64 = 1e-12;

/// Coefficients `c₀ = 1, c₁, …, c_k` of `det(λI − M) = Σ cᵢ λ^{k−i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharPolyResult {
    pub coefficients: Vec<f64>,
}

impl CharPolyResult {
    pub fn eval(&self, lambda: f64) -> f64 {
        self.coefficients.iter().fold(0.0, |acc, c| acc * lambda + c)
    }

    pub fn free_coeff(&self) -> f64 {
        *self.coefficients.last().expect("c0 is always present")
    }
}

/// Faddeev–LeVerrier recurrence on a square `k×k` matrix.
///
/// `B₁ = I`, `cᵢ = −tr(M·Bᵢ)/i`, `B_{i+1} = M·Bᵢ + cᵢ·I`. Returns the
/// coefficients `c₀..c_k` and `B_k`; Cayley–Hamilton gives
/// `M·B_k + c_k·I = 0`, hence `M⁻¹ = −B_k / c_k`.
pub fn faddeev_leverrier<F: GjField>(m: &FMat<F>) -> (Vec<F>, FMat<F>) {
    assert_eq!(m.rows, m.cols, "characteristic polynomial of a non-square matrix");
    let k = m.rows;
    let zero = m.zero;
    let mut coeffs = vec![zero.lift(1.0)];
    let mut b = FMat::identity(k, zero);
    for i in 1..=k {
        let mb = m.matmul(&b);
        let c = mb.trace() / zero.lift(-(i as f64));
        coeffs.push(c);
        if i < k {
            b = mb;
            for d in 0..k {
                let v = b.at(d, d) + c;
                b.set(d, d, v);
            }
        }
    }
    (coeffs, b)
}

/// The floating-point surrogate for `c_k ≠ 0`, phrased as one GJ predicate:
/// full rank iff `c_k² − τ²·max(1, ‖M‖²_F)^k > 0`.
pub fn passes_rank_test<F: GjField>(m: &FMat<F>, c_k: F) -> bool {
    passes_rank_test_with(m, c_k, SINGULAR_RTOL)
}

/// [`passes_rank_test`] with an explicit threshold `τ`.
pub fn passes_rank_test_with<F: GjField>(m: &FMat<F>, c_k: F, tau: f64) -> bool {
    let one = m.zero.lift(1.0);
    let fro2 = m.fro_sq();
    let scale = if (fro2 - one).ge_zero() { fro2 } else { one };
    let mut bound = m.zero.lift(tau * tau);
    for _ in 0..m.rows {
        bound = bound * scale;
    }
    !(bound - c_k * c_k).ge_zero()
}

/// Free-coefficient threshold for the greedy scan, applied to the
/// unit-diagonal Gram matrix. The measured noise floor of `|c_k|/‖E‖_F^k` on
/// exactly dependent rows is about 1e-16.
pub const GREEDY_RTOL: f64 = 1e-14;
/// Rows with `‖zᵢ‖² ≤ GREEDY_ZERO_RTOL · ‖Z‖²_F` are treated as zero.
pub const GREEDY_ZERO_RTOL: f64 = 1e-20;

/// Indices of a maximal independent prefix-greedy set of rows of `z`.
///
/// Rows are scanned in index order; a row is kept iff the Gram matrix of the
/// kept rows plus the candidate, equilibrated to unit diagonal as `D⁻¹·YYᵀ`,
/// passes the free-coefficient test at `GREEDY_RTOL`. Rejected rows are never revisited.
pub fn greedy_row_indices<F: GjField>(z: &FMat<F>) -> Vec<usize> {
    let floor = z.fro_sq() * z.zero.lift(GREEDY_ZERO_RTOL);
    let mut kept: Vec<usize> = Vec::new();
    for i in 0..z.rows {
        let norm2 = z.select_rows(&[i]).fro_sq();
        if (floor - norm2).ge_zero() {
            continue;
        }
        let mut cand = kept.clone();
        cand.push(i);
        let y = z.select_rows(&cand);
        let gram = equilibrate(y.matmul(&y.transpose()));
        let (coeffs, _) = faddeev_leverrier(&gram);
        if passes_rank_test_with(&gram, *coeffs.last().unwrap(), GREEDY_RTOL) {
            kept = cand;
        }
    }
    kept
}

/// `Z†Z = Yᵀ(YYᵀ)⁻¹Y` with `Y` the greedy row basis.
///
/// The Gram inverse is taken through the unit-diagonal `E = D⁻¹·YYᵀ`, whose
/// characteristic polynomial is far better conditioned: `(YYᵀ)⁻¹ = E⁻¹D⁻¹`
/// with `E⁻¹ = −B_r/c_r`, followed by one Newton–Schulz step
/// `X ← X(2I − EX)` and [`PROJECTOR_REFINEMENTS`] idempotent refinements.
pub fn projection_rowspace_generic<F: GjField>(z: &FMat<F>) -> FMat<F> {
    let rows = greedy_row_indices(z);
    if rows.is_empty() {
        return FMat::zeros(z.cols, z.cols, z.zero);
    }
    let y = z.select_rows(&rows);
    let yt = y.transpose();
    let e = equilibrate(y.matmul(&yt));
    let (coeffs, b) = faddeev_leverrier(&e);
    let neg_c = z.zero - *coeffs.last().unwrap();
    let x = b.div_scalar(neg_c);
    let two_minus = FMat::identity(e.rows, z.zero).scale(z.zero.lift(2.0)).sub(&e.matmul(&x));
    let x = x.matmul(&two_minus);
    // D⁻¹Y: row i of Y divided by ‖yᵢ‖².
    let mut dy = y.clone();
    for i in 0..dy.rows {
        let g = y.select_rows(&[i]).fro_sq();
        for j in 0..dy.cols {
            let v = dy.at(i, j) / g;
            dy.set(i, j, v);
        }
    }
    let mut pi = yt.matmul(&x).matmul(&dy);
    for _ in 0..PROJECTOR_REFINEMENTS {
        pi = refine_idempotent(&pi);
    }
    pi
}

/// Steps of `Π ← Π²(3I − 2Π)` applied to the computed projector.
pub const PROJECTOR_REFINEMENTS: usize = 2;

/// One step of `Π ← 3Π² − 2Π³`. Eigenvalues near 0 and 1 move quadratically
/// closer, which removes the error of an ill-conditioned basis Gram.
fn refine_idempotent<F: GjField>(pi: &FMat<F>) -> FMat<F> {
    let three = FMat::identity(pi.rows, pi.zero).scale(pi.zero.lift(3.0));
    let tail = three.sub(&pi.scale(pi.zero.lift(2.0)));
    pi.matmul(pi).matmul(&tail)
}

/// Textbook one-pass scan: the raw Gram `YYᵀ` of the kept rows plus the
/// candidate must pass [`passes_rank_test`].
pub fn greedy_row_indices_plain<F: GjField>(z: &FMat<F>) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for i in 0..z.rows {
        let mut cand = kept.clone();
        cand.push(i);
        let y = z.select_rows(&cand);
        let gram = y.matmul(&y.transpose());
        let (coeffs, _) = faddeev_leverrier(&gram);
        if passes_rank_test(&gram, *coeffs.last().unwrap()) {
            kept = cand;
        }
    }
    kept
}

/// `Yᵀ(YYᵀ)⁻¹Y` straight from the recurrence, `(YYᵀ)⁻¹ = −B_r/c_r`, with no
/// equilibration or refinement.
///
/// Its traced degree grows linearly in the rank, while the equilibrated
/// [`projection_rowspace_generic`] pays a quadratic degree for accuracy on
/// rows of unequal scale. Used as the tracing reference only.
pub fn projection_rowspace_plain_generic<F: GjField>(z: &FMat<F>) -> FMat<F> {
    let rows = greedy_row_indices_plain(z);
    if rows.is_empty() {
        return FMat::zeros(z.cols, z.cols, z.zero);
    }
    let y = z.select_rows(&rows);
    let yt = y.transpose();
    let gram = y.matmul(&yt);
    let (coeffs, b) = faddeev_leverrier(&gram);
    let neg_c = z.zero - *coeffs.last().unwrap();
    yt.matmul(&b.div_scalar(neg_c)).matmul(&y)
}

/// `D⁻¹G` with `D = diag(G)`.
fn equilibrate<F: GjField>(mut gram: FMat<F>) -> FMat<F> {
    for r in 0..gram.rows {
        let g = gram.at(r, r);
        for c in 0..gram.cols {
            let v = if r == c { gram.zero.lift(1.0) } else { gram.at(r, c) / g };
            gram.set(r, c, v);
        }
    }
    gram
}

fn lift(m: &DenseMatrix) -> FMat<f64> {
    FMat::new(m.rows(), m.cols(), m.as_slice().to_vec(), 0.0)
}

fn lower(m: FMat<f64>) -> DenseMatrix {
    DenseMatrix::from_fn(m.rows, m.cols, |i, j| m.at(i, j))
}

fn require_square(m: &DenseMatrix) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!("expected a square matrix, got {:?}", m.shape())))
    }
}

pub fn char_poly(m: &DenseMatrix) -> Result<CharPolyResult> {
    require_square(m)?;
    let (coefficients, _) = faddeev_leverrier(&lift(m));
    Ok(CharPolyResult { coefficients })
}

/// `c_k = (−1)^k det(M)`.
pub fn char_poly_free_coeff(m: &DenseMatrix) -> Result<f64> {
    Ok(char_poly(m)?.free_coeff())
}

/// Whether `m` passes the free-coefficient full-rank test.
pub fn is_full_rank(m: &DenseMatrix) -> Result<bool> {
    require_square(m)?;
    if m.rows() == 0 {
        return Ok(true);
    }
    let lm = lift(m);
    let (coeffs, _) = faddeev_leverrier(&lm);
    Ok(passes_rank_test(&lm, *coeffs.last().unwrap()))
}

/// Inverse via the characteristic polynomial, `M⁻¹ = −B_k / c_k`.
pub fn csanky_inverse(m: &DenseMatrix) -> Result<DenseMatrix> {
    require_square(m)?;
    let k = m.rows();
    if k == 0 {
        return Ok(DenseMatrix::zeros(0, 0));
    }
    let lm = lift(m);
    let (coeffs, b) = faddeev_leverrier(&lm);
    let ck = *coeffs.last().unwrap();
    if !passes_rank_test(&lm, ck) {
        return Err(Error::Singular(format!(
            "free coefficient {ck:e} below threshold (‖M‖²_F = {:e})",
            fro_sq(m)
        )));
    }
    if k == 1 {
        return Ok(DenseMatrix::diag(&[1.0 / m[(0, 0)]]));
    }
    Ok(lower(b.div_scalar(-ck)))
}

/// Rows of `z` selected by the greedy full-rank scan.
pub fn greedy_row_basis(z: &DenseMatrix) -> DenseMatrix {
    z.select_rows(&greedy_row_indices(&lift(z)))
}

/// Orthogonal projector `Z†Z` onto the row space of `z` (d×d).
pub fn projection_rowspace(z: &DenseMatrix) -> DenseMatrix {
    lower(projection_rowspace_generic(&lift(z)))
}

/// Orthogonal projector `ZZ†` onto the column space of `z` (n×n).
pub fn projection_colspace(z: &DenseMatrix) -> DenseMatrix {
    projection_rowspace(&z.transpose())
}
