//! Dense real-matrix core: storage, norms, SVD, best rank-k truncation,
//! pseudo-inverse and elimination.

mod matrix;
mod solve;
mod svd;

pub use matrix::{dot, fro_sq, norm2, DenseMatrix};
pub use solve::{inverse, solve, Lu};
pub use svd::{
    best_rank_k, column_space_projector, numerical_rank, orthonormal_completion, pinv,
    rank_k_residual, svd, SvdResult, RANK_RTOL,
};

use rand::Rng;
use rand_distr::StandardNormal;

/// Matrix with i.i.d. standard normal entries.
pub fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Rescale to unit squared Frobenius norm; the zero matrix is returned as is.
pub fn normalized(a: &DenseMatrix) -> DenseMatrix {
    let f = fro_sq(a);
    if f == 0.0 {
        a.clone()
    } else {
        a.scale(1.0 / f.sqrt())
    }
}

/// `k×d` matrix with orthonormal rows drawn from the Haar measure.
pub fn random_orthonormal_rows<R: Rng + ?Sized>(k: usize, d: usize, rng: &mut R) -> DenseMatrix {
    assert!(k <= d, "cannot fit {k} orthonormal rows in dimension {d}");
    loop {
        let g = gaussian(d, k, rng);
        let f = svd(&g).expect("SVD of a small gaussian matrix");
        if f.rank() == k {
            // U·Vᵀ is the orthogonal polar factor.
            return f.u.matmul(&f.v.transpose()).expect("shapes").transpose();
        }
    }
}
