//! Learned sparse sketching for low-rank approximation.
//!
//! The crate implements the SCW sketch-and-solve pipeline and its learned
//! (IVY) variant, the deterministic proxy loss built from division-structured
//! projections and derandomized power iterations, a GJ complexity tracer,
//! the shattered-instance constructions, and a 2-level algebraic multigrid
//! regression loss.

pub mod amg2;
pub mod csanky;
pub mod densela;
pub mod error;
pub mod gjtrace;
pub mod harness;
pub mod ivy_train;
pub mod par;
pub mod proxy_loss;
pub mod rng;
pub mod shatterlab;
pub mod sketch_scw;

pub use densela::DenseMatrix;
pub use error::{Error, Result};
pub use sketch_scw::SparseSketch;
