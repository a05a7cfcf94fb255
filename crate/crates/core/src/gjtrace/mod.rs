//! Instrumented rational-arithmetic interpreter.
//!
//! A GJ program uses only `+ − × ÷` and `v ≥ 0` branches. [`GjTrace`] records
//! such a computation as an expression DAG, bounding the degree of every
//! intermediate rational function of the inputs and collecting the distinct
//! branch predicates. The resulting `(Δ, p)` feed [`pdim_bound`].

mod field;
pub mod programs;
mod trace;

pub use field::{sum, FMat, GjField};
pub use trace::{pdim_bound, GjReport, GjTrace, OpKind, Traced};
