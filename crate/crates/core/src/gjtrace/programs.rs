//! GJ programs used as tracing drivers.
//!
//! Each program is generic over [`GjField`], so it can be run numerically or
//! under a [`GjTrace`] to read off its degree and predicate complexity. Where
//! control flow depends on data, the drivers evaluate every predicate the
//! program text could reach (all pairwise comparisons, every prefix rank
//! test), so a single traced run covers the program's predicate set.

use super::field::{FMat, GjField};
use super::trace::{GjReport, GjTrace, Traced};
use crate::csanky::{projection_rowspace_generic, projection_rowspace_plain_generic};
use crate::densela::DenseMatrix;
use crate::error::Result;
use crate::sketch_scw::SparseSketch;

/// `M^q · π`.
pub fn power_iterate<F: GjField>(m: &FMat<F>, pi: &FMat<F>, q: usize) -> FMat<F> {
    let mut v = pi.clone();
    for _ in 0..q {
        v = m.matmul(&v);
    }
    v
}

/// Index of the minimum, lowest index on ties.
///
/// All `C(r,2)` comparisons `v_j − v_i ≥ 0` (`i < j`) are evaluated up front;
/// the scan then reads them.
#[allow(clippy::needless_range_loop)]
pub fn argmin_all_pairs<F: GjField>(values: &[F]) -> usize {
    let r = values.len();
    let mut ge = vec![vec![false; r]; r];
    for i in 0..r {
        for j in (i + 1)..r {
            ge[i][j] = (values[j] - values[i]).ge_zero();
        }
    }
    let mut best = 0;
    for j in 1..r {
        // v_j < v_best strictly.
        if !ge[best][j] {
            best = j;
        }
    }
    best
}

/// Greedy knapsack with learned rank exponent `ρ`: item `i` ranks by
/// `vᵢ / cᵢ^ρ`. Each pairwise order is the degree-1 predicate
/// `ρ − log(v_j/v_i)/log(c_j/c_i) ≥ 0` (sign-adjusted by the cost ratio), so
/// the only traced quantity is `ρ`. Returns the chosen items in greedy order.
pub fn knapsack_greedy<F: GjField>(rho: F, values: &[f64], costs: &[f64], limit: f64) -> Vec<usize> {
    let n = values.len();
    // before[i][j]: item i ranks at least as high as item j.
    let mut before = vec![vec![false; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let lc = (costs[j] / costs[i]).ln();
            let i_first = if lc == 0.0 {
                values[i] >= values[j]
            } else {
                // vᵢ/cᵢ^ρ ≥ v_j/c_j^ρ  ⇔  ρ·ln(c_j/cᵢ) ≥ ln(v_j/vᵢ)
                let t = (values[j] / values[i]).ln() / lc;
                let above = (rho - rho.lift(t)).ge_zero();
                if lc > 0.0 { above } else { !above }
            };
            before[i][j] = i_first;
            before[j][i] = !i_first;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        if a == b {
            std::cmp::Ordering::Equal
        } else if before[a][b] {
            std::cmp::Ordering::Less
        } else {
            std::cmp::Ordering::Greater
        }
    });
    let mut spent = 0.0;
    let mut chosen = Vec::new();
    for i in order {
        if spent + costs[i] < limit {
            spent += costs[i];
            chosen.push(i);
        }
    }
    chosen
}

/// All `k`-subsets of `0..d` in lexicographic order.
pub fn k_subsets(d: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > d {
        return out;
    }
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (0..k).rev().find(|&i| cur[i] != i + d - k) else {
            return out;
        };
        cur[i] += 1;
        for j in (i + 1)..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// The proxy-loss program with exhaustive standard-basis candidates and
/// plain (unnormalized) powering, as a GJ algorithm in the sketch entries.
///
/// `s` holds the sketch (its entries are the program inputs), `a` the fixed
/// instance. Returns the proxy loss and the selected candidate index.
pub fn proxy_loss_program<F: GjField>(s: &FMat<F>, a: &DenseMatrix, k: usize, q: usize, projector: Projector) -> (F, usize) {
    let zero = s.zero;
    let (n, d) = a.shape();
    let af = FMat::lift_from(n, d, a.as_slice(), zero);
    let sa = s.matmul(&af);
    let pi = projector.apply(&sa);
    let b = af.matmul(&pi);
    let bbt = b.matmul(&b.transpose());

    let mut projectors = Vec::new();
    let mut residuals = Vec::new();
    for cols in k_subsets(d, k) {
        let z = power_iterate(&bbt, &b.select_cols(&cols), q);
        let proj = projector.apply(&z.transpose());
        let pb = proj.matmul(&b);
        residuals.push(b.sub(&pb).fro_sq());
        projectors.push(pb);
    }
    let best = argmin_all_pairs(&residuals);
    (af.sub(&projectors[best]).fro_sq(), best)
}

/// Trace `proxy_loss_program` with the sketch's `n·s` nonzero values as the
/// inputs, including the final threshold comparison against `r`.
pub fn trace_proxy_loss(
    sketch: &SparseSketch,
    a: &DenseMatrix,
    k: usize,
    q: usize,
    r: f64,
    projector: Projector,
) -> Result<(GjReport, f64)> {
    let trace = GjTrace::new();
    let s = traced_sketch(&trace, sketch)?;
    let (loss, _) = proxy_loss_program(&s, a, k, q, projector);
    let _ = (loss - loss.lift(r)).ge_zero();
    let report = trace.finish(sketch.n() * sketch.s())?;
    Ok((report, loss.value()))
}

/// Dense traced copy of a sketch: pattern positions are inputs named
/// `s[row,col]`, everything else the constant zero.
pub fn traced_sketch<'t>(trace: &'t GjTrace, sketch: &SparseSketch) -> Result<FMat<Traced<'t>>> {
    let zero = trace.constant(0.0);
    let mut s = FMat::zeros(sketch.m(), sketch.n(), zero);
    for col in 0..sketch.n() {
        for (&row, &v) in sketch.pattern(col).iter().zip(sketch.column_values(col)) {
            s.set(row, col, trace.input(&format!("s[{row},{col}]"), v)?);
        }
    }
    Ok(s)
}

/// Which row-space projector a traced program uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projector {
    /// Raw Gram, plain free-coefficient test, `−B/c` inverse.
    Plain,
    /// The numeric pipeline's unit-diagonal Gram with one refinement step.
    Equilibrated,
}

impl Projector {
    pub fn apply<F: GjField>(self, z: &FMat<F>) -> FMat<F> {
        match self {
            Projector::Plain => projection_rowspace_plain_generic(z),
            Projector::Equilibrated => projection_rowspace_generic(z),
        }
    }
}

/// Trace `Z ↦ Z†Z` with the entries of `z` as inputs.
pub fn trace_csanky_projection(z: &DenseMatrix, projector: Projector) -> Result<GjReport> {
    let trace = GjTrace::new();
    let zero = trace.constant(0.0);
    let mut data = Vec::with_capacity(z.rows() * z.cols());
    for i in 0..z.rows() {
        for j in 0..z.cols() {
            data.push(trace.input(&format!("z[{i},{j}]"), z[(i, j)])?);
        }
    }
    let _ = projector.apply(&FMat::new(z.rows(), z.cols(), data, zero));
    trace.finish(z.rows() * z.cols())
}

/// `Δ = CSANKY_DEGREE_CONSTANT · r` for the plain projector on a rank-`r`
/// input: Gram entries have degree 2, `c_r` degree `2r`, and the projector
/// `Yᵀ·B_{r−1}·Y / c_r` reaches `(2r, 2r)` with the final predicate on
/// `c_r² − τ²‖G‖^{2r}` at `4r`.
pub const CSANKY_DEGREE_CONSTANT: u32 = 4;

/// Degree constant `C` with `Δ ≤ C·m·k·(q+1)` for the proxy program traced
/// with [`Projector::Plain`]; observed worst case 40.7 over the test grid,
/// rounded up.
pub const PROXY_DEGREE_CONSTANT: u32 = 48;

/// Explicit evaluation of the predicate bound
/// `2^m · 2^{2k} · e²(e·d/k)^{2k} · (e·d/k)^k` (log₂ scale) for comparison.
pub fn proxy_predicate_bound_log2(m: usize, k: usize, d: usize) -> f64 {
    let e = std::f64::consts::E;
    let ratio = (e * d as f64 / k as f64).log2();
    m as f64 + 2.0 * k as f64 + 2.0 * e.log2() + 3.0 * k as f64 * ratio
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsets_enumerate_binomial() {
        assert_eq!(k_subsets(3, 2), vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        assert_eq!(k_subsets(6, 3).len(), 20);
        assert_eq!(k_subsets(4, 0), vec![Vec::<usize>::new()]);
        assert!(k_subsets(2, 3).is_empty());
    }

    #[test]
    fn argmin_prefers_lowest_index() {
        assert_eq!(argmin_all_pairs(&[3.0, 1.0, 1.0, 2.0]), 1);
        assert_eq!(argmin_all_pairs(&[0.5]), 0);
    }

    #[test]
    fn min_of_r_predicate_count() {
        for r in 1..8usize {
            let t = GjTrace::new();
            let vals: Vec<_> = (0..r).map(|i| t.input(&format!("v{i}"), ((i * 7) % 5) as f64).unwrap()).collect();
            let idx = argmin_all_pairs(&vals);
            let plain: Vec<f64> = (0..r).map(|i| ((i * 7) % 5) as f64).collect();
            assert_eq!(idx, argmin_all_pairs(&plain));
            assert_eq!(t.predicate_count(), r * (r - 1) / 2);
            assert_eq!(t.max_degree(), 1);
        }
    }

    #[test]
    fn power_iteration_degree_is_q_plus_one() {
        for q in 0..5 {
            let t = GjTrace::new();
            let zero = t.constant(0.0);
            let n = 3;
            let m = FMat::new(n, n, (0..n * n).map(|i| t.input(&format!("m{i}"), 0.1 * i as f64).unwrap()).collect(), zero);
            let pi = FMat::new(n, 1, (0..n).map(|i| t.input(&format!("p{i}"), 1.0).unwrap()).collect(), zero);
            let out = power_iterate(&m, &pi, q);
            for v in &out.data {
                assert_eq!(v.degree(), q as u32 + 1);
            }
        }
    }

    #[test]
    fn knapsack_trace_counts_pairs() {
        let values = [4.0, 3.0, 5.0, 1.5, 2.5];
        let costs = [2.0, 1.0, 4.0, 0.5, 3.0];
        let t = GjTrace::new();
        let rho = t.input("rho", 1.0).unwrap();
        let traced = knapsack_greedy(rho, &values, &costs, 6.0);
        assert_eq!(traced, knapsack_greedy(1.0, &values, &costs, 6.0));
        let rep = t.report(1);
        assert_eq!(rep.predicate_count, 10);
        assert_eq!(rep.max_degree, 1);
        assert!((rep.pdim_bound - 10f64.log2()).abs() < 1e-12);
    }
}
