use std::cell::RefCell;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::ops::{Add, Div, Mul, Sub};

use serde::{Deserialize, Serialize};

use super::field::GjField;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Div,
}

impl OpKind {
    fn commutative(self) -> bool {
        matches!(self, OpKind::Add | OpKind::Mul)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum NodeKey {
    Input(String),
    Const(u64),
    Op(OpKind, usize, usize),
}

/// Degree bookkeeping for one canonical node.
///
/// The value is bounded as `P / Π aᵢ^{pᵢ}` where `deg P ≤ num_deg` and each
/// atom `aᵢ` is the numerator polynomial of an earlier divisor node. Sums
/// over a shared atom reuse it instead of multiplying denominators, which
/// keeps bounds linear for programs that divide by one determinant many
/// times. With no shared atoms the rules reduce to the plain
/// `(n_a + d_b, d_a + d_b)` bookkeeping.
#[derive(Debug, Clone)]
struct NodeInfo {
    num_deg: u32,
    den: Vec<(usize, u32)>,
    den_deg: u32,
}

#[derive(Debug, Default)]
struct Inner {
    nodes: Vec<NodeInfo>,
    index: HashMap<NodeKey, usize>,
    n_inputs: usize,
    predicates: Vec<usize>,
    predicate_set: HashSet<usize>,
    max_degree: u32,
    fault: Option<Error>,
}

impl Inner {
    fn atom_deg(&self, atom: usize) -> u32 {
        self.nodes[atom].num_deg
    }

    fn den_deg(&self, den: &[(usize, u32)]) -> u32 {
        den.iter().map(|&(a, p)| p * self.atom_deg(a)).sum()
    }

    fn combine(&self, kind: OpKind, a: usize, b: usize) -> NodeInfo {
        let (ia, ib) = (&self.nodes[a], &self.nodes[b]);
        match kind {
            OpKind::Add | OpKind::Sub => {
                let den = merge(&ia.den, &ib.den, u32::max);
                let den_deg = self.den_deg(&den);
                let num_deg = (ia.num_deg + den_deg - ia.den_deg).max(ib.num_deg + den_deg - ib.den_deg);
                NodeInfo { num_deg, den, den_deg }
            }
            OpKind::Mul => {
                let den = merge(&ia.den, &ib.den, |x, y| x + y);
                NodeInfo { num_deg: ia.num_deg + ib.num_deg, den_deg: ia.den_deg + ib.den_deg, den }
            }
            OpKind::Div => {
                let extra: Vec<(usize, u32)> = if ib.num_deg > 0 { vec![(b, 1)] } else { Vec::new() };
                let den = merge(&ia.den, &extra, |x, y| x + y);
                let den_deg = self.den_deg(&den);
                NodeInfo { num_deg: ia.num_deg + ib.den_deg, den, den_deg }
            }
        }
    }

    fn intern(&mut self, key: NodeKey, info: impl FnOnce(&Self) -> NodeInfo) -> usize {
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let info = info(self);
        self.max_degree = self.max_degree.max(info.num_deg.max(info.den_deg));
        let id = self.nodes.len();
        self.nodes.push(info);
        self.index.insert(key, id);
        id
    }
}

/// Union of two sorted atom lists, combining shared powers with `f`.
fn merge(a: &[(usize, u32)], b: &[(usize, u32)], f: impl Fn(u32, u32) -> u32) -> Vec<(usize, u32)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(&(x, p)), Some(&(y, q))) if x == y => {
                out.push((x, f(p, q)));
                i += 1;
                j += 1;
            }
            (Some(&(x, p)), Some(&(y, _))) if x < y => {
                out.push((x, p));
                i += 1;
            }
            (Some(&(x, p)), None) => {
                out.push((x, p));
                i += 1;
            }
            (_, Some(&(y, q))) => {
                out.push((y, q));
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    out
}

/// An instrumented GJ computation: a hash-consed expression DAG with degree
/// bounds per node and the set of distinct branch predicates.
///
/// Structurally identical expressions (commutative operands in canonical
/// order) share one node, so a predicate branched on twice counts once.
/// Algebraically equal but structurally different expressions count
/// separately; the predicate count is an upper bound.
#[derive(Default)]
pub struct GjTrace {
    inner: RefCell<Inner>,
}

impl fmt::Debug for GjTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = self.report(0);
        f.debug_struct("GjTrace")
            .field("n_inputs", &r.n_inputs)
            .field("max_degree", &r.max_degree)
            .field("predicate_count", &r.predicate_count)
            .finish()
    }
}

/// A value computed inside a [`GjTrace`].
#[derive(Clone, Copy)]
pub struct Traced<'t> {
    trace: &'t GjTrace,
    node: usize,
    numeric: f64,
}

impl fmt::Debug for Traced<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Traced(#{}, {}, deg {:?})", self.node, self.numeric, self.degrees())
    }
}

impl<'t> Traced<'t> {
    pub fn node(&self) -> usize {
        self.node
    }

    pub fn numeric(&self) -> f64 {
        self.numeric
    }

    /// `(numerator degree bound, denominator degree bound)`.
    pub fn degrees(&self) -> (u32, u32) {
        let inner = self.trace.inner.borrow();
        let info = &inner.nodes[self.node];
        (info.num_deg, info.den_deg)
    }

    pub fn num_deg(&self) -> u32 {
        self.degrees().0
    }

    pub fn den_deg(&self) -> u32 {
        self.degrees().1
    }

    /// `max(num_deg, den_deg)`.
    pub fn degree(&self) -> u32 {
        let (n, d) = self.degrees();
        n.max(d)
    }

    pub fn trace(&self) -> &'t GjTrace {
        self.trace
    }
}

impl GjTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a named real input (degree 1).
    pub fn input(&self, name: &str, value: f64) -> Result<Traced<'_>> {
        let mut inner = self.inner.borrow_mut();
        let key = NodeKey::Input(name.to_owned());
        if inner.index.contains_key(&key) {
            return Err(Error::DuplicateInput(name.to_owned()));
        }
        inner.n_inputs += 1;
        let node = inner.intern(key, |_| NodeInfo { num_deg: 1, den: Vec::new(), den_deg: 0 });
        Ok(Traced { trace: self, node, numeric: value })
    }

    /// A constant (degree 0).
    pub fn constant(&self, c: f64) -> Traced<'_> {
        let node = self
            .inner
            .borrow_mut()
            .intern(NodeKey::Const(c.to_bits()), |_| NodeInfo { num_deg: 0, den: Vec::new(), den_deg: 0 });
        Traced { trace: self, node, numeric: c }
    }

    /// `a ⊙ b`; division by a numerically zero value is an error.
    pub fn op<'a>(&'a self, a: Traced<'a>, b: Traced<'a>, kind: OpKind) -> Result<Traced<'a>> {
        debug_assert!(std::ptr::eq(a.trace, self) && std::ptr::eq(b.trace, self));
        if kind == OpKind::Div && b.numeric == 0.0 {
            return Err(Error::TracedDivisionByZero(b.node));
        }
        let numeric = match kind {
            OpKind::Add => a.numeric + b.numeric,
            OpKind::Sub => a.numeric - b.numeric,
            OpKind::Mul => a.numeric * b.numeric,
            OpKind::Div => a.numeric / b.numeric,
        };
        let (x, y) = if kind.commutative() && b.node < a.node { (b.node, a.node) } else { (a.node, b.node) };
        let node = self.inner.borrow_mut().intern(NodeKey::Op(kind, x, y), |inner| inner.combine(kind, x, y));
        Ok(Traced { trace: self, node, numeric })
    }

    /// The conditional `v ≥ 0`; records `v` as a predicate.
    pub fn branch(&self, v: Traced<'_>) -> bool {
        let mut inner = self.inner.borrow_mut();
        if inner.predicate_set.insert(v.node) {
            inner.predicates.push(v.node);
        }
        v.numeric >= 0.0
    }

    pub fn predicate_count(&self) -> usize {
        self.inner.borrow().predicates.len()
    }

    pub fn max_degree(&self) -> u32 {
        self.inner.borrow().max_degree
    }

    pub fn n_inputs(&self) -> usize {
        self.inner.borrow().n_inputs
    }

    pub fn node_count(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    /// First fault hit through the operator overloads, if any.
    pub fn fault(&self) -> Option<Error> {
        self.inner.borrow().fault.clone()
    }

    /// Summary with the pseudo-dimension bound for `n_params` parameters.
    pub fn report(&self, n_params: usize) -> GjReport {
        let inner = self.inner.borrow();
        GjReport {
            n_inputs: inner.n_inputs,
            max_degree: inner.max_degree,
            predicate_count: inner.predicates.len(),
            pdim_bound: pdim_bound(n_params, inner.max_degree, inner.predicates.len()),
        }
    }

    /// Like [`report`](Self::report) but fails if the run hit a fault.
    pub fn finish(&self, n_params: usize) -> Result<GjReport> {
        match self.fault() {
            Some(e) => Err(e),
            None => Ok(self.report(n_params)),
        }
    }

    fn apply<'a>(&'a self, a: Traced<'a>, b: Traced<'a>, kind: OpKind) -> Traced<'a> {
        match self.op(a, b, kind) {
            Ok(v) => v,
            Err(e) => {
                let mut inner = self.inner.borrow_mut();
                if inner.fault.is_none() {
                    inner.fault = Some(e);
                }
                drop(inner);
                // Continue the run on a poisoned constant; `finish` reports the fault.
                self.constant(f64::NAN)
            }
        }
    }
}

/// Degree-and-predicate report, serialized as the trace document.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GjReport {
    pub n_inputs: usize,
    pub max_degree: u32,
    pub predicate_count: usize,
    pub pdim_bound: f64,
}

/// `n · log₂(max(2, Δ·p))`, the pseudo-dimension bound up to its hidden
/// constant. A predicate-free program still compares its output against the
/// threshold once, so `p` is taken as at least 1.
pub fn pdim_bound(n_params: usize, degree: u32, predicates: usize) -> f64 {
    let dp = f64::from(degree.max(1)) * predicates.max(1) as f64;
    n_params as f64 * dp.max(2.0).log2()
}

macro_rules! traced_binop {
    ($tr:ident, $method:ident, $kind:expr) => {
        impl<'t> $tr for Traced<'t> {
            type Output = Traced<'t>;

            fn $method(self, rhs: Traced<'t>) -> Traced<'t> {
                self.trace.apply(self, rhs, $kind)
            }
        }
    };
}

traced_binop!(Add, add, OpKind::Add);
traced_binop!(Sub, sub, OpKind::Sub);
traced_binop!(Mul, mul, OpKind::Mul);
traced_binop!(Div, div, OpKind::Div);

impl<'t> GjField for Traced<'t> {
    fn lift(self, c: f64) -> Self {
        self.trace.constant(c)
    }

    fn ge_zero(self) -> bool {
        self.trace.branch(self)
    }

    fn value(self) -> f64 {
        self.numeric
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inputs_and_constants() {
        let t = GjTrace::new();
        assert_eq!(t.constant(3.0).degree(), 0);
        let x = t.input("x", 2.0).unwrap();
        assert_eq!(x.degrees(), (1, 0));
        assert!(matches!(t.input("x", 1.0), Err(Error::DuplicateInput(_))));
        assert_eq!(t.n_inputs(), 1);
    }

    #[test]
    fn degree_rules() {
        let t = GjTrace::new();
        let x = t.input("x", 2.0).unwrap();
        let y = t.input("y", 3.0).unwrap();
        assert_eq!((x * x).degrees(), (2, 0));
        assert_eq!((x / x).degrees(), (1, 1));
        // Disjoint denominators: plain (max(n_a+d_b, n_b+d_a), d_a+d_b).
        let a = x / y; // (1, 1)
        let b = (x * x) / (x + y); // (2, 1)
        assert_eq!((a + b).degrees(), (3, 2));
        assert_eq!((a * b).degrees(), (3, 2));
        assert_eq!((a / b).degrees(), (2, 3));
        // Shared denominator atom is reused.
        let c = y / (x + y);
        assert_eq!((b + c).degrees(), (2, 1));
    }

    #[test]
    fn division_by_zero() {
        let t = GjTrace::new();
        let x = t.input("x", 0.0).unwrap();
        let one = t.constant(1.0);
        assert!(matches!(t.op(one, x, OpKind::Div), Err(Error::TracedDivisionByZero(_))));
        let _ = one / x;
        assert!(t.finish(1).is_err());
    }

    #[test]
    fn predicates_are_deduplicated() {
        let t = GjTrace::new();
        let x = t.input("x", 1.0).unwrap();
        let y = t.input("y", -1.0).unwrap();
        assert!(t.branch(x + y));
        assert!(t.branch(y + x));
        assert_eq!(t.predicate_count(), 1);
        assert!(!t.branch(y - x));
        assert_eq!(t.predicate_count(), 2);
    }

    #[test]
    fn pdim_bound_examples() {
        assert_eq!(pdim_bound(5, 1, 1), 5.0);
        assert_eq!(pdim_bound(1, 1, 15), 15f64.log2());
    }
}
