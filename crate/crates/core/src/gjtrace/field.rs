//! Scalar abstraction shared by numeric and traced executions.

use std::ops::{Add, Div, Mul, Sub};

/// A value a GJ program may compute with: the four field operations plus the
/// `v ≥ 0` conditional.
///
/// Generic code written against this trait runs unchanged on `f64` and on
/// [`Traced`](super::Traced) values, so a traced run reproduces the numeric
/// run operation for operation.
pub trait GjField:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self>
{
    /// A constant living in the same computation as `self`.
    fn lift(self, c: f64) -> Self;

    /// The conditional `self ≥ 0`.
    fn ge_zero(self) -> bool;

    /// Concrete value of this run.
    fn value(self) -> f64;
}

impl GjField for f64 {
    #[inline]
    fn lift(self, c: f64) -> Self {
        c
    }

    #[inline]
    fn ge_zero(self) -> bool {
        self >= 0.0
    }

    #[inline]
    fn value(self) -> f64 {
        self
    }
}

/// Small row-major matrix over a [`GjField`], carrying its own zero so that
/// constants can be produced without a global context.
#[derive(Clone, Debug)]
pub struct FMat<F> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<F>,
    pub zero: F,
}

impl<F: GjField> FMat<F> {
    pub fn new(rows: usize, cols: usize, data: Vec<F>, zero: F) -> Self {
        assert_eq!(data.len(), rows * cols, "FMat data length");
        Self { rows, cols, data, zero }
    }

    pub fn zeros(rows: usize, cols: usize, zero: F) -> Self {
        Self { rows, cols, data: vec![zero; rows * cols], zero }
    }

    pub fn identity(n: usize, zero: F) -> Self {
        let mut m = Self::zeros(n, n, zero);
        let one = zero.lift(1.0);
        for i in 0..n {
            m.data[i * n + i] = one;
        }
        m
    }

    /// Lift a numeric matrix into constants of this field.
    pub fn lift_from(rows: usize, cols: usize, values: &[f64], zero: F) -> Self {
        Self::new(rows, cols, values.iter().map(|&v| zero.lift(v)).collect(), zero)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> F {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: F) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.at(i, j));
            }
        }
        Self::new(self.cols, self.rows, data, self.zero)
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "FMat product shape");
        let mut data = Vec::with_capacity(self.rows * rhs.cols);
        for i in 0..self.rows {
            for j in 0..rhs.cols {
                data.push(sum((0..self.cols).map(|l| self.at(i, l) * rhs.at(l, j)), self.zero));
            }
        }
        Self::new(self.rows, rhs.cols, data, self.zero)
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect();
        Self::new(self.rows, self.cols, data, self.zero)
    }

    pub fn scale(&self, c: F) -> Self {
        Self::new(self.rows, self.cols, self.data.iter().map(|&v| v * c).collect(), self.zero)
    }

    pub fn div_scalar(&self, c: F) -> Self {
        Self::new(self.rows, self.cols, self.data.iter().map(|&v| v / c).collect(), self.zero)
    }

    pub fn trace(&self) -> F {
        sum((0..self.rows.min(self.cols)).map(|i| self.at(i, i)), self.zero)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(&self.data[r * self.cols..(r + 1) * self.cols]);
        }
        Self::new(rows.len(), self.cols, data, self.zero)
    }

    pub fn select_cols(&self, cols: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for i in 0..self.rows {
            for &c in cols {
                data.push(self.at(i, c));
            }
        }
        Self::new(self.rows, cols.len(), data, self.zero)
    }

    /// Sum of squared entries.
    pub fn fro_sq(&self) -> F {
        sum(self.data.iter().map(|&v| v * v), self.zero)
    }

    pub fn values(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.value()).collect()
    }
}

/// Left-to-right sum; the empty sum is `zero`.
pub fn sum<F: GjField>(mut terms: impl Iterator<Item = F>, zero: F) -> F {
    match terms.next() {
        None => zero,
        Some(first) => terms.fold(first, |acc, t| acc + t),
    }
}
