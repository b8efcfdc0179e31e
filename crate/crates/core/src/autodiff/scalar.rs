use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Numeric type that physics and element code is written against.
///
/// Implemented by `f64`, [`Dual`](super::Dual) and tape variables
/// [`Var`](super::Var). Comparisons go through [`Scalar::value`] and are
/// only meant for control flow; they never carry derivatives.
pub trait Scalar:
    Copy
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn cst(c: f64) -> Self;
    fn value(&self) -> f64;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn powf(self, p: f64) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;

    /// `sum_i c[i] * x[i]` recorded as one fused operation.
    fn lincomb(c: &[f64], x: &[Self]) -> Self;
    /// `sum_i a[i] * b[i]` recorded as one fused operation.
    fn dot(a: &[Self], b: &[Self]) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }

    fn one() -> Self {
        Self::cst(1.0)
    }

    fn sum(x: &[Self]) -> Self {
        let mut acc = Self::zero();
        for &v in x {
            acc += v;
        }
        acc
    }

    /// Absolute value; at zero the derivative of the positive branch is used.
    fn abs(self) -> Self {
        if self.value() >= 0.0 {
            self
        } else {
            -self
        }
    }

    /// Minimum; on ties the first argument (and its derivative) is returned.
    fn min(self, other: Self) -> Self {
        if self.value() <= other.value() {
            self
        } else {
            other
        }
    }

    /// Maximum; on ties the first argument (and its derivative) is returned.
    fn max(self, other: Self) -> Self {
        if self.value() >= other.value() {
            self
        } else {
            other
        }
    }

    fn square(self) -> Self {
        self * self
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    fn softplus(self) -> Self {
        let pos = self.max(Self::zero());
        pos + ((-self.abs()).exp() + 1.0).ln()
    }
}

impl Scalar for f64 {
    #[inline]
    fn cst(c: f64) -> Self {
        c
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    #[inline]
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn lincomb(c: &[f64], x: &[Self]) -> Self {
        debug_assert_eq!(c.len(), x.len());
        let mut acc = 0.0;
        for (ci, xi) in c.iter().zip(x) {
            acc += ci * xi;
        }
        acc
    }
    #[inline]
    fn dot(a: &[Self], b: &[Self]) -> Self {
        Self::lincomb(a, b)
    }
}
