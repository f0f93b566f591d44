use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar type the numerical kernels are written against.
///
/// Implemented for `f64` (plain evaluation) and for [`super::Var`]
/// (evaluation recorded on the reverse-mode tape). Mixed arithmetic with
/// `f64` constants is always written with the constant on the right.
pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn constant(v: f64) -> Self;

    fn value(self) -> f64;

    fn sqrt(self) -> Self;

    fn tanh(self) -> Self;

    fn recip(self) -> Self;

    /// `sum_i terms[i] * weights[i]`.
    fn weighted_sum(terms: &[Self], weights: &[f64]) -> Self;

    /// `sum_i a[i] * b[i]`.
    fn dot(a: &[Self], b: &[Self]) -> Self;

    fn zero() -> Self {
        Self::constant(0.0)
    }

    fn square(self) -> Self {
        self * self
    }
}

impl Real for f64 {
    #[inline]
    fn constant(v: f64) -> Self {
        v
    }

    #[inline]
    fn value(self) -> f64 {
        self
    }

    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }

    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }

    #[inline]
    fn recip(self) -> Self {
        1.0 / self
    }

    #[inline]
    fn weighted_sum(terms: &[Self], weights: &[f64]) -> Self {
        debug_assert_eq!(terms.len(), weights.len());
        terms.iter().zip(weights).map(|(t, w)| t * w).sum()
    }

    #[inline]
    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}
