//! Floating-point scalar abstraction.
//!
//! All probability and objective arithmetic in this crate is generic over
//! [`Real`], so the same code runs at `f32` or `f64`. The accuracy numbers
//! quoted elsewhere (log-gamma to 1e-12 relative, partition sums to 1e-10)
//! assume `f64`; `f32` gets whatever single precision can deliver.

use num_traits::{Float, FromPrimitive, NumAssign};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Scalar type for log-probabilities, objectives, and coordinates: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Shorthand for converting an `f64` constant into the scalar type.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant representable in scalar type")
    }

    /// Shorthand for converting a count into the scalar type.
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }

    /// Lossy view as `f64`, used where a report or serializer needs a
    /// concrete width.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `ln(exp(a) + exp(b))` without overflow; `-inf` inputs behave as zero mass.
pub fn log_sum_exp_pair<R: Real>(a: R, b: R) -> R {
    let m = a.max(b);
    if m == R::neg_infinity() {
        return R::neg_infinity();
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `ln Σ exp(x_i)` over a slice; empty input is zero mass (`-inf`).
pub fn log_sum_exp<R: Real>(values: &[R]) -> R {
    let m = values
        .iter()
        .copied()
        .fold(R::neg_infinity(), |acc, v| acc.max(v));
    if m == R::neg_infinity() {
        return R::neg_infinity();
    }
    let sum: R = values.iter().map(|&v| (v - m).exp()).sum();
    m + sum.ln()
}
