//! Scalar abstraction shared by threshold ranges and metric archives.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::Float;

/// Floating-point sample type. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float + FromStr + Display + Debug + Default + Send + Sync + 'static
{
    fn as_f64(self) -> f64;
    fn of_f64(v: f64) -> Self;

    fn of_usize(n: usize) -> Self {
        Self::of_f64(n as f64)
    }
}

impl Scalar for f32 {
    fn as_f64(self) -> f64 {
        self as f64
    }

    fn of_f64(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    fn as_f64(self) -> f64 {
        self
    }

    fn of_f64(v: f64) -> Self {
        v
    }
}
