//! Scalar abstraction for the numerical core.
//!
//! The dense-network math in [`crate::net`] is written against this trait so
//! it works for `f32` and `f64` alike. Everything above the network layer
//! (environments, policies, file formats) is pinned to `f64`: artifacts are
//! serialized as 17-significant-digit decimals and must round-trip exactly.

use std::fmt::{Debug, Display};

use num_traits::{Float, NumAssign};
use rand::distr::uniform::SampleUniform;

pub trait Scalar:
    Float + NumAssign + SampleUniform + Debug + Display + Default + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn from_usize(v: usize) -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn from_usize(v: usize) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn from_usize(v: usize) -> Self {
        v as f64
    }
}
