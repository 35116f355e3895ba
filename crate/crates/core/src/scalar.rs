//! Floating point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumCast};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// A real scalar type: `f32` or `f64`.
///
/// Besides the arithmetic supplied by [`num_traits::Float`], each scalar
/// carries the numerical tolerances used by the LP solver, the center
/// computations and the barrier evaluation. The `f64` values are the
/// reference ones; `f32` tolerances are loosened to stay above its
/// rounding noise.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumCast
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Constraint feasibility tolerance.
    fn tol_feas() -> Self;
    /// Objective optimality tolerance.
    fn tol_opt() -> Self;
    /// Smallest magnitude accepted as a simplex pivot.
    fn tol_pivot() -> Self;
    /// Tolerance for deciding that an affine piece attains the max/min.
    fn tol_active() -> Self;
    /// Tolerance for ties in the merit argmax.
    fn tol_tie() -> Self;

    /// Converts an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    /// Converts an index or count.
    #[inline]
    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("count representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn tol_feas() -> Self {
        1e-7
    }
    fn tol_opt() -> Self {
        1e-7
    }
    fn tol_pivot() -> Self {
        1e-10
    }
    fn tol_active() -> Self {
        1e-7
    }
    fn tol_tie() -> Self {
        1e-9
    }
}

impl Scalar for f32 {
    fn tol_feas() -> Self {
        1e-4
    }
    fn tol_opt() -> Self {
        1e-4
    }
    fn tol_pivot() -> Self {
        1e-6
    }
    fn tol_active() -> Self {
        1e-4
    }
    fn tol_tie() -> Self {
        1e-5
    }
}

/// Dot product of two equally long slices.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn norm2<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

#[inline]
pub fn norm1<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |acc, &x| acc + x.abs())
}

#[inline]
pub fn norm_inf<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()))
}

pub(crate) fn all_finite<T: Scalar>(a: &[T]) -> bool {
    a.iter().all(|x| x.is_finite())
}
