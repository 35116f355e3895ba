//! Halfspace polyhedra, linear programming and inscribed centers.

mod center;
mod lp;

pub use center::{chebyshev, mve_center, ChebyshevBall, InscribedEllipsoid, MveOptions};
pub use lp::{solve_lp, LpOutcome, LpStatus, Sense};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::Mat;
use crate::scalar::{all_finite, dot, Scalar};

/// The set `{x | A x ≤ b}`.
///
/// Emptiness is a property to query, not an invalid state. Values are never
/// mutated in place: [`Polyhedron::append_rows`] returns a new polyhedron.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Polyhedron<T> {
    a: Mat<T>,
    b: Vec<T>,
    dim: usize,
}

impl<T: Scalar> Polyhedron<T> {
    pub fn new(a: Mat<T>, b: Vec<T>) -> Result<Self> {
        let dim = a.cols();
        Self::with_dim(dim, a, b)
    }

    /// Like [`Polyhedron::new`] but with an explicit dimension, so that a
    /// polyhedron with zero rows still knows its ambient space.
    pub fn with_dim(dim: usize, a: Mat<T>, b: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Input("polyhedron dimension must be positive".into()));
        }
        if a.rows() > 0 {
            check_dim("polyhedron columns", dim, a.cols())?;
        }
        check_dim("polyhedron offsets", a.rows(), b.len())?;
        if !a.is_finite() || !all_finite(&b) {
            return Err(Error::NonFinite("polyhedron"));
        }
        let a = if a.rows() == 0 { Mat::zeros(0, dim) } else { a };
        Ok(Self { a, b, dim })
    }

    pub fn from_rows(rows: &[Vec<T>], b: Vec<T>) -> Result<Self> {
        let a = Mat::from_rows(rows).ok_or_else(|| Error::Input("ragged constraint rows".into()))?;
        Self::new(a, b)
    }

    /// The whole space `ℝ^dim` (no rows).
    pub fn universe(dim: usize) -> Result<Self> {
        Self::with_dim(dim, Mat::zeros(0, dim), Vec::new())
    }

    /// Axis-aligned box `∏ [lo_r, hi_r]`.
    pub fn from_box(bounds: &[(T, T)]) -> Result<Self> {
        let dim = bounds.len();
        let mut a = Mat::zeros(0, dim);
        let mut b = Vec::with_capacity(2 * dim);
        for (r, &(lo, hi)) in bounds.iter().enumerate() {
            let mut row = vec![T::zero(); dim];
            row[r] = T::one();
            a.push_row(&row);
            b.push(hi);
            row[r] = -T::one();
            a.push_row(&row);
            b.push(-lo);
        }
        Self::with_dim(dim, a, b)
    }

    /// Singleton `{x}` as a degenerate box.
    pub fn point(x: &[T]) -> Result<Self> {
        let bounds: Vec<_> = x.iter().map(|&v| (v, v)).collect();
        Self::from_box(&bounds)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    #[inline]
    pub fn a(&self) -> &Mat<T> {
        &self.a
    }

    #[inline]
    pub fn b(&self) -> &[T] {
        &self.b
    }

    pub fn row(&self, i: usize) -> (&[T], T) {
        (self.a.row(i), self.b[i])
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[T], T)> + '_ {
        self.a.row_iter().zip(self.b.iter().copied())
    }

    /// Largest constraint violation `max_j (a_jᵀx − b_j)`, or `-∞` with no rows.
    pub fn max_violation(&self, x: &[T]) -> T {
        self.rows()
            .map(|(a, b)| dot(a, x) - b)
            .fold(T::neg_infinity(), T::max)
    }

    pub fn contains(&self, x: &[T], tol: T) -> bool {
        x.len() == self.dim && self.max_violation(x) <= tol
    }

    /// Intersection with the rows `A' x ≤ b'`.
    pub fn append_rows(&self, a: &Mat<T>, b: &[T]) -> Result<Self> {
        if a.rows() > 0 {
            check_dim("appended rows", self.dim, a.cols())?;
        }
        check_dim("appended offsets", a.rows(), b.len())?;
        if !a.is_finite() || !all_finite(b) {
            return Err(Error::NonFinite("appended rows"));
        }
        let mut out = self.clone();
        for (row, &bi) in a.row_iter().zip(b) {
            out.a.push_row(row);
            out.b.push(bi);
        }
        Ok(out)
    }

    pub fn append_row(&self, a: &[T], b: T) -> Result<Self> {
        let m = Mat::from_flat(1, a.len(), a.to_vec());
        self.append_rows(&m, &[b])
    }

    pub fn intersect(&self, other: &Self) -> Result<Self> {
        self.append_rows(&other.a, &other.b)
    }

    /// True iff the polyhedron has no point (within the LP feasibility tolerance).
    pub fn is_empty(&self) -> Result<bool> {
        let out = solve_lp(&vec![T::zero(); self.dim], Sense::Minimize, self)?;
        Ok(out.status == LpStatus::Infeasible)
    }

    /// Bounding interval of each coordinate; `None` if some coordinate is unbounded
    /// or the polyhedron is empty.
    pub fn bounding_box(&self) -> Result<Option<Vec<(T, T)>>> {
        let mut out = Vec::with_capacity(self.dim);
        let mut e = vec![T::zero(); self.dim];
        for r in 0..self.dim {
            e[r] = T::one();
            let lo = solve_lp(&e, Sense::Minimize, self)?;
            let hi = solve_lp(&e, Sense::Maximize, self)?;
            e[r] = T::zero();
            match (lo.objective, hi.objective) {
                (Some(l), Some(h)) => out.push((l, h)),
                _ => return Ok(None),
            }
        }
        Ok(Some(out))
    }

    /// Converts the scalar type.
    pub fn cast<U: Scalar>(&self) -> Polyhedron<U> {
        let conv = |v: &T| U::lit(v.to_f64_lossy());
        Polyhedron {
            a: Mat::from_flat(
                self.a.rows(),
                self.a.cols(),
                self.a.as_slice().iter().map(conv).collect(),
            ),
            b: self.b.iter().map(conv).collect(),
            dim: self.dim,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_membership() {
        let p = Polyhedron::<f64>::from_box(&[(-1.0, 1.0), (0.0, 2.0)]).unwrap();
        assert_eq!(p.num_rows(), 4);
        assert!(p.contains(&[0.5, 1.0], 0.0));
        assert!(!p.contains(&[1.5, 1.0], 1e-9));
        assert!((p.max_violation(&[1.5, 1.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn append_is_value_semantic() {
        let p = Polyhedron::<f64>::from_box(&[(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
        let q = p.append_rows(&Mat::zeros(0, 2), &[]).unwrap();
        assert_eq!(p, q);
        let r = p.append_row(&[1.0, 0.0], 0.0).unwrap();
        assert_eq!(p.num_rows(), 4);
        assert_eq!(r.num_rows(), 5);
    }

    #[test]
    fn append_dimension_mismatch() {
        let p = Polyhedron::<f64>::from_box(&[(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
        let bad = Mat::<f64>::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            p.append_rows(&bad, &[0.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn rejects_nan() {
        let a = Mat::<f64>::from_rows(&[vec![f64::NAN, 0.0]]).unwrap();
        assert!(matches!(Polyhedron::new(a, vec![1.0]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn emptiness_query() {
        let p = Polyhedron::<f64>::from_rows(&[vec![1.0], vec![-1.0]], vec![-1.0, -1.0]).unwrap();
        assert!(p.is_empty().unwrap());
        let q = Polyhedron::<f64>::point(&[0.3, 0.4]).unwrap();
        assert!(!q.is_empty().unwrap());
    }
}
