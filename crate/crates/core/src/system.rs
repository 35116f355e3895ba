//! Switched affine dynamics `ẋ = A_l x + b_l`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::Mat;
use crate::scalar::{all_finite, Scalar};

/// One affine vector field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Mode<T> {
    pub a: Mat<T>,
    pub b: Vec<T>,
}

/// A finite set of affine modes over a shared state space. Immutable once built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SwitchedAffineSystem<T> {
    dim: usize,
    modes: Vec<Mode<T>>,
}

impl<T: Scalar> SwitchedAffineSystem<T> {
    pub fn new(modes: Vec<Mode<T>>) -> Result<Self> {
        let first = modes
            .first()
            .ok_or_else(|| Error::Input("a switched system needs at least one mode".into()))?;
        let dim = first.a.rows();
        if dim == 0 {
            return Err(Error::Input("state dimension must be positive".into()));
        }
        for m in &modes {
            check_dim("mode matrix rows", dim, m.a.rows())?;
            check_dim("mode matrix columns", dim, m.a.cols())?;
            check_dim("mode offset", dim, m.b.len())?;
            if !m.a.is_finite() || !all_finite(&m.b) {
                return Err(Error::NonFinite("mode dynamics"));
            }
        }
        Ok(Self { dim, modes })
    }

    /// Builds a system from `(A, b)` pairs given as nested rows.
    pub fn from_pairs(pairs: &[(Vec<Vec<T>>, Vec<T>)]) -> Result<Self> {
        let modes = pairs
            .iter()
            .map(|(a, b)| {
                let a = Mat::from_rows(a).ok_or_else(|| Error::Input("ragged mode matrix".into()))?;
                Ok(Mode { a, b: b.clone() })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(modes)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[Mode<T>] {
        &self.modes
    }

    /// Mode by zero-based index.
    pub fn mode(&self, l: usize) -> Result<&Mode<T>> {
        self.modes.get(l).ok_or(Error::ModeOutOfRange {
            index: l,
            modes: self.modes.len(),
        })
    }

    /// `A_l x + b_l` for the zero-based mode `l`.
    pub fn flow(&self, l: usize, x: &[T]) -> Result<Vec<T>> {
        let m = self.mode(l)?;
        check_dim("state", self.dim, x.len())?;
        Ok(m.a.matvec(x).into_iter().zip(&m.b).map(|(v, &b)| v + b).collect())
    }

    /// Per-mode `‖A_l‖_∞` (max absolute row sum) and the maximum over modes.
    pub fn mode_norms(&self) -> (Vec<T>, T) {
        let norms: Vec<T> = self.modes.iter().map(|m| m.a.norm_inf()).collect();
        let max = norms.iter().copied().fold(T::zero(), T::max);
        (norms, max)
    }

    pub fn cast<U: Scalar>(&self) -> SwitchedAffineSystem<U> {
        let conv = |v: &T| U::lit(v.to_f64_lossy());
        SwitchedAffineSystem {
            dim: self.dim,
            modes: self
                .modes
                .iter()
                .map(|m| Mode {
                    a: Mat::from_flat(self.dim, self.dim, m.a.as_slice().iter().map(conv).collect()),
                    b: m.b.iter().map(conv).collect(),
                })
                .collect(),
        }
    }
}
