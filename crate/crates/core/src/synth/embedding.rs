//! Flattening of barrier coefficients into a single vector.
//!
//! Layout: `[c_1, d_1, c_2, d_2, …, c_k, d_k]`, each block of length `n + 1`.

use crate::barrier::Piece;
use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoefficientLayout {
    pieces: usize,
    dim: usize,
}

impl CoefficientLayout {
    pub fn new(pieces: usize, dim: usize) -> Result<Self> {
        if pieces == 0 || dim == 0 {
            return Err(Error::Input("piece count and state dimension must be positive".into()));
        }
        Ok(Self { pieces, dim })
    }

    #[inline]
    pub fn pieces(&self) -> usize {
        self.pieces
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Length of the flattened vector, `k(n + 1)`.
    #[inline]
    pub fn len(&self) -> usize {
        self.pieces * (self.dim + 1)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn c_index(&self, piece: usize, coord: usize) -> usize {
        debug_assert!(piece < self.pieces && coord < self.dim);
        piece * (self.dim + 1) + coord
    }

    #[inline]
    pub fn d_index(&self, piece: usize) -> usize {
        debug_assert!(piece < self.pieces);
        piece * (self.dim + 1) + self.dim
    }

    pub fn flatten<T: Scalar>(&self, pieces: &[Piece<T>]) -> Result<Vec<T>> {
        check_dim("piece count", self.pieces, pieces.len())?;
        let mut out = Vec::with_capacity(self.len());
        for p in pieces {
            check_dim("piece normal", self.dim, p.c.len())?;
            out.extend_from_slice(&p.c);
            out.push(p.d);
        }
        Ok(out)
    }

    pub fn unflatten<T: Scalar>(&self, theta: &[T]) -> Result<Vec<Piece<T>>> {
        check_dim("coefficient vector", self.len(), theta.len())?;
        Ok(theta
            .chunks_exact(self.dim + 1)
            .map(|block| Piece::new(block[..self.dim].to_vec(), block[self.dim]))
            .collect())
    }

    /// Row `r` with `r·θ = c_iᵀx − d_i`.
    pub fn piece_row<T: Scalar>(&self, piece: usize, x: &[T]) -> Vec<T> {
        let mut row = vec![T::zero(); self.len()];
        for (j, &v) in x.iter().enumerate() {
            row[self.c_index(piece, j)] = v;
        }
        row[self.d_index(piece)] = -T::one();
        row
    }
}
