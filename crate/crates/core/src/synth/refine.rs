//! Coefficient-space rows that a counterexample imposes on the children of a node.

use serde::{Deserialize, Serialize};

use super::embedding::CoefficientLayout;
use crate::barrier::BarrierKind;
use crate::error::Result;
use crate::scalar::Scalar;
use crate::system::SwitchedAffineSystem;
use crate::verifier::Condition;

/// How decrease-condition counterexamples are turned into children.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Refinement {
    /// `k` exclusion children plus `k·m` robust decrease children.
    #[default]
    TwoFamily,
    /// Only the `k·m` decrease children with the literal non-robust rows.
    Literal,
}

/// A counterexample state with the mode and piece a child commits to.
#[derive(Clone, Debug, PartialEq)]
pub struct Witness<T> {
    pub x: Vec<T>,
    pub condition: Condition,
    pub mode: Option<usize>,
    pub piece: Option<usize>,
}

/// Rows `a·θ ≤ b` of one child together with the witness entry it records.
#[derive(Clone, Debug, PartialEq)]
pub struct ChildRows<T> {
    pub rows: Vec<(Vec<T>, T)>,
    pub witness: Witness<T>,
}

fn neg<T: Scalar>(v: Vec<T>) -> Vec<T> {
    v.into_iter().map(|a| -a).collect()
}

fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&u, &v)| u - v).collect()
}

/// Family A row for piece `i`: `c_iᵀx − d_i ≥ eps`.
pub fn exclusion_row<T: Scalar>(layout: &CoefficientLayout, x: &[T], i: usize, eps: T) -> (Vec<T>, T) {
    (neg(layout.piece_row(i, x)), -eps)
}

/// Family B rows for the witness `(x, mode j, piece i)`: piece `i` attains
/// the max (min) at `x` by a margin `eps`, lies at or below `−eps`, and mode
/// `j` decreases it at rate `lambda` by at least `eps`.
#[allow(clippy::too_many_arguments)]
pub fn cw_rows<T: Scalar>(
    layout: &CoefficientLayout,
    sys: &SwitchedAffineSystem<T>,
    kind: BarrierKind,
    lambda: T,
    eps: T,
    x: &[T],
    j: usize,
    i: usize,
) -> Result<Vec<(Vec<T>, T)>> {
    let k = layout.pieces();
    let own = layout.piece_row(i, x);
    let mut rows = Vec::with_capacity(k + 1);
    for other in (0..k).filter(|&o| o != i) {
        let theirs = layout.piece_row(other, x);
        let a = match kind {
            BarrierKind::Max => sub(&theirs, &own),
            BarrierKind::Min => sub(&own, &theirs),
        };
        rows.push((a, -eps));
    }
    rows.push((own, -eps));
    rows.push((decrease_row(layout, sys, lambda, x, j, i)?, -eps));
    Ok(rows)
}

/// Row `r` with `r·θ = c_iᵀ(A_j x + b_j) + λ(c_iᵀx − d_i)`.
fn decrease_row<T: Scalar>(
    layout: &CoefficientLayout,
    sys: &SwitchedAffineSystem<T>,
    lambda: T,
    x: &[T],
    j: usize,
    i: usize,
) -> Result<Vec<T>> {
    let f = sys.flow(j, x)?;
    let mut row = vec![T::zero(); layout.len()];
    for (r, (&fv, &xv)) in f.iter().zip(x).enumerate() {
        row[layout.c_index(i, r)] = fv + lambda * xv;
    }
    row[layout.d_index(i)] = -lambda;
    Ok(row)
}

/// The literal decrease-witness rows: `c_iᵀx ≥ c_{i'}ᵀx` (≤ for min),
/// `c_iᵀx − d_i ≥ 0` and `c_iᵀ(A_j x + b_j) ≤ −λ(c_iᵀx − d_i)`.
pub fn cw_rows_literal<T: Scalar>(
    layout: &CoefficientLayout,
    sys: &SwitchedAffineSystem<T>,
    kind: BarrierKind,
    lambda: T,
    x: &[T],
    j: usize,
    i: usize,
) -> Result<Vec<(Vec<T>, T)>> {
    let k = layout.pieces();
    let mut rows = Vec::with_capacity(k + 1);
    for other in (0..k).filter(|&o| o != i) {
        let mut a = vec![T::zero(); layout.len()];
        let s = match kind {
            BarrierKind::Max => T::one(),
            BarrierKind::Min => -T::one(),
        };
        for (r, &xv) in x.iter().enumerate() {
            a[layout.c_index(other, r)] = s * xv;
            a[layout.c_index(i, r)] = -s * xv;
        }
        rows.push((a, T::zero()));
    }
    rows.push((neg(layout.piece_row(i, x)), T::zero()));
    rows.push((decrease_row(layout, sys, lambda, x, j, i)?, T::zero()));
    Ok(rows)
}

/// All children generated by a counterexample `x` of `condition`.
///
/// * C1: max barriers get one child with every piece `≤ −eps` at `x`; min
///   barriers one child with the first piece `≤ −eps`.
/// * C2p: max barriers get one child with the first piece `≥ eps`; min
///   barriers one child with every piece `≥ eps`.
/// * C3: exclusion children (one per piece for max, a single all-pieces one
///   for min) followed by the `k·m` decrease children ordered by mode, then piece.
#[allow(clippy::too_many_arguments)]
pub fn children<T: Scalar>(
    layout: &CoefficientLayout,
    sys: &SwitchedAffineSystem<T>,
    kind: BarrierKind,
    lambda: T,
    eps: T,
    scheme: Refinement,
    condition: Condition,
    x: &[T],
) -> Result<Vec<ChildRows<T>>> {
    let k = layout.pieces();
    let witness = |mode, piece| Witness {
        x: x.to_vec(),
        condition,
        mode,
        piece,
    };
    let below = |i: usize| (layout.piece_row(i, x), -eps);
    let mut out = Vec::new();
    match (condition, kind) {
        (Condition::C1, BarrierKind::Max) => out.push(ChildRows {
            rows: (0..k).map(below).collect(),
            witness: witness(None, None),
        }),
        (Condition::C1, BarrierKind::Min) => out.push(ChildRows {
            rows: vec![below(0)],
            witness: witness(None, Some(0)),
        }),
        (Condition::C2p, BarrierKind::Max) => out.push(ChildRows {
            rows: vec![exclusion_row(layout, x, 0, eps)],
            witness: witness(None, Some(0)),
        }),
        (Condition::C2p, BarrierKind::Min) => out.push(ChildRows {
            rows: (0..k).map(|i| exclusion_row(layout, x, i, eps)).collect(),
            witness: witness(None, None),
        }),
        (Condition::C3, _) => {
            if scheme == Refinement::TwoFamily {
                match kind {
                    BarrierKind::Max => {
                        for i in 0..k {
                            out.push(ChildRows {
                                rows: vec![exclusion_row(layout, x, i, eps)],
                                witness: witness(None, Some(i)),
                            });
                        }
                    }
                    BarrierKind::Min => out.push(ChildRows {
                        rows: (0..k).map(|i| exclusion_row(layout, x, i, eps)).collect(),
                        witness: witness(None, None),
                    }),
                }
            }
            for j in 0..sys.num_modes() {
                for i in 0..k {
                    let rows = match scheme {
                        Refinement::TwoFamily => cw_rows(layout, sys, kind, lambda, eps, x, j, i)?,
                        Refinement::Literal => cw_rows_literal(layout, sys, kind, lambda, x, j, i)?,
                    };
                    out.push(ChildRows {
                        rows,
                        witness: witness(Some(j), Some(i)),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Largest `a·θ − b` over the rows; positive iff `θ` violates some row.
pub fn max_violation<T: Scalar>(rows: &[(Vec<T>, T)], theta: &[T]) -> T {
    rows.iter()
        .map(|(a, b)| crate::scalar::dot(a, theta) - *b)
        .fold(T::neg_infinity(), T::max)
}
