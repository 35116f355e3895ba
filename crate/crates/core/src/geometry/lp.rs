//! Dense two-phase primal simplex over free variables.
//!
//! `min/max cᵀx  s.t.  A x ≤ b` with `x` unrestricted. Free variables are
//! split as `x = x⁺ − x⁻`, every row gets a slack, and rows with negative
//! right-hand side get an artificial variable for phase one. Entering columns
//! are chosen by Dantzig's rule; after a run of degenerate pivots the solver
//! switches to Bland's smallest-index rule, which cannot cycle.

use serde::{Deserialize, Serialize};

use super::Polyhedron;
use crate::error::{check_dim, Error, Result};
use crate::scalar::{dot, norm_inf, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Result of [`solve_lp`]. `point` and `objective` are present iff the status is optimal.
#[derive(Clone, Debug, PartialEq)]
pub struct LpOutcome<T> {
    pub status: LpStatus,
    pub point: Option<Vec<T>>,
    pub objective: Option<T>,
}

impl<T> LpOutcome<T> {
    fn without_point(status: LpStatus) -> Self {
        Self {
            status,
            point: None,
            objective: None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_STREAK: usize = 20;

pub fn solve_lp<T: Scalar>(objective: &[T], sense: Sense, p: &Polyhedron<T>) -> Result<LpOutcome<T>> {
    check_dim("LP objective", p.dim(), objective.len())?;
    let cost: Vec<T> = match sense {
        Sense::Minimize => objective.to_vec(),
        Sense::Maximize => objective.iter().map(|&c| -c).collect(),
    };
    let mut tab = Tableau::build(p);
    if !tab.phase_one()? {
        return Ok(LpOutcome::without_point(LpStatus::Infeasible));
    }
    if !tab.phase_two(&cost)? {
        return Ok(LpOutcome::without_point(LpStatus::Unbounded));
    }
    let x = tab.primal(p.dim());
    let obj = dot(objective, &x);
    Ok(LpOutcome {
        status: LpStatus::Optimal,
        point: Some(x),
        objective: Some(obj),
    })
}

struct Tableau<T> {
    /// Constraint rows, each of width `ncols + 1` (last entry is the rhs).
    t: Vec<T>,
    /// Reduced-cost row of width `ncols + 1`; last entry is minus the objective.
    z: Vec<T>,
    m: usize,
    n: usize,
    ncols: usize,
    first_art: usize,
    basis: Vec<usize>,
    /// Columns that may not enter the basis.
    blocked: Vec<bool>,
    max_pivots: usize,
}

impl<T: Scalar> Tableau<T> {
    fn build(p: &Polyhedron<T>) -> Self {
        let n = p.dim();
        let m = p.num_rows();
        let negative: Vec<bool> = p.b().iter().map(|&b| b < T::zero()).collect();
        let nart = negative.iter().filter(|&&v| v).count();
        let first_art = 2 * n + m;
        let ncols = first_art + nart;
        let w = ncols + 1;
        let mut t = vec![T::zero(); m * w];
        let mut basis = vec![0; m];
        let mut art = first_art;
        for (i, (a, b)) in p.rows().enumerate() {
            // Row equilibration: scaling a row does not change the feasible set.
            let s = norm_inf(a).max(b.abs()).max(T::min_positive_value());
            let s = if s > T::zero() { s } else { T::one() };
            let sign = if negative[i] { -T::one() } else { T::one() };
            let row = &mut t[i * w..(i + 1) * w];
            for j in 0..n {
                row[j] = sign * a[j] / s;
                row[n + j] = -sign * a[j] / s;
            }
            row[2 * n + i] = sign;
            row[ncols] = sign * b / s;
            if negative[i] {
                row[art] = T::one();
                basis[i] = art;
                art += 1;
            } else {
                basis[i] = 2 * n + i;
            }
        }
        Self {
            t,
            z: vec![T::zero(); w],
            m,
            n,
            ncols,
            first_art,
            basis,
            blocked: vec![false; ncols],
            max_pivots: 200 * (m + ncols + 10),
        }
    }

    #[inline]
    fn w(&self) -> usize {
        self.ncols + 1
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> T {
        self.t[i * self.w() + j]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.w();
        let pv = self.t[r * w + c];
        for j in 0..w {
            self.t[r * w + j] = self.t[r * w + j] / pv;
        }
        let (before, rest) = self.t.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = row[c];
            if f != T::zero() {
                for (x, &p) in row.iter_mut().zip(prow.iter()) {
                    *x = *x - f * p;
                }
                row[c] = T::zero();
            }
        }
        let f = self.z[c];
        if f != T::zero() {
            for (x, &p) in self.z.iter_mut().zip(prow.iter()) {
                *x = *x - f * p;
            }
            self.z[c] = T::zero();
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations on the current reduced-cost row.
    /// Returns `Ok(false)` when the objective is unbounded below.
    fn iterate(&mut self) -> Result<bool> {
        let tol_cost = T::tol_opt() * T::lit(1e-2);
        let tol_piv = T::tol_pivot();
        let mut degenerate = 0usize;
        for _ in 0..self.max_pivots {
            let bland = degenerate >= DEGENERATE_STREAK;
            let mut enter = None;
            let mut best = -tol_cost;
            for j in 0..self.ncols {
                if self.blocked[j] {
                    continue;
                }
                let d = self.z[j];
                if d < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(c) = enter else {
                return Ok(true);
            };
            let rhs = self.ncols;
            let mut leave: Option<(usize, T)> = None;
            for i in 0..self.m {
                let a = self.at(i, c);
                if a > tol_piv {
                    let ratio = self.at(i, rhs) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            let tie = (ratio - lr).abs() <= T::epsilon() * T::lit(16.0) * (T::one() + lr.abs());
                            if ratio < lr && !tie || tie && self.basis[i] < self.basis[li] {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((r, ratio)) = leave else {
                return Ok(false);
            };
            if ratio <= T::tol_feas() * T::lit(1e-3) {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, c);
        }
        Err(Error::Numerical("simplex pivot limit reached".into()))
    }

    /// Phase one. Returns `Ok(false)` if the constraints are infeasible.
    fn phase_one(&mut self) -> Result<bool> {
        if self.first_art == self.ncols {
            return Ok(true);
        }
        let w = self.w();
        self.z.iter_mut().for_each(|v| *v = T::zero());
        for i in 0..self.m {
            if self.basis[i] >= self.first_art {
                for j in 0..w {
                    self.z[j] = self.z[j] - self.t[i * w + j];
                }
            }
        }
        for j in self.first_art..self.ncols {
            self.z[j] = T::zero();
        }
        if !self.iterate()? {
            return Err(Error::Numerical("phase one reported unbounded".into()));
        }
        let infeas = -self.z[self.ncols];
        if infeas > T::tol_feas() {
            return Ok(false);
        }
        // Drive remaining artificials out of the basis where possible.
        for i in 0..self.m {
            if self.basis[i] >= self.first_art {
                let col = (0..self.first_art)
                    .filter(|&j| self.at(i, j).abs() > T::tol_pivot())
                    .max_by(|&a, &b| {
                        self.at(i, a)
                            .abs()
                            .partial_cmp(&self.at(i, b).abs())
                            .unwrap_or(std::cmp::Ordering::Equal)
                    });
                if let Some(j) = col {
                    self.pivot(i, j);
                }
            }
        }
        for j in self.first_art..self.ncols {
            self.blocked[j] = true;
        }
        Ok(true)
    }

    fn phase_two(&mut self, cost: &[T]) -> Result<bool> {
        let n = self.n;
        let w = self.w();
        let col_cost = |j: usize| -> T {
            if j < n {
                cost[j]
            } else if j < 2 * n {
                -cost[j - n]
            } else {
                T::zero()
            }
        };
        self.z.iter_mut().for_each(|v| *v = T::zero());
        for j in 0..self.ncols {
            self.z[j] = col_cost(j);
        }
        for i in 0..self.m {
            let cb = col_cost(self.basis[i]);
            if cb != T::zero() {
                for j in 0..w {
                    self.z[j] = self.z[j] - cb * self.t[i * w + j];
                }
            }
        }
        self.iterate()
    }

    fn primal(&self, n: usize) -> Vec<T> {
        let mut x = vec![T::zero(); n];
        let rhs = self.ncols;
        for i in 0..self.m {
            let b = self.basis[i];
            let v = self.at(i, rhs);
            if b < n {
                x[b] = x[b] + v;
            } else if b < 2 * n {
                x[b - n] = x[b - n] - v;
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;

    fn simplex_triangle() -> Polyhedron<f64> {
        Polyhedron::<f64>::from_rows(
            &[vec![-1.0, 0.0], vec![0.0, -1.0], vec![1.0, 1.0]],
            vec![0.0, 0.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn box_minimum() {
        let p = Polyhedron::<f64>::from_box(&[(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
        let out = solve_lp(&[1.0, 0.0], Sense::Minimize, &p).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.objective.unwrap() + 1.0).abs() < 1e-9);
        assert!((out.point.unwrap()[0] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn contradictory_halfspaces_are_infeasible() {
        let p = Polyhedron::<f64>::from_rows(&[vec![1.0], vec![-1.0]], vec![-1.0, -1.0]).unwrap();
        let out = solve_lp(&[1.0], Sense::Minimize, &p).unwrap();
        assert_eq!(out.status, LpStatus::Infeasible);
        assert!(out.point.is_none() && out.objective.is_none());
    }

    #[test]
    fn simplex_maximum_matches_vertex_enumeration() {
        // Vertices of the triangle: (0,0), (1,0), (0,1).
        let vertices = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let best = vertices.iter().map(|v| v[0] + v[1]).fold(f64::MIN, f64::max);
        let out = solve_lp(&[1.0, 1.0], Sense::Maximize, &simplex_triangle()).unwrap();
        assert!((out.objective.unwrap() - best).abs() < 1e-9);
        assert_eq!(best, 1.0);
    }

    #[test]
    fn unbounded_ray() {
        let p = Polyhedron::<f64>::from_rows(&[vec![-1.0, 0.0]], vec![0.0]).unwrap();
        let out = solve_lp(&[1.0, 0.0], Sense::Maximize, &p).unwrap();
        assert_eq!(out.status, LpStatus::Unbounded);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let p = simplex_triangle();
        assert!(matches!(
            solve_lp(&[1.0], Sense::Minimize, &p),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn no_rows_zero_objective_is_optimal() {
        let p = Polyhedron::<f64>::universe(3).unwrap();
        let out = solve_lp(&[0.0; 3], Sense::Minimize, &p).unwrap();
        assert!(out.is_optimal());
        let out = solve_lp(&[1.0, 0.0, 0.0], Sense::Minimize, &p).unwrap();
        assert_eq!(out.status, LpStatus::Unbounded);
    }

    #[test]
    fn degenerate_vertex_terminates() {
        // Many constraints through the same vertex (0,0).
        let mut rows = Vec::new();
        let mut b = Vec::new();
        for k in 0..30 {
            let t = k as f64 / 29.0 * std::f64::consts::FRAC_PI_2;
            rows.push(vec![-t.cos(), -t.sin()]);
            b.push(0.0);
        }
        rows.push(vec![1.0, 1.0]);
        b.push(2.0);
        let p = Polyhedron::new(Mat::<f64>::from_rows(&rows).unwrap(), b).unwrap();
        let out = solve_lp(&[1.0, 1.0], Sense::Minimize, &p).unwrap();
        assert!(out.objective.unwrap().abs() < 1e-9);
    }

    #[test]
    fn works_in_single_precision() {
        let p = Polyhedron::<f32>::from_box(&[(-1.0, 2.0), (0.0, 3.0)]).unwrap();
        let out = solve_lp(&[1.0, 1.0], Sense::Maximize, &p).unwrap();
        assert!((out.objective.unwrap() - 5.0).abs() < 1e-4);
    }
}
