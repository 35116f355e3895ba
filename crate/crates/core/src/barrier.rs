//! Max/min piecewise-affine barrier functions, the merit function and the
//! switching rule derived from it.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{solve_lp, LpStatus, Polyhedron, Sense};
use crate::linalg::{lu_solve, Mat};
use crate::scalar::{all_finite, dot, Scalar};
use crate::system::SwitchedAffineSystem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BarrierKind {
    Max,
    Min,
}

/// Affine piece `cᵀx − d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Piece<T> {
    pub c: Vec<T>,
    pub d: T,
}

impl<T: Scalar> Piece<T> {
    pub fn new(c: Vec<T>, d: T) -> Self {
        Self { c, d }
    }

    #[inline]
    pub fn value(&self, x: &[T]) -> T {
        dot(&self.c, x) - self.d
    }
}

/// `B(x) = max_i (c_iᵀx − d_i)` or `min_i (c_iᵀx − d_i)` with decay rate `lambda`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PiecewiseAffineBarrier<T> {
    pub kind: BarrierKind,
    pub lambda: T,
    pub pieces: Vec<Piece<T>>,
}

/// Barrier value at a point together with the pieces attaining it.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation<T> {
    pub value: T,
    /// Zero-based indices of the pieces within `tol_active` of `value`.
    pub active: Vec<usize>,
}

/// Merit score of every mode at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct MeritTable<T> {
    pub values: Vec<T>,
    /// Zero-based modes within `tol_tie` of the best score, ascending.
    pub argmax_modes: Vec<usize>,
}

impl<T: Scalar> MeritTable<T> {
    /// The best mode, ties resolved to the lowest index.
    pub fn best(&self) -> usize {
        self.argmax_modes[0]
    }
}

impl<T: Scalar> PiecewiseAffineBarrier<T> {
    pub fn new(kind: BarrierKind, lambda: T, pieces: Vec<Piece<T>>) -> Result<Self> {
        let b = Self { kind, lambda, pieces };
        b.validate()?;
        Ok(b)
    }

    /// Checks the invariants (useful after deserialization).
    pub fn validate(&self) -> Result<()> {
        let first = self
            .pieces
            .first()
            .ok_or_else(|| Error::Input("a barrier needs at least one piece".into()))?;
        let n = first.c.len();
        if n == 0 {
            return Err(Error::Input("barrier dimension must be positive".into()));
        }
        for p in &self.pieces {
            check_dim("barrier piece", n, p.c.len())?;
            if !all_finite(&p.c) || !p.d.is_finite() {
                return Err(Error::NonFinite("barrier piece"));
            }
        }
        if !self.lambda.is_finite() || self.lambda < T::zero() {
            return Err(Error::Input("barrier rate must be finite and nonnegative".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.pieces[0].c.len()
    }

    #[inline]
    pub fn num_pieces(&self) -> usize {
        self.pieces.len()
    }

    pub fn piece_values(&self, x: &[T]) -> Vec<T> {
        self.pieces.iter().map(|p| p.value(x)).collect()
    }

    fn fold(&self, vals: &[T]) -> T {
        match self.kind {
            BarrierKind::Max => vals.iter().copied().fold(T::neg_infinity(), T::max),
            BarrierKind::Min => vals.iter().copied().fold(T::infinity(), T::min),
        }
    }

    pub fn value(&self, x: &[T]) -> T {
        self.fold(&self.piece_values(x))
    }

    pub fn evaluate(&self, x: &[T]) -> Result<Evaluation<T>> {
        check_dim("state", self.dim(), x.len())?;
        let vals = self.piece_values(x);
        let value = self.fold(&vals);
        let active = vals
            .iter()
            .enumerate()
            .filter(|(_, &v)| (v - value).abs() <= T::tol_active())
            .map(|(i, _)| i)
            .collect();
        Ok(Evaluation { value, active })
    }

    /// Multiplies every piece by `s > 0`.
    pub fn scaled(&self, s: T) -> Self {
        Self {
            kind: self.kind,
            lambda: self.lambda,
            pieces: self
                .pieces
                .iter()
                .map(|p| Piece::new(p.c.iter().map(|&v| v * s).collect(), p.d * s))
                .collect(),
        }
    }

    pub fn with_lambda(&self, lambda: T) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    pub fn cast<U: Scalar>(&self) -> PiecewiseAffineBarrier<U> {
        let conv = |v: T| U::lit(v.to_f64_lossy());
        PiecewiseAffineBarrier {
            kind: self.kind,
            lambda: conv(self.lambda),
            pieces: self
                .pieces
                .iter()
                .map(|p| Piece::new(p.c.iter().map(|&v| conv(v)).collect(), conv(p.d)))
                .collect(),
        }
    }

    /// Merit of a single mode.
    ///
    /// This is the largest `τ ≥ 0` with `τ² + τ(φ̂_i + λφ_i) + g_i ≤ 0` for every
    /// piece, where `g_i = φ_i − φ` (max kind) or `φ − φ_i` (min kind) is the
    /// nonpositive gap to the barrier value.
    pub fn mode_merit(&self, sys: &SwitchedAffineSystem<T>, l: usize, x: &[T]) -> Result<T> {
        let vals = self.piece_values(x);
        let phi = self.fold(&vals);
        let f = sys.flow(l, x)?;
        Ok(self.merit_from(&vals, phi, &f))
    }

    fn merit_from(&self, vals: &[T], phi: T, flow: &[T]) -> T {
        let two = T::lit(2.0);
        let four = T::lit(4.0);
        let mut best = T::infinity();
        for (p, &phi_i) in self.pieces.iter().zip(vals) {
            let s = dot(&p.c, flow) + self.lambda * phi_i;
            let gap = match self.kind {
                BarrierKind::Max => phi - phi_i,
                BarrierKind::Min => phi_i - phi,
            };
            let m = if gap <= T::tol_active() {
                (-s).max(T::zero())
            } else if s > T::zero() {
                // rationalized root, stable when s² ≫ gap
                two * gap / (s + (s * s + four * gap).sqrt())
            } else {
                (-s + (s * s + four * gap).sqrt()) / two
            };
            best = best.min(m);
        }
        best
    }

    pub fn merit(&self, sys: &SwitchedAffineSystem<T>, x: &[T]) -> Result<MeritTable<T>> {
        check_dim("system dimension", self.dim(), sys.dim())?;
        check_dim("state", self.dim(), x.len())?;
        let vals = self.piece_values(x);
        let phi = self.fold(&vals);
        let mut values = Vec::with_capacity(sys.num_modes());
        for l in 0..sys.num_modes() {
            let f = sys.flow(l, x)?;
            values.push(self.merit_from(&vals, phi, &f));
        }
        let top = values.iter().copied().fold(T::neg_infinity(), T::max);
        let argmax_modes = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= top - T::tol_tie())
            .map(|(l, _)| l)
            .collect();
        Ok(MeritTable { values, argmax_modes })
    }

    /// The set of admissible modes at `x`.
    ///
    /// Inside `{B ≤ 0}` this is the merit argmax; outside, the argmax at the
    /// Euclidean projection onto `{B ≤ 0}`.
    pub fn switching_rule(&self, sys: &SwitchedAffineSystem<T>, x: &[T]) -> Result<Vec<usize>> {
        check_dim("state", self.dim(), x.len())?;
        if self.value(x) <= T::zero() {
            return Ok(self.merit(sys, x)?.argmax_modes);
        }
        let y = self.project_to_sublevel(x)?;
        Ok(self.merit(sys, &y)?.argmax_modes)
    }

    /// Euclidean projection of `x` onto `{z | B(z) ≤ 0}`.
    pub fn project_to_sublevel(&self, x: &[T]) -> Result<Vec<T>> {
        check_dim("state", self.dim(), x.len())?;
        match self.kind {
            BarrierKind::Max => self.project_polyhedron(x),
            BarrierKind::Min => self.project_union(x),
        }
    }

    /// Sublevel set of a max barrier as a polyhedron `{c_iᵀz ≤ d_i}`.
    pub fn sublevel_polyhedron(&self) -> Result<Polyhedron<T>> {
        let rows: Vec<Vec<T>> = self.pieces.iter().map(|p| p.c.clone()).collect();
        let b = self.pieces.iter().map(|p| p.d).collect();
        Polyhedron::from_rows(&rows, b)
    }

    fn project_union(&self, x: &[T]) -> Result<Vec<T>> {
        let mut best: Option<(T, usize)> = None;
        for (i, p) in self.pieces.iter().enumerate() {
            let v = p.value(x);
            let nn = dot(&p.c, &p.c);
            let dist = if v <= T::zero() {
                T::zero()
            } else if nn > T::zero() {
                v / nn.sqrt()
            } else {
                continue;
            };
            if best.map_or(true, |(d, _)| dist < d) {
                best = Some((dist, i));
            }
        }
        let (_, i) = best.ok_or(Error::EmptyInvariantRegion)?;
        let p = &self.pieces[i];
        let v = p.value(x);
        if v <= T::zero() {
            return Ok(x.to_vec());
        }
        let t = v / dot(&p.c, &p.c);
        Ok(x.iter().zip(&p.c).map(|(&xi, &ci)| xi - t * ci).collect())
    }

    /// Primal active-set method for `min ‖z − x‖²  s.t.  c_iᵀz ≤ d_i`.
    fn project_polyhedron(&self, x: &[T]) -> Result<Vec<T>> {
        let poly = self.sublevel_polyhedron()?;
        if poly.contains(x, T::zero()) {
            return Ok(x.to_vec());
        }
        let start = solve_lp(&vec![T::zero(); self.dim()], Sense::Minimize, &poly)?;
        if start.status != LpStatus::Optimal {
            return Err(Error::EmptyInvariantRegion);
        }
        let mut z = start.point.expect("optimal LP carries a point");
        let k = self.pieces.len();
        let n = self.dim();
        let tol = T::tol_feas();
        let mut working: Vec<usize> = Vec::new();
        for _ in 0..(50 * (k + n + 1)) {
            // step toward the projection restricted to the working set
            let target: Vec<T> = x.iter().zip(&z).map(|(&a, &b)| a - b).collect();
            let (step, mult) = self.constrained_step(&working, &target)?;
            if step.iter().all(|v| v.abs() <= tol) {
                let worst = mult
                    .iter()
                    .enumerate()
                    .filter(|(_, &m)| m < -tol)
                    .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite multipliers"));
                match worst {
                    None => return Ok(z),
                    Some((pos, _)) => {
                        working.remove(pos);
                        continue;
                    }
                }
            }
            // longest feasible fraction of the step
            let mut alpha = T::one();
            let mut blocking = None;
            for i in 0..k {
                if working.contains(&i) {
                    continue;
                }
                let c = &self.pieces[i].c;
                let rate = dot(c, &step);
                if rate > tol {
                    let room = (self.pieces[i].d - dot(c, &z)).max(T::zero()) / rate;
                    if room < alpha {
                        alpha = room;
                        blocking = Some(i);
                    }
                }
            }
            for (zi, &s) in z.iter_mut().zip(&step) {
                *zi = *zi + alpha * s;
            }
            if let Some(i) = blocking {
                working.push(i);
            }
        }
        Err(Error::Numerical("projection active-set iteration did not converge".into()))
    }

    /// Solves `min ‖p − target‖² s.t. c_wᵀp = 0 (w ∈ working)`; returns the step
    /// and the Lagrange multipliers of the working constraints.
    fn constrained_step(&self, working: &[usize], target: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        if working.is_empty() {
            return Ok((target.to_vec(), Vec::new()));
        }
        let w = working.len();
        let mut gram = Mat::zeros(w, w);
        let mut rhs = vec![T::zero(); w];
        for (r, &i) in working.iter().enumerate() {
            for (s, &j) in working.iter().enumerate() {
                gram[(r, s)] = dot(&self.pieces[i].c, &self.pieces[j].c);
            }
            rhs[r] = dot(&self.pieces[i].c, target);
        }
        let mult = lu_solve(&gram, &rhs)
            .ok_or_else(|| Error::Numerical("dependent constraints in projection".into()))?;
        let mut step = target.to_vec();
        for (&i, &m) in working.iter().zip(&mult) {
            for (s, &c) in step.iter_mut().zip(&self.pieces[i].c) {
                *s = *s - m * c;
            }
        }
        Ok((step, mult))
    }
}
