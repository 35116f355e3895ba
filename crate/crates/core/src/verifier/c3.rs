//! Falsification of the decrease condition.
//!
//! A state violates the decrease condition iff it lies in `{B ≤ 0}` and every
//! mode `l` fails to decrease some piece that attains `B` there. Fixing one such
//! piece `μ(l)` per mode turns the search into a linear feasibility problem, so
//! the condition holds iff every assignment `μ: modes → pieces` is infeasible.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::milp::{encode_big_m_milp, solve_milp};
use crate::barrier::{BarrierKind, PiecewiseAffineBarrier};
use crate::error::{check_dim, Result};
use crate::geometry::{solve_lp, LpStatus, Polyhedron, Sense};
use crate::linalg::Mat;
use crate::scalar::{dot, norm2, Scalar};
use crate::system::SwitchedAffineSystem;

/// A piece for every mode (zero-based).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ModeAssignment {
    pub mu: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct C3Options {
    /// A violated decrease must exceed this amount.
    pub eps_strict: f64,
    /// Largest assignment count searched by enumeration before switching to big-M.
    pub enum_cap: f64,
    /// Clamp for the magnitude bound.
    pub bound_cap: f64,
}

impl Default for C3Options {
    fn default() -> Self {
        Self {
            eps_strict: 1e-6,
            enum_cap: 1e6,
            bound_cap: 1e12,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct C3Result<T> {
    pub witness: Option<Vec<T>>,
    pub assignment: Option<ModeAssignment>,
    /// Uniform slack of the witness in the falsifying rows (distance units).
    pub slack: Option<T>,
    pub lps_solved: usize,
    pub used_milp: bool,
}

/// Rows `aᵀx ≤ b` that hold at `x` when piece `i` attains `B(x) ≤ 0` and mode
/// `l` fails to decrease it by more than `eps_strict`.
pub fn implied_rows<T: Scalar>(
    b: &PiecewiseAffineBarrier<T>,
    sys: &SwitchedAffineSystem<T>,
    l: usize,
    i: usize,
    eps_strict: T,
) -> Result<Vec<(Vec<T>, T)>> {
    let mode = sys.mode(l)?;
    let p = &b.pieces[i];
    let mut rows = Vec::with_capacity(b.num_pieces() + 1);
    // sublevel: c_iᵀx ≤ d_i
    rows.push((p.c.clone(), p.d));
    // piece i attains the max (min): piece_{i'} ≤ piece_i (≥)
    for (j, q) in b.pieces.iter().enumerate() {
        if j == i {
            continue;
        }
        let (a, rhs): (Vec<T>, T) = match b.kind {
            BarrierKind::Max => (q.c.iter().zip(&p.c).map(|(&u, &v)| u - v).collect(), q.d - p.d),
            BarrierKind::Min => (p.c.iter().zip(&q.c).map(|(&u, &v)| u - v).collect(), p.d - q.d),
        };
        rows.push((a, rhs));
    }
    // violated decrease: c_iᵀ(A_l x + b_l) + λ(c_iᵀx − d_i) ≥ eps_strict
    let grad = mode.a.tr_matvec(&p.c);
    let a: Vec<T> = grad.iter().zip(&p.c).map(|(&g, &c)| -(g + b.lambda * c)).collect();
    let rhs = dot(&p.c, &mode.b) - b.lambda * p.d - eps_strict;
    rows.push((a, rhs));
    Ok(rows)
}

/// Outcome of the max-slack LP over a row set inside the search box.
enum Probe<T> {
    Infeasible,
    Feasible { x: Vec<T>, slack: T },
}

/// Maximizes a uniform slack `t ∈ [−1, 1]` over `aᵀx + t‖a‖ ≤ b` (unit-normalized
/// rows) intersected with `‖x‖_∞ ≤ radius`. The rows are feasible iff `t* ≥ −tol`.
fn probe<T: Scalar>(rows: &[(Vec<T>, T)], n: usize, radius: T) -> Result<Probe<T>> {
    let tiny = T::lit(1e-12);
    let mut a = Mat::zeros(0, n + 1);
    let mut rhs = Vec::with_capacity(rows.len() + 2 * n + 2);
    let mut buf = vec![T::zero(); n + 1];
    for (row, b) in rows {
        let s = norm2(row);
        if s <= tiny {
            if *b < -T::tol_feas() {
                return Ok(Probe::Infeasible);
            }
            continue;
        }
        for (o, &v) in buf.iter_mut().zip(row) {
            *o = v / s;
        }
        buf[n] = T::one();
        a.push_row(&buf);
        rhs.push(*b / s);
    }
    for r in 0..n {
        buf.iter_mut().for_each(|v| *v = T::zero());
        buf[r] = T::one();
        a.push_row(&buf);
        rhs.push(radius);
        buf[r] = -T::one();
        a.push_row(&buf);
        rhs.push(radius);
    }
    buf.iter_mut().for_each(|v| *v = T::zero());
    buf[n] = T::one();
    a.push_row(&buf);
    rhs.push(T::one());
    buf[n] = -T::one();
    a.push_row(&buf);
    rhs.push(T::one());
    let poly = Polyhedron::new(a, rhs)?;
    let mut obj = vec![T::zero(); n + 1];
    obj[n] = T::one();
    let out = solve_lp(&obj, Sense::Maximize, &poly)?;
    if out.status != LpStatus::Optimal {
        return Ok(Probe::Infeasible);
    }
    let z = out.point.expect("optimal LP carries a point");
    let slack = z[n];
    if slack < -T::tol_feas() {
        return Ok(Probe::Infeasible);
    }
    Ok(Probe::Feasible {
        x: z[..n].to_vec(),
        slack,
    })
}

struct Search<'a, T> {
    b: &'a PiecewiseAffineBarrier<T>,
    /// `rows[l][i]`: implied rows of assigning piece `i` to mode `l`.
    rows: Vec<Vec<Vec<(Vec<T>, T)>>>,
    /// Pieces that are individually feasible for each mode.
    candidates: Vec<Vec<usize>>,
    radius: T,
}

impl<T: Scalar> Search<'_, T> {
    /// Depth-first search over assignments in lexicographic order, pruning
    /// any prefix whose rows are already infeasible.
    fn dfs(&self, prefix: &mut Vec<usize>, acc: &mut Vec<(Vec<T>, T)>, lps: &mut usize) -> Result<Option<(Vec<T>, T)>> {
        let depth = prefix.len();
        *lps += 1;
        let found = match probe(acc, self.b.dim(), self.radius)? {
            Probe::Infeasible => return Ok(None),
            Probe::Feasible { x, slack } => (x, slack),
        };
        if depth == self.rows.len() {
            return Ok(Some(found));
        }
        for &i in &self.candidates[depth] {
            let before = acc.len();
            acc.extend(self.rows[depth][i].iter().cloned());
            prefix.push(i);
            let hit = self.dfs(prefix, acc, lps)?;
            if hit.is_some() {
                return Ok(hit);
            }
            prefix.pop();
            acc.truncate(before);
        }
        Ok(None)
    }
}

/// Searches `‖x‖_∞ ≤ radius` for a state violating the decrease condition.
///
/// Assignments are explored in lexicographic order so the returned witness is
/// deterministic. When the number of assignments exceeds `opts.enum_cap` the
/// big-M mixed-integer encoding is solved by branch and bound instead.
pub fn find_c3_counterexample<T: Scalar>(
    b: &PiecewiseAffineBarrier<T>,
    sys: &SwitchedAffineSystem<T>,
    radius: T,
    opts: &C3Options,
) -> Result<C3Result<T>> {
    check_dim("system dimension", b.dim(), sys.dim())?;
    let n = b.dim();
    let m = sys.num_modes();
    let k = b.num_pieces();
    let eps_strict = T::lit(opts.eps_strict);
    let radius = radius.max(T::one());
    let count = (k as f64).powi(m as i32);
    if count > opts.enum_cap {
        return milp_search(b, sys, radius, eps_strict);
    }

    let mut rows = Vec::with_capacity(m);
    for l in 0..m {
        rows.push((0..k).map(|i| implied_rows(b, sys, l, i, eps_strict)).collect::<Result<Vec<_>>>()?);
    }
    let mut lps = 0;
    let mut candidates = Vec::with_capacity(m);
    for mode_rows in &rows {
        let mut ok = Vec::new();
        for (i, r) in mode_rows.iter().enumerate() {
            lps += 1;
            if let Probe::Feasible { .. } = probe(r, n, radius)? {
                ok.push(i);
            }
        }
        if ok.is_empty() {
            return Ok(C3Result {
                witness: None,
                assignment: None,
                slack: None,
                lps_solved: lps,
                used_milp: false,
            });
        }
        candidates.push(ok);
    }
    let search = Search { b, rows, candidates, radius };

    // Branches on the first mode's piece run in parallel; the first hit in
    // lexicographic order wins.
    let branches: Vec<Result<(Option<(Vec<usize>, Vec<T>, T)>, usize)>> = search.candidates[0]
        .par_iter()
        .map(|&i| {
            let mut prefix = vec![i];
            let mut acc = search.rows[0][i].clone();
            let mut lps = 0;
            let hit = search.dfs(&mut prefix, &mut acc, &mut lps)?;
            Ok((hit.map(|(x, s)| (prefix, x, s)), lps))
        })
        .collect();
    for branch in branches {
        let (hit, used) = branch?;
        lps += used;
        if let Some((mu, x, slack)) = hit {
            return Ok(C3Result {
                witness: Some(x),
                assignment: Some(ModeAssignment { mu }),
                slack: Some(slack),
                lps_solved: lps,
                used_milp: false,
            });
        }
    }
    Ok(C3Result {
        witness: None,
        assignment: None,
        slack: None,
        lps_solved: lps,
        used_milp: false,
    })
}

/// A point of `‖x‖_∞ ≤ radius` satisfying the implied rows of `mu` that
/// minimizes `objective`, or `None` when the rows are infeasible there.
pub fn assignment_point<T: Scalar>(
    b: &PiecewiseAffineBarrier<T>,
    sys: &SwitchedAffineSystem<T>,
    assignment: &ModeAssignment,
    radius: T,
    eps_strict: T,
    objective: &[T],
) -> Result<Option<Vec<T>>> {
    let n = b.dim();
    check_dim("objective", n, objective.len())?;
    let mut a = Mat::zeros(0, n);
    let mut rhs = Vec::new();
    for (l, &i) in assignment.mu.iter().enumerate() {
        for (row, r) in implied_rows(b, sys, l, i, eps_strict)? {
            a.push_row(&row);
            rhs.push(r);
        }
    }
    let bounds = vec![(-radius, radius); n];
    let poly = Polyhedron::new(a, rhs)?.intersect(&Polyhedron::from_box(&bounds)?)?;
    let out = solve_lp(objective, Sense::Minimize, &poly)?;
    Ok(out.point)
}

fn milp_search<T: Scalar>(
    b: &PiecewiseAffineBarrier<T>,
    sys: &SwitchedAffineSystem<T>,
    radius: T,
    eps_strict: T,
) -> Result<C3Result<T>> {
    let mut enc = encode_big_m_milp(b, sys, radius, eps_strict)?;
    let k = b.num_pieces();
    let mut lps = 0;
    loop {
        let sol = solve_milp(&enc)?;
        lps += sol.nodes;
        let Some((_, w)) = sol.solution else {
            return Ok(C3Result {
                witness: None,
                assignment: None,
                slack: None,
                lps_solved: lps,
                used_milp: true,
            });
        };
        let mu: Vec<usize> = (0..sys.num_modes())
            .map(|l| (0..k).find(|&i| w[l * k + i] > T::lit(0.5)).expect("coverage row holds"))
            .collect();
        let mut rows = Vec::new();
        for (l, &i) in mu.iter().enumerate() {
            rows.extend(implied_rows(b, sys, l, i, eps_strict)?);
        }
        lps += 1;
        match probe(&rows, b.dim(), radius)? {
            Probe::Feasible { x, slack } => {
                return Ok(C3Result {
                    witness: Some(x),
                    assignment: Some(ModeAssignment { mu }),
                    slack: Some(slack),
                    lps_solved: lps,
                    used_milp: true,
                })
            }
            // the relaxation admitted this assignment only through big-M round-off
            Probe::Infeasible => enc.exclude_assignment(&mu),
        }
    }
}
