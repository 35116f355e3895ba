//! Big-M mixed-integer form of the decrease-condition falsification problem.
//!
//! Binary `w_{l,i}` selects piece `i` for mode `l`. Each implied row
//! `aᵀx ≤ b` is relaxed to `aᵀx ≤ b + K(1 − w_{l,i})` with
//! `K = M‖a‖₁ + |b|`, which is inactive whenever `‖x‖_∞ ≤ M`. Coverage rows
//! `Σ_i w_{l,i} ≥ 1` force a choice for every mode.

use std::fmt::Write as _;

use super::c3::implied_rows;
use crate::barrier::PiecewiseAffineBarrier;
use crate::error::{Error, Result};
use crate::geometry::{solve_lp, LpStatus, Polyhedron, Sense};
use crate::linalg::Mat;
use crate::scalar::{norm1, Scalar};
use crate::system::SwitchedAffineSystem;

/// Rows `aᵀ(x, w) ≤ b` over `n` continuous and `m·k` binary variables.
#[derive(Clone, Debug, PartialEq)]
pub struct MilpEncoding<T> {
    pub n: usize,
    pub modes: usize,
    pub pieces: usize,
    pub big_m: T,
    /// Implied rows followed by the coverage rows.
    pub rows: Vec<(Vec<T>, T)>,
    pub coverage_rows: usize,
}

impl<T: Scalar> MilpEncoding<T> {
    pub fn num_binaries(&self) -> usize {
        self.modes * self.pieces
    }

    fn binary_index(&self, l: usize, i: usize) -> usize {
        self.n + l * self.pieces + i
    }

    /// Adds the cut `Σ_l w_{l,μ(l)} ≤ m − 1`, excluding every binary point
    /// that selects the assignment `mu`.
    pub fn exclude_assignment(&mut self, mu: &[usize]) {
        let mut row = vec![T::zero(); self.n + self.num_binaries()];
        for (l, &i) in mu.iter().enumerate() {
            row[self.binary_index(l, i)] = T::one();
        }
        let at = self.rows.len() - self.coverage_rows;
        self.rows.insert(at, (row, T::of_usize(mu.len()) - T::one()));
    }

    /// CPLEX LP-format text of the feasibility problem.
    pub fn to_lp_format(&self) -> String {
        let var = |j: usize| -> String {
            if j < self.n {
                format!("x{}", j + 1)
            } else {
                let b = j - self.n;
                format!("w{}_{}", b / self.pieces + 1, b % self.pieces + 1)
            }
        };
        let mut out = String::new();
        out.push_str("\\ decrease-condition falsification, big-M form\nMinimize\n obj: 0 x1\nSubject To\n");
        let implied = self.rows.len() - self.coverage_rows;
        for (r, (a, b)) in self.rows.iter().enumerate() {
            let name = if r < implied {
                format!("r{}", r + 1)
            } else {
                format!("cov{}", r - implied + 1)
            };
            let _ = write!(out, " {name}:");
            let mut any = false;
            for (j, &v) in a.iter().enumerate() {
                if v == T::zero() {
                    continue;
                }
                let sign = if v < T::zero() { '-' } else { '+' };
                let _ = write!(out, " {sign} {} {}", v.abs(), var(j));
                any = true;
            }
            if !any {
                let _ = write!(out, " 0 x1");
            }
            let _ = writeln!(out, " <= {b}");
        }
        out.push_str("Bounds\n");
        for j in 0..self.n {
            let _ = writeln!(out, " -{m} <= {} <= {m}", var(j), m = self.big_m);
        }
        out.push_str("Binaries\n");
        for j in self.n..self.n + self.num_binaries() {
            let _ = writeln!(out, " {}", var(j));
        }
        out.push_str("End\n");
        out
    }
}

pub fn encode_big_m_milp<T: Scalar>(
    b: &PiecewiseAffineBarrier<T>,
    sys: &SwitchedAffineSystem<T>,
    big_m: T,
    eps_strict: T,
) -> Result<MilpEncoding<T>> {
    if !(big_m > T::zero()) {
        return Err(Error::Input("big-M constant must be positive".into()));
    }
    let n = b.dim();
    let (m, k) = (sys.num_modes(), b.num_pieces());
    let width = n + m * k;
    let mut enc = MilpEncoding {
        n,
        modes: m,
        pieces: k,
        big_m,
        rows: Vec::new(),
        coverage_rows: m,
    };
    for l in 0..m {
        for i in 0..k {
            let w = enc.binary_index(l, i);
            for (a, rhs) in implied_rows(b, sys, l, i, eps_strict)? {
                let slack = big_m * norm1(&a) + rhs.abs();
                let mut row = vec![T::zero(); width];
                row[..n].copy_from_slice(&a);
                row[w] = slack;
                enc.rows.push((row, rhs + slack));
            }
        }
    }
    for l in 0..m {
        let mut row = vec![T::zero(); width];
        for i in 0..k {
            row[enc.binary_index(l, i)] = -T::one();
        }
        enc.rows.push((row, -T::one()));
    }
    Ok(enc)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MilpSolution<T> {
    /// `(x, w)` of the first integer-feasible point found.
    pub solution: Option<(Vec<T>, Vec<T>)>,
    pub nodes: usize,
}

const NODE_CAP: usize = 1_000_000;

/// Depth-first branch and bound on the binaries, `w = 1` branch first.
pub fn solve_milp<T: Scalar>(enc: &MilpEncoding<T>) -> Result<MilpSolution<T>> {
    let n = enc.n;
    let nb = enc.num_binaries();
    let width = n + nb;
    let mut base = Mat::zeros(0, width);
    let mut rhs = Vec::new();
    for (a, b) in &enc.rows {
        base.push_row(a);
        rhs.push(*b);
    }
    let mut unit = vec![T::zero(); width];
    for j in 0..width {
        let (lo, hi) = if j < n { (enc.big_m, enc.big_m) } else { (T::zero(), T::one()) };
        unit[j] = T::one();
        base.push_row(&unit);
        rhs.push(hi);
        unit[j] = -T::one();
        base.push_row(&unit);
        rhs.push(lo);
        unit[j] = T::zero();
    }
    let root = Polyhedron::new(base, rhs)?;
    let zero = vec![T::zero(); width];
    let half = T::lit(0.5);
    let int_tol = T::lit(1e-6);
    // fixings: (binary position, value)
    let mut stack: Vec<Vec<(usize, bool)>> = vec![Vec::new()];
    let mut nodes = 0;
    while let Some(fix) = stack.pop() {
        nodes += 1;
        if nodes > NODE_CAP {
            return Err(Error::Numerical("branch and bound node limit reached".into()));
        }
        let mut a = Mat::zeros(0, width);
        let mut b = Vec::with_capacity(fix.len());
        for &(j, one) in &fix {
            let mut row = vec![T::zero(); width];
            if one {
                row[n + j] = -T::one();
                b.push(-T::one());
            } else {
                row[n + j] = T::one();
                b.push(T::zero());
            }
            a.push_row(&row);
        }
        let node = root.append_rows(&a, &b)?;
        let out = solve_lp(&zero, Sense::Minimize, &node)?;
        if out.status != LpStatus::Optimal {
            continue;
        }
        let z = out.point.expect("optimal LP carries a point");
        let frac = (0..nb)
            .map(|j| (j, (z[n + j] - z[n + j].round()).abs()))
            .filter(|&(_, f)| f > int_tol)
            .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite values"));
        match frac {
            None => {
                let w = z[n..].iter().map(|&v| if v > half { T::one() } else { T::zero() }).collect();
                return Ok(MilpSolution {
                    solution: Some((z[..n].to_vec(), w)),
                    nodes,
                });
            }
            Some((j, _)) => {
                let mut zero_branch = fix.clone();
                zero_branch.push((j, false));
                stack.push(zero_branch);
                let mut one_branch = fix;
                one_branch.push((j, true));
                stack.push(one_branch);
            }
        }
    }
    Ok(MilpSolution { solution: None, nodes })
}
