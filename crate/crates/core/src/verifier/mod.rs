//! Checking the barrier conditions for a candidate and producing counterexamples.
//!
//! * C1: `B ≤ −ε` on the initial set.
//! * C2p: the first piece is `≥ ε` on the unsafe set (every piece for min barriers).
//! * C3: on `{B ≤ 0}` some mode decreases every active piece at rate `λ`.

mod c3;
mod milp;

pub use c3::{assignment_point, find_c3_counterexample, implied_rows, C3Options, C3Result, ModeAssignment};
pub use milp::{encode_big_m_milp, solve_milp, MilpEncoding};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::barrier::{BarrierKind, PiecewiseAffineBarrier};
use crate::error::{check_dim, Error, Result};
use crate::geometry::{solve_lp, LpStatus, Polyhedron, Sense};
use crate::scalar::{norm1, Scalar};
use crate::system::SwitchedAffineSystem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    C1,
    C2p,
    C3,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::C1 => "C1",
            Condition::C2p => "C2p",
            Condition::C3 => "C3",
        })
    }
}

/// Result of checking one condition.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport<T> {
    pub condition: Condition,
    pub holds: bool,
    /// C1: `−max_{X0} (checked piece)`; C2p: `min_{Xu} (checked piece)`;
    /// C3: slack of the falsifying LP when a counterexample exists.
    pub margin: Option<T>,
    pub witness: Option<Vec<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerificationStatus {
    Verified,
    Counterexample,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationOutcome<T> {
    pub status: VerificationStatus,
    pub failed_condition: Option<Condition>,
    pub witness: Option<Vec<T>>,
    /// Mode-to-piece assignment behind a decrease-condition counterexample.
    pub assignment: Option<ModeAssignment>,
    /// Reports for every condition checked, in order; checking stops at the first failure.
    pub reports: Vec<ConditionReport<T>>,
    /// The C3 search radius and whether the magnitude bound had to be clamped.
    pub search_radius: T,
    pub bound_clamped: bool,
}

impl<T: Scalar> VerificationOutcome<T> {
    pub fn is_verified(&self) -> bool {
        self.status == VerificationStatus::Verified
    }

    pub fn report(&self, c: Condition) -> Option<&ConditionReport<T>> {
        self.reports.iter().find(|r| r.condition == c)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub epsilon: f64,
    pub c3: C3Options,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            c3: C3Options::default(),
        }
    }
}

fn extremum<T: Scalar>(obj: &[T], sense: Sense, set: &Polyhedron<T>, what: &str) -> Result<(T, Vec<T>)> {
    let out = solve_lp(obj, sense, set)?;
    match out.status {
        LpStatus::Optimal => Ok((
            out.objective.expect("optimal LP carries an objective"),
            out.point.expect("optimal LP carries a point"),
        )),
        LpStatus::Infeasible => Err(Error::Input(format!("{what} is empty"))),
        LpStatus::Unbounded => Err(Error::Input(format!("{what} is unbounded"))),
    }
}

/// Checks `B ≤ −ε` on `x0` by maximizing each relevant piece.
///
/// Min barriers use the sufficient condition that the first piece alone is `≤ −ε`.
pub fn check_c1<T: Scalar>(b: &PiecewiseAffineBarrier<T>, x0: &Polyhedron<T>, eps: T) -> Result<ConditionReport<T>> {
    check_dim("initial set", b.dim(), x0.dim())?;
    let pieces = match b.kind {
        BarrierKind::Max => &b.pieces[..],
        BarrierKind::Min => &b.pieces[..1],
    };
    let mut margin = T::infinity();
    let mut witness = None;
    for p in pieces {
        let (top, x) = extremum(&p.c, Sense::Maximize, x0, "initial set")?;
        let value = top - p.d;
        margin = margin.min(-value);
        if witness.is_none() && value > -eps {
            witness = Some(x);
        }
    }
    Ok(ConditionReport {
        condition: Condition::C1,
        holds: witness.is_none(),
        margin: Some(margin),
        witness,
    })
}

/// Checks that the first piece (every piece for min barriers) is `≥ ε` on `xu`.
pub fn check_c2p<T: Scalar>(b: &PiecewiseAffineBarrier<T>, xu: &Polyhedron<T>, eps: T) -> Result<ConditionReport<T>> {
    check_dim("unsafe set", b.dim(), xu.dim())?;
    let pieces = match b.kind {
        BarrierKind::Max => &b.pieces[..1],
        BarrierKind::Min => &b.pieces[..],
    };
    let mut margin = T::infinity();
    let mut witness = None;
    for p in pieces {
        let (low, x) = extremum(&p.c, Sense::Minimize, xu, "unsafe set")?;
        let value = low - p.d;
        margin = margin.min(value);
        if witness.is_none() && value < eps {
            witness = Some(x);
        }
    }
    Ok(ConditionReport {
        condition: Condition::C2p,
        holds: witness.is_none(),
        margin: Some(margin),
        witness,
    })
}

/// Magnitude bound on falsifying states, and whether it was clamped to `cap`.
///
/// With `a = max_i max(‖c_i‖₁, |d_i|)` and `U = max(2, λ + ‖A_l‖_∞ ∀l) · a`,
/// every vertex of the falsification polyhedra lies within `(nU)^n` in the ∞-norm.
pub fn big_m_bound<T: Scalar>(b: &PiecewiseAffineBarrier<T>, sys: &SwitchedAffineSystem<T>, cap: T) -> (T, bool) {
    let a = b
        .pieces
        .iter()
        .map(|p| norm1(&p.c).max(p.d.abs()))
        .fold(T::zero(), T::max);
    let (norms, _) = sys.mode_norms();
    let growth = norms
        .iter()
        .map(|&v| b.lambda + v)
        .fold(T::lit(2.0), T::max);
    let u = growth * a;
    let n = b.dim();
    let raw = (T::of_usize(n) * u).powi(n as i32);
    if !(raw <= cap) {
        log::warn!(
            "state magnitude bound {} exceeds cap {}; searching within the cap",
            raw.to_f64_lossy(),
            cap.to_f64_lossy()
        );
        (cap, true)
    } else {
        (raw, false)
    }
}

/// Runs C1, C2p and C3 in that order; the first failing condition wins.
pub fn verify_full<T: Scalar>(
    b: &PiecewiseAffineBarrier<T>,
    sys: &SwitchedAffineSystem<T>,
    x0: &Polyhedron<T>,
    xu: &Polyhedron<T>,
    opts: &VerifyOptions,
) -> Result<VerificationOutcome<T>> {
    check_dim("system dimension", b.dim(), sys.dim())?;
    let eps = T::lit(opts.epsilon);
    let (bound, clamped) = big_m_bound(b, sys, T::lit(opts.c3.bound_cap));
    let radius = bound.max(T::one());
    let mut reports = Vec::with_capacity(3);
    let fail = |reports: Vec<ConditionReport<T>>| {
        let last = reports.last().expect("at least one report");
        VerificationOutcome {
            status: VerificationStatus::Counterexample,
            failed_condition: Some(last.condition),
            witness: last.witness.clone(),
            assignment: None,
            reports,
            search_radius: radius,
            bound_clamped: clamped,
        }
    };

    let c1 = check_c1(b, x0, eps)?;
    let ok = c1.holds;
    reports.push(c1);
    if !ok {
        return Ok(fail(reports));
    }
    let c2 = check_c2p(b, xu, eps)?;
    let ok = c2.holds;
    reports.push(c2);
    if !ok {
        return Ok(fail(reports));
    }
    let c3 = find_c3_counterexample(b, sys, radius, &opts.c3)?;
    let holds = c3.witness.is_none();
    reports.push(ConditionReport {
        condition: Condition::C3,
        holds,
        margin: c3.slack,
        witness: c3.witness,
    });
    if !holds {
        let mut out = fail(reports);
        out.assignment = c3.assignment;
        return Ok(out);
    }
    Ok(VerificationOutcome {
        status: VerificationStatus::Verified,
        failed_condition: None,
        witness: None,
        assignment: None,
        reports,
        search_radius: radius,
        bound_clamped: clamped,
    })
}

/// Direct re-evaluation of a condition at a state: true iff the condition is
/// violated at `x` (within `tol`).
pub fn violates_at<T: Scalar>(
    b: &PiecewiseAffineBarrier<T>,
    sys: &SwitchedAffineSystem<T>,
    condition: Condition,
    x: &[T],
    eps: T,
    tol: T,
) -> Result<bool> {
    let vals = b.piece_values(x);
    Ok(match condition {
        Condition::C1 => match b.kind {
            BarrierKind::Max => vals.iter().any(|&v| v > -eps - tol),
            BarrierKind::Min => vals[0] > -eps - tol,
        },
        Condition::C2p => match b.kind {
            BarrierKind::Max => vals[0] < eps + tol,
            BarrierKind::Min => vals.iter().any(|&v| v < eps + tol),
        },
        Condition::C3 => {
            let e = b.evaluate(x)?;
            if e.value > tol {
                return Ok(false);
            }
            let mut all_modes_fail = true;
            for l in 0..sys.num_modes() {
                let f = sys.flow(l, x)?;
                let some_active_fails = vals.iter().enumerate().any(|(i, &v)| {
                    let near_top = (v - e.value).abs() <= tol;
                    let p = &b.pieces[i];
                    near_top && crate::scalar::dot(&p.c, &f) + b.lambda * v >= -tol
                });
                if !some_active_fails {
                    all_modes_fail = false;
                    break;
                }
            }
            all_modes_fail
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::Piece;

    fn ex5() -> SwitchedAffineSystem<f64> {
        SwitchedAffineSystem::<f64>::from_pairs(&[
            (vec![vec![1.0, -1.0], vec![-0.5, -2.0]], vec![-1.0, -1.0]),
            (vec![vec![-2.0, 1.0], vec![0.5, -1.0]], vec![1.0, -1.0]),
            (vec![vec![1.0, 1.0], vec![-1.0, -1.0]], vec![1.0, 1.0]),
        ])
        .unwrap()
    }

    fn barrier(kind: BarrierKind, lambda: f64, raw: &[(&[f64], f64)]) -> PiecewiseAffineBarrier<f64> {
        PiecewiseAffineBarrier::new(kind, lambda, raw.iter().map(|(c, d)| Piece::new(c.to_vec(), *d)).collect()).unwrap()
    }

    fn ex5_max_row() -> PiecewiseAffineBarrier<f64> {
        barrier(BarrierKind::Max, 0.0, &[(&[-9.04427, 0.0], -6.69266), (&[-9.04427, 9.04427], 9.04427)])
    }

    fn unsafe_box() -> Polyhedron<f64> {
        Polyhedron::<f64>::from_box(&[(-0.5, 0.5), (-0.5, 0.5)]).unwrap()
    }

    #[test]
    fn c1_on_table_row_point() {
        let x0 = Polyhedron::<f64>::point(&[1.0, 0.0]).unwrap();
        let r = check_c1(&ex5_max_row(), &x0, 0.5).unwrap();
        assert!(r.holds);
        assert!((r.margin.unwrap() - 2.35161).abs() < 1e-7);
    }

    #[test]
    fn c1_constant_positive_piece() {
        let b = barrier(BarrierKind::Max, 0.0, &[(&[1.0, 0.0], 100.0), (&[0.0, 0.0], -1.0)]);
        let x0 = Polyhedron::<f64>::from_box(&[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        let r = check_c1(&b, &x0, 0.01).unwrap();
        assert!(!r.holds);
        assert!(x0.contains(r.witness.as_ref().unwrap(), 1e-9));
    }

    #[test]
    fn c1_box_optimum_on_boundary() {
        let b = barrier(BarrierKind::Max, 0.0, &[(&[-1.0, 0.0], -1.0)]);
        let x0 = Polyhedron::<f64>::from_box(&[(1.1, 1.9), (-0.25, 0.25)]).unwrap();
        let r = check_c1(&b, &x0, 0.05).unwrap();
        assert!(r.holds);
        assert!((r.margin.unwrap() - 0.1).abs() < 1e-9);
    }

    #[test]
    fn c1_rejects_unbounded_or_empty_sets() {
        let b = ex5_max_row();
        let half = Polyhedron::<f64>::from_rows(&[vec![1.0, 0.0]], vec![0.0]).unwrap();
        assert!(matches!(check_c1(&b, &half, 0.1), Err(Error::Input(_))));
        let empty = Polyhedron::<f64>::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]], vec![-1.0, -1.0]).unwrap();
        assert!(matches!(check_c2p(&b, &empty, 0.1), Err(Error::Input(_))));
    }

    #[test]
    fn c2p_margin_of_table_rows() {
        let r = check_c2p(&ex5_max_row(), &unsafe_box(), 0.01).unwrap();
        assert!(r.holds);
        // exact LP value 6.69266 − 0.5·9.04427, which rounds to 2.17053
        assert!((r.margin.unwrap() - (6.69266 - 0.5 * 9.04427)).abs() < 1e-9);
        assert!((r.margin.unwrap() - 2.17053).abs() < 1e-5);
        let min = barrier(BarrierKind::Min, 0.0, &[(&[-7.32068, 0.0], -5.43091), (&[-9.37083, 0.88549], -9.37083)]);
        let r = check_c2p(&min, &unsafe_box(), 0.01).unwrap();
        assert!(r.holds);
        assert!((r.margin.unwrap() - 1.77057).abs() < 1e-7);
        let second = barrier(BarrierKind::Max, 0.0, &[(&[-9.37083, 0.88549], -9.37083)]);
        let r = check_c2p(&second, &unsafe_box(), 0.01).unwrap();
        assert!((r.margin.unwrap() - 4.24267).abs() < 1e-5);
    }

    #[test]
    fn c2p_zero_first_piece_fails() {
        let b = barrier(BarrierKind::Max, 0.0, &[(&[0.0, 0.0], 0.0), (&[1.0, 0.0], 5.0)]);
        let r = check_c2p(&b, &unsafe_box(), 0.01).unwrap();
        assert!(!r.holds && r.witness.is_some());
    }

    #[test]
    fn bound_examples() {
        let sys = SwitchedAffineSystem::<f64>::from_pairs(&[(vec![vec![1.0, 0.0], vec![0.0, -1.0]], vec![0.0; 2])]).unwrap();
        let b = barrier(BarrierKind::Max, 0.0, &[(&[0.5, -0.5], 1.0)]);
        assert_eq!(big_m_bound(&b, &sys, 1e12), (16.0, false));
        let zero = barrier(BarrierKind::Max, 0.0, &[(&[0.0, 0.0], 0.0)]);
        assert_eq!(big_m_bound(&zero, &sys, 1e12), (0.0, false));
        let sys1 = SwitchedAffineSystem::<f64>::from_pairs(&[(vec![vec![-2.0]], vec![0.0])]).unwrap();
        let b1 = barrier(BarrierKind::Max, 1.0, &[(&[1.0], 0.5)]);
        assert_eq!(big_m_bound(&b1, &sys1, 1e12), (3.0, false));
        let big = barrier(BarrierKind::Max, 0.0, &[(&[9.0, 9.0], 9.0)]);
        assert_eq!(big_m_bound(&big, &sys, 100.0), (100.0, true));
    }

    fn two_mode() -> SwitchedAffineSystem<f64> {
        SwitchedAffineSystem::<f64>::from_pairs(&[
            (vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0; 2]),
            (vec![vec![-1.0, 0.0], vec![0.0, -1.0]], vec![0.0; 2]),
        ])
        .unwrap()
    }

    #[test]
    fn full_verification_outcomes() {
        let sys = two_mode();
        let b = barrier(BarrierKind::Max, 0.0, &[(&[1.0, 0.0], -1.0)]);
        let xu = Polyhedron::<f64>::from_box(&[(1.0, 2.0), (1.0, 2.0)]).unwrap();
        let opts = VerifyOptions::default();

        let x0 = Polyhedron::<f64>::point(&[-2.0, 0.0]).unwrap();
        let out = verify_full(&b, &sys, &x0, &xu, &opts).unwrap();
        assert!(out.is_verified(), "{out:?}");
        assert_eq!(out.reports.len(), 3);

        let bad_x0 = Polyhedron::<f64>::point(&[0.0, 0.0]).unwrap();
        let out = verify_full(&b, &sys, &bad_x0, &xu, &opts).unwrap();
        assert_eq!(out.failed_condition, Some(Condition::C1));
        assert!(violates_at(&b, &sys, Condition::C1, out.witness.as_ref().unwrap(), 0.01, 1e-7).unwrap());

        let lazy = barrier(BarrierKind::Max, 0.0, &[(&[1.0, 0.0], 1.5), (&[-1.0, 0.0], 10.0)]);
        let out = verify_full(&lazy, &sys, &x0, &xu, &opts).unwrap();
        assert_eq!(out.failed_condition, Some(Condition::C2p));
    }

    #[test]
    fn ex5_row_c3_is_decidable() {
        let x0 = Polyhedron::<f64>::point(&[1.0, 0.0]).unwrap();
        let out = verify_full(&ex5_max_row(), &ex5(), &x0, &unsafe_box(), &VerifyOptions::default()).unwrap();
        if let Some(w) = &out.witness {
            assert!(violates_at(&ex5_max_row(), &ex5(), Condition::C3, w, 0.01, 1e-6).unwrap());
        }
        assert!(!out.bound_clamped);
    }
}
