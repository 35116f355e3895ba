//! Closed-loop simulation under the merit-based switching rule and a runtime
//! monitor for the exponential decay bound `B(x(t)) ≤ e^{−λt} B(x(0))`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barrier::PiecewiseAffineBarrier;
use crate::error::{check_dim, Error, Result};
use crate::geometry::Polyhedron;
use crate::linalg::{expm, Mat};
use crate::multibarrier::BarrierFamily;
use crate::scalar::Scalar;
use crate::system::SwitchedAffineSystem;

fn axpy<T: Scalar>(x: &[T], s: T, k: &[T]) -> Vec<T> {
    x.iter().zip(k).map(|(&a, &b)| a + s * b).collect()
}

/// One classical Runge-Kutta step of `ẋ = A_l x + b_l`.
pub fn step<T: Scalar>(sys: &SwitchedAffineSystem<T>, l: usize, x: &[T], dt: T) -> Result<Vec<T>> {
    if !(dt > T::zero()) {
        return Err(Error::Input("time step must be positive".into()));
    }
    let half = dt / T::lit(2.0);
    let k1 = sys.flow(l, x)?;
    let k2 = sys.flow(l, &axpy(x, half, &k1))?;
    let k3 = sys.flow(l, &axpy(x, half, &k2))?;
    let k4 = sys.flow(l, &axpy(x, dt, &k3))?;
    let six = T::lit(6.0);
    let two = T::lit(2.0);
    Ok((0..x.len())
        .map(|r| x[r] + dt / six * (k1[r] + two * k2[r] + two * k3[r] + k4[r]))
        .collect())
}

/// Exact step through the exponential of the augmented matrix `[[A, b], [0, 0]]`.
pub fn step_exact<T: Scalar>(sys: &SwitchedAffineSystem<T>, l: usize, x: &[T], dt: T) -> Result<Vec<T>> {
    let mode = sys.mode(l)?;
    check_dim("state", sys.dim(), x.len())?;
    let n = sys.dim();
    let mut aug = Mat::zeros(n + 1, n + 1);
    for r in 0..n {
        for c in 0..n {
            aug[(r, c)] = mode.a[(r, c)] * dt;
        }
        aug[(r, n)] = mode.b[r] * dt;
    }
    let e = expm(&aug);
    let mut z = x.to_vec();
    z.push(T::one());
    let out = e.matvec(&z);
    Ok(out[..n].to_vec())
}

/// What chooses the mode at each sample.
#[derive(Clone, Copy, Debug)]
pub enum Controller<'a, T> {
    Barrier(&'a PiecewiseAffineBarrier<T>),
    /// Members are latched: the active member is kept while its value stays
    /// nonpositive.
    Family(&'a BarrierFamily<T>),
}

impl<T: Scalar> Controller<'_, T> {
    fn member(&self, j: usize) -> &PiecewiseAffineBarrier<T> {
        match self {
            Controller::Barrier(b) => b,
            Controller::Family(f) => &f.members[j],
        }
    }

    fn dim(&self) -> Result<usize> {
        match self {
            Controller::Barrier(b) => Ok(b.dim()),
            Controller::Family(f) => f.members.first().map(|m| m.dim()).ok_or(Error::EmptyFamily),
        }
    }

    /// Member to use at `x` given the currently latched one.
    fn select(&self, x: &[T], latched: Option<usize>) -> Result<usize> {
        match self {
            Controller::Barrier(_) => Ok(0),
            Controller::Family(f) => {
                if let Some(j) = latched {
                    if f.members[j].value(x) <= T::zero() {
                        return Ok(j);
                    }
                }
                let values = f.member_values(x)?;
                let (best, v) = values
                    .iter()
                    .copied()
                    .enumerate()
                    .fold((0, T::infinity()), |acc, (j, v)| if v < acc.1 { (j, v) } else { acc });
                match latched {
                    // drifted out of every region: keep the latched member
                    Some(j) if v > T::zero() => Ok(j),
                    None if v > T::zero() => Err(Error::OutsideFamily),
                    _ => Ok(best),
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<Vec<T>>,
    /// Mode chosen at each sample and held until the next one.
    pub modes: Vec<usize>,
    /// Value of the member in control at each sample.
    pub barrier_values: Vec<T>,
    /// Member in control at each sample; `None` for a single barrier.
    pub member_indices: Option<Vec<usize>>,
    pub mode_switches: usize,
    /// Set when the switching rule failed; the trajectory stops there.
    pub aborted: Option<String>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with header `t,x1..xn,mode,member,B`; `member` is empty for a single barrier.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, Vec::len);
        let mut out = String::from("t");
        for r in 1..=n {
            let _ = write!(out, ",x{r}");
        }
        out.push_str(",mode,member,B\n");
        for s in 0..self.len() {
            let _ = write!(out, "{}", self.times[s]);
            for v in &self.states[s] {
                let _ = write!(out, ",{v}");
            }
            let member = self.member_indices.as_ref().map(|m| m[s].to_string()).unwrap_or_default();
            let _ = writeln!(out, ",{},{},{}", self.modes[s], member, self.barrier_values[s]);
        }
        out
    }
}

/// Sample-and-hold simulation: at each sample the first mode of the
/// switching rule is held for `dt`, integrated by RK4.
pub fn simulate<T: Scalar>(
    sys: &SwitchedAffineSystem<T>,
    controller: Controller<'_, T>,
    x0: &[T],
    dt: T,
    t_final: T,
) -> Result<Trajectory<T>> {
    check_dim("initial state", controller.dim()?, x0.len())?;
    check_dim("system dimension", sys.dim(), x0.len())?;
    if !(dt > T::zero() && t_final > T::zero()) {
        return Err(Error::Input("time step and horizon must be positive".into()));
    }
    let first = controller.select(x0, None)?;
    let v0 = controller.member(first).value(x0);
    if v0 > T::zero() {
        return Err(Error::PositiveInitialValue(v0.to_f64_lossy()));
    }
    let steps = (t_final / dt).round().to_usize().unwrap_or(0).max(1);
    let family = matches!(controller, Controller::Family(_));
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        modes: Vec::with_capacity(steps + 1),
        barrier_values: Vec::with_capacity(steps + 1),
        member_indices: family.then(|| Vec::with_capacity(steps + 1)),
        mode_switches: 0,
        aborted: None,
    };
    let mut x = x0.to_vec();
    let mut latched = None;
    for s in 0..=steps {
        let j = match controller.select(&x, latched) {
            Ok(j) => j,
            Err(e) => {
                traj.aborted = Some(e.to_string());
                break;
            }
        };
        latched = Some(j);
        let member = controller.member(j);
        let mode = match member.switching_rule(sys, &x) {
            Ok(modes) => modes[0],
            Err(e) => {
                traj.aborted = Some(e.to_string());
                break;
            }
        };
        if traj.modes.last().is_some_and(|&prev| prev != mode) {
            traj.mode_switches += 1;
        }
        traj.times.push(dt * T::of_usize(s));
        traj.barrier_values.push(member.value(&x));
        traj.states.push(x.clone());
        traj.modes.push(mode);
        if let Some(m) = traj.member_indices.as_mut() {
            m.push(j);
        }
        if s < steps {
            x = step(sys, mode, &x, dt)?;
        }
    }
    Ok(traj)
}

/// Runs [`simulate`] from every start in parallel.
pub fn simulate_batch<T: Scalar>(
    sys: &SwitchedAffineSystem<T>,
    controller: Controller<'_, T>,
    starts: &[Vec<T>],
    dt: T,
    t_final: T,
) -> Result<Vec<Trajectory<T>>> {
    starts
        .par_iter()
        .map(|x0| simulate(sys, controller, x0, dt, t_final))
        .collect()
}

/// Monitor tolerance `rel·|B(x(0))| + abs`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonitorTolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Default for MonitorTolerance {
    fn default() -> Self {
        Self { rel: 1e-3, abs: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonitorReport<T> {
    /// Samples where `B` exceeds the decay bound plus tolerance.
    pub bound_flags: Vec<usize>,
    /// Samples inside the unsafe set.
    pub unsafe_entries: Vec<usize>,
    /// Largest `B(x(t)) − e^{−λt}B(x(0))` observed.
    pub worst_bound_excess: T,
    /// Largest barrier value observed.
    pub max_barrier_value: T,
}

impl<T> MonitorReport<T> {
    pub fn is_clean(&self) -> bool {
        self.bound_flags.is_empty() && self.unsafe_entries.is_empty()
    }
}

/// Checks a trajectory against the decay bound of the member in control and
/// against the unsafe set. The bound restarts whenever the member changes.
pub fn safety_monitor<T: Scalar>(
    traj: &Trajectory<T>,
    controller: Controller<'_, T>,
    xu: &Polyhedron<T>,
    tol: MonitorTolerance,
) -> Result<MonitorReport<T>> {
    if traj.is_empty() {
        return Err(Error::Input("trajectory is empty".into()));
    }
    let mut report = MonitorReport {
        bound_flags: Vec::new(),
        unsafe_entries: Vec::new(),
        worst_bound_excess: T::neg_infinity(),
        max_barrier_value: T::neg_infinity(),
    };
    let member_at = |s: usize| traj.member_indices.as_ref().map_or(0, |m| m[s]);
    let mut anchor = 0;
    for s in 0..traj.len() {
        if member_at(s) != member_at(anchor) {
            anchor = s;
        }
        let lambda = controller.member(member_at(s)).lambda;
        let b0 = traj.barrier_values[anchor];
        let allowed = T::lit(tol.rel) * b0.abs() + T::lit(tol.abs);
        let bound = (-lambda * (traj.times[s] - traj.times[anchor])).exp() * b0;
        let excess = traj.barrier_values[s] - bound;
        report.worst_bound_excess = report.worst_bound_excess.max(excess);
        report.max_barrier_value = report.max_barrier_value.max(traj.barrier_values[s]);
        if excess > allowed {
            report.bound_flags.push(s);
        }
        if xu.contains(&traj.states[s], T::zero()) {
            report.unsafe_entries.push(s);
        }
    }
    Ok(report)
}
