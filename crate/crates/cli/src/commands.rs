//! Command implementations shared by the binary and the test suites.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use pwa_cbf::multibarrier::{synthesize_family, Attempt, FamilyReport};
use pwa_cbf::sim::{safety_monitor, simulate, Controller, MonitorReport, MonitorTolerance};
use pwa_cbf::synth::{synthesize, SynthConfig};
use pwa_cbf::verifier::{verify_full, Condition, VerifyOptions};
use pwa_cbf::{BarrierFamily, BarrierKind, PiecewiseAffineBarrier, Polyhedron, SynthOutcome, Trajectory, VerificationOutcome};
use serde::{Deserialize, Serialize};

use crate::problem::{InputError, ProblemSpec};

/// Process exit status per outcome class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Success,
    /// Unexpected internal failure.
    Internal,
    Input,
    /// Search finished without a barrier.
    Fail,
    /// Verification produced a counterexample.
    Counterexample,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::Internal => 1,
            Status::Input => 2,
            Status::Fail => 3,
            Status::Counterexample => 4,
        }
    }

    /// Input errors map to [`Status::Input`], everything else to [`Status::Internal`].
    pub fn of_error(e: &anyhow::Error) -> Self {
        if e.chain().any(|c| c.downcast_ref::<InputError>().is_some() || c.downcast_ref::<serde_json::Error>().is_some()) {
            Status::Input
        } else {
            Status::Internal
        }
    }
}

/// A saved barrier or family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Artifact {
    Family(BarrierFamily),
    Barrier(PiecewiseAffineBarrier),
}

impl Artifact {
    pub fn controller(&self) -> Controller<'_, f64> {
        match self {
            Artifact::Family(f) => Controller::Family(f),
            Artifact::Barrier(b) => Controller::Barrier(b),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            Artifact::Family(f) => f.members.first().map(|m| m.dim()),
            Artifact::Barrier(b) => Some(b.dim()),
        }
    }

    /// `B(x)`, or `min_j B_j(x)` for a family.
    pub fn value(&self, x: &[f64]) -> pwa_cbf::Result<f64> {
        match self {
            Artifact::Family(f) => f.combined_value(x),
            Artifact::Barrier(b) => Ok(b.value(x)),
        }
    }

    fn validate(self) -> pwa_cbf::Result<Self> {
        match self {
            Artifact::Family(f) => Ok(Artifact::Family(BarrierFamily::new(f.members, f.provenance)?)),
            Artifact::Barrier(b) => {
                b.validate()?;
                Ok(Artifact::Barrier(b))
            }
        }
    }
}

pub fn parse_artifact(text: &str) -> anyhow::Result<Artifact> {
    let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| InputError(e.to_string()))?;
    let parsed = if raw.get("members").is_some() {
        serde_json::from_value(raw).map(Artifact::Family)
    } else {
        serde_json::from_value(raw).map(Artifact::Barrier)
    };
    let artifact = parsed.map_err(|e| InputError(e.to_string()))?;
    artifact.validate().map_err(|e| InputError(e.to_string()).into())
}

pub fn load_artifact(path: &Path) -> anyhow::Result<Artifact> {
    let text = std::fs::read_to_string(path).map_err(|e| InputError(format!("{}: {e}", path.display())))?;
    parse_artifact(&text).with_context(|| path.display().to_string())
}

pub fn save_json<S: Serialize>(path: &Path, value: &S) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Verifies `b` against the problem and renders per-condition margins.
pub fn verify(problem: &ProblemSpec, b: &PiecewiseAffineBarrier) -> anyhow::Result<(VerificationOutcome, String)> {
    if b.dim() != problem.n() {
        return Err(InputError(format!("barrier has dimension {}, problem has {}", b.dim(), problem.n())).into());
    }
    let opts = VerifyOptions {
        epsilon: problem.params.epsilon,
        ..VerifyOptions::default()
    };
    let out = verify_full(b, &problem.system, &problem.x0, &problem.xu, &opts)?;
    let mut text = String::new();
    for c in [Condition::C1, Condition::C2p, Condition::C3] {
        match out.report(c) {
            None => writeln!(text, "{c}: not checked")?,
            Some(r) => {
                let verdict = if r.holds { "holds" } else { "FAILS" };
                write!(text, "{c}: {verdict}")?;
                if let Some(m) = r.margin {
                    write!(text, " margin {m:.5}")?;
                }
                if let Some(w) = &r.witness {
                    write!(text, " witness {w:?}")?;
                }
                text.push('\n');
            }
        }
    }
    if let Some(a) = &out.assignment {
        writeln!(text, "C3 assignment (mode -> piece): {:?}", a)?;
    }
    writeln!(
        text,
        "{}",
        if out.is_verified() { "Verified" } else { "Counterexample" }
    )?;
    Ok((out, text))
}

/// Synthesizes one barrier for the problem's initial set.
pub fn synth(problem: &ProblemSpec, cfg: &SynthConfig) -> anyhow::Result<SynthOutcome> {
    Ok(synthesize(&problem.system, &problem.x0, &problem.xu, cfg)?)
}

/// Renders the statistics of a search as `key: value` lines.
pub fn stats_text(out: &SynthOutcome) -> String {
    let s = &out.stats;
    let mut t = String::new();
    let _ = writeln!(t, "result: {}", if out.is_success() { "barrier found" } else { "FAIL" });
    if let Some(r) = s.fail_reason {
        let _ = writeln!(t, "fail_reason: {r:?}");
    }
    let _ = writeln!(t, "nodes_explored: {}", s.nodes_explored);
    let _ = writeln!(t, "nodes_created: {}", s.nodes_created);
    let _ = writeln!(t, "max_depth: {}", s.max_depth);
    let _ = writeln!(t, "counterexamples C1/C2p/C3: {}/{}/{}", s.counterexamples[0], s.counterexamples[1], s.counterexamples[2]);
    let _ = writeln!(t, "pruned infeasible/radius/depth: {}/{}/{}", s.pruned_infeasible, s.pruned_radius, s.pruned_depth);
    let _ = writeln!(t, "refinements: {}", s.refinements);
    let _ = writeln!(t, "exclusion_exceptions: {}", s.exclusion_exceptions);
    let _ = writeln!(t, "wall_time_secs: {:.3}", s.wall_time_secs);
    t
}

/// Synthesizes a family over the test points for the requested kinds.
pub fn synth_family(problem: &ProblemSpec, points: &[Vec<f64>], kinds: &[BarrierKind]) -> anyhow::Result<FamilyReport<f64>> {
    let cfg_max = kinds.contains(&BarrierKind::Max).then(|| problem.config(BarrierKind::Max));
    let cfg_min = kinds.contains(&BarrierKind::Min).then(|| problem.config(BarrierKind::Min));
    Ok(synthesize_family(&problem.system, &problem.xu, points, cfg_max.as_ref(), cfg_min.as_ref())?)
}

/// Simulates the closed loop and runs the safety monitor on the result.
pub fn simulate_checked(
    problem: &ProblemSpec,
    artifact: &Artifact,
    x0: &[f64],
    dt: f64,
    t_final: f64,
) -> anyhow::Result<(Trajectory, MonitorReport<f64>)> {
    if artifact.dim() != Some(problem.n()) || x0.len() != problem.n() {
        return Err(InputError(format!("dimension mismatch: problem has n = {}", problem.n())).into());
    }
    let traj = simulate(&problem.system, artifact.controller(), x0, dt, t_final).map_err(|e| match e {
        pwa_cbf::Error::PositiveInitialValue(_) | pwa_cbf::Error::OutsideFamily | pwa_cbf::Error::Input(_) => {
            anyhow::Error::from(InputError(e.to_string()))
        }
        other => other.into(),
    })?;
    let report = safety_monitor(&traj, artifact.controller(), &problem.xu, MonitorTolerance::default())?;
    Ok((traj, report))
}

/// Parses `lo:hi,lo:hi,…`.
pub fn parse_bounds(text: &str) -> anyhow::Result<Vec<(f64, f64)>> {
    text.split(',')
        .map(|part| {
            let (lo, hi) = part
                .split_once(':')
                .ok_or_else(|| InputError(format!("bound `{part}` is not of the form lo:hi")))?;
            let lo: f64 = lo.trim().parse().map_err(|_| InputError(format!("bad number `{lo}`")))?;
            let hi: f64 = hi.trim().parse().map_err(|_| InputError(format!("bad number `{hi}`")))?;
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(InputError(format!("bound `{part}` is not a finite interval")).into());
            }
            Ok((lo, hi))
        })
        .collect()
}

/// Parses a comma-separated vector.
pub fn parse_vector(text: &str) -> anyhow::Result<Vec<f64>> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| InputError(format!("bad number `{v}`")).into())
        })
        .collect()
}

/// Barrier values on a regular grid with `res` samples per axis, as CSV
/// with header `x1,…,xn,B`.
pub fn levelset_csv(artifact: &Artifact, bounds: &[(f64, f64)], res: usize) -> anyhow::Result<String> {
    let n = bounds.len();
    if artifact.dim() != Some(n) {
        return Err(InputError(format!("bounds give {n} axes, barrier has {:?}", artifact.dim())).into());
    }
    if res < 2 {
        return Err(InputError("res must be at least 2".into()).into());
    }
    let mut out = String::new();
    for r in 1..=n {
        write!(out, "x{r},")?;
    }
    out.push_str("B\n");
    let total = res.checked_pow(n as u32).ok_or_else(|| InputError("grid too large".into()))?;
    let mut x = vec![0.0; n];
    for flat in 0..total {
        let mut rest = flat;
        for (axis, &(lo, hi)) in bounds.iter().enumerate().rev() {
            let i = rest % res;
            rest /= res;
            x[axis] = lo + (hi - lo) * i as f64 / (res - 1) as f64;
        }
        for v in &x {
            write!(out, "{v},")?;
        }
        writeln!(out, "{}", artifact.value(&x)?)?;
    }
    Ok(out)
}

/// One line of the benchmark summary.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub example: String,
    pub kind: BarrierKind,
    pub found: usize,
    pub total: usize,
    pub wall_secs: f64,
    pub nodes: usize,
}

/// Runs the bundled configuration of an example for one kind.
pub fn bench(problem: &ProblemSpec, kind: BarrierKind) -> anyhow::Result<(BenchRow, FamilyReport<f64>)> {
    let points = problem.points(kind).to_vec();
    let start = Instant::now();
    let report = synth_family(problem, &points, &[kind])?;
    let wall_secs = start.elapsed().as_secs_f64();
    let nodes = report
        .statuses
        .iter()
        .filter_map(|s| match kind {
            BarrierKind::Max => s.max.as_ref(),
            BarrierKind::Min => s.min.as_ref(),
        })
        .map(|a| match a {
            Attempt::Found { stats, .. } | Attempt::Failed { stats } => stats.nodes_explored,
            Attempt::InvalidTestPoint => 0,
        })
        .sum();
    let row = BenchRow {
        example: problem.name.clone(),
        kind,
        found: report.found(kind),
        total: points.len(),
        wall_secs,
        nodes,
    };
    Ok((row, report))
}

/// Summary table: one line per example and kind.
pub fn bench_table(rows: &[BenchRow]) -> String {
    let mut t = String::from("| Example | CBF type | # test points | # CBFs found | Nodes explored | Time (s) |\n");
    t.push_str("|---------|----------|---------------|--------------|----------------|----------|\n");
    for r in rows {
        let kind = match r.kind {
            BarrierKind::Max => "max",
            BarrierKind::Min => "min",
        };
        let _ = writeln!(
            t,
            "| {} | {} | {} | {} | {} | {:.1} |",
            r.example, kind, r.total, r.found, r.nodes, r.wall_secs
        );
    }
    t
}

/// Whether a set of points is disjoint from the unsafe set; used for `--points`.
pub fn check_points(problem: &ProblemSpec, points: &[Vec<f64>]) -> anyhow::Result<()> {
    for (i, p) in points.iter().enumerate() {
        if p.len() != problem.n() {
            return Err(InputError(format!("point {i} has {} entries, expected {}", p.len(), problem.n())).into());
        }
    }
    Ok(())
}

/// Bounding box of the unsafe set grown by `pad` on each side.
pub fn padded_unsafe_box(xu: &Polyhedron, pad: f64) -> anyhow::Result<Vec<(f64, f64)>> {
    let bb = xu.bounding_box()?.ok_or_else(|| InputError("unsafe set is empty".into()))?;
    Ok(bb.into_iter().map(|(lo, hi)| (lo - pad, hi + pad)).collect())
}
