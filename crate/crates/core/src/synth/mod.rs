//! Counterexample-guided branch-and-bound search for barrier coefficients.
//!
//! Every tree node holds a polyhedron of admissible flattened coefficients
//! (see [`CoefficientLayout`]). A node's candidate is a center of that
//! polyhedron; if the candidate fails verification, the counterexample spawns
//! children whose polyhedra exclude the candidate.

mod embedding;
mod refine;

pub use embedding::CoefficientLayout;
pub use refine::{children, cw_rows, cw_rows_literal, exclusion_row, max_violation, ChildRows, Refinement, Witness};

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barrier::{BarrierKind, PiecewiseAffineBarrier};
use crate::error::{check_dim, Error, Result};
use crate::geometry::{chebyshev, mve_center, MveOptions, Polyhedron};
use crate::scalar::Scalar;
use crate::system::SwitchedAffineSystem;
use crate::verifier::{assignment_point, verify_full, violates_at, C3Options, Condition, VerificationOutcome, VerifyOptions};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateCenter {
    #[default]
    Mve,
    Chebyshev,
}

/// Order in which unexplored leaves are taken.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeafOrder {
    #[default]
    BreadthFirst,
    DepthFirst,
    /// Largest Chebyshev radius first.
    BestFirst,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Number of affine pieces.
    pub k: usize,
    pub lambda: f64,
    /// Margin shared by the C1/C2p checks and the refinement rows.
    pub epsilon: f64,
    /// Coefficient box `‖θ‖_∞ ≤ gamma`.
    pub gamma: f64,
    /// Nodes whose Chebyshev radius is at most this are discarded.
    pub r_min: f64,
    /// Nodes deeper than this are discarded.
    pub d_max: usize,
    pub kind: BarrierKind,
    pub candidate_center: CandidateCenter,
    pub seed: u64,
    pub refinement: Refinement,
    pub leaf_order: LeafOrder,
    /// Explore one node at a time instead of batches in parallel.
    pub deterministic: bool,
    pub max_nodes: usize,
    pub time_limit: Option<Duration>,
    pub c3: C3Options,
    /// Record the per-node trace.
    pub trace: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            k: 2,
            lambda: 0.1,
            epsilon: 0.01,
            gamma: 10.0,
            r_min: 1e-3,
            d_max: 6,
            kind: BarrierKind::Max,
            candidate_center: CandidateCenter::Mve,
            seed: 0,
            refinement: Refinement::TwoFamily,
            leaf_order: LeafOrder::BreadthFirst,
            deterministic: false,
            max_nodes: 200_000,
            time_limit: None,
            c3: C3Options::default(),
            trace: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if self.k == 0 {
            return Err(Error::Input("k must be at least 1".into()));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Input("lambda must be finite and nonnegative".into()));
        }
        if !positive(self.epsilon) || !positive(self.gamma) || !positive(self.r_min) {
            return Err(Error::Input("epsilon, gamma and r_min must be positive".into()));
        }
        if self.max_nodes == 0 {
            return Err(Error::Input("max_nodes must be positive".into()));
        }
        Ok(())
    }
}

/// One node of the search tree. The coefficient polyhedron lives only as
/// long as the node is unexplored; see [`SynthOutcome::trace`] for history.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode<T> {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub region: Polyhedron<T>,
    pub witnesses: Vec<Witness<T>>,
    /// Chebyshev radius, filled in when computed.
    pub radius: Option<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeOutcome {
    Verified,
    Counterexample(Condition),
    Infeasible,
    SmallRadius,
    DepthCut,
}

impl NodeOutcome {
    fn label(self) -> String {
        match self {
            NodeOutcome::Verified => "verified".into(),
            NodeOutcome::Counterexample(c) => format!("cex-{c}"),
            NodeOutcome::Infeasible => "infeasible".into(),
            NodeOutcome::SmallRadius => "small-radius".into(),
            NodeOutcome::DepthCut => "depth-cut".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub radius: Option<f64>,
    pub outcome: NodeOutcome,
}

/// Search trace as CSV with header `id,parent,depth,radius,outcome`.
pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("id,parent,depth,radius,outcome\n");
    for r in rows {
        let parent = r.parent.map(|p| p.to_string()).unwrap_or_default();
        let radius = r.radius.map(|v| format!("{v:.6e}")).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{}", r.id, parent, r.depth, radius, r.outcome.label());
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailReason {
    /// No unexplored leaves remain.
    Exhausted,
    NodeLimit,
    TimeLimit,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthStats {
    pub nodes_explored: usize,
    pub nodes_created: usize,
    pub max_depth: usize,
    /// Counterexamples found for C1, C2p and C3.
    pub counterexamples: [usize; 3],
    pub pruned_infeasible: usize,
    pub pruned_radius: usize,
    pub pruned_depth: usize,
    pub refinements: usize,
    /// Children whose rows the parent candidate satisfies.
    pub exclusion_exceptions: usize,
    /// MVE computations that fell back to the Chebyshev center.
    pub degraded_centers: usize,
    pub duplicate_witnesses: usize,
    pub bound_clamped: bool,
    pub wall_time_secs: f64,
    pub fail_reason: Option<FailReason>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOutcome<T> {
    pub barrier: Option<PiecewiseAffineBarrier<T>>,
    pub stats: SynthStats,
    pub trace: Vec<TraceRow>,
}

impl<T> SynthOutcome<T> {
    pub fn is_success(&self) -> bool {
        self.barrier.is_some()
    }
}

struct Problem<'a, T> {
    sys: &'a SwitchedAffineSystem<T>,
    x0: &'a Polyhedron<T>,
    xu: &'a Polyhedron<T>,
    cfg: &'a SynthConfig,
    layout: CoefficientLayout,
    verify: VerifyOptions,
}

/// Result of exploring one node, before the tree is updated.
enum Explored<T> {
    Pruned(NodeOutcome, Option<T>),
    Verified(PiecewiseAffineBarrier<T>, T, bool),
    Refined {
        radius: T,
        condition: Condition,
        kids: Vec<ChildRows<T>>,
        theta: Vec<T>,
        degraded: bool,
        duplicate: bool,
        clamped: bool,
    },
}

impl<T: Scalar> Problem<'_, T> {
    fn explore(&self, node: &TreeNode<T>) -> Result<Explored<T>> {
        if node.depth > self.cfg.d_max {
            return Ok(Explored::Pruned(NodeOutcome::DepthCut, None));
        }
        let radius = match node.radius {
            Some(r) => r,
            None => match chebyshev(&node.region)? {
                None => return Ok(Explored::Pruned(NodeOutcome::Infeasible, None)),
                Some(ball) => ball.radius,
            },
        };
        if !(radius > T::tol_feas()) {
            return Ok(Explored::Pruned(NodeOutcome::Infeasible, Some(radius)));
        }
        if radius <= T::lit(self.cfg.r_min) {
            return Ok(Explored::Pruned(NodeOutcome::SmallRadius, Some(radius)));
        }
        let (theta, degraded) = self.candidate(&node.region)?;
        let barrier = PiecewiseAffineBarrier::new(self.cfg.kind, T::lit(self.cfg.lambda), self.layout.unflatten(&theta)?)?;
        let outcome = verify_full(&barrier, self.sys, self.x0, self.xu, &self.verify)?;
        if outcome.is_verified() {
            return Ok(Explored::Verified(barrier, radius, outcome.bound_clamped));
        }
        let condition = outcome.failed_condition.expect("counterexample names a condition");
        let mut x = outcome.witness.clone().expect("counterexample carries a witness");
        let duplicate = node.witnesses.iter().any(|w| w.condition == condition && close(&w.x, &x));
        if duplicate {
            if let Some(alt) = self.perturbed_witness(&barrier, &outcome, node.id)? {
                x = alt;
            }
        }
        let kids = if node.depth < self.cfg.d_max {
            children(
                &self.layout,
                self.sys,
                self.cfg.kind,
                T::lit(self.cfg.lambda),
                T::lit(self.cfg.epsilon),
                self.cfg.refinement,
                condition,
                &x,
            )?
        } else {
            Vec::new()
        };
        Ok(Explored::Refined {
            radius,
            condition,
            kids,
            theta,
            degraded,
            duplicate,
            clamped: outcome.bound_clamped,
        })
    }

    fn candidate(&self, region: &Polyhedron<T>) -> Result<(Vec<T>, bool)> {
        match self.cfg.candidate_center {
            CandidateCenter::Mve => {
                let e = mve_center(region, MveOptions::default())?;
                Ok((e.center, e.degraded))
            }
            CandidateCenter::Chebyshev => {
                let ball = chebyshev(region)?.ok_or(Error::EmptyPolyhedron)?;
                Ok((ball.center, false))
            }
        }
    }

    /// Re-solves the falsifying LP of a repeated decrease counterexample
    /// with a random objective; other conditions keep their witness.
    fn perturbed_witness(
        &self,
        barrier: &PiecewiseAffineBarrier<T>,
        outcome: &VerificationOutcome<T>,
        node_id: usize,
    ) -> Result<Option<Vec<T>>> {
        let Some(mu) = &outcome.assignment else {
            return Ok(None);
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ (node_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let obj: Vec<T> = (0..self.layout.dim()).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect();
        let eps_strict = T::lit(self.cfg.c3.eps_strict);
        let Some(x) = assignment_point(barrier, self.sys, mu, outcome.search_radius, eps_strict, &obj)? else {
            return Ok(None);
        };
        let tol = T::tol_feas();
        Ok(violates_at(barrier, self.sys, Condition::C3, &x, T::lit(self.cfg.epsilon), tol)?.then_some(x))
    }
}

fn close<T: Scalar>(a: &[T], b: &[T]) -> bool {
    a.iter().zip(b).all(|(&u, &v)| (u - v).abs() <= T::lit(1e-9))
}

fn condition_slot(c: Condition) -> usize {
    match c {
        Condition::C1 => 0,
        Condition::C2p => 1,
        Condition::C3 => 2,
    }
}

/// Rejects dimension mismatches, empty or unbounded sets, and overlapping `x0` and `xu`.
pub fn check_sets<T: Scalar>(sys: &SwitchedAffineSystem<T>, x0: &Polyhedron<T>, xu: &Polyhedron<T>) -> Result<()> {
    check_dim("initial set", sys.dim(), x0.dim())?;
    check_dim("unsafe set", sys.dim(), xu.dim())?;
    for (set, name) in [(x0, "initial set"), (xu, "unsafe set")] {
        match set.bounding_box()? {
            None => return Err(Error::Input(format!("{name} is empty"))),
            Some(bounds) if bounds.iter().any(|(lo, hi)| !lo.is_finite() || !hi.is_finite()) => {
                return Err(Error::Input(format!("{name} is unbounded")))
            }
            Some(_) => {}
        }
    }
    if !x0.intersect(xu)?.is_empty()? {
        return Err(Error::Input("initial and unsafe sets intersect".into()));
    }
    Ok(())
}

/// Frontier of unexplored nodes in the configured order.
struct Frontier<T> {
    order: LeafOrder,
    items: VecDeque<TreeNode<T>>,
}

impl<T: Scalar> Frontier<T> {
    fn push(&mut self, node: TreeNode<T>) {
        self.items.push_back(node);
    }

    fn pop(&mut self) -> Option<TreeNode<T>> {
        match self.order {
            LeafOrder::BreadthFirst => self.items.pop_front(),
            LeafOrder::DepthFirst => self.items.pop_back(),
            LeafOrder::BestFirst => {
                let best = self
                    .items
                    .iter()
                    .enumerate()
                    .max_by(|a, b| {
                        let ra = a.1.radius.unwrap_or(T::infinity());
                        let rb = b.1.radius.unwrap_or(T::infinity());
                        // on ties prefer the older node
                        ra.partial_cmp(&rb).unwrap_or(std::cmp::Ordering::Equal).then(b.0.cmp(&a.0))
                    })
                    .map(|(i, _)| i)?;
                self.items.remove(best)
            }
        }
    }
}

/// Searches for a barrier of kind `cfg.kind` satisfying C1 on `x0`, C2p on
/// `xu` and the decrease condition at rate `cfg.lambda`.
pub fn synthesize<T: Scalar>(
    sys: &SwitchedAffineSystem<T>,
    x0: &Polyhedron<T>,
    xu: &Polyhedron<T>,
    cfg: &SynthConfig,
) -> Result<SynthOutcome<T>> {
    cfg.validate()?;
    check_sets(sys, x0, xu)?;
    let start = Instant::now();
    let layout = CoefficientLayout::new(cfg.k, sys.dim())?;
    let problem = Problem {
        sys,
        x0,
        xu,
        cfg,
        layout,
        verify: VerifyOptions {
            epsilon: cfg.epsilon,
            c3: cfg.c3,
        },
    };
    let gamma = T::lit(cfg.gamma);
    let root = TreeNode {
        id: 0,
        parent: None,
        depth: 0,
        region: Polyhedron::from_box(&vec![(-gamma, gamma); layout.len()])?,
        witnesses: Vec::new(),
        radius: None,
    };
    let mut frontier = Frontier {
        order: cfg.leaf_order,
        items: VecDeque::new(),
    };
    frontier.push(root);
    let mut stats = SynthStats {
        nodes_created: 1,
        ..SynthStats::default()
    };
    let mut trace = Vec::new();
    let parallel = !cfg.deterministic && cfg.leaf_order == LeafOrder::BreadthFirst;
    let batch_size = if parallel { rayon::current_num_threads().max(1) } else { 1 };
    let finish = |mut stats: SynthStats, barrier, trace, reason| {
        stats.wall_time_secs = start.elapsed().as_secs_f64();
        stats.fail_reason = reason;
        SynthOutcome { barrier, stats, trace }
    };

    loop {
        if cfg.time_limit.is_some_and(|limit| start.elapsed() >= limit) {
            return Ok(finish(stats, None, trace, Some(FailReason::TimeLimit)));
        }
        let room = cfg.max_nodes.saturating_sub(stats.nodes_explored);
        if room == 0 {
            return Ok(finish(stats, None, trace, Some(FailReason::NodeLimit)));
        }
        let mut batch = Vec::new();
        while batch.len() < batch_size.min(room) {
            match frontier.pop() {
                Some(node) => batch.push(node),
                None => break,
            }
        }
        if batch.is_empty() {
            return Ok(finish(stats, None, trace, Some(FailReason::Exhausted)));
        }
        let results: Vec<Result<Explored<T>>> = if batch.len() > 1 {
            batch.par_iter().map(|node| problem.explore(node)).collect()
        } else {
            batch.iter().map(|node| problem.explore(node)).collect()
        };
        for (node, result) in batch.into_iter().zip(results) {
            let explored = result?;
            let mut row = TraceRow {
                id: node.id,
                parent: node.parent,
                depth: node.depth,
                radius: None,
                outcome: NodeOutcome::Verified,
            };
            match explored {
                Explored::Pruned(outcome, radius) => {
                    match outcome {
                        NodeOutcome::DepthCut => stats.pruned_depth += 1,
                        NodeOutcome::SmallRadius => stats.pruned_radius += 1,
                        _ => stats.pruned_infeasible += 1,
                    }
                    row.outcome = outcome;
                    row.radius = radius.map(T::to_f64_lossy);
                    if cfg.trace {
                        trace.push(row);
                    }
                }
                Explored::Verified(barrier, radius, clamped) => {
                    stats.nodes_explored += 1;
                    stats.max_depth = stats.max_depth.max(node.depth);
                    stats.bound_clamped |= clamped;
                    row.radius = Some(radius.to_f64_lossy());
                    if cfg.trace {
                        trace.push(row);
                    }
                    return Ok(finish(stats, Some(barrier), trace, None));
                }
                Explored::Refined {
                    radius,
                    condition,
                    kids,
                    theta,
                    degraded,
                    duplicate,
                    clamped,
                } => {
                    stats.nodes_explored += 1;
                    stats.max_depth = stats.max_depth.max(node.depth);
                    stats.counterexamples[condition_slot(condition)] += 1;
                    stats.degraded_centers += usize::from(degraded);
                    stats.duplicate_witnesses += usize::from(duplicate);
                    stats.bound_clamped |= clamped;
                    row.radius = Some(radius.to_f64_lossy());
                    row.outcome = NodeOutcome::Counterexample(condition);
                    if cfg.trace {
                        trace.push(row);
                    }
                    if !kids.is_empty() {
                        stats.refinements += 1;
                    }
                    for kid in kids {
                        if !(max_violation(&kid.rows, &theta) > T::zero()) {
                            stats.exclusion_exceptions += 1;
                            log::debug!("node {}: child {:?} keeps the parent candidate", node.id, kid.witness);
                        }
                        let mut region = node.region.clone();
                        for (a, b) in &kid.rows {
                            region = region.append_row(a, *b)?;
                        }
                        let mut witnesses = node.witnesses.clone();
                        witnesses.push(kid.witness);
                        let radius = if cfg.leaf_order == LeafOrder::BestFirst {
                            chebyshev(&region)?.map(|b| b.radius).or(Some(T::zero()))
                        } else {
                            None
                        };
                        frontier.push(TreeNode {
                            id: stats.nodes_created,
                            parent: Some(node.id),
                            depth: node.depth + 1,
                            region,
                            witnesses,
                            radius,
                        });
                        stats.nodes_created += 1;
                    }
                }
            }
        }
    }
}

/// [`synthesize`] with the kind forced to `Min`.
pub fn synthesize_min<T: Scalar>(
    sys: &SwitchedAffineSystem<T>,
    x0: &Polyhedron<T>,
    xu: &Polyhedron<T>,
    cfg: &SynthConfig,
) -> Result<SynthOutcome<T>> {
    let cfg = SynthConfig {
        kind: BarrierKind::Min,
        ..cfg.clone()
    };
    synthesize(sys, x0, xu, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex1() -> SwitchedAffineSystem<f64> {
        SwitchedAffineSystem::<f64>::from_pairs(&[
            (vec![vec![-1.0, 0.0], vec![0.0, -1.0]], vec![0.0, 0.0]),
            (vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]),
        ])
        .unwrap()
    }

    fn boxed(b: &[(f64, f64)]) -> Polyhedron<f64> {
        Polyhedron::<f64>::from_box(b).unwrap()
    }

    #[test]
    fn rejects_overlapping_sets() {
        let x = boxed(&[(-0.5, 0.5), (-0.5, 0.5)]);
        let err = synthesize(&ex1(), &x, &x, &SynthConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn rejects_bad_config() {
        let x0 = boxed(&[(1.1, 1.9), (-0.25, 0.25)]);
        let xu = boxed(&[(-0.5, 0.5), (-0.5, 0.5)]);
        let cfg = SynthConfig { k: 0, ..SynthConfig::default() };
        assert!(synthesize(&ex1(), &x0, &xu, &cfg).is_err());
    }

    #[test]
    fn zero_depth_stops_after_root() {
        let x0 = boxed(&[(1.1, 1.9), (-0.25, 0.25)]);
        let xu = boxed(&[(-0.5, 0.5), (-0.5, 0.5)]);
        let cfg = SynthConfig {
            d_max: 0,
            deterministic: true,
            trace: true,
            ..SynthConfig::default()
        };
        let out = synthesize(&ex1(), &x0, &xu, &cfg).unwrap();
        assert!(out.barrier.is_none());
        assert_eq!(out.stats.nodes_explored, 1);
        assert_eq!(out.stats.fail_reason, Some(FailReason::Exhausted));
        assert_eq!(out.trace.len(), 1);
    }

    #[test]
    fn trace_csv_header_and_rows() {
        let rows = vec![
            TraceRow {
                id: 0,
                parent: None,
                depth: 0,
                radius: Some(10.0),
                outcome: NodeOutcome::Counterexample(Condition::C2p),
            },
            TraceRow {
                id: 1,
                parent: Some(0),
                depth: 1,
                radius: None,
                outcome: NodeOutcome::Infeasible,
            },
        ];
        let csv = trace_csv(&rows);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "id,parent,depth,radius,outcome");
        assert_eq!(lines[1], "0,,0,1.000000e1,cex-C2p");
        assert_eq!(lines[2], "1,0,1,,infeasible");
    }
}
