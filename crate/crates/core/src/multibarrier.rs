//! Families of barriers synthesized from individual test points and combined
//! by a pointwise minimum, whose negative region is the union of the member
//! invariant regions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barrier::{BarrierKind, PiecewiseAffineBarrier};
use crate::error::{check_dim, Error, Result};
use crate::geometry::Polyhedron;
use crate::scalar::{norm2, Scalar};
use crate::synth::{synthesize, SynthConfig, SynthStats};
use crate::system::SwitchedAffineSystem;

/// Where a member came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Provenance<T> {
    pub point: Vec<T>,
    pub config: SynthConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BarrierFamily<T> {
    pub members: Vec<PiecewiseAffineBarrier<T>>,
    pub provenance: Vec<Provenance<T>>,
}

impl<T: Scalar> BarrierFamily<T> {
    pub fn new(members: Vec<PiecewiseAffineBarrier<T>>, provenance: Vec<Provenance<T>>) -> Result<Self> {
        check_dim("provenance entries", members.len(), provenance.len())?;
        if let Some(first) = members.first() {
            for m in &members {
                m.validate()?;
                check_dim("family member dimension", first.dim(), m.dim())?;
            }
        }
        Ok(Self { members, provenance })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `min_j B_j(x)`.
    pub fn combined_value(&self, x: &[T]) -> Result<T> {
        Ok(self.member_values(x)?.into_iter().fold(T::infinity(), T::min))
    }

    /// `B_j(x)` for every member.
    pub fn member_values(&self, x: &[T]) -> Result<Vec<T>> {
        if self.is_empty() {
            return Err(Error::EmptyFamily);
        }
        self.members
            .iter()
            .map(|m| {
                check_dim("state", m.dim(), x.len())?;
                Ok(m.value(x))
            })
            .collect()
    }

    /// Member with the smallest value at `x` (lowest index on ties) and its
    /// switching rule there.
    pub fn dispatch(&self, sys: &SwitchedAffineSystem<T>, x: &[T]) -> Result<Dispatch> {
        let values = self.member_values(x)?;
        let (member, best) = values
            .iter()
            .copied()
            .enumerate()
            .fold((0, T::infinity()), |acc, (j, v)| if v < acc.1 { (j, v) } else { acc });
        if best > T::zero() {
            return Err(Error::OutsideFamily);
        }
        let modes = self.members[member].switching_rule(sys, x)?;
        Ok(Dispatch { member, modes })
    }
}

/// Member selected at a state and the modes its switching rule allows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dispatch {
    pub member: usize,
    pub modes: Vec<usize>,
}

/// Uniform samples of `bounds` lying outside `xu` by at least `margin` in
/// some facet direction. Deterministic under `seed`.
pub fn generate_test_points<T: Scalar>(
    xu: &Polyhedron<T>,
    bounds: &[(T, T)],
    count: usize,
    seed: u64,
    margin: T,
) -> Result<Vec<Vec<T>>> {
    if count == 0 {
        return Err(Error::Input("test point count must be at least 1".into()));
    }
    check_dim("sampling box", xu.dim(), bounds.len())?;
    if bounds.iter().any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
        return Err(Error::Input("sampling box must be finite with lo ≤ hi".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let budget = 10_000usize.saturating_mul(count);
    for _ in 0..budget {
        let x: Vec<T> = bounds
            .iter()
            .map(|&(lo, hi)| {
                let u: f64 = rng.gen();
                lo + (hi - lo) * T::lit(u)
            })
            .collect();
        if outside_by(xu, &x, margin) {
            out.push(x);
            if out.len() == count {
                return Ok(out);
            }
        }
    }
    Err(Error::Input(format!(
        "rejection sampling produced only {} of {count} test points; the unsafe set fills the sampling box",
        out.len()
    )))
}

/// True iff some normalized row of `set` is violated by more than `margin`.
fn outside_by<T: Scalar>(set: &Polyhedron<T>, x: &[T], margin: T) -> bool {
    set.rows().any(|(a, b)| {
        let s = norm2(a);
        s > T::zero() && (crate::scalar::dot(a, x) - b) / s > margin
    })
}

/// Outcome of one synthesis attempt for a test point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Attempt {
    /// Added to the family as this member index.
    Found { member: usize, stats: SynthStats },
    Failed { stats: SynthStats },
    InvalidTestPoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PointStatus<T> {
    pub point: Vec<T>,
    pub max: Option<Attempt>,
    pub min: Option<Attempt>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FamilyReport<T> {
    pub family: BarrierFamily<T>,
    pub statuses: Vec<PointStatus<T>>,
}

impl<T: Scalar> FamilyReport<T> {
    /// Number of successful attempts of the given kind.
    pub fn found(&self, kind: BarrierKind) -> usize {
        self.statuses
            .iter()
            .filter_map(|s| match kind {
                BarrierKind::Max => s.max.as_ref(),
                BarrierKind::Min => s.min.as_ref(),
            })
            .filter(|a| matches!(a, Attempt::Found { .. }))
            .count()
    }
}

/// Synthesizes a max and/or min barrier separating every test point from
/// `xu`. Points run in parallel; members are ordered by point, max before min.
pub fn synthesize_family<T: Scalar>(
    sys: &SwitchedAffineSystem<T>,
    xu: &Polyhedron<T>,
    points: &[Vec<T>],
    cfg_max: Option<&SynthConfig>,
    cfg_min: Option<&SynthConfig>,
) -> Result<FamilyReport<T>> {
    if points.is_empty() {
        return Err(Error::Input("at least one test point is required".into()));
    }
    for p in points {
        check_dim("test point", sys.dim(), p.len())?;
    }
    let attempt = |p: &[T], cfg: Option<&SynthConfig>, kind: BarrierKind| -> Result<Option<(Option<PiecewiseAffineBarrier<T>>, Attempt, SynthConfig)>> {
        let Some(cfg) = cfg else { return Ok(None) };
        let cfg = SynthConfig { kind, ..cfg.clone() };
        if xu.contains(p, T::zero()) {
            return Ok(Some((None, Attempt::InvalidTestPoint, cfg)));
        }
        let out = synthesize(sys, &Polyhedron::point(p)?, xu, &cfg)?;
        let stats = out.stats;
        Ok(Some(match out.barrier {
            Some(b) => (Some(b), Attempt::Found { member: 0, stats }, cfg),
            None => (None, Attempt::Failed { stats }, cfg),
        }))
    };
    type Slot<T> = Option<(Option<PiecewiseAffineBarrier<T>>, Attempt, SynthConfig)>;
    let results: Vec<Result<(Slot<T>, Slot<T>)>> = points
        .par_iter()
        .map(|p| Ok((attempt(p, cfg_max, BarrierKind::Max)?, attempt(p, cfg_min, BarrierKind::Min)?)))
        .collect();

    let mut members = Vec::new();
    let mut provenance = Vec::new();
    let mut statuses = Vec::with_capacity(points.len());
    for (p, r) in points.iter().zip(results) {
        let (max, min) = r?;
        let mut place = |slot: Slot<T>| {
            slot.map(|(barrier, attempt, config)| match (barrier, attempt) {
                (Some(b), Attempt::Found { stats, .. }) => {
                    members.push(b);
                    provenance.push(Provenance { point: p.clone(), config });
                    Attempt::Found { member: members.len() - 1, stats }
                }
                (_, a) => a,
            })
        };
        let max = place(max);
        let min = place(min);
        statuses.push(PointStatus { point: p.clone(), max, min });
    }
    Ok(FamilyReport {
        family: BarrierFamily::new(members, provenance)?,
        statuses,
    })
}
