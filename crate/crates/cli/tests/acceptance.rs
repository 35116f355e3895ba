//! Acceptance suite: one PASS/FAIL line per criterion, then a single assertion
//! over all of them. Criteria run sequentially so the timed ones do not
//! compete for cores.

use std::time::{Duration, Instant};

use pwa_cbf::multibarrier::{Attempt, FamilyReport};
use pwa_cbf::sim::{safety_monitor, simulate_batch, Controller, MonitorTolerance};
use pwa_cbf::synth::{SynthConfig, SynthStats};
use pwa_cbf::verifier::{big_m_bound, check_c1, check_c2p, find_c3_counterexample, verify_full, C3Options, VerifyOptions};
use pwa_cbf::{BarrierKind, Piece, PiecewiseAffineBarrier, Polyhedron, SwitchedAffineSystem};
use pwa_cbf_cli::commands::bench;
use pwa_cbf_cli::{fixtures, ProblemSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    id: usize,
    pass: bool,
    detail: String,
}

fn report(id: usize, pass: bool, detail: impl Into<String>) -> Verdict {
    let v = Verdict { id, pass, detail: detail.into() };
    println!("criterion {}: {} - {}", v.id, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn affine(p: &Piece<f64>, x: &[f64]) -> f64 {
    dot(&p.c, x) - p.d
}

/// Minimum of `cᵀx − d` over an axis-aligned box, in closed form.
fn box_min(p: &Piece<f64>, bounds: &[(f64, f64)]) -> f64 {
    p.c.iter().zip(bounds).map(|(&c, &(lo, hi))| (c * lo).min(c * hi)).sum::<f64>() - p.d
}

fn barrier_value(b: &PiecewiseAffineBarrier, x: &[f64]) -> f64 {
    let vals = b.pieces.iter().map(|p| affine(p, x));
    match b.kind {
        BarrierKind::Max => vals.fold(f64::NEG_INFINITY, f64::max),
        BarrierKind::Min => vals.fold(f64::INFINITY, f64::min),
    }
}

fn flow(sys: &SwitchedAffineSystem, l: usize, x: &[f64]) -> Vec<f64> {
    let m = &sys.modes()[l];
    (0..x.len()).map(|r| dot(m.a.row(r), x) + m.b[r]).collect()
}

/// Direct decrease-condition check: true iff `B(x) ≤ tol` and every mode
/// has an active piece `i` with `c_iᵀf + λφ_i ≥ −tol`.
fn decrease_violated(b: &PiecewiseAffineBarrier, sys: &SwitchedAffineSystem, x: &[f64], active_tol: f64, tol: f64) -> bool {
    let phi = barrier_value(b, x);
    if phi > tol {
        return false;
    }
    (0..sys.num_modes()).all(|l| {
        let f = flow(sys, l, x);
        b.pieces.iter().any(|p| {
            let v = affine(p, x);
            (v - phi).abs() <= active_tol && dot(&p.c, &f) + b.lambda * v >= -tol
        })
    })
}

fn unsafe_box(p: &ProblemSpec) -> Vec<(f64, f64)> {
    p.xu.bounding_box().unwrap().unwrap()
}

/// Published coefficients satisfy the initial and unsafe conditions.
fn criterion_1() -> Verdict {
    let start = Instant::now();
    let tol = 1e-3;
    let (mut total, mut passed) = (0, 0);
    let mut failures = Vec::new();
    for ex in ["ex5", "ex6"] {
        let problem = fixtures::problem(ex).unwrap();
        let bounds = unsafe_box(&problem);
        for kind in [BarrierKind::Max, BarrierKind::Min] {
            let table = fixtures::table(ex, kind).unwrap();
            for row in &table.rows {
                let b = row.barrier(kind, 0.0).unwrap();
                let at_point = barrier_value(&b, &row.point);
                let checked: &[Piece<f64>] = match kind {
                    BarrierKind::Max => &b.pieces[..1],
                    BarrierKind::Min => &b.pieces,
                };
                let unsafe_min = checked.iter().map(|p| box_min(p, &bounds)).fold(f64::INFINITY, f64::min);
                // the LP-based checks agree with the closed form
                let x0 = Polyhedron::point(&row.point).unwrap();
                let c2 = check_c2p(&b, &problem.xu, 0.0).unwrap().margin.unwrap();
                assert!((c2 - unsafe_min).abs() < 1e-9, "{ex} {kind:?} {:?}: LP {c2} vs {unsafe_min}", row.point);
                if kind == BarrierKind::Max {
                    let c1 = check_c1(&b, &x0, 0.0).unwrap().margin.unwrap();
                    assert!((c1 + at_point).abs() < 1e-9);
                }
                total += 1;
                if at_point <= -tol && unsafe_min >= -tol {
                    passed += 1;
                } else {
                    failures.push(format!("{ex} {kind:?} {:?}: B(x_t) = {at_point:.5}, min over Xu = {unsafe_min:.5}", row.point));
                }
            }
        }
    }
    // hand-computed spot values
    let row = |ex: &str, kind| fixtures::table(ex, kind).unwrap().rows[0].barrier(kind, 0.0).unwrap();
    let ex5 = fixtures::problem("ex5").unwrap();
    let bx = unsafe_box(&ex5);
    let max_row = row("ex5", BarrierKind::Max);
    let min_row = row("ex5", BarrierKind::Min);
    let spots = [
        (barrier_value(&max_row, &[1.0, 0.0]), -2.35161),
        (box_min(&max_row.pieces[0], &bx), 2.17053),
        (box_min(&min_row.pieces[0], &bx), 1.77057),
        (box_min(&min_row.pieces[1], &bx), 4.24267),
    ];
    let spots_ok = spots.iter().all(|(got, want)| (got - want).abs() < 1e-5);
    let secs = start.elapsed().as_secs_f64();
    for f in &failures {
        println!("    {f}");
    }
    report(
        1,
        passed as f64 >= 0.95 * total as f64 && spots_ok && secs < 5.0,
        format!("{passed}/{total} rows pass, spot values {}, {secs:.2}s", if spots_ok { "match" } else { "DIFFER" }),
    )
}

/// C3 under a λ grid for every published row.
fn criterion_2() -> Verdict {
    let lambdas = [0.0, 0.1, 0.5, 1.0];
    let mut slowest: f64 = 0.0;
    let mut lines = Vec::new();
    let mut rows = 0;
    for ex in fixtures::EXAMPLES {
        let problem = fixtures::problem(ex).unwrap();
        for kind in [BarrierKind::Max, BarrierKind::Min] {
            let Some(table) = fixtures::table(ex, kind) else { continue };
            for row in &table.rows {
                let start = Instant::now();
                let mut ok = Vec::new();
                for &lambda in &lambdas {
                    let b = row.barrier(kind, lambda).unwrap();
                    let opts = C3Options::default();
                    let (bound, _) = big_m_bound(&b, &problem.system, opts.bound_cap);
                    let res = find_c3_counterexample(&b, &problem.system, bound, &opts).unwrap();
                    assert!(!res.used_milp, "assignment count within the enumeration cap");
                    if res.witness.is_none() {
                        ok.push(lambda);
                    }
                }
                let secs = start.elapsed().as_secs_f64();
                slowest = slowest.max(secs);
                rows += 1;
                lines.push(format!("{ex} {kind:?} {:?}: C3 verifies for λ ∈ {ok:?} ({secs:.2}s)", row.point));
            }
        }
    }
    for l in &lines {
        println!("    {l}");
    }
    report(2, slowest < 60.0, format!("{rows} rows checked, slowest row {slowest:.2}s"))
}

struct SynthRun {
    name: String,
    found: usize,
    total: usize,
    secs: f64,
    members: Vec<PiecewiseAffineBarrier>,
    points: Vec<Vec<f64>>,
    stats: Vec<SynthStats>,
}

fn run_kind(problem: &ProblemSpec, kind: BarrierKind) -> SynthRun {
    let (row, rep): (_, FamilyReport<f64>) = bench(problem, kind).unwrap();
    let stats = rep
        .statuses
        .iter()
        .filter_map(|s| match kind {
            BarrierKind::Max => s.max.clone(),
            BarrierKind::Min => s.min.clone(),
        })
        .filter_map(|a| match a {
            Attempt::Found { stats, .. } | Attempt::Failed { stats } => Some(stats),
            Attempt::InvalidTestPoint => None,
        })
        .collect();
    SynthRun {
        name: problem.name.clone(),
        found: row.found,
        total: row.total,
        secs: row.wall_secs,
        members: rep.family.members.clone(),
        points: rep.family.provenance.iter().map(|p| p.point.clone()).collect(),
        stats,
    }
}

/// Every synthesized barrier passes an independent re-verification.
fn reverified(problem: &ProblemSpec, run: &SynthRun) -> usize {
    run.members
        .iter()
        .zip(&run.points)
        .filter(|(b, p)| {
            let x0 = Polyhedron::point(p).unwrap();
            let opts = VerifyOptions {
                epsilon: problem.params.epsilon,
                ..VerifyOptions::default()
            };
            verify_full(b, &problem.system, &x0, &problem.xu, &opts).unwrap().is_verified()
        })
        .count()
}

fn synthesis_criterion(id: usize, example: &str, need: [usize; 2], budget: Duration, runs: &mut Vec<SynthRun>) -> Verdict {
    let problem = fixtures::problem(example).unwrap();
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for (kind, need) in [BarrierKind::Max, BarrierKind::Min].into_iter().zip(need) {
        let run = run_kind(&problem, kind);
        let ok = reverified(&problem, &run);
        pass &= ok == run.found && run.found >= need;
        parts.push(format!("{kind:?} {}/{} (need {need}, re-verified {ok}, {:.1}s)", run.found, run.total, run.secs));
        runs.push(run);
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs <= budget.as_secs_f64();
    report(id, pass, format!("{example}: {}; total {secs:.1}s", parts.join(", ")))
}

/// Random starts with `B ≤ −0.05` near the barrier's test point.
fn starts(b: &PiecewiseAffineBarrier, center: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut radius = 2.0;
    while out.len() < count {
        for _ in 0..2000 {
            let x: Vec<f64> = center.iter().map(|c| c + rng.gen_range(-radius..radius)).collect();
            if barrier_value(b, &x) <= -0.05 {
                out.push(x);
                if out.len() == count {
                    break;
                }
            }
        }
        radius *= 2.0;
        assert!(radius < 1e4, "no start with B ≤ −0.05 found");
    }
    out
}

fn criterion_5(runs: &[SynthRun]) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut sims, mut unsafe_hits, mut flags, mut aborted) = (0, 0, 0, 0);
    for run in runs {
        let problem = fixtures::problem(&run.name).unwrap();
        for (b, point) in run.members.iter().zip(&run.points) {
            let x0s = starts(b, point, 20, &mut rng);
            let trajs = simulate_batch(&problem.system, Controller::Barrier(b), &x0s, 1e-3, 10.0).unwrap();
            for t in &trajs {
                let m = safety_monitor(t, Controller::Barrier(b), &problem.xu, MonitorTolerance::default()).unwrap();
                sims += 1;
                unsafe_hits += m.unsafe_entries.len();
                flags += m.bound_flags.len();
                aborted += t.aborted.is_some() as usize;
            }
        }
    }
    report(
        5,
        unsafe_hits == 0 && flags == 0 && aborted == 0,
        format!("{sims} trajectories: {unsafe_hits} unsafe samples, {flags} monitor flags, {aborted} aborted"),
    )
}

fn random_instance(rng: &mut ChaCha8Rng) -> (PiecewiseAffineBarrier, SwitchedAffineSystem) {
    let modes = rng.gen_range(1..=3);
    let k = rng.gen_range(1..=2);
    let mut u = || rng.gen_range(-3.0..3.0f64);
    let pairs: Vec<_> = (0..modes)
        .map(|_| (vec![vec![u(), u()], vec![u(), u()]], vec![u(), u()]))
        .collect();
    let pieces = (0..k).map(|_| Piece::new(vec![u(), u()], u())).collect();
    let kind = if u() < 0.0 { BarrierKind::Max } else { BarrierKind::Min };
    let lambda = if u() < 0.0 { 0.0 } else { 0.5 };
    (
        PiecewiseAffineBarrier::new(kind, lambda, pieces).unwrap(),
        SwitchedAffineSystem::from_pairs(&pairs).unwrap(),
    )
}

/// Exhaustive grid against the decrease-condition verifier.
fn criterion_6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut missed, mut bad_witness, mut verified, mut refuted) = (0, 0, 0, 0);
    let steps = 200;
    for _ in 0..50 {
        let (b, sys) = random_instance(&mut rng);
        let opts = C3Options::default();
        let (bound, _) = big_m_bound(&b, &sys, opts.bound_cap);
        let res = find_c3_counterexample(&b, &sys, bound, &opts).unwrap();
        let mut grid_violation = false;
        'grid: for i in 0..=steps {
            for j in 0..=steps {
                let x = [-5.0 + 0.05 * i as f64, -5.0 + 0.05 * j as f64];
                if decrease_violated(&b, &sys, &x, 1e-9, 1e-9) {
                    grid_violation = true;
                    break 'grid;
                }
            }
        }
        match &res.witness {
            None => {
                verified += 1;
                missed += grid_violation as usize;
            }
            Some(w) => {
                refuted += 1;
                let scale = 1.0 + w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if !decrease_violated(&b, &sys, w, 1e-7 * scale, 1e-5 * scale) {
                    bad_witness += 1;
                }
            }
        }
    }
    report(
        6,
        missed == 0 && bad_witness == 0,
        format!("50 instances ({verified} verified, {refuted} refuted): {missed} missed grid violations, {bad_witness} witnesses failing re-evaluation"),
    )
}

fn criterion_7(runs: &[SynthRun]) -> Verdict {
    let refinements: usize = runs.iter().flat_map(|r| &r.stats).map(|s| s.refinements).sum();
    let exceptions: usize = runs.iter().flat_map(|r| &r.stats).map(|s| s.exclusion_exceptions).sum();
    report(7, exceptions == 0, format!("{refinements} refinements, {exceptions} children admitting their parent's candidate"))
}

/// Merit nonnegativity, decrease equivalence and a continuity probe.
fn criterion_8() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut negative, mut mismatched, mut jumps) = (0, 0, 0);
    let active_tol = 1e-7;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=3);
        let m = rng.gen_range(1..=3);
        let k = rng.gen_range(1..=3);
        let mut u = || rng.gen_range(-1.0..1.0);
        let pairs: Vec<_> = (0..m)
            .map(|_| ((0..n).map(|_| (0..n).map(|_| u()).collect()).collect(), (0..n).map(|_| u()).collect()))
            .collect();
        let sys = SwitchedAffineSystem::from_pairs(&pairs).unwrap();
        let pieces = (0..k).map(|_| Piece::new((0..n).map(|_| u()).collect(), u())).collect();
        let kind = if u() < 0.0 { BarrierKind::Max } else { BarrierKind::Min };
        let lambda = (u() + 1.0) / 2.0;
        let b = PiecewiseAffineBarrier::new(kind, lambda, pieces).unwrap();
        let x: Vec<f64> = (0..n).map(|_| 5.0 * u()).collect();
        let dir: Vec<f64> = (0..n).map(|_| u()).collect();
        let norm = dot(&dir, &dir).sqrt();
        let delta = 1e-6;
        let y: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + delta * d / norm).collect();
        let xnorm = dot(&x, &x).sqrt();
        let merits = b.merit(&sys, &x).unwrap().values;
        let shifted = b.merit(&sys, &y).unwrap().values;
        let phi = barrier_value(&b, &x);
        for l in 0..m {
            let mx = merits[l];
            if !(mx >= 0.0) {
                negative += 1;
            }
            let f = flow(&sys, l, &x);
            let decreases = b
                .pieces
                .iter()
                .filter(|p| (affine(p, &x) - phi).abs() <= active_tol)
                .all(|p| dot(&p.c, &f) + lambda * affine(p, &x) < 0.0);
            if (mx > 0.0) != decreases {
                mismatched += 1;
            }
            if (shifted[l] - mx).abs() > 10.0 * delta * (1.0 + xnorm) {
                jumps += 1;
            }
        }
    }
    report(
        8,
        negative == 0 && mismatched == 0 && jumps == 0,
        format!("1000 samples: {negative} negative merits, {mismatched} decrease mismatches, {jumps} continuity violations"),
    )
}

fn criterion_9() -> Verdict {
    let ex7 = fixtures::problem("ex7").unwrap();
    let start = Instant::now();
    let run = run_kind(&ex7, BarrierKind::Max);
    let ok7 = reverified(&ex7, &run);
    let secs7 = start.elapsed().as_secs_f64();
    let pass7 = run.found >= 3 && ok7 == run.found && secs7 <= 900.0;

    let ex8 = fixtures::problem("ex8").unwrap();
    // the full 30-minute allowance is not needed to reach a verdict
    let cfg = SynthConfig {
        time_limit: Some(Duration::from_secs(600)),
        ..ex8.config(BarrierKind::Max)
    };
    let start = Instant::now();
    let point = ex8.test_points[0].clone();
    let single = ex8.with_initial_point(&point).unwrap();
    let out = pwa_cbf_cli::commands::synth(&single, &cfg).unwrap();
    let secs8 = start.elapsed().as_secs_f64();
    let s = &out.stats;
    println!(
        "    ex8 {point:?}: {} after {} nodes (depth {}, cex {:?}, reason {:?})",
        if out.is_success() { "barrier found" } else { "FAIL" },
        s.nodes_explored,
        s.max_depth,
        s.counterexamples,
        s.fail_reason
    );
    let pass8 = secs8 <= 1800.0 && (out.is_success() || s.fail_reason.is_some());
    report(
        9,
        pass7 && pass8,
        format!(
            "ex7 max {}/{} ({secs7:.1}s); ex8 first point {} in {secs8:.1}s",
            run.found,
            run.total,
            if out.is_success() { "succeeded" } else { "failed" }
        ),
    )
}

#[test]
fn acceptance() {
    let mut runs = Vec::new();
    let verdicts = vec![
        criterion_1(),
        criterion_2(),
        synthesis_criterion(3, "ex5", [8, 8], Duration::from_secs(600), &mut runs),
        synthesis_criterion(4, "ex6", [12, 10], Duration::from_secs(600), &mut runs),
    ];
    let mut verdicts = verdicts;
    verdicts.push(criterion_5(&runs));
    verdicts.push(criterion_6());
    verdicts.push(criterion_7(&runs));
    verdicts.push(criterion_8());
    verdicts.push(criterion_9());
    let failed: Vec<String> = verdicts.iter().filter(|v| !v.pass).map(|v| format!("{}: {}", v.id, v.detail)).collect();
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
