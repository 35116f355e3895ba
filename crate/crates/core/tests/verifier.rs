use pwa_cbf::verifier::{big_m_bound, find_c3_counterexample, violates_at, C3Options, Condition};
use pwa_cbf::{BarrierKind, Piece, PiecewiseAffineBarrier, SwitchedAffineSystem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_instance(rng: &mut ChaCha8Rng) -> (PiecewiseAffineBarrier, SwitchedAffineSystem) {
    let n = rng.gen_range(1..=3);
    let m = rng.gen_range(1..=3);
    let k = rng.gen_range(1..=3);
    let mut u = || rng.gen_range(-3.0..3.0f64);
    let pairs: Vec<_> = (0..m)
        .map(|_| ((0..n).map(|_| (0..n).map(|_| u()).collect()).collect(), (0..n).map(|_| u()).collect()))
        .collect();
    let pieces = (0..k).map(|_| Piece::new((0..n).map(|_| u()).collect(), u())).collect();
    let kind = if u() < 0.0 { BarrierKind::Max } else { BarrierKind::Min };
    let lambda = if u() < 0.0 { 0.0 } else { 0.5 };
    (
        PiecewiseAffineBarrier::new(kind, lambda, pieces).unwrap(),
        SwitchedAffineSystem::from_pairs(&pairs).unwrap(),
    )
}

#[test]
fn enumeration_and_big_m_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let enumerate = C3Options::default();
    let milp = C3Options { enum_cap: 0.0, ..enumerate };
    let mut refuted = 0;
    for case in 0..50 {
        let (b, sys) = random_instance(&mut rng);
        let (bound, _) = big_m_bound(&b, &sys, enumerate.bound_cap);
        let e = find_c3_counterexample(&b, &sys, bound, &enumerate).unwrap();
        let g = find_c3_counterexample(&b, &sys, bound, &milp).unwrap();
        assert!(!e.used_milp && g.used_milp);
        assert_eq!(e.witness.is_some(), g.witness.is_some(), "case {case}: {b:?}");
        for w in [&e.witness, &g.witness].into_iter().flatten() {
            assert!(violates_at(&b, &sys, Condition::C3, w, 0.0, 1e-5).unwrap(), "case {case}");
        }
        refuted += e.witness.is_some() as usize;
    }
    assert!(refuted > 0 && refuted < 50, "instances should mix outcomes, got {refuted} refuted");
}

#[test]
fn magnitude_bound_is_sound() {
    // a counterexample anywhere implies one within the bound
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let opts = C3Options::default();
    for case in 0..50 {
        let (b, sys) = random_instance(&mut rng);
        let (bound, clamped) = big_m_bound(&b, &sys, opts.bound_cap);
        assert!(!clamped);
        let near = find_c3_counterexample(&b, &sys, bound, &opts).unwrap();
        let far = find_c3_counterexample(&b, &sys, 1e6_f64.max(10.0 * bound), &opts).unwrap();
        assert_eq!(near.witness.is_some(), far.witness.is_some(), "case {case}: bound {bound}");
        if let Some(w) = &near.witness {
            assert!(w.iter().all(|v| v.abs() <= bound * (1.0 + 1e-9)));
        }
    }
}
