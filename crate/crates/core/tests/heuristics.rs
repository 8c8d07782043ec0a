mod common;

use common::*;
use irs_planner::heuristics::{
    cbd_plan, cbd_weights, enumerate_patterns, random_phases, rrb_plan, HeuristicError, RrbOptions, MAX_RRB_SITES,
};
use irs_planner::channel::{CVector, ChannelSet};
use irs_planner::metrics::{check_plan, system_cost, Case, CostWeights, Requirements};
use irs_planner::rounding::RoundingOptions;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Plain loop over every mask, evaluated target by target.
fn reference_enumeration(ch: &ChannelSet, req: &Requirements, w: &CostWeights, v: &CVector) -> Option<(u64, f64)> {
    let k = ch.num_sites();
    let mut best: Option<(u64, f64)> = None;
    for mask in 0u64..(1 << k) {
        let beta: Vec<f64> = (0..k).map(|s| f64::from((mask >> s & 1) as u8)).collect();
        let mut p0: f64 = 0.0;
        let mut ok = true;
        for t in ch.targets() {
            let g = ch.effective(&beta, v, t).norm_squared();
            if g == 0.0 {
                ok = false;
                break;
            }
            p0 = p0.max(req.threshold(t) / g);
        }
        if !ok || p0 > req.p0_max * (1.0 + 1e-9) {
            continue;
        }
        let bits: Vec<bool> = beta.iter().map(|b| *b == 1.0).collect();
        let cost = system_cost(&bits, p0.min(req.p0_max), w);
        if best.map_or(true, |(_, c)| cost < c) {
            best = Some((mask, cost));
        }
    }
    best
}

#[test]
fn cbd_weights_are_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let ch = random_channels(&mut rng, 4, 2, 2, 3, 3, 0.3);
    let w = cbd_weights(&ch, &loose_requirements()).unwrap();
    let max = w.beta_cbd.iter().copied().fold(0.0, f64::max);
    assert_eq!(max, 1.0);
    assert!(w.beta_cbd.iter().all(|b| (0.0..=1.0).contains(b)));
    for (e, b) in w.eta.iter().zip(&w.beta_cbd) {
        assert!((e / w.eta.iter().copied().fold(0.0, f64::max) - b).abs() < 1e-15);
    }
}

#[test]
fn cbd_without_site_links_has_no_coverage() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ch = random_channels(&mut rng, 2, 2, 2, 1, 1, 0.3).map_site_links(|c| c * num_complex::Complex64::from(0.0)).unwrap();
    assert!(matches!(cbd_weights(&ch, &loose_requirements()), Err(HeuristicError::NoCoverage)));
}

#[test]
fn cbd_and_rrb_plans_pass_the_recheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ch = random_channels(&mut rng, 3, 2, 2, 2, 2, 0.3);
    let req = loose_requirements();
    let w = CostWeights::default();
    for case in [Case::I, Case::II] {
        let plan = cbd_plan(&ch, &req, &w, case, &RoundingOptions { n_gr: 50, ..Default::default() }).unwrap();
        check_plan(&plan, &ch, &req, &w).unwrap();
        assert_eq!(plan.case, case);
    }
    let plan = rrb_plan(&ch, &req, &w, &RrbOptions { seed: 7, draws: 3 }).unwrap();
    check_plan(&plan, &ch, &req, &w).unwrap();
    let single = rrb_plan(&ch, &req, &w, &RrbOptions { seed: 7, draws: 1 }).unwrap();
    assert!(plan.cost <= single.cost);
}

#[test]
fn rrb_reports_infeasibility() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ch = random_channels(&mut rng, 3, 2, 2, 2, 2, 0.3);
    let mut req = loose_requirements();
    req.p0_max = 1e-9;
    assert!(matches!(rrb_plan(&ch, &req, &CostWeights::default(), &RrbOptions::default()), Err(HeuristicError::Infeasible)));
}

#[test]
fn rrb_refuses_large_candidate_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ch = random_channels(&mut rng, MAX_RRB_SITES + 1, 1, 1, 1, 1, 0.3);
    let v = random_phases(MAX_RRB_SITES + 1, 0);
    let err = enumerate_patterns(&ch, &loose_requirements(), &CostWeights::default(), &v).unwrap_err();
    assert!(matches!(err, HeuristicError::TooManySites(21)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn enumeration_matches_reference(seed in any::<u64>(), w2 in 0.0f64..20.0, budget in 0.01f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = random_channels(&mut rng, 4, 2, 2, 2, 2, 0.2);
        let req = Requirements::new(0.5, 1.0, 0.5, budget).unwrap();
        let w = CostWeights { w1: 1.0, w2 };
        let v = random_phases(8, seed);
        let fast = enumerate_patterns(&ch, &req, &w, &v).unwrap().map(|(m, _, c)| (m, c));
        let slow = reference_enumeration(&ch, &req, &w, &v);
        match (fast, slow) {
            (None, None) => {}
            (Some((m1, c1)), Some((m2, c2))) => {
                prop_assert_eq!(m1, m2);
                prop_assert!((c1 - c2).abs() <= 1e-12 * c2.max(1.0));
            }
            other => prop_assert!(false, "mismatch {:?}", other),
        }
    }
}
