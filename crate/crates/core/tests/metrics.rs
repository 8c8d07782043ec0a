mod common;

use common::*;
use irs_planner::metrics::{
    check_plan, communication_snr, coverage, db_to_linear, dbm_to_watts, illumination_power, linear_to_db,
    optimal_covariance, random_covariance, required_power, system_cost, watts_to_dbm, Case, CostWeights,
    DeploymentPlan, MetricsError, Phases,
};
use irs_planner::channel::{CMatrix, Target};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn plan_at_required_power(seed: u64) -> (irs_planner::channel::ChannelSet, DeploymentPlan) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ch = random_channels(&mut rng, 3, 2, 2, 3, 3, 0.3);
    let req = loose_requirements();
    let beta = vec![true, false, true];
    let phases = Phases::Shared(unit_phases(&mut rng, 6));
    let p0 = required_power(&[1.0, 0.0, 1.0], &phases, &ch, &req).unwrap();
    let cost = system_cost(&beta, p0, &CostWeights::default());
    (ch, DeploymentPlan { beta, phases, p0, cost, case: Case::I })
}

#[test]
fn required_power_plan_meets_every_threshold() {
    let req = loose_requirements();
    for seed in 0..5 {
        let (ch, plan) = plan_at_required_power(seed);
        check_plan(&plan, &ch, &req, &CostWeights::default()).unwrap();
        let cov = coverage(&plan, &ch, &req);
        let slack: Vec<f64> = cov
            .illumination
            .iter()
            .map(|r| r / req.p_s)
            .chain(cov.snr.iter().map(|g| g / req.gamma_c))
            .collect();
        let min = slack.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((min - 1.0).abs() < 1e-12, "binding point should sit exactly on its threshold");
    }
}

#[test]
fn check_plan_lists_each_violation() {
    let req = loose_requirements();
    let w = CostWeights::default();
    let (ch, plan) = plan_at_required_power(1);

    let mut short = plan.clone();
    short.beta.pop();
    assert_eq!(check_plan(&short, &ch, &req, &w).unwrap_err().len(), 1);

    let mut starved = plan.clone();
    starved.p0 *= 0.5;
    starved.cost = system_cost(&starved.beta, starved.p0, &w);
    let errs = check_plan(&starved, &ch, &req, &w).unwrap_err();
    assert!(errs.iter().all(|e| e.starts_with("SP") || e.starts_with("CP")));

    let mut bent = plan.clone();
    if let Phases::Shared(v) = &mut bent.phases {
        v[0] *= Complex64::from(0.5);
    }
    assert!(check_plan(&bent, &ch, &req, &w).unwrap_err().iter().any(|e| e.contains("unit modulus")));

    let mut mispriced = plan.clone();
    mispriced.cost += 1.0;
    assert!(check_plan(&mispriced, &ch, &req, &w).unwrap_err().iter().any(|e| e.contains("recomputed")));

    let mut over = plan;
    over.p0 = req.p0_max * 2.0;
    over.cost = system_cost(&over.beta, over.p0, &w);
    assert!(check_plan(&over, &ch, &req, &w).unwrap_err().iter().any(|e| e.contains("outside")));
}

#[test]
fn unreachable_targets_are_named() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ch = random_channels(&mut rng, 2, 2, 2, 2, 1, 0.0);
    let phases = Phases::Shared(unit_phases(&mut rng, 4));
    let err = required_power(&[0.0, 0.0], &phases, &ch, &loose_requirements()).unwrap_err();
    assert_eq!(err, MetricsError::Infeasible(vec![Target::Sp(0), Target::Sp(1), Target::Cp(0)]));
}

#[test]
fn non_psd_covariance_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ch = random_channels(&mut rng, 1, 2, 2, 1, 1, 0.3);
    let v = unit_phases(&mut rng, 2);
    let r = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)]));
    assert!(matches!(illumination_power(&[1.0], &v, &r, &ch, 0), Err(MetricsError::NotPsd(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn unit_conversions_invert(x in -120.0f64..60.0) {
        prop_assert!((watts_to_dbm(dbm_to_watts(x)) - x).abs() < 1e-9);
        prop_assert!((linear_to_db(db_to_linear(x)) - x).abs() < 1e-9);
    }

    #[test]
    fn aligned_covariance_beats_random_ones(seed in any::<u64>(), p0 in 0.01f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = random_channels(&mut rng, 2, 3, 3, 1, 1, 0.4);
        let v = unit_phases(&mut rng, 6);
        let beta = [1.0, 0.6];
        let (r, best) = optimal_covariance(&beta, &v, &ch, p0, Target::Sp(0), 1.0).unwrap();
        prop_assert!((r.trace().re - p0).abs() < 1e-12 * p0.max(1.0));
        prop_assert!((illumination_power(&beta, &v, &r, &ch, 0).unwrap() - best).abs() <= 1e-9 * best);
        let (rc, snr) = optimal_covariance(&beta, &v, &ch, p0, Target::Cp(0), 0.2).unwrap();
        for _ in 0..50 {
            let rand_r = random_covariance(&mut rng, 3, p0);
            prop_assert!(illumination_power(&beta, &v, &rand_r, &ch, 0).unwrap() <= best * (1.0 + 1e-12));
            prop_assert!(communication_snr(&beta, &v, &rand_r, &ch, 0, 0.2).unwrap() <= snr * (1.0 + 1e-12));
        }
        let _ = rc;
    }
}
