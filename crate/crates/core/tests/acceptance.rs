//! Acceptance suite: runs every criterion at its pinned tolerance and prints
//! one PASS/FAIL line per criterion. Exits non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use common::*;
use irs_planner::channel::{CVector, ChannelSet, Target};
use irs_planner::ckm::{trace_paths, PathKind};
use irs_planner::demo::seeded_desk_scene;
use irs_planner::heuristics::{enumerate_patterns, random_phases, rrb_plan, HeuristicError, RrbOptions};
use irs_planner::metrics::{
    check_plan, coverage, illumination_power, communication_snr, optimal_covariance, random_covariance, system_cost,
    Case, CostWeights, DeploymentPlan, Requirements,
};
use irs_planner::planner::{empty_plan, prepare, run_prepared, sweep, Algorithm, Prepared, RequirementsDb, RunConfig, SweepAxis};
use irs_planner::rounding::{gaussian_candidates, greedy_round, solve_reflective_subproblem, RoundingOptions};
use irs_planner::demo::DESK_REQUIREMENTS;
use irs_planner::sca::{eval_f, solve_relaxed, stack, unstack, ScaOptions};
use irs_planner::scene::{Obstacle, Vec3};
use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DESK_SEEDS: u64 = 10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn desk_db() -> RequirementsDb {
    let r = DESK_REQUIREMENTS;
    RequirementsDb { ps_dbm: r.ps_dbm, gc_db: r.gc_db, sigma2_dbm: r.sigma2_dbm, p0_max_dbm: r.p0_max_dbm }
}

/// One optimized plan (or infeasibility) on a seeded desk scene.
struct DeskRun {
    plan: Option<DeploymentPlan>,
    objectives: Vec<f64>,
    stop: Option<String>,
    optimize: Duration,
}

impl DeskRun {
    fn cost(&self) -> f64 {
        self.plan.as_ref().map_or(f64::INFINITY, |p| p.cost)
    }
}

struct DeskSeed {
    prep: Prepared,
    sca1: DeskRun,
    sca2: DeskRun,
    cbd1: DeskRun,
    cbd2: DeskRun,
    rrb: DeskRun,
}

fn desk_runs(dir: &std::path::Path) -> Vec<DeskSeed> {
    (0..DESK_SEEDS)
        .map(|seed| {
            let path = dir.join(format!("desk{seed}.json"));
            std::fs::write(&path, seeded_desk_scene(seed).to_json()).unwrap();
            let cfg = |algo, case| RunConfig::new(&path, algo, case, desk_db(), CostWeights::default(), seed).unwrap();
            let prep = prepare(&cfg(Algorithm::Sca, Case::I)).unwrap();
            let run = |algo, case| {
                let report = run_prepared(&cfg(algo, case), &prep).unwrap();
                let optimize = report.timings.iter().find(|t| t.stage == "optimize").map_or(0.0, |t| t.seconds);
                DeskRun {
                    plan: report.plan.filter(|_| report.feasible),
                    objectives: report.trace.iter().map(|e| e.objective).collect(),
                    stop: report.sca_stop,
                    optimize: Duration::from_secs_f64(optimize),
                }
            };
            let out = DeskSeed {
                sca1: run(Algorithm::Sca, Case::I),
                sca2: run(Algorithm::Sca, Case::II),
                cbd1: run(Algorithm::Cbd, Case::I),
                cbd2: run(Algorithm::Cbd, Case::II),
                rrb: run(Algorithm::Rrb, Case::I),
                prep,
            };
            eprintln!(
                "  desk seed {seed}: sca I {:.4} ({} it, {:?}, {:.1}s) | sca II {:.4} | cbd I {:.4} | cbd II {:.4} | rrb {:.4}",
                out.sca1.cost(),
                out.sca1.objectives.len().saturating_sub(1),
                out.sca1.stop.as_deref().unwrap_or("-"),
                out.sca1.optimize.as_secs_f64(),
                out.sca2.cost(),
                out.cbd1.cost(),
                out.cbd2.cost(),
                out.rrb.cost()
            );
            out
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut violations = 0;
    for _ in 0..50 {
        let (k, m, nt) = (rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(1..5));
        let ch = random_channels(&mut rng, k, m, nt, 1, 1, 0.5);
        let v = unit_phases(&mut rng, k * m);
        let beta: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let p0 = rng.gen_range(0.01..10.0);
        let sigma2 = 0.1;
        let (_, rho) = optimal_covariance(&beta, &v, &ch, p0, Target::Sp(0), sigma2).unwrap();
        let (_, snr) = optimal_covariance(&beta, &v, &ch, p0, Target::Cp(0), sigma2).unwrap();
        for _ in 0..1000 {
            let r = random_covariance(&mut rng, nt, p0);
            if illumination_power(&beta, &v, &r, &ch, 0).unwrap() > rho * (1.0 + 1e-12) {
                violations += 1;
            }
            if communication_snr(&beta, &v, &r, &ch, 0, sigma2).unwrap() > snr * (1.0 + 1e-12) {
                violations += 1;
            }
        }
    }
    let t = start.elapsed();
    outcome(
        violations == 0 && t < Duration::from_secs(10),
        format!("50 instances x 1000 random covariances, {violations} violations, {:.2}s", t.as_secs_f64()),
    )
}

fn feasible_point(rng: &mut impl Rng, k: usize, m: usize) -> DVector<f64> {
    let v = CVector::from_fn(k * m, |_, _| Complex64::from_polar(rng.gen_range(0.0..=1.0f64).sqrt(), rng.gen_range(-3.2..3.2)));
    let beta: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..=1.0)).collect();
    stack(&v, &beta)
}

fn f_at(ch: &ChannelSet, x: &DVector<f64>, t: Target) -> f64 {
    let (v, beta) = unstack(x, ch.num_sites() * ch.elements());
    eval_f(ch, &beta, &v, t).0
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut tangency, mut grad_err) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let ch = random_channels(&mut rng, 3, 2, 2, 1, 1, 0.4);
        let x = feasible_point(&mut rng, 3, 2);
        let (v, beta) = unstack(&x, 6);
        for t in ch.targets() {
            let (f0, g) = eval_f(&ch, &beta, &v, t);
            let s = irs_planner::sca::Surrogate { x0: x.clone(), f0, grad: g.clone(), mu: 1.0 };
            tangency = tangency.max((s.eval(&x) - f_at(&ch, &x, t)).abs());
            let h = 1e-6;
            let fd = DVector::from_fn(x.len(), |i, _| {
                let (mut a, mut b) = (x.clone(), x.clone());
                a[i] += h;
                b[i] -= h;
                (f_at(&ch, &a, t) - f_at(&ch, &b, t)) / (2.0 * h)
            });
            grad_err = grad_err.max((&fd - &g).norm() / g.norm().max(1e-300));
        }
    }

    // majorization of every accepted iterate's surrogates at random feasible points
    let (mut checks, mut bad, mut iterates) = (0usize, 0usize, 0usize);
    let req = loose_requirements();
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let ch = random_channels(&mut rng, 3, 2, 2, 2, 2, 0.3);
        let case = if seed % 2 == 0 { Case::I } else { Case::II };
        let opts = ScaOptions { max_iters: 20, keep_surrogates: true, ..Default::default() };
        let sol = solve_relaxed(&ch, &req, &CostWeights { w1: 1.0, w2: 3.0 }, case, &opts).unwrap();
        for surrogates in &sol.surrogates {
            iterates += 1;
            for _ in 0..100 {
                let x = feasible_point(&mut rng, 3, 2);
                for (t, s) in surrogates {
                    let f = f_at(&ch, &x, *t);
                    checks += 1;
                    if f > s.eval(&x) + 1e-9 * f.abs() {
                        bad += 1;
                    }
                }
            }
        }
    }
    outcome(
        tangency < 1e-10 && grad_err < 1e-5 && bad == 0 && iterates > 0,
        format!(
            "tangency {tangency:.1e}, gradient rel. error {grad_err:.1e}, majorization {bad}/{checks} violations over {iterates} iterates"
        ),
    )
}

fn criterion_3(runs: &[DeskSeed]) -> Outcome {
    let mut monotone = true;
    let mut converged = 0;
    let mut slowest = Duration::ZERO;
    let mut max_iters = 0;
    for r in runs {
        let o = &r.sca1.objectives;
        monotone &= o.windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0));
        converged += usize::from(r.sca1.stop.as_deref() == Some("Converged"));
        max_iters = max_iters.max(o.len().saturating_sub(1));
        slowest = slowest.max(r.sca1.optimize);
    }
    let n = runs.len();
    outcome(
        monotone && converged == n && max_iters <= 100 && slowest < Duration::from_secs(60),
        format!(
            "non-increasing: {monotone}; converged {converged}/{n} within 100 iterations (max {max_iters}); slowest run {:.1}s",
            slowest.as_secs_f64()
        ),
    )
}

fn criterion_4(runs: &[DeskSeed], extra: &[(ChannelSet, Requirements, CostWeights, DeploymentPlan)]) -> Outcome {
    let mut plans = 0;
    let mut violations = Vec::new();
    let req = desk_requirements();
    let w = CostWeights::default();
    for (i, r) in runs.iter().enumerate() {
        for (name, run) in [("sca I", &r.sca1), ("sca II", &r.sca2), ("cbd I", &r.cbd1), ("cbd II", &r.cbd2), ("rrb", &r.rrb)] {
            if let Some(p) = &run.plan {
                plans += 1;
                if let Err(e) = check_plan(p, &r.prep.channels, &req, &w) {
                    violations.push(format!("seed {i} {name}: {}", e.join("; ")));
                }
            }
        }
    }
    for (ch, req, w, p) in extra {
        plans += 1;
        if let Err(e) = check_plan(p, ch, req, w) {
            violations.push(e.join("; "));
        }
    }
    let detail = format!("{plans} plans re-checked, {} with violations", violations.len());
    outcome(violations.is_empty() && plans > 0, if violations.is_empty() { detail } else { format!("{detail}: {}", violations[0]) })
}

/// Cost of every pattern at fixed phases, optimized over a 360-level grid per
/// site and then refined by a shrinking pattern search.
fn brute_force_optimum(ch: &ChannelSet, req: &Requirements, w: &CostWeights) -> f64 {
    let k = ch.num_sites();
    let cost = |mask: u64, theta: &[f64]| -> f64 {
        let beta: Vec<f64> = (0..k).map(|s| f64::from((mask >> s & 1) as u8)).collect();
        let v = CVector::from_iterator(k, theta.iter().map(|t| Complex64::from_polar(1.0, *t)));
        let mut p0: f64 = 0.0;
        for t in ch.targets() {
            let g = ch.effective(&beta, &v, t).norm_squared();
            if g == 0.0 {
                return f64::INFINITY;
            }
            p0 = p0.max(req.threshold(t) / g);
        }
        if p0 > req.p0_max * (1.0 + 1e-9) {
            return f64::INFINITY;
        }
        let bits: Vec<bool> = beta.iter().map(|b| *b == 1.0).collect();
        system_cost(&bits, p0.min(req.p0_max), w)
    };
    let levels = 360;
    let step = 2.0 * std::f64::consts::PI / levels as f64;
    let mut best = f64::INFINITY;
    for mask in 0u64..(1 << k) {
        let mut top = (f64::INFINITY, vec![0.0; k]);
        for a in 0..levels {
            for b in 0..levels {
                let theta = [a as f64 * step, b as f64 * step];
                let c = cost(mask, &theta[..k]);
                if c < top.0 {
                    top = (c, theta[..k].to_vec());
                }
                if mask & 2 == 0 {
                    break;
                }
            }
            if mask & 1 == 0 {
                break;
            }
        }
        if !top.0.is_finite() {
            continue;
        }
        let (mut c, mut theta) = top;
        let mut h = step;
        while h > 1e-10 {
            let mut improved = false;
            for d in [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]] {
                let trial: Vec<f64> = theta.iter().zip(d).map(|(t, s)| t + s * h).collect();
                let tc = cost(mask, &trial);
                if tc < c {
                    c = tc;
                    theta = trial;
                    improved = true;
                }
            }
            if !improved {
                h *= 0.5;
            }
        }
        best = best.min(c);
    }
    best
}

fn criterion_5(extra: &mut Vec<(ChannelSet, Requirements, CostWeights, DeploymentPlan)>) -> Outcome {
    let req = Requirements::new(0.5, 1.0, 0.5, 10.0).unwrap();
    let w = CostWeights { w1: 1.0, w2: 5.0 };
    let (mut below, mut within, mut gaps) = (0, 0, Vec::new());
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let ch = random_channels(&mut rng, 2, 1, 2, 1, 1, 0.5);
        let oracle = brute_force_optimum(&ch, &req, &w);
        let opts = ScaOptions { rounding: RoundingOptions { seed, ..Default::default() }, ..Default::default() };
        let relaxed = solve_relaxed(&ch, &req, &w, Case::I, &opts).unwrap();
        let plan = greedy_round(&relaxed.beta, &ch, &req, &w, Case::I, &opts.rounding).unwrap();
        let gap = plan.cost / oracle - 1.0;
        below += usize::from(plan.cost < oracle - 1e-6);
        within += usize::from(gap <= 0.05);
        gaps.push(gap);
        extra.push((ch, req, w, plan));
    }
    let worst = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    outcome(
        below == 0 && within >= 8,
        format!("{below} runs below the oracle, {within}/10 within 5% (worst gap {:.2}%)", 100.0 * worst),
    )
}

fn criterion_6() -> Outcome {
    let mut mismatches = 0;
    let mut feasible = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let ch = random_channels(&mut rng, 3, 2, 2, 2, 2, 0.3);
        let req = Requirements::new(0.5, 1.0, 0.5, rng.gen_range(0.02..0.5)).unwrap();
        let w = CostWeights { w1: 1.0, w2: rng.gen_range(0.0..20.0) };
        let v = random_phases(6, seed);
        let fast = enumerate_patterns(&ch, &req, &w, &v).unwrap();
        // independent enumeration through the generic effective-channel path
        let mut slow: Option<(u64, f64, f64)> = None;
        for mask in 0u64..8 {
            let beta: Vec<bool> = (0..3).map(|s| mask >> s & 1 == 1).collect();
            let bf: Vec<f64> = beta.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect();
            let mut p0: f64 = 0.0;
            let mut dead = false;
            for t in ch.targets() {
                let g = ch.effective(&bf, &v, t).norm_squared();
                dead |= g == 0.0;
                p0 = p0.max(req.threshold(t) / g);
            }
            if dead || p0 > req.p0_max * (1.0 + 1e-9) {
                continue;
            }
            let p0 = p0.min(req.p0_max);
            let cost = system_cost(&beta, p0, &w);
            if slow.map_or(true, |(_, _, c)| cost < c) {
                slow = Some((mask, p0, cost));
            }
        }
        feasible += usize::from(slow.is_some());
        let same = match (fast, slow) {
            (None, None) => true,
            (Some(a), Some(b)) => a.0 == b.0 && a.1 == b.1 && a.2 == b.2,
            _ => false,
        };
        mismatches += usize::from(!same);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(699);
    let ch = random_channels(&mut rng, 3, 2, 2, 2, 2, 0.3);
    let starved = Requirements::new(0.5, 1.0, 0.5, 1e-9).unwrap();
    let reported = matches!(rrb_plan(&ch, &starved, &CostWeights::default(), &RrbOptions::default()), Err(HeuristicError::Infeasible));
    outcome(
        mismatches == 0 && reported,
        format!("{mismatches}/20 mismatches ({feasible} feasible scenes); starved budget reported infeasible: {reported}"),
    )
}

fn criterion_7(runs: &[DeskSeed]) -> Outcome {
    let sca: Vec<f64> = runs.iter().map(|r| r.sca1.cost()).collect();
    let cbd: Vec<f64> = runs.iter().map(|r| r.cbd1.cost()).collect();
    let rrb: Vec<f64> = runs.iter().map(|r| r.rrb.cost()).collect();
    let (a, b, c) = (median(&sca), median(&cbd), median(&rrb));
    outcome(a <= b && b <= c, format!("median cost SCA {a:.4} <= CBD {b:.4} <= RRB {c:.4}"))
}

fn criterion_8(runs: &[DeskSeed]) -> Outcome {
    let one: Vec<f64> = runs.iter().map(|r| r.sca1.cost()).collect();
    let two: Vec<f64> = runs.iter().map(|r| r.sca2.cost()).collect();
    let (a, b) = (median(&two), median(&one));
    let per_seed = one.iter().zip(&two).filter(|(i, ii)| **ii <= **i + 1e-6).count();
    outcome(a <= b + 1e-6, format!("median cost case II {a:.4} <= case I {b:.4}; per seed {per_seed}/{}", runs.len()))
}

fn criterion_9(dir: &std::path::Path) -> Outcome {
    let path = dir.join("desk0.json");
    let base = RunConfig::new(&path, Algorithm::Sca, Case::I, desk_db(), CostWeights::default(), 0).unwrap();
    let values = [0.0, 2.0, 4.0, 6.0, 8.0];
    let res = sweep(&base, SweepAxis::Gc, &values, Some(1)).unwrap();
    let costs: Vec<f64> = res.rows.iter().map(|r| r.total_cost.unwrap_or(f64::INFINITY)).collect();
    let ok = costs.windows(2).all(|w| w[1] >= w[0] - 1e-6);
    let shown: Vec<String> = costs.iter().map(|c| format!("{c:.4}")).collect();
    outcome(ok, format!("Gamma_c {values:?} dB -> cost [{}]", shown.join(", ")))
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut records, mut worst_len, mut worst_spec, mut reciprocal) = (0, 0.0f64, 0.0f64, true);
    let mut configs = 0;
    while configs < 100 {
        let lo: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-2.0..0.0));
        let hi: [f64; 3] = std::array::from_fn(|a| lo[a] + rng.gen_range(0.2..2.0));
        let slab = Obstacle::new(lo, hi, 0.7);
        // most configurations put both ends on the outer side of one face
        let face = rng.gen_range(0..3);
        let above = rng.gen_bool(0.5);
        let same_side = rng.gen_bool(0.8);
        let mut end = || {
            Vec3::from_fn(|a, _| {
                if same_side && a == face {
                    if above { hi[a] + rng.gen_range(0.1..3.0) } else { lo[a] - rng.gen_range(0.1..3.0) }
                } else if same_side {
                    rng.gen_range(lo[a] - 1.0..hi[a] + 1.0)
                } else {
                    rng.gen_range(-3.0..3.0)
                }
            })
        };
        let (tx, rx) = (end(), end());
        if slab.contains(&tx) || slab.contains(&rx) {
            continue;
        }
        configs += 1;
        let mut scene = seeded_desk_scene(0);
        scene.obstacles = vec![slab];
        let fwd = trace_paths(&scene, &tx, &rx).unwrap();
        let back = trace_paths(&scene, &rx, &tx).unwrap();
        reciprocal &= fwd.len() == back.len() && fwd.iter().zip(&back).all(|(f, b)| *f == b.reversed());
        for r in fwd.iter().filter(|r| r.kind == PathKind::Reflected) {
            records += 1;
            let p = r.bounce.unwrap();
            worst_len = worst_len.max(((p - tx).norm() + (rx - p).norm() - r.length).abs() / r.length.max(1.0));
            let axis = (0..3).find(|&a| p[a] == lo[a] || p[a] == hi[a]).unwrap();
            let mut mirrored = (p - tx).normalize();
            mirrored[axis] = -mirrored[axis];
            worst_spec = worst_spec.max((mirrored - (rx - p).normalize()).norm());
        }
    }
    outcome(
        worst_len <= 1e-9 && worst_spec <= 1e-9 && reciprocal && records > 0,
        format!("{records} reflected records: image-length error {worst_len:.1e}, specular error {worst_spec:.1e}, reciprocity {reciprocal}"),
    )
}

fn criterion_11(runs: &[DeskSeed]) -> Outcome {
    let req = desk_requirements();
    let w = CostWeights::default();
    let ch = &runs[0].prep.channels;
    let mut zero = true;
    for case in [Case::I, Case::II] {
        let plan = empty_plan(ch, &req, &w, case);
        zero &= coverage(&plan, ch, &req).illumination.iter().all(|r| *r == 0.0);
    }
    let desk = desk(0);
    let plan = empty_plan(&desk.channels, &req, &w, Case::I);
    zero &= coverage(&plan, &desk.channels, &req).illumination.iter().all(|r| *r == 0.0);
    outcome(zero, format!("beta = 0 gives zero illumination at all {} SPs", ch.num_sp()))
}

fn criterion_12() -> Outcome {
    let mut violations = 0;
    let req = loose_requirements();
    for seed in 0..30 {
        let mut rng = ChaCha8Rng::seed_from_u64(1200 + seed);
        let ch = random_channels(&mut rng, 3, 2, 2, 2, 2, 0.3);
        let beta: Vec<bool> = loop {
            let b: Vec<bool> = (0..3).map(|_| rng.gen_bool(0.6)).collect();
            if b.iter().any(|x| *x) {
                break b;
            }
        };
        let sol = solve_reflective_subproblem(&beta, &ch, &req, seed, 100).unwrap();
        violations += usize::from(sol.sdr_p0 > sol.p0 * (1.0 + 1e-9));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1299);
    let mut recovered = true;
    for n in [2, 5, 9] {
        let mut vbar = unit_phases(&mut rng, n);
        vbar[n - 1] = Complex64::new(1.0, 0.0);
        let v = &vbar * vbar.adjoint();
        recovered &= gaussian_candidates(&v, 50, n as u64).iter().all(|c| (c - &vbar).iter().all(|z| z.norm() < 1e-12));
    }
    outcome(
        violations == 0 && recovered,
        format!("{violations}/30 relaxation bounds above the randomized power; rank-one recovery exact: {recovered}"),
    )
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut timed = |n: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let out = f();
        eprintln!("  [criterion {n} took {:.1}s]", start.elapsed().as_secs_f64());
        results.push((n, name, out));
    };
    timed(1, "MRT optimality", &mut criterion_1);
    timed(2, "surrogate correctness", &mut criterion_2);
    let runs = desk_runs(dir.path());
    let mut extra = Vec::new();
    timed(3, "SCA descent", &mut || criterion_3(&runs));
    timed(5, "brute-force near-optimality", &mut || criterion_5(&mut extra));
    timed(4, "rounding feasibility", &mut || criterion_4(&runs, &extra));
    timed(6, "RRB exactness", &mut criterion_6);
    timed(7, "algorithm ordering", &mut || criterion_7(&runs));
    timed(8, "case dominance", &mut || criterion_8(&runs));
    timed(9, "threshold monotonicity", &mut || criterion_9(dir.path()));
    timed(10, "ray-tracer geometry", &mut criterion_10);
    timed(11, "blocked-scene zero coverage", &mut || criterion_11(&runs));
    timed(12, "SDR lower bound", &mut criterion_12);

    results.sort_by_key(|r| r.0);
    println!();
    for (n, name, out) in &results {
        println!("criterion {n:>2} {} {name}: {}", if out.pass { "PASS" } else { "FAIL" }, out.detail);
    }
    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!("\n{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
