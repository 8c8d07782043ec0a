//! Relaxed-to-binary rounding.
//!
//! For a fixed deployment pattern the reflective design is a unit-modulus
//! max-min problem in `ṽ = [v_S; 1]`, where `S` holds the deployed sites:
//! maximize `min_j ‖F_j ṽ‖²/c_j`. It is relaxed to an SDP over `V ⪰ 0` with
//! unit diagonal and rounded back by Gaussian randomization.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use irs_solvers::{complex_embed, hermitian_from_embedding, solve_sdp, SDProblem, Sense, SolveStatus, SolverError, SymMatrix};

use crate::channel::{CMatrix, CVector, ChannelSet, Target};
use crate::metrics::{check_plan, system_cost, Case, CostWeights, DeploymentPlan, Phases, Requirements};

pub const DEFAULT_NGR: usize = 200;
pub const SNAP: f64 = 1e-3;
/// Relative slack on the power budget when judging feasibility.
pub const BUDGET_MARGIN: f64 = 1e-9;
const SDP_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum RoundingError {
    #[error("targets unreachable under the given deployment: {0:?}")]
    Unreachable(Vec<Target>),
    #[error("relaxation failed: {0}")]
    Solver(#[from] SolverError),
    #[error("no feasible deployment found")]
    NoFeasibleCandidate,
    #[error("plan failed the feasibility re-check: {0:?}")]
    Recheck(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundingOptions {
    pub seed: u64,
    pub n_gr: usize,
    /// Relaxed weights below this count as zero.
    pub snap: f64,
}

impl Default for RoundingOptions {
    fn default() -> Self {
        Self { seed: 0, n_gr: DEFAULT_NGR, snap: SNAP }
    }
}

/// SplitMix64 finalizer over a base seed and a path of indices.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    path.iter().fold(mix(seed), |acc, &p| mix(acc ^ mix(p)))
}

/// `β_k = 1` iff the relaxed entry survives the snap threshold.
pub fn init_binary(beta_relaxed: &[f64]) -> Vec<bool> {
    init_binary_with(beta_relaxed, SNAP)
}

pub fn init_binary_with(beta_relaxed: &[f64], snap: f64) -> Vec<bool> {
    beta_relaxed.iter().map(|&b| b > 0.0 && b >= snap).collect()
}

/// `F_j(β) = [blocks_k for deployed k | direct]`, of size N_t × (K̂M + 1).
pub fn lifted_channel(channels: &ChannelSet, beta: &[bool], t: Target) -> CMatrix {
    let tb = channels.blocks(t);
    let (m, nt) = (channels.elements(), channels.num_tx());
    let sites: Vec<usize> = (0..beta.len()).filter(|&k| beta[k]).collect();
    let mut f = CMatrix::zeros(nt, sites.len() * m + 1);
    for (i, &k) in sites.iter().enumerate() {
        f.view_mut((0, i * m), (nt, m)).copy_from(&tb.blocks[k]);
    }
    f.column_mut(sites.len() * m).copy_from(&tb.direct);
    f
}

/// `max_j c_j/‖F_j ṽ‖²`; infinite if some target gets nothing.
pub fn lifted_power(fs: &[CMatrix], thresholds: &[f64], v: &CVector) -> f64 {
    fs.iter().zip(thresholds).fold(0.0, |acc, (f, c)| {
        let g = (f * v).norm_squared();
        acc.max(if g > 0.0 { c / g } else { f64::INFINITY })
    })
}

/// Solution of the relaxation `max t` s.t. `(P̄0/c_j)·tr(F_jᴴF_j V) ≥ t`,
/// `diag V = 1`, `V ⪰ 0`.
#[derive(Debug, Clone)]
pub struct SdrOutcome {
    pub v: CMatrix,
    /// Primal value reached by the solver.
    pub t: f64,
    /// Certified upper bound on the optimal `t`, from the dual multipliers.
    pub bound: f64,
    pub status: SolveStatus,
}

pub fn solve_sdr(fs: &[CMatrix], scales: &[f64]) -> Result<SdrOutcome, RoundingError> {
    let n = fs[0].ncols();
    let order = 2 * n + 1;
    let last = 2 * n;
    let mut prob = SDProblem::new(order, SymMatrix::sparse(order, [(last, last, -1.0)]));
    for (f, s) in fs.iter().zip(scales) {
        let e = complex_embed(f).transpose() * (0.5 * s).sqrt();
        let mut factor = DMatrix::zeros(order, e.ncols());
        factor.view_mut((0, 0), (2 * n, e.ncols())).copy_from(&e);
        prob.push(SymMatrix::low_rank(factor).with_entry(last, last, -1.0), Sense::GreaterEqual, 0.0);
    }
    for i in 0..n {
        prob.push(SymMatrix::sparse(order, [(i, i, 0.5), (i + n, i + n, 0.5)]), Sense::Equal, 1.0);
    }
    let sol = solve_sdp(&prob, SDP_TOL)?;
    if matches!(sol.status, SolveStatus::Infeasible | SolveStatus::Unbounded) {
        return Err(SolverError::NotOptimal(sol.status).into());
    }
    let x = sol.x.view((0, 0), (2 * n, 2 * n)).into_owned();
    let v = hermitian_from_embedding(&x);

    // Any y ≥ 0 with Σy = 1 and any diagonal W give
    // t* ≤ tr(W) + n·λ_max(Σ y_j s_j F_jᴴF_j − W).
    let j = fs.len();
    let mut y: Vec<f64> = sol.y.iter().take(j).map(|y| y.max(0.0)).collect();
    let total: f64 = y.iter().sum();
    if total > 0.0 {
        y.iter_mut().for_each(|y| *y /= total);
    } else {
        y.iter_mut().for_each(|y| *y = 1.0 / j as f64);
    }
    let mut mm = CMatrix::zeros(n, n);
    for ((f, s), yj) in fs.iter().zip(scales).zip(&y) {
        mm += f.adjoint() * f * Complex64::from(s * yj);
    }
    let w: Vec<f64> = (0..n).map(|i| -sol.y[j + i]).collect();
    let shifted = &mm - CMatrix::from_diagonal(&CVector::from_iterator(n, w.iter().map(|&x| Complex64::from(x))));
    let lmax = SymmetricEigen::new(shifted).eigenvalues.max();
    let bound = w.iter().sum::<f64>() + n as f64 * lmax;
    Ok(SdrOutcome { v, t: sol.x[(last, last)], bound, status: sol.status })
}

/// Unit-modulus candidates drawn from `CN(0, V)` and normalized so the last
/// entry is exactly one, followed by the principal eigenvector.
pub fn gaussian_candidates(v: &CMatrix, n_gr: usize, seed: u64) -> Vec<CVector> {
    let n = v.nrows();
    let eig = SymmetricEigen::new(v.clone());
    // Eigenvalues at rounding-noise level would otherwise perturb every phase.
    let floor = 1e-10 * eig.eigenvalues.max().max(0.0);
    let sqrt_l: Vec<f64> = eig.eigenvalues.iter().map(|&l| if l > floor { l.sqrt() } else { 0.0 }).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(n_gr + 1);
    for _ in 0..n_gr {
        let z = CVector::from_fn(n, |i, _| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(a * h, b * h) * sqrt_l[i]
        });
        out.push(normalize_phases(&(&eig.eigenvectors * z)));
    }
    let imax = eig.eigenvalues.imax();
    out.push(normalize_phases(&eig.eigenvectors.column(imax).into_owned()));
    out
}

/// `exp(j∠(ξ_i/ξ_last))`, with the last entry set to exactly one.
pub fn normalize_phases(xi: &CVector) -> CVector {
    let n = xi.len();
    let ref_arg = xi[n - 1].arg();
    let mut out = xi.map(|z| Complex64::from_polar(1.0, z.arg() - ref_arg));
    out[n - 1] = Complex64::new(1.0, 0.0);
    out
}

/// Reflective design for one deployment pattern.
#[derive(Debug, Clone)]
pub struct ReflectiveSolution {
    /// Stacked phases of length K·M; undeployed sites hold ones.
    pub v: CVector,
    pub p0: f64,
    /// Lower bound on the power of every unit-modulus design, from the SDR.
    pub sdr_p0: f64,
}

impl ReflectiveSolution {
    pub fn feasible(&self, req: &Requirements) -> bool {
        self.p0 <= req.p0_max * (1.0 + BUDGET_MARGIN)
    }
}

fn scatter(beta: &[bool], m: usize, lifted: &CVector) -> CVector {
    let mut v = CVector::from_element(beta.len() * m, Complex64::new(1.0, 0.0));
    let mut pos = 0;
    for (k, &b) in beta.iter().enumerate() {
        if b {
            v.rows_mut(k * m, m).copy_from(&lifted.rows(pos, m));
            pos += m;
        }
    }
    v
}

/// Reflective design that minimizes the power serving all `targets` at once.
pub fn solve_for_targets(
    beta: &[bool],
    channels: &ChannelSet,
    req: &Requirements,
    targets: &[Target],
    seed: u64,
    n_gr: usize,
) -> Result<ReflectiveSolution, RoundingError> {
    let fs: Vec<CMatrix> = targets.iter().map(|&t| lifted_channel(channels, beta, t)).collect();
    let dead: Vec<Target> = targets.iter().zip(&fs).filter(|(_, f)| f.iter().all(|z| *z == Complex64::from(0.0))).map(|(t, _)| *t).collect();
    if !dead.is_empty() {
        return Err(RoundingError::Unreachable(dead));
    }
    let thresholds: Vec<f64> = targets.iter().map(|&t| req.threshold(t)).collect();
    let m = channels.elements();
    let n = fs[0].ncols();
    if n == 1 {
        let one = CVector::from_element(1, Complex64::new(1.0, 0.0));
        let p0 = lifted_power(&fs, &thresholds, &one);
        return Ok(ReflectiveSolution { v: scatter(beta, m, &one), p0, sdr_p0: p0 });
    }
    let scales: Vec<f64> = thresholds.iter().map(|c| req.p0_max / c).collect();
    let sdr = solve_sdr(&fs, &scales)?;
    let mut best: Option<(f64, CVector)> = None;
    for cand in gaussian_candidates(&sdr.v, n_gr, seed) {
        let p0 = lifted_power(&fs, &thresholds, &cand);
        if best.as_ref().map_or(true, |(b, _)| p0 < *b) {
            best = Some((p0, cand));
        }
    }
    let (p0, lifted) = best.expect("at least one candidate");
    let sdr_p0 = if sdr.bound > 0.0 { req.p0_max / sdr.bound } else { f64::INFINITY };
    Ok(ReflectiveSolution { v: scatter(beta, m, &lifted), p0, sdr_p0 })
}

/// Shared reflection pattern serving every point (case I).
pub fn solve_reflective_subproblem(
    beta: &[bool],
    channels: &ChannelSet,
    req: &Requirements,
    seed: u64,
    n_gr: usize,
) -> Result<ReflectiveSolution, RoundingError> {
    solve_for_targets(beta, channels, req, &channels.targets(), seed, n_gr)
}

/// Reflection pattern dedicated to one point (case II).
pub fn solve_point_subproblem(
    beta: &[bool],
    channels: &ChannelSet,
    req: &Requirements,
    target: Target,
    seed: u64,
    n_gr: usize,
) -> Result<ReflectiveSolution, RoundingError> {
    solve_for_targets(beta, channels, req, &[target], seed, n_gr)
}

/// Outcome of evaluating one deployment pattern.
#[derive(Debug, Clone)]
pub struct PatternDesign {
    pub phases: Phases,
    pub p0: f64,
}

/// Best design found for `beta`, or `None` when some target is unreachable.
pub fn design_pattern(
    beta: &[bool],
    channels: &ChannelSet,
    req: &Requirements,
    case: Case,
    seed: u64,
    n_gr: usize,
) -> Result<Option<PatternDesign>, RoundingError> {
    let unreachable = |r: Result<ReflectiveSolution, RoundingError>| match r {
        Ok(s) => Ok(Some(s)),
        Err(RoundingError::Unreachable(_)) => Ok(None),
        Err(e) => Err(e),
    };
    match case {
        Case::I => Ok(unreachable(solve_reflective_subproblem(beta, channels, req, seed, n_gr))?
            .map(|s| PatternDesign { phases: Phases::Shared(s.v), p0: s.p0 })),
        Case::II => {
            let targets = channels.targets();
            let sols: Result<Vec<Option<ReflectiveSolution>>, RoundingError> = targets
                .par_iter()
                .enumerate()
                .map(|(i, &t)| {
                    unreachable(solve_point_subproblem(beta, channels, req, t, derive_seed(seed, &[i as u64]), n_gr))
                })
                .collect();
            let sols: Option<Vec<ReflectiveSolution>> = sols?.into_iter().collect();
            Ok(sols.map(|sols| {
                let p0 = sols.iter().map(|s| s.p0).fold(0.0, f64::max);
                let p = channels.num_sp();
                let mut vs: Vec<CVector> = sols.into_iter().map(|s| s.v).collect();
                let comm = vs.split_off(p);
                PatternDesign { phases: Phases::PerPoint { sensing: vs, comm }, p0 }
            }))
        }
    }
}

/// One feasible pattern visited by the greedy pass.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub beta: Vec<bool>,
    pub design: PatternDesign,
    pub cost: f64,
}

/// Removal order: indices of non-zero weights, ascending, ties by index.
pub fn removal_order(beta_relaxed: &[f64], snap: f64) -> Vec<usize> {
    let keep = init_binary_with(beta_relaxed, snap);
    let mut xi: Vec<usize> = (0..beta_relaxed.len()).filter(|&k| keep[k]).collect();
    xi.sort_by(|&a, &b| beta_relaxed[a].total_cmp(&beta_relaxed[b]).then(a.cmp(&b)));
    xi
}

/// Greedy removal pass. Returns every feasible pattern in visiting order.
pub fn greedy_candidates(
    beta_relaxed: &[f64],
    channels: &ChannelSet,
    req: &Requirements,
    weights: &CostWeights,
    case: Case,
    opts: &RoundingOptions,
) -> Result<Vec<Candidate>, RoundingError> {
    let mut beta = init_binary_with(beta_relaxed, opts.snap);
    let mut out = Vec::new();
    let mut check = |beta: &[bool], step: u64| -> Result<bool, RoundingError> {
        let d = design_pattern(beta, channels, req, case, derive_seed(opts.seed, &[step]), opts.n_gr)?;
        match d {
            Some(d) if d.p0 <= req.p0_max * (1.0 + BUDGET_MARGIN) => {
                let cost = system_cost(beta, d.p0.min(req.p0_max), weights);
                out.push(Candidate { beta: beta.to_vec(), design: d, cost });
                Ok(true)
            }
            _ => Ok(false),
        }
    };
    check(&beta, 0)?;
    for (i, &k) in removal_order(beta_relaxed, opts.snap).iter().enumerate() {
        beta[k] = false;
        if !check(&beta, i as u64 + 1)? {
            beta[k] = true;
        }
    }
    Ok(out)
}

/// Cheapest candidate, first visited on ties.
pub fn select_candidate(candidates: &[Candidate]) -> Option<&Candidate> {
    candidates.iter().fold(None, |best: Option<&Candidate>, c| match best {
        Some(b) if b.cost <= c.cost => Some(b),
        _ => Some(c),
    })
}

pub fn plan_from_candidate(c: &Candidate, req: &Requirements, weights: &CostWeights, case: Case) -> DeploymentPlan {
    let p0 = c.design.p0.min(req.p0_max);
    DeploymentPlan {
        beta: c.beta.clone(),
        phases: c.design.phases.clone(),
        p0,
        cost: system_cost(&c.beta, p0, weights),
        case,
    }
}

pub fn greedy_round(
    beta_relaxed: &[f64],
    channels: &ChannelSet,
    req: &Requirements,
    weights: &CostWeights,
    case: Case,
    opts: &RoundingOptions,
) -> Result<DeploymentPlan, RoundingError> {
    let candidates = greedy_candidates(beta_relaxed, channels, req, weights, case, opts)?;
    let best = select_candidate(&candidates).ok_or(RoundingError::NoFeasibleCandidate)?;
    let plan = plan_from_candidate(best, req, weights, case);
    check_plan(&plan, channels, req, weights).map_err(RoundingError::Recheck)?;
    Ok(plan)
}
