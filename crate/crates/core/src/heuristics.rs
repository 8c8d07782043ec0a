//! Channel-based deployment (CBD) and the random reflective beamforming
//! benchmark (RRB).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{CVector, ChannelSet};
use crate::metrics::{check_plan, system_cost, Case, CostWeights, DeploymentPlan, Phases, Requirements};
use crate::rounding::{derive_seed, greedy_round, RoundingError, RoundingOptions, BUDGET_MARGIN};

/// Largest candidate count the RRB enumeration accepts.
pub const MAX_RRB_SITES: usize = 20;

#[derive(Debug, Error)]
pub enum HeuristicError {
    #[error("no candidate site has a channel to any point")]
    NoCoverage,
    #[error("{0} candidate sites exceed the enumeration limit of {MAX_RRB_SITES}")]
    TooManySites(usize),
    #[error("no deployment meets the requirements within the power budget")]
    Infeasible,
    #[error(transparent)]
    Rounding(#[from] RoundingError),
    #[error("plan failed the feasibility re-check: {0:?}")]
    Recheck(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbdWeights {
    pub eta: Vec<f64>,
    pub beta_cbd: Vec<f64>,
}

/// `η_k = P_s Σ_p ‖g_kp‖² + σ²Γ Σ_q ‖h_kq‖²`, normalized by its maximum.
pub fn cbd_weights(channels: &ChannelSet, req: &Requirements) -> Result<CbdWeights, HeuristicError> {
    let eta: Vec<f64> = (0..channels.num_sites())
        .map(|k| {
            let g: f64 = channels.gkp[k].iter().map(|v| v.norm_squared()).sum();
            let h: f64 = channels.hkq[k].iter().map(|v| v.norm_squared()).sum();
            req.p_s * g + req.sigma2 * req.gamma_c * h
        })
        .collect();
    let max = eta.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(HeuristicError::NoCoverage);
    }
    let beta_cbd = eta.iter().map(|e| e / max).collect();
    Ok(CbdWeights { eta, beta_cbd })
}

/// CBD weights fed to the greedy rounding. Every site with a positive weight
/// starts deployed.
pub fn cbd_plan(
    channels: &ChannelSet,
    req: &Requirements,
    weights: &CostWeights,
    case: Case,
    opts: &RoundingOptions,
) -> Result<DeploymentPlan, HeuristicError> {
    let w = cbd_weights(channels, req)?;
    let opts = RoundingOptions { snap: 0.0, ..*opts };
    Ok(greedy_round(&w.beta_cbd, channels, req, weights, case, &opts)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RrbOptions {
    pub seed: u64,
    /// Independent phase draws; the cheapest resulting plan is kept.
    pub draws: usize,
}

impl Default for RrbOptions {
    fn default() -> Self {
        Self { seed: 0, draws: 1 }
    }
}

/// Phases uniform in `[−π, π)`.
pub fn random_phases(len: usize, seed: u64) -> CVector {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    CVector::from_fn(len, |_, _| {
        let theta = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        num_complex::Complex64::from_polar(1.0, theta)
    })
}

/// Best pattern for fixed phases: `(mask, P0, cost)`, lowest cost first and
/// lowest mask on ties.
pub fn enumerate_patterns(
    channels: &ChannelSet,
    req: &Requirements,
    weights: &CostWeights,
    v: &CVector,
) -> Result<Option<(u64, f64, f64)>, HeuristicError> {
    let k = channels.num_sites();
    if k > MAX_RRB_SITES {
        return Err(HeuristicError::TooManySites(k));
    }
    let m = channels.elements();
    let targets = channels.targets();
    // d[j][k] = B_jk v_k, so u_j(β) = Σ_k β_k d[j][k] + direct_j.
    let d: Vec<Vec<CVector>> = targets
        .iter()
        .map(|&t| channels.blocks(t).blocks.iter().enumerate().map(|(s, b)| b * v.rows(s * m, m)).collect())
        .collect();
    let thresholds: Vec<f64> = targets.iter().map(|&t| req.threshold(t)).collect();
    let best = (0u64..1 << k)
        .into_par_iter()
        .filter_map(|mask| {
            let mut p0: f64 = 0.0;
            for (j, &t) in targets.iter().enumerate() {
                let mut u = channels.blocks(t).direct.clone();
                for (s, ds) in d[j].iter().enumerate() {
                    if mask >> s & 1 == 1 {
                        u += ds;
                    }
                }
                let g = u.norm_squared();
                if g == 0.0 {
                    return None;
                }
                p0 = p0.max(thresholds[j] / g);
            }
            if p0 > req.p0_max * (1.0 + BUDGET_MARGIN) {
                return None;
            }
            let p0 = p0.min(req.p0_max);
            let cost = weights.w1 * mask.count_ones() as f64 + weights.w2 * p0;
            Some((mask, p0, cost))
        })
        .min_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
    Ok(best)
}

/// Random phases with an exact search over all deployment patterns.
pub fn rrb_plan(
    channels: &ChannelSet,
    req: &Requirements,
    weights: &CostWeights,
    opts: &RrbOptions,
) -> Result<DeploymentPlan, HeuristicError> {
    let k = channels.num_sites();
    let km = k * channels.elements();
    let mut best: Option<DeploymentPlan> = None;
    for draw in 0..opts.draws.max(1) {
        let seed = if draw == 0 { opts.seed } else { derive_seed(opts.seed, &[draw as u64]) };
        let v = random_phases(km, seed);
        if let Some((mask, p0, _)) = enumerate_patterns(channels, req, weights, &v)? {
            let beta: Vec<bool> = (0..k).map(|s| mask >> s & 1 == 1).collect();
            let cost = system_cost(&beta, p0, weights);
            if best.as_ref().map_or(true, |b| cost < b.cost) {
                best = Some(DeploymentPlan { beta, phases: Phases::Shared(v), p0, cost, case: Case::I });
            }
        }
    }
    let plan = best.ok_or(HeuristicError::Infeasible)?;
    check_plan(&plan, channels, req, weights).map_err(HeuristicError::Recheck)?;
    Ok(plan)
}
