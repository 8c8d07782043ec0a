//! Performance metrics, closed-form transmit covariances and plan checks.
//!
//! Powers are in watts internally; dBm and dB appear only at interfaces.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{CMatrix, CVector, ChannelSet, Target};

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w / 1e-3).log10()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("covariance is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("target {0} is unreachable")]
    Unreachable(Target),
    #[error("unreachable targets: {}", list(.0))]
    Infeasible(Vec<Target>),
    #[error("invalid requirements: {0}")]
    InvalidRequirements(String),
    #[error("phase vector has wrong shape")]
    PhaseShape,
}

fn list(t: &[Target]) -> String {
    t.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

/// Thresholds and budget, all linear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Requirements {
    pub p_s: f64,
    pub gamma_c: f64,
    pub sigma2: f64,
    pub p0_max: f64,
}

impl Requirements {
    pub fn new(p_s: f64, gamma_c: f64, sigma2: f64, p0_max: f64) -> Result<Self, MetricsError> {
        let r = Self { p_s, gamma_c, sigma2, p0_max };
        for (name, v) in [("P_s", p_s), ("Gamma_c", gamma_c), ("sigma2", sigma2), ("P0_max", p0_max)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(MetricsError::InvalidRequirements(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(r)
    }

    pub fn from_db(ps_dbm: f64, gamma_db: f64, sigma2_dbm: f64, p0_max_dbm: f64) -> Result<Self, MetricsError> {
        Self::new(dbm_to_watts(ps_dbm), db_to_linear(gamma_db), dbm_to_watts(sigma2_dbm), dbm_to_watts(p0_max_dbm))
    }

    /// Right-hand side `c_j` of `P0·‖u_j‖² ≥ c_j`.
    pub fn threshold(&self, t: Target) -> f64 {
        match t {
            Target::Sp(_) => self.p_s,
            Target::Cp(_) => self.sigma2 * self.gamma_c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub w1: f64,
    pub w2: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { w1: 1.0, w2: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Case {
    /// One reflection pattern for the whole period.
    I,
    /// Reflection pattern retuned for every point.
    II,
}

/// Stacked phase vectors of length K·M.
#[derive(Debug, Clone, PartialEq)]
pub enum Phases {
    Shared(CVector),
    PerPoint { sensing: Vec<CVector>, comm: Vec<CVector> },
}

impl Phases {
    pub fn for_target(&self, t: Target) -> &CVector {
        match (self, t) {
            (Phases::Shared(v), _) => v,
            (Phases::PerPoint { sensing, .. }, Target::Sp(p)) => &sensing[p],
            (Phases::PerPoint { comm, .. }, Target::Cp(q)) => &comm[q],
        }
    }

    pub fn all(&self) -> Vec<&CVector> {
        match self {
            Phases::Shared(v) => vec![v],
            Phases::PerPoint { sensing, comm } => sensing.iter().chain(comm.iter()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentPlan {
    pub beta: Vec<bool>,
    pub phases: Phases,
    pub p0: f64,
    pub cost: f64,
    pub case: Case,
}

impl DeploymentPlan {
    pub fn beta_f64(&self) -> Vec<f64> {
        beta_to_f64(&self.beta)
    }

    pub fn deployed(&self) -> usize {
        self.beta.iter().filter(|b| **b).count()
    }
}

pub fn beta_to_f64(beta: &[bool]) -> Vec<f64> {
    beta.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
}

fn check_psd(r: &CMatrix) -> Result<(), MetricsError> {
    let herm = (r + r.adjoint()) * Complex64::from(0.5);
    let min = herm.symmetric_eigenvalues().min();
    let tr = r.trace().re.abs();
    if min < -1e-9 * tr.max(f64::MIN_POSITIVE) {
        return Err(MetricsError::NotPsd(min));
    }
    Ok(())
}

fn quad(u: &CVector, r: &CMatrix) -> f64 {
    (u.adjoint() * r * u)[(0, 0)].re
}

/// Received illumination power at SP `p` under covariance `r`.
pub fn illumination_power(
    beta: &[f64],
    v: &CVector,
    r: &CMatrix,
    channels: &ChannelSet,
    p: usize,
) -> Result<f64, MetricsError> {
    check_psd(r)?;
    Ok(quad(&channels.effective(beta, v, Target::Sp(p)), r))
}

/// Linear SNR at CP `q` under covariance `r`.
pub fn communication_snr(
    beta: &[f64],
    v: &CVector,
    r: &CMatrix,
    channels: &ChannelSet,
    q: usize,
    sigma2: f64,
) -> Result<f64, MetricsError> {
    check_psd(r)?;
    Ok(quad(&channels.effective(beta, v, Target::Cp(q)), r) / sigma2)
}

/// Rank-one covariance `(P0/‖u‖²)·u·uᴴ` and the value it achieves.
pub fn optimal_covariance(
    beta: &[f64],
    v: &CVector,
    channels: &ChannelSet,
    p0: f64,
    target: Target,
    sigma2: f64,
) -> Result<(CMatrix, f64), MetricsError> {
    let u = channels.effective(beta, v, target);
    let g = u.norm_squared();
    if g == 0.0 {
        return Err(MetricsError::Unreachable(target));
    }
    let r = (&u * u.adjoint()) * Complex64::from(p0 / g);
    let value = match target {
        Target::Sp(_) => p0 * g,
        Target::Cp(_) => p0 * g / sigma2,
    };
    Ok((r, value))
}

/// Per-target power `c_j/‖u_j‖²`, or the list of unreachable targets.
pub fn point_powers(
    beta: &[f64],
    phases: &Phases,
    channels: &ChannelSet,
    req: &Requirements,
) -> Result<Vec<f64>, MetricsError> {
    let mut out = Vec::new();
    let mut bad = Vec::new();
    for t in channels.targets() {
        let g = channels.effective(beta, phases.for_target(t), t).norm_squared();
        if g == 0.0 {
            bad.push(t);
        } else {
            out.push(req.threshold(t) / g);
        }
    }
    if bad.is_empty() {
        Ok(out)
    } else {
        Err(MetricsError::Infeasible(bad))
    }
}

/// Smallest P0 meeting every threshold with point-optimal covariances.
pub fn required_power(
    beta: &[f64],
    phases: &Phases,
    channels: &ChannelSet,
    req: &Requirements,
) -> Result<f64, MetricsError> {
    Ok(point_powers(beta, phases, channels, req)?.into_iter().fold(0.0, f64::max))
}

pub fn system_cost(beta: &[bool], p0: f64, weights: &CostWeights) -> f64 {
    weights.w1 * beta.iter().filter(|b| **b).count() as f64 + weights.w2 * p0
}

/// Per-point coverage of a plan: illumination (W) per SP and SNR (linear) per
/// CP, each under its own optimal covariance at the plan's P0.
#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    pub illumination: Vec<f64>,
    pub snr: Vec<f64>,
}

pub fn coverage(plan: &DeploymentPlan, channels: &ChannelSet, req: &Requirements) -> Coverage {
    let beta = plan.beta_f64();
    let value = |t: Target| channels.effective(&beta, plan.phases.for_target(t), t).norm_squared() * plan.p0;
    Coverage {
        illumination: (0..channels.num_sp()).map(|p| value(Target::Sp(p))).collect(),
        snr: (0..channels.num_cp()).map(|q| value(Target::Cp(q)) / req.sigma2).collect(),
    }
}

/// Re-derives feasibility of a plan from the channels. Returns every
/// violation found.
pub fn check_plan(
    plan: &DeploymentPlan,
    channels: &ChannelSet,
    req: &Requirements,
    weights: &CostWeights,
) -> Result<(), Vec<String>> {
    let mut errs = Vec::new();
    if plan.beta.len() != channels.num_sites() {
        errs.push(format!("beta has {} entries for {} sites", plan.beta.len(), channels.num_sites()));
        return Err(errs);
    }
    let km = channels.num_sites() * channels.elements();
    for v in plan.phases.all() {
        if v.len() != km {
            errs.push(format!("phase vector has length {}, expected {km}", v.len()));
            return Err(errs);
        }
        if let Some(z) = v.iter().find(|z| (z.norm() - 1.0).abs() > 1e-9) {
            errs.push(format!("phase entry {z} is not unit modulus"));
        }
    }
    if let Phases::PerPoint { sensing, comm } = &plan.phases {
        if sensing.len() != channels.num_sp() || comm.len() != channels.num_cp() {
            errs.push("per-point phase count mismatch".into());
            return Err(errs);
        }
    }
    if !(plan.p0 >= 0.0 && plan.p0 <= req.p0_max) {
        errs.push(format!("P0 {} outside [0, {}]", plan.p0, req.p0_max));
    }
    let cov = coverage(plan, channels, req);
    for (p, rho) in cov.illumination.iter().enumerate() {
        if *rho < req.p_s * (1.0 - 1e-6) {
            errs.push(format!("SP{p}: illumination {rho:e} W below {:e} W", req.p_s));
        }
    }
    for (q, g) in cov.snr.iter().enumerate() {
        if *g < req.gamma_c * (1.0 - 1e-6) {
            errs.push(format!("CP{q}: SNR {g:e} below {:e}", req.gamma_c));
        }
    }
    let cost = system_cost(&plan.beta, plan.p0, weights);
    if (cost - plan.cost).abs() > 1e-9 * cost.abs().max(1.0) {
        errs.push(format!("cost {} does not match recomputed {cost}", plan.cost));
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}

/// Draws a random PSD matrix with trace `p0` from a complex Gaussian factor.
pub fn random_covariance(rng: &mut impl rand::Rng, n: usize, p0: f64) -> CMatrix {
    use rand_distr::{Distribution, StandardNormal};
    let rank = rng.gen_range(1..=n);
    let f = DMatrix::from_fn(n, rank, |_, _| {
        Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    });
    let r = &f * f.adjoint();
    let tr = r.trace().re;
    r * Complex64::from(p0 / tr)
}
