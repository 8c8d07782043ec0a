//! Successive convex approximation for the relaxed deployment problems.
//!
//! Each target `j` contributes the constraint `c_j/P0 + f_j(v, β) ≤ 0` with
//! `f_j = −‖u_j‖²`. The concave `f_j` is replaced by the quadratic upper bound
//! `f_j⁰ + ∇f_jᵀ(x − x⁰) + (μ_j/2)‖x − x⁰‖²`, which turns every iteration into
//! a convex QCQP in `x = [Re v, Im v, β]`, `τ = P̄0/P0` and the epigraph
//! variable `s ≥ 1/τ` of the power cost.

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use irs_solvers::{solve_convex, Constraint, ConvexQP, QuadForm, Quadratic, SolverError};

use crate::channel::{CVector, ChannelSet, Target};
use crate::metrics::{Case, CostWeights, Phases, Requirements};
use crate::rounding::{self, RoundingError, RoundingOptions, BUDGET_MARGIN, SNAP};

const MU_FLOOR: f64 = 1e-12;
const MAJORIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ScaError {
    #[error("requirements cannot be met even with every site deployed: {0}")]
    InfeasibleAtFullDeployment(String),
    #[error("quadratic bound still violated after {0} curvature doublings")]
    Majorization(usize),
    #[error("subproblem has no surrogate for target {0}")]
    MissingSurrogate(Target),
    #[error("surrogates are expanded around different points")]
    ExpansionPoint,
    #[error(transparent)]
    Rounding(#[from] RoundingError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaOptions {
    pub max_iters: usize,
    /// Relative objective decrease below which an iteration counts as stalled.
    pub tol: f64,
    /// Consecutive stalled iterations that end the loop.
    pub patience: usize,
    /// Multiplier on the curvature bound.
    pub mu_safety: f64,
    pub max_doublings: usize,
    pub qp_tol: f64,
    pub rounding: RoundingOptions,
    /// Keep the surrogates of every accepted iterate (for inspection).
    pub keep_surrogates: bool,
}

impl Default for ScaOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-4,
            patience: 3,
            mu_safety: 1.0,
            max_doublings: 10,
            qp_tol: 1e-9,
            rounding: RoundingOptions::default(),
            keep_surrogates: false,
        }
    }
}

/// Quadratic upper bound of `f` around `x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub x0: DVector<f64>,
    pub f0: f64,
    pub grad: DVector<f64>,
    pub mu: f64,
}

impl Surrogate {
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.x0;
        self.f0 + self.grad.dot(&d) + 0.5 * self.mu * d.norm_squared()
    }
}

/// `[Re v, Im v, β]`.
pub fn stack(v: &CVector, beta: &[f64]) -> DVector<f64> {
    let km = v.len();
    let mut x = DVector::zeros(2 * km + beta.len());
    for (i, z) in v.iter().enumerate() {
        x[i] = z.re;
        x[km + i] = z.im;
    }
    x.rows_mut(2 * km, beta.len()).copy_from_slice(beta);
    x
}

pub fn unstack(x: &DVector<f64>, km: usize) -> (CVector, Vec<f64>) {
    let v = CVector::from_fn(km, |i, _| Complex64::new(x[i], x[km + i]));
    (v, x.rows(2 * km, x.len() - 2 * km).iter().copied().collect())
}

/// `f = −‖u‖²` and its gradient in the stacked real parametrization.
pub fn eval_f(channels: &ChannelSet, beta: &[f64], v: &CVector, t: Target) -> (f64, DVector<f64>) {
    let tb = channels.blocks(t);
    let m = channels.elements();
    let k = channels.num_sites();
    let km = k * m;
    let u = channels.effective(beta, v, t);
    let mut g = DVector::zeros(2 * km + k);
    for (s, b) in tb.blocks.iter().enumerate() {
        let vk = v.rows(s * m, m);
        // ∂f/∂v̄_k = −β_k B_kᴴ u
        let w = b.adjoint() * &u;
        for i in 0..m {
            g[s * m + i] = -2.0 * beta[s] * w[i].re;
            g[km + s * m + i] = -2.0 * beta[s] * w[i].im;
        }
        g[2 * km + s] = -2.0 * u.dotc(&(b * vk)).re;
    }
    (-u.norm_squared(), g)
}

/// Curvature bound `4(1+M)(Σ_k s_k)² + 2‖d‖·max_k s_k`, `s_k` the spectral
/// norm of the cascaded block of site k and `d` the direct channel.
pub fn estimate_mu(channels: &ChannelSet, t: Target) -> f64 {
    let tb = channels.blocks(t);
    let m = channels.elements() as f64;
    let s: Vec<f64> = tb.blocks.iter().map(|b| b.clone().singular_values().max()).collect();
    let sum: f64 = s.iter().sum();
    let smax = s.iter().copied().fold(0.0, f64::max);
    let mu = 4.0 * (1.0 + m) * sum * sum + 2.0 * tb.direct.norm() * smax;
    mu.max(MU_FLOOR)
}

fn surrogate_at(channels: &ChannelSet, beta: &[f64], v: &CVector, t: Target, mu: f64) -> Surrogate {
    let (f0, grad) = eval_f(channels, beta, v, t);
    Surrogate { x0: stack(v, beta), f0, grad, mu }
}

/// Layout of the relaxed QP: `nvar` design variables of which `beta_offset..`
/// hold β, then τ, then (when the power is priced) s. Design variables are
/// offsets from the expansion point, which keeps the surrogate constraints
/// free of cancellation between large terms.
struct Layout {
    nvar: usize,
    beta_offset: usize,
    priced: bool,
}

impl Layout {
    fn tau(&self) -> usize {
        self.nvar
    }

    fn s(&self) -> usize {
        self.nvar + 1
    }

    fn n(&self) -> usize {
        self.nvar + 1 + usize::from(self.priced)
    }
}

fn base_qp(layout: &Layout, beta0: &[f64], weights: &CostWeights, req: &Requirements) -> ConvexQP {
    let n = layout.n();
    let mut qp = ConvexQP::new(n);
    let mut c = DVector::zeros(n);
    for (i, b) in beta0.iter().enumerate() {
        c[layout.beta_offset + i] = weights.w1;
        qp.push(Constraint::Bound { index: layout.beta_offset + i, lower: -b, upper: 1.0 - b });
    }
    qp.push(Constraint::Bound { index: layout.tau(), lower: 1.0, upper: f64::INFINITY });
    if layout.priced {
        c[layout.s()] = weights.w2 * req.p0_max;
        // s·τ ≥ 1  ⇔  ‖(2, s − τ)‖ ≤ s + τ
        let mut a = nalgebra::DMatrix::zeros(2, n);
        a[(1, layout.s())] = 1.0;
        a[(1, layout.tau())] = -1.0;
        let mut cc = DVector::zeros(n);
        cc[layout.s()] = 1.0;
        cc[layout.tau()] = 1.0;
        qp.push(Constraint::SecondOrderCone { a, b: DVector::from_vec(vec![2.0, 0.0]), c: cc, d: 0.0 });
    }
    qp.objective = Quadratic::linear(c, weights.w1 * beta0.iter().sum::<f64>());
    qp
}

/// Pushes `scale·(f0 + gᵀd + (μ/2)‖d‖²) + τ ≤ 0` over the offsets `d` held
/// in `support`.
fn push_surrogate(qp: &mut ConvexQP, layout: &Layout, support: &[usize], s: &Surrogate, scale: f64) {
    let alpha = scale * s.mu;
    let mut linear = DVector::zeros(qp.n);
    for (i, &col) in support.iter().enumerate() {
        linear[col] = scale * s.grad[i];
    }
    linear[layout.tau()] = 1.0;
    let form = QuadForm::scaled_identity(support.to_vec(), alpha).expect("support within bounds");
    qp.push(Constraint::Quadratic(Quadratic { form, linear, constant: scale * s.f0 }));
}

/// `|z0 + d|² ≤ 1` for the offset `d` stored at `(re, im)`.
fn push_modulus(qp: &mut ConvexQP, re: usize, im: usize, z0: Complex64) {
    let form = QuadForm::scaled_identity(vec![re, im], 2.0).expect("valid support");
    let mut linear = DVector::zeros(qp.n);
    linear[re] = 2.0 * z0.re;
    linear[im] = 2.0 * z0.im;
    qp.push(Constraint::Quadratic(Quadratic { form, linear, constant: z0.norm_sqr() - 1.0 }));
}

/// Case I subproblem around the surrogates' common expansion point `x0`.
/// Variables: the offset `[Re v, Im v, β] − x0`, then τ and s, with `s`
/// omitted when `w2 = 0`.
pub fn build_subproblem(
    channels: &ChannelSet,
    surrogates: &[(Target, Surrogate)],
    req: &Requirements,
    weights: &CostWeights,
) -> Result<ConvexQP, ScaError> {
    let k = channels.num_sites();
    let km = k * channels.elements();
    for t in channels.targets() {
        if !surrogates.iter().any(|(s, _)| *s == t) {
            return Err(ScaError::MissingSurrogate(t));
        }
    }
    let x0 = &surrogates[0].1.x0;
    if surrogates.iter().any(|(_, s)| s.x0 != *x0) {
        return Err(ScaError::ExpansionPoint);
    }
    let layout = Layout { nvar: 2 * km + k, beta_offset: 2 * km, priced: weights.w2 > 0.0 };
    let beta0: Vec<f64> = x0.rows(2 * km, k).iter().copied().collect();
    let mut qp = base_qp(&layout, &beta0, weights, req);
    let support: Vec<usize> = (0..layout.nvar).collect();
    for (t, s) in surrogates {
        push_surrogate(&mut qp, &layout, &support, s, req.p0_max / req.threshold(*t));
    }
    for i in 0..km {
        push_modulus(&mut qp, i, km + i, Complex64::new(x0[i], x0[km + i]));
    }
    Ok(qp)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub objective: f64,
    pub p0: f64,
    pub beta_sum: f64,
    pub doublings: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    Converged,
    MaxIterations,
    /// The accepted step did not lower the objective.
    NoDescent,
    /// The convex subproblem could not be solved; the last iterate is kept.
    Subproblem(String),
}

#[derive(Debug, Clone)]
pub struct RelaxedSolution {
    pub beta: Vec<f64>,
    pub phases: Phases,
    pub p0: f64,
    pub objective: f64,
    pub trace: Vec<TraceEntry>,
    pub stop: StopReason,
    /// Surrogates of each accepted iterate, if requested.
    pub surrogates: Vec<Vec<(Target, Surrogate)>>,
}

impl RelaxedSolution {
    pub fn trace_csv(&self) -> String {
        trace_csv(&self.trace)
    }
}

pub fn trace_csv(trace: &[TraceEntry]) -> String {
    let mut s = String::from("iteration,objective,p0_w,beta_sum,mu_doublings\n");
    for e in trace {
        s.push_str(&format!("{},{:.12e},{:.12e},{:.9},{}\n", e.iteration, e.objective, e.p0, e.beta_sum, e.doublings));
    }
    s
}

/// Iterate state: shared β and one phase vector per target (all equal in case I).
#[derive(Clone)]
struct State {
    beta: Vec<f64>,
    phases: Phases,
    p0: f64,
    objective: f64,
}

fn true_power(channels: &ChannelSet, req: &Requirements, beta: &[f64], phases: &Phases) -> f64 {
    channels.targets().iter().fold(0.0, |acc, &t| {
        let g = channels.effective(beta, phases.for_target(t), t).norm_squared();
        acc.max(if g > 0.0 { req.threshold(t) / g } else { f64::INFINITY })
    })
}

fn make_state(channels: &ChannelSet, req: &Requirements, weights: &CostWeights, beta: Vec<f64>, phases: Phases) -> State {
    let p0 = true_power(channels, req, &beta, &phases);
    let objective = weights.w1 * beta.iter().sum::<f64>() + weights.w2 * p0;
    State { beta, phases, p0, objective }
}

fn initial_state(
    channels: &ChannelSet,
    req: &Requirements,
    weights: &CostWeights,
    case: Case,
    opts: &ScaOptions,
) -> Result<State, ScaError> {
    let k = channels.num_sites();
    let full = vec![true; k];
    let design = rounding::design_pattern(&full, channels, req, case, opts.rounding.seed, opts.rounding.n_gr)?;
    let design = design.ok_or_else(|| ScaError::InfeasibleAtFullDeployment("some target is unreachable".into()))?;
    if design.p0 > req.p0_max * (1.0 + BUDGET_MARGIN) {
        return Err(ScaError::InfeasibleAtFullDeployment(format!(
            "needs {:.6e} W against a budget of {:.6e} W",
            design.p0, req.p0_max
        )));
    }
    Ok(make_state(channels, req, weights, vec![1.0; k], design.phases))
}

fn project_disk(z: Complex64) -> Complex64 {
    let r = z.norm();
    if r > 1.0 {
        z / r
    } else {
        z
    }
}

/// One candidate step for the given curvatures. Returns the new state and
/// the surrogates it was built from.
fn step(
    channels: &ChannelSet,
    req: &Requirements,
    weights: &CostWeights,
    case: Case,
    state: &State,
    mu: &[f64],
    qp_tol: f64,
) -> Result<(Vec<f64>, Phases, Vec<(Target, Surrogate)>), String> {
    let targets = channels.targets();
    let k = channels.num_sites();
    let km = k * channels.elements();
    let surrogates: Vec<(Target, Surrogate)> = targets
        .par_iter()
        .enumerate()
        .map(|(j, &t)| (t, surrogate_at(channels, &state.beta, state.phases.for_target(t), t, mu[j])))
        .collect();
    match case {
        Case::I => {
            let qp = build_subproblem(channels, &surrogates, req, weights).map_err(|e| e.to_string())?;
            let sol = solve_convex(&qp, qp_tol).map_err(|e| e.to_string())?;
            let sol = sol.optimal().map_err(|e| e.to_string())?;
            let x = &surrogates[0].1.x0 + sol.x.rows(0, 2 * km + k);
            let (v, beta) = unstack(&x, km);
            let beta = beta.into_iter().map(|b| b.clamp(0.0, 1.0)).collect();
            let v = v.map(project_disk);
            Ok((beta, Phases::Shared(v), surrogates))
        }
        Case::II => {
            // Each v_j enters only its own constraint, so its best value is the
            // elementwise disk projection of the unconstrained minimizer; what
            // is left is a small problem in (β, τ, s).
            let layout = Layout { nvar: k, beta_offset: 0, priced: weights.w2 > 0.0 };
            let mut qp = base_qp(&layout, &state.beta, weights, req);
            let mut new_v = Vec::with_capacity(targets.len());
            let support: Vec<usize> = (0..k).collect();
            for (t, s) in &surrogates {
                let v0 = state.phases.for_target(*t);
                let vstar = CVector::from_fn(km, |i, _| {
                    let z0 = Complex64::new(s.x0[i], s.x0[km + i]);
                    let g = Complex64::new(s.grad[i], s.grad[km + i]);
                    project_disk(z0 - g / s.mu)
                });
                let mut partial = 0.0;
                for i in 0..km {
                    let d = vstar[i] - v0[i];
                    partial += s.grad[i] * d.re + s.grad[km + i] * d.im + 0.5 * s.mu * d.norm_sqr();
                }
                let reduced = Surrogate {
                    x0: s.x0.rows(2 * km, k).into_owned(),
                    f0: s.f0 + partial,
                    grad: s.grad.rows(2 * km, k).into_owned(),
                    mu: s.mu,
                };
                push_surrogate(&mut qp, &layout, &support, &reduced, req.p0_max / req.threshold(*t));
                new_v.push(vstar);
            }
            let sol = solve_convex(&qp, qp_tol).map_err(|e| e.to_string())?;
            let sol = sol.optimal().map_err(|e| e.to_string())?;
            let beta = (0..k).map(|i| (state.beta[i] + sol.x[i]).clamp(0.0, 1.0)).collect();
            let comm = new_v.split_off(channels.num_sp());
            Ok((beta, Phases::PerPoint { sensing: new_v, comm }, surrogates))
        }
    }
}

/// Targets whose bound fails at the candidate point.
fn majorization_violations(
    channels: &ChannelSet,
    beta: &[f64],
    phases: &Phases,
    surrogates: &[(Target, Surrogate)],
) -> Vec<usize> {
    surrogates
        .iter()
        .enumerate()
        .filter(|(_, (t, s))| {
            let v = phases.for_target(*t);
            let f = -channels.effective(beta, v, *t).norm_squared();
            f > s.eval(&stack(v, beta)) + MAJORIZATION_TOL * f.abs()
        })
        .map(|(j, _)| j)
        .collect()
}

/// Solves the relaxed problem by SCA, starting from full deployment.
pub fn solve_relaxed(
    channels: &ChannelSet,
    req: &Requirements,
    weights: &CostWeights,
    case: Case,
    opts: &ScaOptions,
) -> Result<RelaxedSolution, ScaError> {
    let targets = channels.targets();
    let mut mu: Vec<f64> = targets.iter().map(|&t| opts.mu_safety * estimate_mu(channels, t)).collect();
    let mut state = initial_state(channels, req, weights, case, opts)?;
    let mut trace = vec![TraceEntry {
        iteration: 0,
        objective: state.objective,
        p0: state.p0,
        beta_sum: state.beta.iter().sum(),
        doublings: 0,
    }];
    let mut kept = Vec::new();
    let mut stalled = 0;
    let mut stop = StopReason::MaxIterations;
    for it in 1..=opts.max_iters {
        let mut doublings = 0;
        let accepted = loop {
            let (beta, phases, surrogates) = match step(channels, req, weights, case, &state, &mu, opts.qp_tol) {
                Ok(r) => r,
                Err(e) => break Err(e),
            };
            let bad = majorization_violations(channels, &beta, &phases, &surrogates);
            if bad.is_empty() {
                break Ok((beta, phases, surrogates));
            }
            if doublings == opts.max_doublings {
                return Err(ScaError::Majorization(doublings));
            }
            for j in bad {
                mu[j] *= 2.0;
            }
            doublings += 1;
        };
        let (beta, phases, surrogates) = match accepted {
            Ok(r) => r,
            Err(e) => {
                stop = StopReason::Subproblem(e);
                break;
            }
        };
        let next = make_state(channels, req, weights, beta, phases);
        if !(next.objective <= state.objective + 1e-9 * state.objective.abs().max(1e-300)) {
            stop = StopReason::NoDescent;
            break;
        }
        let decrease = (state.objective - next.objective) / state.objective.abs().max(f64::MIN_POSITIVE);
        if opts.keep_surrogates {
            kept.push(surrogates);
        }
        state = next;
        trace.push(TraceEntry {
            iteration: it,
            objective: state.objective,
            p0: state.p0,
            beta_sum: state.beta.iter().sum(),
            doublings,
        });
        stalled = if decrease < opts.tol { stalled + 1 } else { 0 };
        if stalled >= opts.patience {
            stop = StopReason::Converged;
            break;
        }
    }
    let beta = state.beta.iter().map(|&b| if b < SNAP { 0.0 } else { b }).collect();
    Ok(RelaxedSolution {
        beta,
        phases: state.phases,
        p0: state.p0,
        objective: state.objective,
        trace,
        stop,
        surrogates: kept,
    })
}
