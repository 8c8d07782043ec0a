//! Interior-point method for small convex programs with quadratic,
//! second-order-cone and box constraints.
//!
//! The main iteration is primal-dual on the perturbed KKT conditions, with
//! slacks on every functional constraint so it can start from an infeasible
//! point. Cones are written as `‖w‖²/u − u ≤ 0` over `u > 0` so that every
//! constraint is smooth. When that first attempt does not finish, a phase I
//! minimizes a common shift `s` of all functional constraints; a non-negative
//! optimal shift means the problem has no interior and is reported
//! infeasible. Otherwise the iteration restarts from the phase I point.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::{SolveStatus, SolverError};

const NEWTON_DECREMENT_TOL: f64 = 1e-11;
const MAX_NEWTON_STEPS: usize = 2000;
const BARRIER_GROWTH: f64 = 20.0;
/// Centering parameter of the primal-dual iteration.
const PD_GROWTH: f64 = 10.0;
/// Budget of the first primal-dual attempt from an infeasible start.
const INFEASIBLE_START_STEPS: usize = 200;
/// Dual residual tolerance relative to the size of its terms.
const PD_FEAS_TOL: f64 = 1e-8;
const UNBOUNDED_NORM: f64 = 1e12;
const PHASE1_BOX: f64 = 1e6;
/// Accepted loss of accuracy when centering stalls at the rounding floor.
const STALL_GAP_FACTOR: f64 = 1e3;

/// Symmetric quadratic form `½ x_Sᵀ M x_S` over a subset `S` of the variables.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadForm {
    support: Vec<usize>,
    matrix: DMatrix<f64>,
}

impl QuadForm {
    pub fn new(support: Vec<usize>, matrix: DMatrix<f64>) -> Result<Self, SolverError> {
        if matrix.nrows() != support.len() || matrix.ncols() != support.len() {
            return Err(SolverError::InvalidProblem(format!(
                "quadratic form of order {} with support of size {}",
                matrix.nrows(),
                support.len()
            )));
        }
        let mut seen = support.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != support.len() {
            return Err(SolverError::InvalidProblem("repeated index in quadratic form support".into()));
        }
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-12 * matrix.amax().max(1.0) {
            return Err(SolverError::InvalidProblem("quadratic form is not symmetric".into()));
        }
        Ok(Self { support, matrix })
    }

    /// Form over the leading `matrix.nrows()` variables.
    pub fn dense(matrix: DMatrix<f64>) -> Result<Self, SolverError> {
        let support = (0..matrix.nrows()).collect();
        Self::new(support, matrix)
    }

    pub fn scaled_identity(support: Vec<usize>, alpha: f64) -> Result<Self, SolverError> {
        let k = support.len();
        Self::new(support, DMatrix::from_diagonal_element(k, k, alpha))
    }

    pub fn zero() -> Self {
        Self { support: Vec::new(), matrix: DMatrix::zeros(0, 0) }
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    fn gather(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.support.len(), self.support.iter().map(|&i| x[i]))
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        if self.support.is_empty() {
            return 0.0;
        }
        let xs = self.gather(x);
        0.5 * xs.dot(&(&self.matrix * &xs))
    }

    fn add_gradient(&self, x: &DVector<f64>, scale: f64, grad: &mut DVector<f64>) {
        if self.support.is_empty() {
            return;
        }
        let mx = &self.matrix * self.gather(x);
        for (k, &i) in self.support.iter().enumerate() {
            grad[i] += scale * mx[k];
        }
    }

    fn add_hessian(&self, scale: f64, hess: &mut DMatrix<f64>) {
        for (a, &i) in self.support.iter().enumerate() {
            for (b, &j) in self.support.iter().enumerate() {
                hess[(i, j)] += scale * self.matrix[(a, b)];
            }
        }
    }

    fn min_eigenvalue(&self) -> f64 {
        if self.support.is_empty() {
            return 0.0;
        }
        let k = self.support.len();
        let diagonal = (0..k).all(|i| (0..k).all(|j| i == j || self.matrix[(i, j)] == 0.0));
        if diagonal {
            return self.matrix.diagonal().min();
        }
        self.matrix.clone().symmetric_eigenvalues().min()
    }
}

/// `½ xᵀPx + qᵀx + r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub form: QuadForm,
    pub linear: DVector<f64>,
    pub constant: f64,
}

impl Quadratic {
    pub fn linear(linear: DVector<f64>, constant: f64) -> Self {
        Self { form: QuadForm::zero(), linear, constant }
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.form.eval(x) + self.linear.dot(x) + self.constant
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = self.linear.clone();
        self.form.add_gradient(x, 1.0, &mut g);
        g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// `quadratic(x) ≤ 0`.
    Quadratic(Quadratic),
    /// `‖A x + b‖ ≤ cᵀx + d`.
    SecondOrderCone { a: DMatrix<f64>, b: DVector<f64>, c: DVector<f64>, d: f64 },
    /// `lower ≤ x[index] ≤ upper`; either side may be infinite.
    Bound { index: usize, lower: f64, upper: f64 },
}

impl Constraint {
    /// Amount by which `x` violates the constraint (zero when satisfied).
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        match self {
            Constraint::Quadratic(q) => q.eval(x).max(0.0),
            Constraint::SecondOrderCone { a, b, c, d } => {
                ((a * x + b).norm() - c.dot(x) - d).max(0.0)
            }
            Constraint::Bound { index, lower, upper } => {
                let v = x[*index];
                (lower - v).max(v - upper).max(0.0)
            }
        }
    }
}

/// Convex program `min objective(x)` subject to `constraints`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexQP {
    pub n: usize,
    pub objective: Quadratic,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    /// Surrogate duality gap `−Σ λ_i f_i(x)` at the returned primal-dual pair.
    pub gap: f64,
    pub newton_steps: usize,
}

impl QpSolution {
    /// Turns any non-optimal status into an error.
    pub fn optimal(self) -> Result<Self, SolverError> {
        match self.status {
            SolveStatus::Optimal => Ok(self),
            s => Err(SolverError::NotOptimal(s)),
        }
    }
}

impl ConvexQP {
    pub fn new(n: usize) -> Self {
        Self { n, objective: Quadratic::linear(DVector::zeros(n), 0.0), constraints: Vec::new() }
    }

    pub fn push(&mut self, c: Constraint) {
        self.constraints.push(c);
    }

    pub fn objective_value(&self, x: &DVector<f64>) -> f64 {
        self.objective.eval(x)
    }

    /// Largest constraint violation at `x`, computed directly from the problem
    /// data.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        self.constraints.iter().map(|c| c.violation(x)).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let n = self.n;
        let check_quad = |q: &Quadratic, what: &str| -> Result<(), SolverError> {
            if q.linear.len() != n {
                return Err(SolverError::InvalidProblem(format!("{what}: linear term has wrong length")));
            }
            if q.form.support.iter().any(|&i| i >= n) {
                return Err(SolverError::InvalidProblem(format!("{what}: support index out of range")));
            }
            let scale = q.form.matrix.amax().max(1.0);
            if q.form.min_eigenvalue() < -1e-9 * scale {
                return Err(SolverError::InvalidProblem(format!("{what}: Hessian is not PSD")));
            }
            if !q.constant.is_finite() || q.linear.iter().any(|v| !v.is_finite()) {
                return Err(SolverError::InvalidProblem(format!("{what}: non-finite data")));
            }
            Ok(())
        };
        check_quad(&self.objective, "objective")?;
        for (i, c) in self.constraints.iter().enumerate() {
            match c {
                Constraint::Quadratic(q) => check_quad(q, &format!("constraint {i}"))?,
                Constraint::SecondOrderCone { a, b, c, d } => {
                    if a.ncols() != n || b.len() != a.nrows() || c.len() != n || !d.is_finite() {
                        return Err(SolverError::InvalidProblem(format!("constraint {i}: cone dimensions")));
                    }
                }
                Constraint::Bound { index, lower, upper } => {
                    if *index >= n || lower.is_nan() || upper.is_nan() {
                        return Err(SolverError::InvalidProblem(format!("constraint {i}: bad bound")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Plain-text dump for cross-checking with an external modelling tool.
    ///
    /// One record per line: `objective`, `quadratic`, `soc` or `bound`, followed
    /// by `key=value` fields. Vectors are space separated inside brackets,
    /// matrices are row-major with rows separated by `;`.
    pub fn to_text(&self) -> String {
        fn vec(v: &DVector<f64>) -> String {
            let items: Vec<String> = v.iter().map(|x| format!("{x:e}")).collect();
            format!("[{}]", items.join(" "))
        }
        fn mat(m: &DMatrix<f64>) -> String {
            let rows: Vec<String> = m
                .row_iter()
                .map(|r| r.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" "))
                .collect();
            format!("[{}]", rows.join(";"))
        }
        fn quad(q: &Quadratic) -> String {
            let sup: Vec<String> = q.form.support.iter().map(|i| i.to_string()).collect();
            format!(
                "support=[{}] hessian={} linear={} constant={:e}",
                sup.join(" "),
                mat(&q.form.matrix),
                vec(&q.linear),
                q.constant
            )
        }
        let mut out = format!("convexqp n={}\n", self.n);
        let _ = writeln!(out, "objective {}", quad(&self.objective));
        for c in &self.constraints {
            let _ = match c {
                Constraint::Quadratic(q) => writeln!(out, "quadratic {}", quad(q)),
                Constraint::SecondOrderCone { a, b, c, d } => {
                    writeln!(out, "soc a={} b={} c={} d={:e}", mat(a), vec(b), vec(c), d)
                }
                Constraint::Bound { index, lower, upper } => {
                    writeln!(out, "bound index={index} lower={lower:e} upper={upper:e}")
                }
            };
        }
        out
    }
}

#[derive(Clone, Copy)]
enum Func<'a> {
    Quad(&'a Quadratic),
    Soc { a: &'a DMatrix<f64>, b: &'a DVector<f64>, c: &'a DVector<f64>, d: f64 },
}

/// Barrier model over `n` variables, optionally with an appended phase I shift.
struct Model<'a> {
    n: usize,
    funcs: Vec<Func<'a>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Index of the phase I shift variable, when present.
    shift: Option<usize>,
}

struct Eval {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

impl<'a> Model<'a> {
    fn degree(&self) -> f64 {
        let funcs: f64 = self
            .funcs
            .iter()
            .map(|f| match f {
                Func::Quad(_) => 1.0,
                Func::Soc { .. } => 2.0,
            })
            .sum();
        let bounds = self.lower.iter().filter(|v| v.is_finite()).count()
            + self.upper.iter().filter(|v| v.is_finite()).count();
        funcs + bounds as f64
    }

    fn objective(&self, x: &DVector<f64>) -> f64 {
        self.shift.map_or(0.0, |s| x[s])
    }

    fn sigma(&self, x: &DVector<f64>) -> f64 {
        self.shift.map_or(0.0, |s| x[s])
    }

    fn base(x: &DVector<f64>, n: usize) -> DVector<f64> {
        x.rows(0, n).into_owned()
    }

    /// Slack of every barrier term; `None` outside the open domain.
    fn in_domain(&self, x: &DVector<f64>) -> bool {
        let n0 = self.n - usize::from(self.shift.is_some());
        let xb = Self::base(x, n0);
        let sigma = self.sigma(x);
        for f in &self.funcs {
            match f {
                Func::Quad(q) => {
                    let g = q.eval(&xb) - sigma;
                    if !(g < 0.0) {
                        return false;
                    }
                }
                Func::Soc { a, b, c, d } => {
                    let u = c.dot(&xb) + d + sigma;
                    let w = *a * &xb + *b;
                    if !(u > 0.0 && u * u - w.norm_squared() > 0.0) {
                        return false;
                    }
                }
            }
        }
        for i in 0..self.n {
            if !(x[i] > self.lower[i] && x[i] < self.upper[i]) {
                return false;
            }
        }
        true
    }

    fn value(&self, x: &DVector<f64>, t: f64) -> f64 {
        let n0 = self.n - usize::from(self.shift.is_some());
        let xb = Self::base(x, n0);
        let sigma = self.sigma(x);
        let mut v = t * self.objective(x);
        for f in &self.funcs {
            match f {
                Func::Quad(q) => v -= (sigma - q.eval(&xb)).ln(),
                Func::Soc { a, b, c, d } => {
                    let u = c.dot(&xb) + d + sigma;
                    let w = *a * &xb + *b;
                    v -= (u * u - w.norm_squared()).ln();
                }
            }
        }
        for i in 0..self.n {
            if self.lower[i].is_finite() {
                v -= (x[i] - self.lower[i]).ln();
            }
            if self.upper[i].is_finite() {
                v -= (self.upper[i] - x[i]).ln();
            }
        }
        v
    }

    fn eval(&self, x: &DVector<f64>, t: f64) -> Eval {
        let n = self.n;
        let n0 = n - usize::from(self.shift.is_some());
        let xb = Self::base(x, n0);
        let sigma = self.sigma(x);
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        let mut value = t * self.objective(x);
        if let Some(s) = self.shift {
            grad[s] += t;
        }
        let mut dg = DVector::zeros(n);
        for f in &self.funcs {
            dg.fill(0.0);
            match f {
                Func::Quad(q) => {
                    let r = sigma - q.eval(&xb);
                    value -= r.ln();
                    q.form.add_gradient(&xb, 1.0, &mut dg);
                    dg.rows_mut(0, n0).axpy(1.0, &q.linear, 1.0);
                    if let Some(s) = self.shift {
                        dg[s] = -1.0;
                    }
                    // ∇(-ln r) = ∇g / r, ∇² = ∇g∇gᵀ/r² + ∇²g/r
                    grad.axpy(1.0 / r, &dg, 1.0);
                    hess.ger(1.0 / (r * r), &dg, &dg, 1.0);
                    q.form.add_hessian(1.0 / r, &mut hess);
                }
                Func::Soc { a, b, c, d } => {
                    let u = c.dot(&xb) + d + sigma;
                    let w = *a * &xb + *b;
                    let big_d = u * u - w.norm_squared();
                    value -= big_d.ln();
                    let mut du = DVector::zeros(n);
                    du.rows_mut(0, n0).copy_from(*c);
                    if let Some(s) = self.shift {
                        du[s] = 1.0;
                    }
                    let atw = a.transpose() * &w;
                    dg.axpy(2.0 * u, &du, 0.0);
                    dg.rows_mut(0, n0).axpy(-2.0, &atw, 1.0);
                    grad.axpy(-1.0 / big_d, &dg, 1.0);
                    hess.ger(1.0 / (big_d * big_d), &dg, &dg, 1.0);
                    hess.ger(-2.0 / big_d, &du, &du, 1.0);
                    let ata = a.transpose() * *a;
                    let mut block = hess.view_mut((0, 0), (n0, n0));
                    block += ata * (2.0 / big_d);
                }
            }
        }
        for i in 0..n {
            if self.lower[i].is_finite() {
                let r = x[i] - self.lower[i];
                value -= r.ln();
                grad[i] -= 1.0 / r;
                hess[(i, i)] += 1.0 / (r * r);
            }
            if self.upper[i].is_finite() {
                let r = self.upper[i] - x[i];
                value -= r.ln();
                grad[i] += 1.0 / r;
                hess[(i, i)] += 1.0 / (r * r);
            }
        }
        Eval { value, grad, hess }
    }
}

enum Centering {
    Done,
    /// Phase I reached a strictly feasible point.
    Stopped,
    Unbounded,
    StepLimit,
    /// No representable progress is left at this barrier weight.
    Stalled,
}

/// Solves `H d = rhs`, adding the smallest diagonal shift that makes the
/// Cholesky factorization succeed.
fn solve_newton(hess: DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let n = rhs.len();
    let scale = hess.diagonal().amax().max(1e-300);
    let mut reg = 0.0;
    loop {
        let mut h = hess.clone();
        if reg > 0.0 {
            for i in 0..n {
                h[(i, i)] += reg;
            }
        }
        if let Some(ch) = h.cholesky() {
            return ch.solve(rhs);
        }
        reg = if reg == 0.0 { 1e-14 * scale } else { reg * 10.0 };
    }
}

fn center(
    model: &Model<'_>,
    x: &mut DVector<f64>,
    t: f64,
    steps: &mut usize,
    stop: &dyn Fn(&DVector<f64>) -> bool,
) -> Centering {
    loop {
        if *steps >= MAX_NEWTON_STEPS {
            return Centering::StepLimit;
        }
        *steps += 1;
        let ev = model.eval(x, t);
        let dx = solve_newton(ev.hess.clone(), &-&ev.grad);
        let slope = ev.grad.dot(&dx);
        // At large t the barrier value carries rounding noise proportional
        // to its magnitude, so the decrement is judged relative to it.
        if -slope / 2.0 <= NEWTON_DECREMENT_TOL.max(1e-13 * ev.value.abs()) {
            return Centering::Done;
        }
        let mut step = 1.0;
        let mut trial = &*x + &dx * step;
        let mut tries = 0;
        while !model.in_domain(&trial) {
            step *= 0.5;
            tries += 1;
            if tries > 80 {
                return Centering::Done;
            }
            trial = &*x + &dx * step;
        }
        let slack = 1e-13 * ev.value.abs().max(1.0);
        while model.value(&trial, t) > ev.value + 0.25 * step * slope + slack {
            step *= 0.5;
            tries += 1;
            if tries > 80 {
                return Centering::Done;
            }
            trial = &*x + &dx * step;
        }
        let decrease = ev.value - model.value(&trial, t);
        if (&trial - &*x).amax() <= 1e-15 * x.amax().max(1.0) {
            // The step no longer changes x in floating point.
            return Centering::Stalled;
        }
        *x = trial;
        if decrease <= 1e-15 * ev.value.abs().max(1.0) && -slope <= 1e-6 {
            // Progress has hit the rounding floor of the barrier value.
            return Centering::Done;
        }
        if x.amax() > UNBOUNDED_NORM {
            return Centering::Unbounded;
        }
        if stop(x) {
            return Centering::Stopped;
        }
    }
}

/// Solves `problem` to a relative duality-gap tolerance `tol`.
///
/// Returns `Err` only for malformed input; infeasibility, unboundedness and
/// iteration limits are reported through [`QpSolution::status`].
pub fn solve_convex(problem: &ConvexQP, tol: f64) -> Result<QpSolution, SolverError> {
    problem.validate()?;
    let n = problem.n;
    let mut lower = vec![f64::NEG_INFINITY; n];
    let mut upper = vec![f64::INFINITY; n];
    let mut funcs = Vec::new();
    for c in &problem.constraints {
        match c {
            Constraint::Quadratic(q) => funcs.push(Func::Quad(q)),
            Constraint::SecondOrderCone { a, b, c, d } => funcs.push(Func::Soc { a, b, c, d: *d }),
            Constraint::Bound { index, lower: lo, upper: hi } => {
                lower[*index] = lower[*index].max(*lo);
                upper[*index] = upper[*index].min(*hi);
            }
        }
    }
    let infeasible = |steps| QpSolution {
        x: DVector::zeros(n),
        objective: f64::NAN,
        status: SolveStatus::Infeasible,
        gap: f64::INFINITY,
        newton_steps: steps,
    };
    for i in 0..n {
        if lower[i] > upper[i] {
            return Ok(infeasible(0));
        }
        if lower[i] == upper[i] {
            return Err(SolverError::InvalidProblem(format!(
                "variable {i} is fixed by its bounds; substitute it out"
            )));
        }
    }

    let mut x = DVector::from_fn(n, |i, _| match (lower[i].is_finite(), upper[i].is_finite()) {
        (true, true) => 0.5 * (lower[i] + upper[i]),
        (true, false) => lower[i] + 1.0,
        (false, true) => upper[i] - 1.0,
        (false, false) => 0.0,
    });
    let mut steps = 0;

    let worst = |x: &DVector<f64>| -> f64 {
        funcs
            .iter()
            .map(|f| match f {
                Func::Quad(q) => q.eval(x),
                Func::Soc { a, b, c, d } => (*a * x + *b).norm() - c.dot(x) - d,
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };

    let model = Model { n, funcs: funcs.clone(), lower: lower.clone(), upper: upper.clone(), shift: None };
    if model.degree() == 0.0 {
        // Unconstrained: a single Newton solve on the objective.
        return unconstrained(problem, x, steps);
    }
    // The primal-dual iteration tolerates an infeasible start. Phase I is
    // only needed when it fails, to tell infeasibility from slow progress.
    if cones_positive(&model, &x) {
        let sol = primal_dual(&model, problem, x.clone(), tol, steps, INFEASIBLE_START_STEPS);
        if matches!(sol.status, SolveStatus::Optimal | SolveStatus::Unbounded) {
            return Ok(sol);
        }
        steps = sol.newton_steps;
    }

    let w0 = worst(&x);
    if !funcs.is_empty() && !(w0 < 0.0) {
        // Phase I: minimize the shift s subject to g_i(x) ≤ s.
        // Free directions get a wide artificial box: barriers such as the
        // cone's can decrease without bound along them, and phase I only
        // needs some strictly feasible point.
        let reach = PHASE1_BOX * x.amax().max(1.0);
        let mut lo1: Vec<f64> = lower.iter().zip(x.iter()).map(|(l, xi)| if l.is_finite() { *l } else { xi - reach }).collect();
        let mut hi1: Vec<f64> = upper.iter().zip(x.iter()).map(|(u, xi)| if u.is_finite() { *u } else { xi + reach }).collect();
        // A floor on the shift keeps phase I bounded; reaching it already
        // certifies strict feasibility.
        lo1.push(-w0.abs().max(1.0));
        hi1.push(f64::INFINITY);
        let phase1 = Model {
            n: n + 1,
            funcs: funcs.clone(),
            lower: lo1,
            upper: hi1,
            shift: Some(n),
        };
        let margin = 1e-9 * w0.abs().max(1.0);
        let mut z = x.clone().resize_vertically(n + 1, 0.0);
        z[n] = w0.abs().max(1.0) + w0;
        if !phase1.in_domain(&z) {
            z[n] = 2.0 * w0.abs().max(1.0) + w0.abs();
        }
        let stop = |z: &DVector<f64>| z[n] < -margin;
        let nu = phase1.degree();
        let mut t = 1.0 / w0.abs().max(1.0);
        let mut reached = false;
        loop {
            match center(&phase1, &mut z, t, &mut steps, &stop) {
                Centering::Stopped => {
                    reached = true;
                    break;
                }
                Centering::Unbounded => {
                    reached = z[n] < -margin;
                    break;
                }
                Centering::StepLimit => break,
                Centering::Done | Centering::Stalled => {}
            }
            // z[n] can no longer drop below -margin once the gap is that small.
            if nu / t < margin * 0.5 {
                break;
            }
            t *= BARRIER_GROWTH;
        }
        if !reached {
            if steps >= MAX_NEWTON_STEPS {
                return Ok(QpSolution {
                    x: z.rows(0, n).into_owned(),
                    objective: f64::NAN,
                    status: SolveStatus::MaxIterations,
                    gap: f64::INFINITY,
                    newton_steps: steps,
                });
            }
            return Ok(infeasible(steps));
        }
        x = z.rows(0, n).into_owned();
    }

    debug_assert!(model.in_domain(&x));
    Ok(primal_dual(&model, problem, x, tol, steps, MAX_NEWTON_STEPS))
}

/// Value and gradient of a functional constraint in smooth convex form.
fn smooth(f: &Func<'_>, x: &DVector<f64>) -> (f64, DVector<f64>) {
    match f {
        Func::Quad(q) => (q.eval(x), q.gradient(x)),
        Func::Soc { a, b, c, d } => {
            let u = c.dot(x) + d;
            let w = *a * x + *b;
            let ww = w.norm_squared();
            let grad = a.tr_mul(&w) * (2.0 / u) - *c * (ww / (u * u) + 1.0);
            (ww / u - u, grad)
        }
    }
}

fn add_smooth_hessian(f: &Func<'_>, x: &DVector<f64>, scale: f64, hess: &mut DMatrix<f64>) {
    match f {
        Func::Quad(q) => q.form.add_hessian(scale, hess),
        Func::Soc { a, b, c, d } => {
            // ∇²(‖w‖²/u) = (2/u) MᵀM with M = A − w cᵀ/u
            let u = c.dot(x) + d;
            let w = *a * x + *b;
            let m = *a - &w * c.transpose() / u;
            hess.gemm_tr(2.0 * scale / u, &m, &m, 1.0);
        }
    }
}

/// Values and gradients of the functional constraints at `x`.
fn eval_funcs(model: &Model<'_>, weights: &[f64], x: &DVector<f64>) -> (Vec<f64>, Vec<DVector<f64>>) {
    model
        .funcs
        .iter()
        .zip(weights)
        .map(|(f, w)| {
            let (v, g) = smooth(f, x);
            (v * w, g * *w)
        })
        .unzip()
}

/// Residuals of the perturbed KKT system with slacks `f_i(x) + s_i = 0`.
struct Residual {
    dual: DVector<f64>,
    primal: Vec<f64>,
    /// `λ_i s_i` for functional constraints, then bounds.
    comp: Vec<f64>,
    /// Largest term in the dual residual, for relative tests.
    scale: f64,
}

impl Residual {
    fn norm(&self, t: f64) -> f64 {
        let comp: f64 = self.comp.iter().map(|c| (c - 1.0 / t).powi(2)).sum();
        let primal: f64 = self.primal.iter().map(|r| r * r).sum();
        (self.dual.norm_squared() + primal + comp).sqrt()
    }
}

/// Interior-point state: primal `x`, slacks of the functional constraints and
/// multipliers of the functional constraints followed by lower and upper
/// bounds.
#[derive(Clone)]
struct PdState {
    x: DVector<f64>,
    slack: Vec<f64>,
    lambda: Vec<f64>,
}

struct Bounds {
    lo: Vec<usize>,
    hi: Vec<usize>,
}

impl Bounds {
    /// Slack of every finite bound, lower first.
    fn slacks(&self, model: &Model<'_>, x: &DVector<f64>) -> Vec<f64> {
        let lo = self.lo.iter().map(|&i| x[i] - model.lower[i]);
        lo.chain(self.hi.iter().map(|&i| model.upper[i] - x[i])).collect()
    }

    /// Change of each bound slack along `dx`.
    fn deltas(&self, dx: &DVector<f64>) -> Vec<f64> {
        self.lo.iter().map(|&i| dx[i]).chain(self.hi.iter().map(|&i| -dx[i])).collect()
    }

    fn sign(&self, k: usize) -> f64 {
        if k < self.lo.len() {
            -1.0
        } else {
            1.0
        }
    }

    fn index(&self, k: usize) -> usize {
        if k < self.lo.len() {
            self.lo[k]
        } else {
            self.hi[k - self.lo.len()]
        }
    }
}

fn residual(
    model: &Model<'_>,
    problem: &ConvexQP,
    bounds: &Bounds,
    st: &PdState,
    values: &[f64],
    grads: &[DVector<f64>],
) -> Residual {
    let nf = values.len();
    let mut dual = problem.objective.gradient(&st.x);
    let mut scale = dual.amax();
    for (g, l) in grads.iter().zip(&st.lambda) {
        dual.axpy(*l, g, 1.0);
        scale = scale.max(l * g.amax());
    }
    for k in 0..bounds.lo.len() + bounds.hi.len() {
        let l = st.lambda[nf + k];
        dual[bounds.index(k)] += bounds.sign(k) * l;
        scale = scale.max(l);
    }
    let primal = values.iter().zip(&st.slack).map(|(f, s)| f + s).collect();
    let mut comp: Vec<f64> = st.slack.iter().zip(&st.lambda).map(|(s, l)| s * l).collect();
    comp.extend(bounds.slacks(model, &st.x).iter().zip(&st.lambda[nf..]).map(|(s, l)| s * l));
    Residual { dual, primal, comp, scale: scale.max(1.0) }
}

/// Largest step in `(0, 1]` keeping every entry of `v + step·dv` above
/// `(1 − FRACTION)·v`.
fn fraction_to_boundary(v: &[f64], dv: &[f64]) -> f64 {
    const FRACTION: f64 = 0.995;
    v.iter().zip(dv).filter(|(_, d)| **d < 0.0).map(|(v, d)| -FRACTION * v / d).fold(1.0, f64::min)
}

/// Cones need `cᵀx + d > 0` for their smooth form to be valid.
fn cones_positive(model: &Model<'_>, x: &DVector<f64>) -> bool {
    model.funcs.iter().all(|f| match f {
        Func::Quad(_) => true,
        Func::Soc { c, d, .. } => c.dot(x) + d > 0.0,
    })
}

fn primal_dual(
    model: &Model<'_>,
    problem: &ConvexQP,
    x: DVector<f64>,
    tol: f64,
    mut steps: usize,
    limit: usize,
) -> QpSolution {
    let n = model.n;
    let bounds = Bounds {
        lo: (0..n).filter(|&i| model.lower[i].is_finite()).collect(),
        hi: (0..n).filter(|&i| model.upper[i].is_finite()).collect(),
    };
    let nf = model.funcs.len();
    let nb = bounds.lo.len() + bounds.hi.len();
    let m = (nf + nb) as f64;
    // Constraints are normalized by their gradient size at the start so that
    // the residual merit weighs them evenly.
    let weights: Vec<f64> = model.funcs.iter().map(|f| 1.0 / smooth(f, &x).1.amax().max(1.0)).collect();
    let (mut values, mut grads) = eval_funcs(model, &weights, &x);
    let slack: Vec<f64> = values.iter().map(|f| (-f).max(1.0)).collect();
    let t0 = m / problem.objective_value(&x).abs().max(1.0);
    let lambda = slack.iter().chain(&bounds.slacks(model, &x)).map(|s| 1.0 / (s * t0)).collect();
    let mut st = PdState { x, slack, lambda };
    let primal_scale = values.iter().fold(1.0, |a: f64, f| a.max(f.abs()));
    let finish = |x: DVector<f64>, status, gap, steps| QpSolution {
        objective: problem.objective_value(&x),
        x,
        status,
        gap,
        newton_steps: steps,
    };
    loop {
        let res = residual(model, problem, &bounds, &st, &values, &grads);
        let eta: f64 = res.comp.iter().sum();
        let obj_scale = problem.objective_value(&st.x).abs().max(1.0);
        let converged = |factor: f64| {
            eta <= factor * tol * obj_scale
                && res.dual.amax() <= factor * PD_FEAS_TOL * res.scale
                && res.primal.iter().all(|r| r.abs() <= factor * PD_FEAS_TOL * primal_scale)
        };
        if converged(1.0) {
            return finish(st.x, SolveStatus::Optimal, eta, steps);
        }
        if steps >= limit {
            return finish(st.x, SolveStatus::MaxIterations, eta, steps);
        }
        steps += 1;
        let t = PD_GROWTH * m / eta;

        // Eliminating Δs and Δλ leaves
        // (H + Σ (λ_i/s_i) ∇f_i ∇f_iᵀ) Δx = −r_d − Σ ∇f_i (λ_i r_p,i + 1/t − λ_i s_i)/s_i.
        let mut hess = DMatrix::zeros(n, n);
        problem.objective.form.add_hessian(1.0, &mut hess);
        let mut rhs = -&res.dual;
        for (i, f) in model.funcs.iter().enumerate() {
            let (s, l, g) = (st.slack[i], st.lambda[i], &grads[i]);
            add_smooth_hessian(f, &st.x, l * weights[i], &mut hess);
            hess.ger(l / s, g, g, 1.0);
            rhs.axpy(-(l * res.primal[i] + 1.0 / t - l * s) / s, g, 1.0);
        }
        let bound_slack = bounds.slacks(model, &st.x);
        for (k, s) in bound_slack.iter().enumerate() {
            let (i, l) = (bounds.index(k), st.lambda[nf + k]);
            hess[(i, i)] += l / s;
            // Bound slack derivative is −sign; its centering term enters like a gradient.
            rhs[i] -= bounds.sign(k) * (1.0 / t - l * s) / s;
        }
        let dx = solve_newton(hess, &rhs);
        let ds: Vec<f64> = (0..nf).map(|i| -res.primal[i] - grads[i].dot(&dx)).collect();
        let dbs = bounds.deltas(&dx);
        let dlambda: Vec<f64> = (0..nf + nb)
            .map(|j| {
                let (s, d) = if j < nf { (st.slack[j], ds[j]) } else { (bound_slack[j - nf], dbs[j - nf]) };
                let l = st.lambda[j];
                (1.0 / t - l * s - l * d) / s
            })
            .collect();

        let mut step = fraction_to_boundary(&st.slack, &ds)
            .min(fraction_to_boundary(&bound_slack, &dbs))
            .min(fraction_to_boundary(&st.lambda, &dlambda));
        let r0 = res.norm(t);
        let mut accepted = None;
        while step > 1e-14 {
            let trial = PdState {
                x: &st.x + &dx * step,
                slack: st.slack.iter().zip(&ds).map(|(s, d)| s + step * d).collect(),
                lambda: st.lambda.iter().zip(&dlambda).map(|(l, d)| l + step * d).collect(),
            };
            if cones_positive(model, &trial.x) {
                let (tv, tg) = eval_funcs(model, &weights, &trial.x);
                let tr = residual(model, problem, &bounds, &trial, &tv, &tg);
                if tr.norm(t) <= (1.0 - 0.01 * step) * r0 {
                    accepted = Some((trial, tv, tg));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((trial, tv, tg)) = accepted else {
            // With no dual feasible multipliers the residual cannot shrink;
            // a feasible ray of decreasing objective shows why.
            let far = &st.x + &dx * (UNBOUNDED_NORM / dx.amax().max(1e-300));
            if model.in_domain(&far) && problem.objective_value(&far) < problem.objective_value(&st.x) {
                return finish(far, SolveStatus::Unbounded, f64::INFINITY, steps);
            }
            // Rounding noise now dominates the residual; keep the current
            // point if it is close enough to optimal.
            let status = if converged(STALL_GAP_FACTOR) { SolveStatus::Optimal } else { SolveStatus::MaxIterations };
            return finish(st.x, status, eta, steps);
        };
        st = trial;
        values = tv;
        grads = tg;
        if st.x.amax() > UNBOUNDED_NORM {
            return finish(st.x, SolveStatus::Unbounded, f64::INFINITY, steps);
        }
    }
}

fn unconstrained(problem: &ConvexQP, x: DVector<f64>, steps: usize) -> Result<QpSolution, SolverError> {
    let n = problem.n;
    let mut h = DMatrix::zeros(n, n);
    problem.objective.form.add_hessian(1.0, &mut h);
    let g = problem.objective.gradient(&x);
    match h.clone().cholesky() {
        Some(ch) => {
            let x = &x - ch.solve(&g);
            Ok(QpSolution {
                objective: problem.objective_value(&x),
                x,
                status: SolveStatus::Optimal,
                gap: 0.0,
                newton_steps: steps + 1,
            })
        }
        None => {
            // Singular Hessian: bounded only if the gradient lies in its range.
            let svd = h.svd(true, true);
            let step = svd.solve(&g, 1e-12).map_err(|e| SolverError::InvalidProblem(e.to_string()))?;
            let x1 = &x - step;
            let residual = problem.objective.gradient(&x1).amax();
            let status =
                if residual <= 1e-9 * g.amax().max(1.0) { SolveStatus::Optimal } else { SolveStatus::Unbounded };
            Ok(QpSolution {
                objective: problem.objective_value(&x1),
                x: x1,
                status,
                gap: 0.0,
                newton_steps: steps + 1,
            })
        }
    }
}
