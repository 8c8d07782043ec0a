//! Primal-dual interior-point solver for small semidefinite programs
//!
//! ```text
//!   minimize    tr(C X)
//!   subject to  tr(A_i X) {=, ≥, ≤} b_i,   X ⪰ 0
//! ```
//!
//! Inequalities get a non-negative slack each, so internally the cone is
//! `S^n_+ × R^ℓ_+`. Iterations follow the infeasible path-following scheme
//! with the HKM search direction and a Mehrotra predictor-corrector step.
//!
//! Data matrices are stored as a sum of a dense part, a PSD low-rank part
//! `F Fᵀ` and a handful of sparse symmetric entries. The Schur complement
//! is assembled part by part, which keeps rank-deficient constraints (the
//! common case for beamforming relaxations) cheap.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::{SolveStatus, SolverError, MAX_SDP_ORDER};

const MAX_ITERATIONS: usize = 150;

/// Real symmetric matrix `dense + F Fᵀ + Σ sparse entries`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    dense: Option<DMatrix<f64>>,
    factor: Option<DMatrix<f64>>,
    /// `(i, j, v)` with `i ≤ j`; off-diagonal values apply to both triangles.
    entries: Vec<(usize, usize, f64)>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, dense: None, factor: None, entries: Vec::new() }
    }

    pub fn dense(m: DMatrix<f64>) -> Self {
        let n = m.nrows();
        Self { n, dense: Some(m), factor: None, entries: Vec::new() }
    }

    /// `F Fᵀ` for an `n × r` factor.
    pub fn low_rank(factor: DMatrix<f64>) -> Self {
        let n = factor.nrows();
        Self { n, dense: None, factor: Some(factor), entries: Vec::new() }
    }

    pub fn sparse(n: usize, entries: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut m = Self::zeros(n);
        for (i, j, v) in entries {
            m.add_entry(i, j, v);
        }
        m
    }

    /// Adds `v` at `(i, j)` and, when `i ≠ j`, at `(j, i)`.
    pub fn add_entry(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        if let Some(e) = self.entries.iter_mut().find(|e| e.0 == i && e.1 == j) {
            e.2 += v;
        } else {
            self.entries.push((i, j, v));
        }
    }

    pub fn with_entry(mut self, i: usize, j: usize, v: f64) -> Self {
        self.add_entry(i, j, v);
        self
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        self.add_scaled_to(1.0, &mut out);
        out
    }

    fn add_scaled_to(&self, scale: f64, out: &mut DMatrix<f64>) {
        if scale == 0.0 {
            return;
        }
        if let Some(d) = &self.dense {
            *out += d * scale;
        }
        if let Some(f) = &self.factor {
            out.gemm(scale, f, &f.transpose(), 1.0);
        }
        for &(i, j, v) in &self.entries {
            out[(i, j)] += scale * v;
            if i != j {
                out[(j, i)] += scale * v;
            }
        }
    }

    /// `tr(self · g)` for an arbitrary (not necessarily symmetric) `g`.
    pub fn inner(&self, g: &DMatrix<f64>) -> f64 {
        let mut s = 0.0;
        if let Some(d) = &self.dense {
            s += d.component_mul(&g.transpose()).sum();
        }
        if let Some(f) = &self.factor {
            s += (f.transpose() * g * f).trace();
        }
        for &(i, j, v) in &self.entries {
            s += if i == j { v * g[(i, i)] } else { v * (g[(i, j)] + g[(j, i)]) };
        }
        s
    }

    fn frobenius_norm(&self) -> f64 {
        self.to_dense().norm()
    }

    fn is_valid(&self) -> Result<(), String> {
        if let Some(d) = &self.dense {
            if d.nrows() != self.n || d.ncols() != self.n {
                return Err("dense part has wrong shape".into());
            }
            let asym = (d - d.transpose()).amax();
            if asym > 1e-12 * d.amax().max(1.0) {
                return Err("dense part is not symmetric".into());
            }
        }
        if let Some(f) = &self.factor {
            if f.nrows() != self.n {
                return Err("low-rank factor has wrong row count".into());
            }
        }
        if self.entries.iter().any(|&(i, j, v)| i >= self.n || j >= self.n || !v.is_finite()) {
            return Err("sparse entry out of range".into());
        }
        Ok(())
    }

    /// Sparse entries expanded to both triangles.
    fn expanded(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(2 * self.entries.len());
        for &(i, j, v) in &self.entries {
            out.push((i, j, v));
            if i != j {
                out.push((j, i, v));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Equal,
    GreaterEqual,
    LessEqual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpConstraint {
    pub matrix: SymMatrix,
    pub sense: Sense,
    pub rhs: f64,
}

/// `min tr(C X)` over symmetric PSD `X` subject to affine trace constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct SDProblem {
    pub n: usize,
    pub cost: SymMatrix,
    pub constraints: Vec<SdpConstraint>,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x: DMatrix<f64>,
    /// Multipliers; non-negative for `≥` rows, non-positive for `≤` rows.
    pub y: DVector<f64>,
    /// Dual slack `C − Σ y_i A_i`.
    pub z: DMatrix<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

impl SdpSolution {
    pub fn optimal(self) -> Result<Self, SolverError> {
        match self.status {
            SolveStatus::Optimal => Ok(self),
            s => Err(SolverError::NotOptimal(s)),
        }
    }
}

impl SDProblem {
    pub fn new(n: usize, cost: SymMatrix) -> Self {
        Self { n, cost, constraints: Vec::new() }
    }

    pub fn push(&mut self, matrix: SymMatrix, sense: Sense, rhs: f64) {
        self.constraints.push(SdpConstraint { matrix, sense, rhs });
    }

    /// Largest constraint violation of `x`, evaluated from the problem data
    /// (PSD-ness is not part of this number).
    pub fn max_violation(&self, x: &DMatrix<f64>) -> f64 {
        self.constraints
            .iter()
            .map(|c| {
                let v = c.matrix.inner(x) - c.rhs;
                match c.sense {
                    Sense::Equal => v.abs(),
                    Sense::GreaterEqual => (-v).max(0.0),
                    Sense::LessEqual => v.max(0.0),
                }
            })
            .fold(0.0, f64::max)
    }

    fn validate(&self) -> Result<(), SolverError> {
        if self.n > MAX_SDP_ORDER {
            return Err(SolverError::TooLarge { order: self.n, max: MAX_SDP_ORDER });
        }
        if self.n == 0 {
            return Err(SolverError::InvalidProblem("empty matrix variable".into()));
        }
        let check = |m: &SymMatrix, what: String| -> Result<(), SolverError> {
            if m.n != self.n {
                return Err(SolverError::InvalidProblem(format!("{what}: order {} ≠ {}", m.n, self.n)));
            }
            m.is_valid().map_err(|e| SolverError::InvalidProblem(format!("{what}: {e}")))
        };
        check(&self.cost, "cost".into())?;
        for (i, c) in self.constraints.iter().enumerate() {
            check(&c.matrix, format!("constraint {i}"))?;
            if !c.rhs.is_finite() {
                return Err(SolverError::InvalidProblem(format!("constraint {i}: non-finite rhs")));
            }
        }
        Ok(())
    }
}

/// Per-iteration cache used to assemble the Schur complement.
struct SchurCache<'a> {
    x: &'a DMatrix<f64>,
    zinv: &'a DMatrix<f64>,
    /// `X D Z⁻¹` per constraint with a dense part.
    dense_products: Vec<Option<DMatrix<f64>>>,
    /// `(X F, Z⁻¹ F)` per constraint with a low-rank part.
    factor_products: Vec<Option<(DMatrix<f64>, DMatrix<f64>)>>,
    expanded: &'a [Vec<(usize, usize, f64)>],
}

impl<'a> SchurCache<'a> {
    fn new(
        mats: &[&SymMatrix],
        x: &'a DMatrix<f64>,
        zinv: &'a DMatrix<f64>,
        expanded: &'a [Vec<(usize, usize, f64)>],
    ) -> Self {
        let dense_products = mats.iter().map(|a| a.dense.as_ref().map(|d| x * d * zinv)).collect();
        let factor_products = mats.iter().map(|a| a.factor.as_ref().map(|f| (x * f, zinv * f))).collect();
        Self { x, zinv, dense_products, factor_products, expanded }
    }

    /// `tr(A_i X A_j Z⁻¹)`.
    fn entry(&self, mats: &[&SymMatrix], i: usize, j: usize) -> f64 {
        let (ai, aj) = (mats[i], mats[j]);
        let mut s = 0.0;
        // Any pair involving a dense part goes through its cached product.
        if let Some(g) = &self.dense_products[i] {
            s += aj.inner(g);
        }
        if let Some(g) = &self.dense_products[j] {
            // tr(A_i' X D_j Z⁻¹) with A_i' = A_i minus its dense part.
            let mut lhs = ai.clone();
            lhs.dense = None;
            s += lhs.inner(g);
        }
        // Remaining pairs among low-rank and sparse parts.
        let ei = &self.expanded[i];
        let ej = &self.expanded[j];
        if let (Some((xf, zf)), Some(fj)) = (&self.factor_products[i], aj.factor.as_ref()) {
            let a = xf.transpose() * fj;
            let b = zf.transpose() * fj;
            s += a.component_mul(&b).sum();
        }
        if let Some((xf, zf)) = &self.factor_products[i] {
            s += factor_sparse(xf, zf, ej);
        }
        if let Some((xf, zf)) = &self.factor_products[j] {
            s += factor_sparse(xf, zf, ei);
        }
        for &(a, b, v) in ei {
            for &(c, d, w) in ej {
                s += v * w * self.x[(b, c)] * self.zinv[(d, a)];
            }
        }
        s
    }
}

/// `Σ_{(a,b,v)} v · (Z⁻¹F)[b,:] · (XF)[a,:]`.
fn factor_sparse(xf: &DMatrix<f64>, zf: &DMatrix<f64>, entries: &[(usize, usize, f64)]) -> f64 {
    entries.iter().map(|&(a, b, v)| v * zf.row(b).dot(&xf.row(a))).sum()
}

/// Largest `α ≥ 0` with `X + α dX ⪰ 0`, given the Cholesky factor of `X`.
fn max_psd_step(chol: &Cholesky<f64, Dyn>, dx: &DMatrix<f64>) -> f64 {
    let l = chol.l();
    let Some(left) = l.solve_lower_triangular(dx) else { return 0.0 };
    let Some(w) = l.solve_lower_triangular(&left.transpose()) else { return 0.0 };
    let w = 0.5 * (&w + w.transpose());
    let lmin = w.symmetric_eigenvalues().min();
    if lmin < 0.0 {
        -1.0 / lmin
    } else {
        f64::INFINITY
    }
}

fn max_orthant_step(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

struct Direction {
    dx: DMatrix<f64>,
    ds: DVector<f64>,
    dy: DVector<f64>,
    dz: DMatrix<f64>,
    dw: DVector<f64>,
}

/// Solves `tr(C X)` minimization to relative tolerance `tol` on the duality gap
/// and on both residuals.
pub fn solve_sdp(problem: &SDProblem, tol: f64) -> Result<SdpSolution, SolverError> {
    problem.validate()?;
    let n = problem.n;
    let m = problem.constraints.len();
    let mats: Vec<&SymMatrix> = problem.constraints.iter().map(|c| &c.matrix).collect();
    let expanded: Vec<Vec<(usize, usize, f64)>> = mats.iter().map(|a| a.expanded()).collect();
    let b = DVector::from_iterator(m, problem.constraints.iter().map(|c| c.rhs));

    // One slack per inequality: row i gets coefficient `slack_sign[k]` on slack k.
    let slack_rows: Vec<usize> =
        (0..m).filter(|&i| problem.constraints[i].sense != Sense::Equal).collect();
    let slack_sign: Vec<f64> = slack_rows
        .iter()
        .map(|&i| if problem.constraints[i].sense == Sense::GreaterEqual { -1.0 } else { 1.0 })
        .collect();
    let l = slack_rows.len();
    let nu = (n + l) as f64;

    let c_dense = problem.cost.to_dense();
    let norm_c = c_dense.norm();
    let norm_b = b.norm();
    let a_norms: Vec<f64> = mats.iter().map(|a| a.frobenius_norm()).collect();
    let sqrt_n = (n as f64).sqrt();
    let xi = (0..m)
        .map(|i| sqrt_n * (1.0 + b[i].abs()) / (1.0 + a_norms[i]))
        .fold(10.0f64.max(sqrt_n), f64::max);
    let eta = a_norms.iter().copied().fold(10.0f64.max(sqrt_n).max(norm_c), f64::max);

    let mut x = DMatrix::from_diagonal_element(n, n, xi);
    let mut s = DVector::from_element(l, xi);
    let mut y = DVector::zeros(m);
    let mut z = DMatrix::from_diagonal_element(n, n, eta);
    let mut w = DVector::from_element(l, eta);

    let apply_a = |t: &DMatrix<f64>, lp: &DVector<f64>| -> DVector<f64> {
        let mut out = DVector::from_iterator(m, mats.iter().map(|a| a.inner(t)));
        for (k, &i) in slack_rows.iter().enumerate() {
            out[i] += slack_sign[k] * lp[k];
        }
        out
    };
    let apply_at = |v: &DVector<f64>| -> (DMatrix<f64>, DVector<f64>) {
        let mut out = DMatrix::zeros(n, n);
        for (i, a) in mats.iter().enumerate() {
            a.add_scaled_to(v[i], &mut out);
        }
        let lp = DVector::from_iterator(l, slack_rows.iter().enumerate().map(|(k, &i)| slack_sign[k] * v[i]));
        (out, lp)
    };

    let mut gamma = 0.9;
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    let (mut pres, mut dres);
    loop {
        let (aty, aty_lp) = apply_at(&y);
        let rp = &b - apply_a(&x, &s);
        let rd = &c_dense - &aty - &z;
        let rd_lp = -&aty_lp - &w;
        let pobj = problem.cost.inner(&x);
        let dobj = b.dot(&y);
        let mu = (x.dot(&z) + s.dot(&w)) / nu;
        pres = rp.norm() / (1.0 + norm_b);
        dres = (rd.norm_squared() + rd_lp.norm_squared()).sqrt() / (1.0 + norm_c);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let compl = nu * mu / (1.0 + pobj.abs() + dobj.abs());
        if pres <= tol && dres <= tol && gap <= tol && compl <= tol {
            status = SolveStatus::Optimal;
            break;
        }
        // Divergence: a certificate direction dominates the iterate.
        let scale_x = x.norm() + s.norm();
        let scale_y = y.norm();
        if scale_y > 1e10 * (1.0 + norm_c) && dobj > 0.0 && dres * (1.0 + norm_c) < 1e-6 * scale_y {
            status = SolveStatus::Infeasible;
            break;
        }
        if scale_x > 1e10 * (1.0 + norm_b) && pobj < 0.0 && pres * (1.0 + norm_b) < 1e-6 * scale_x {
            status = SolveStatus::Unbounded;
            break;
        }
        if iterations >= MAX_ITERATIONS {
            break;
        }
        iterations += 1;

        let Some(z_chol) = z.clone().cholesky() else { break };
        let zinv = z_chol.inverse();
        let Some(x_chol) = x.clone().cholesky() else { break };
        let d_lp = s.component_div(&w);

        let cache = SchurCache::new(&mats, &x, &zinv, &expanded);
        let mut schur = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let v = cache.entry(&mats, i, j);
                schur[(i, j)] = v;
                schur[(j, i)] = v;
            }
        }
        for (k, &i) in slack_rows.iter().enumerate() {
            schur[(i, i)] += d_lp[k];
        }
        let schur_chol = {
            let diag_max = schur.diagonal().amax().max(1e-300);
            let mut reg = 0.0;
            loop {
                let mut mm = schur.clone();
                for i in 0..m {
                    mm[(i, i)] += reg;
                }
                if let Some(c) = mm.cholesky() {
                    break c;
                }
                reg = if reg == 0.0 { 1e-15 * diag_max } else { reg * 100.0 };
                if reg > 1e-2 * diag_max {
                    return Ok(finish(problem, x, y, z, SolveStatus::MaxIterations, iterations, pres, dres));
                }
            }
        };

        // Solves the Newton system for centring target `sigma_mu` and second-order
        // correction terms `corr` (= dXa dZa, dsa ∘ dwa).
        let solve = |sigma_mu: f64, corr: Option<(&DMatrix<f64>, &DVector<f64>)>| -> Direction {
            // Rc Z⁻¹ = σμ Z⁻¹ − X − corr·Z⁻¹ and rc = σμ − s∘w − corr.
            let mut rcz = &zinv * sigma_mu - &x;
            let mut rc_lp = DVector::from_fn(l, |k, _| sigma_mu - s[k] * w[k]);
            if let Some((cm, cv)) = corr {
                rcz -= cm * &zinv;
                rc_lp -= cv;
            }
            let t = &rcz - &x * &rd * &zinv;
            let t_lp = DVector::from_fn(l, |k, _| (rc_lp[k] - s[k] * rd_lp[k]) / w[k]);
            let rhs = &rp - apply_a(&t, &t_lp);
            let dy = schur_chol.solve(&rhs);
            let (atdy, atdy_lp) = apply_at(&dy);
            let dz = &rd - atdy;
            let dw = &rd_lp - atdy_lp;
            let mut dx = &rcz - &x * &dz * &zinv;
            symmetrize(&mut dx);
            let ds = DVector::from_fn(l, |k, _| (rc_lp[k] - s[k] * dw[k]) / w[k]);
            Direction { dx, ds, dy, dz, dw }
        };

        let step_lengths = |d: &Direction| -> (f64, f64) {
            let ap = max_psd_step(&x_chol, &d.dx).min(max_orthant_step(&s, &d.ds));
            let ad = max_psd_step(&z_chol, &d.dz).min(max_orthant_step(&w, &d.dw));
            (ap, ad)
        };

        let pred = solve(0.0, None);
        let (ap, ad) = step_lengths(&pred);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mu_aff = ((&x + &pred.dx * ap).dot(&(&z + &pred.dz * ad))
            + (&s + &pred.ds * ap).dot(&(&w + &pred.dw * ad)))
            / nu;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        let corr_m = &pred.dx * &pred.dz;
        let corr_v = pred.ds.component_mul(&pred.dw);
        let dir = solve(sigma * mu, Some((&corr_m, &corr_v)));
        let (ap, ad) = step_lengths(&dir);
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);
        x += &dir.dx * ap;
        symmetrize(&mut x);
        s += &dir.ds * ap;
        y += &dir.dy * ad;
        z += &dir.dz * ad;
        symmetrize(&mut z);
        w += &dir.dw * ad;
        gamma = 0.9 + 0.09 * ap.min(ad);
    }
    Ok(finish(problem, x, y, z, status, iterations, pres, dres))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    problem: &SDProblem,
    x: DMatrix<f64>,
    y: DVector<f64>,
    z: DMatrix<f64>,
    status: SolveStatus,
    iterations: usize,
    primal_residual: f64,
    dual_residual: f64,
) -> SdpSolution {
    let primal_objective = problem.cost.inner(&x);
    let dual_objective = problem.constraints.iter().zip(y.iter()).map(|(c, yi)| c.rhs * yi).sum();
    SdpSolution {
        x,
        y,
        z,
        primal_objective,
        dual_objective,
        status,
        iterations,
        primal_residual,
        dual_residual,
    }
}
