//! Deterministic QCQP layer: a log-barrier interior-point solver and the
//! implicit-differentiation backward pass through its KKT conditions.
//!
//! The solver follows the classical barrier method. Each outer iteration
//! minimizes `t·f(x) − Σ log(−g_i(x))` by damped Newton (step `1/(1+λ)` while
//! the Newton decrement `λ` exceeds 1/4, then full steps, always backtracking
//! to stay strictly feasible), then increases `t`. A strictly feasible start
//! comes from [`phase_one`]. Once the barrier gap is small the estimated
//! active set is polished by Newton on the equality-constrained KKT system.

mod vjp;

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, FullPivLU};
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{nnls, quad_form, Mat, Vector};
use crate::qcqp::{QcqpInstance, QuadConstraint};

pub use vjp::{kkt_vjp, VjpResult};

/// Residual bound for a solution to count as optimal.
pub const KKT_TOL: f64 = 1e-8;
/// Smallest multiplier accepted as nonnegative.
pub const DUAL_TOL: f64 = 1e-10;

const LOOSE_CENTERING: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Initial barrier weight.
    pub t_init: f64,
    /// Multiplicative barrier weight increase per outer iteration.
    pub t_growth: f64,
    /// Stop the barrier path once `m / t` falls below this.
    pub gap_tol: f64,
    /// Centering stops once `λ²/2` falls below this.
    pub newton_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Multiplier threshold for the active set.
    pub eps_active: f64,
    /// First damping tried when the KKT system is singular.
    pub kkt_damping: f64,
    /// Optional `ε‖x‖²` added to the objective (off by default).
    pub regularization: f64,
    /// Newton refinement on the estimated active set after the barrier path.
    pub polish: bool,
    /// Record one [`TraceEntry`] per outer iteration.
    pub trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            t_init: 1.0,
            t_growth: 20.0,
            gap_tol: 1e-9,
            newton_tol: 1e-13,
            max_outer: 60,
            max_inner: 100,
            eps_active: 1e-6,
            kkt_damping: 1e-10,
            regularization: 0.0,
            polish: true,
            trace: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.t_init, self.t_growth - 1.0, self.gap_tol, self.newton_tol, self.eps_active, self.kkt_damping];
        if positive.iter().any(|v| !(*v > 0.0)) || self.max_outer == 0 || self.max_inner == 0 || self.regularization < 0.0 {
            return Err(Error::InvalidConfig("solver parameters must be positive (growth > 1)".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIter,
    NumericalFailure,
}

/// One outer iteration of the barrier path.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub outer: usize,
    pub newton_steps: usize,
    pub t: f64,
    pub objective: f64,
    pub gap: f64,
}

/// Primal-dual output of [`solve_det`].
#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub x_star: Vector,
    pub mu: Vector,
    pub objective: f64,
    /// `‖∇f + Σ μ_i ∇g_i‖_∞`.
    pub stationarity_residual: f64,
    /// `max_i |μ_i g_i|`.
    pub comp_slack_residual: f64,
    /// `max_i g_i(x*)` (−∞ without constraints).
    pub max_constraint: f64,
    pub active_flags: Vec<bool>,
    pub status: SolveStatus,
    pub newton_steps: usize,
    /// Objective value after each outer iteration.
    pub barrier_objectives: Vec<f64>,
    /// `ε` of the `ε‖x‖²` regularizer the solution was computed with.
    pub regularization: f64,
    pub polished: bool,
    pub trace: Vec<TraceEntry>,
}

impl KktSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// `Ok(self)` when optimal, the matching error otherwise.
    pub fn into_optimal(self) -> Result<Self> {
        match self.status {
            SolveStatus::Optimal => Ok(self),
            SolveStatus::Infeasible => Err(Error::Infeasible { slack: self.max_constraint }),
            SolveStatus::MaxIter => Err(Error::MaxIter),
            SolveStatus::NumericalFailure => Err(Error::NumericalFailure("barrier solve failed".to_string())),
        }
    }

    fn failed(n: usize, m: usize, status: SolveStatus, max_constraint: f64, regularization: f64) -> Self {
        Self {
            x_star: Vector::zeros(n),
            mu: Vector::zeros(m),
            objective: f64::NAN,
            stationarity_residual: f64::INFINITY,
            comp_slack_residual: f64::INFINITY,
            max_constraint,
            active_flags: vec![false; m],
            status,
            newton_steps: 0,
            barrier_objectives: Vec::new(),
            regularization,
            polished: false,
            trace: Vec::new(),
        }
    }
}

/// Minimal view of a QCQP used by the barrier machinery; phase one builds its
/// own lifted problem in this form.
struct Problem<'a> {
    q_mat: Mat,
    c: Vector,
    q: f64,
    cons: &'a [QuadConstraint],
    linear: Vec<bool>,
}

impl<'a> Problem<'a> {
    fn from_instance(inst: &'a QcqpInstance, regularization: f64) -> Self {
        let n = inst.n_vars();
        let q_mat = inst.objective_matrix() + Mat::identity(n, n) * regularization;
        let linear = (0..inst.n_constraints()).map(|i| inst.is_linear_constraint(i)).collect();
        Self { q_mat, c: inst.c().clone(), q: inst.q(), cons: inst.constraints(), linear }
    }

    fn n(&self) -> usize {
        self.c.len()
    }

    fn m(&self) -> usize {
        self.cons.len()
    }

    fn objective(&self, x: &Vector) -> f64 {
        quad_form(&self.q_mat, x) + self.c.dot(x) + self.q
    }

    fn objective_grad(&self, x: &Vector) -> Vector {
        &self.q_mat * x * 2.0 + &self.c
    }

    fn g(&self, i: usize, x: &Vector) -> f64 {
        let con = &self.cons[i];
        if self.linear[i] {
            con.b.dot(x) + con.gamma
        } else {
            con.eval(x)
        }
    }

    fn grad_g(&self, i: usize, x: &Vector) -> Vector {
        let con = &self.cons[i];
        if self.linear[i] {
            con.b.clone()
        } else {
            con.grad(x)
        }
    }

    fn max_g(&self, x: &Vector) -> f64 {
        (0..self.m()).map(|i| self.g(i, x)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `t·f(x) − Σ log(−g_i(x))`, or `None` outside the interior.
    fn barrier_value(&self, x: &Vector, t: f64) -> Option<f64> {
        let mut v = t * self.objective(x);
        for i in 0..self.m() {
            let g = self.g(i, x);
            if !(g < 0.0) {
                return None;
            }
            v -= (-g).ln();
        }
        Some(v)
    }
}

struct PathOutcome {
    x: Vector,
    t: f64,
    newton_steps: usize,
    objectives: Vec<f64>,
    trace: Vec<TraceEntry>,
    status: SolveStatus,
}

/// Solves `H d = -grad` for a symmetric positive (semi)definite `H`,
/// adding diagonal damping when the factorization fails.
fn newton_direction(h: &Mat, grad: &Vector, damping: f64) -> Option<Vector> {
    if let Some(ch) = Cholesky::new(h.clone()) {
        let d = ch.solve(&(-grad));
        if d.iter().all(|v| v.is_finite()) {
            return Some(d);
        }
    }
    let scale = 1.0 + h.diagonal().amax();
    let n = h.nrows();
    let mut delta = damping.max(1e-14) * scale;
    for _ in 0..8 {
        let damped = h + Mat::identity(n, n) * delta;
        if let Some(ch) = Cholesky::new(damped) {
            let d = ch.solve(&(-grad));
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        delta *= 100.0;
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Centering {
    Converged,
    /// No feasible step left: the iterate sits at the roundoff floor.
    Stalled,
    /// Ran out of inner iterations; carries the last `λ²/2`.
    Exhausted(f64),
}

/// Barrier centering at weight `t` from a strictly feasible `x`.
/// Returns the number of Newton steps, or `None` on numerical failure.
fn center(p: &Problem<'_>, x: &mut Vector, t: f64, cfg: &SolverConfig) -> Option<(usize, Centering)> {
    let n = p.n();
    let m = p.m();
    let mut gvals = vec![0.0; m];
    let mut grads: Vec<Vector> = Vec::with_capacity(m);
    let mut last_decrement = f64::INFINITY;
    for step in 0..cfg.max_inner {
        grads.clear();
        for i in 0..m {
            gvals[i] = p.g(i, x);
            grads.push(p.grad_g(i, x));
        }
        let mut grad = p.objective_grad(x) * t;
        let mut h = &p.q_mat * (2.0 * t);
        for i in 0..m {
            let slack = -gvals[i];
            grad.axpy(1.0 / slack, &grads[i], 1.0);
            if !p.linear[i] {
                h += &p.cons[i].a * (2.0 / slack);
            }
            h.ger(1.0 / (slack * slack), &grads[i], &grads[i], 1.0);
        }
        let dir = newton_direction(&h, &grad, cfg.kkt_damping)?;
        let lambda_sq = -grad.dot(&dir);
        if !lambda_sq.is_finite() {
            return None;
        }
        last_decrement = lambda_sq.max(0.0) * 0.5;
        if last_decrement <= cfg.newton_tol {
            return Some((step, Centering::Converged));
        }
        // backtracking from the full step, never shorter than the damped
        // step 1/(1+λ) unless needed for interiority
        let lambda = lambda_sq.max(0.0).sqrt();
        let damped = if lambda > 0.25 { 1.0 / (1.0 + lambda) } else { 1.0 };
        let f0 = p.barrier_value(x, t)?;
        let mut alpha = 1.0;
        let mut trial = x.clone();
        let mut ok = false;
        for _ in 0..80 {
            trial.copy_from(x);
            trial.axpy(alpha, &dir, 1.0);
            if let Some(f1) = p.barrier_value(&trial, t) {
                if alpha <= damped || f1 <= f0 - 0.25 * alpha * lambda_sq {
                    ok = true;
                    break;
                }
            }
            alpha = if alpha > damped { (alpha * 0.5).max(damped) } else { alpha * 0.5 };
        }
        if !ok {
            // cannot move while staying interior: already at the roundoff floor
            return Some((step, Centering::Stalled));
        }
        if n > 0 {
            x.copy_from(&trial);
        }
    }
    Some((cfg.max_inner, Centering::Exhausted(last_decrement)))
}

/// Runs the barrier path from a strictly feasible `x0`. `stop` is consulted
/// after every centering (with whether that centering converged) and may end
/// the path early. An exhausted centering is resumed at the same `t`.
fn barrier_path(
    p: &Problem<'_>,
    x0: Vector,
    cfg: &SolverConfig,
    mut stop: impl FnMut(&Vector, f64, bool) -> bool,
) -> PathOutcome {
    let m = p.m();
    let mut x = x0;
    let mut t = cfg.t_init;
    let mut newton_steps = 0;
    let mut objectives = Vec::new();
    let mut trace = Vec::new();
    let mut status = SolveStatus::MaxIter;
    for outer in 0..cfg.max_outer {
        let Some((steps, state)) = center(p, &mut x, t, cfg) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        newton_steps += steps;
        let obj = p.objective(&x);
        objectives.push(obj);
        let gap = m as f64 / t;
        if cfg.trace {
            trace.push(TraceEntry { outer, newton_steps: steps, t, objective: obj, gap });
        }
        if !obj.is_finite() {
            status = SolveStatus::NumericalFailure;
            break;
        }
        // inside the quadratic-convergence region the residual is roundoff
        let centered = !matches!(state, Centering::Exhausted(dec) if dec > LOOSE_CENTERING);
        if stop(&x, t, centered) || (centered && gap <= cfg.gap_tol) {
            status = SolveStatus::Optimal;
            break;
        }
        if centered {
            t *= cfg.t_growth;
        }
    }
    PathOutcome { x, t, newton_steps, objectives, trace, status }
}

/// Finds a strictly feasible point by minimizing the auxiliary slack `s`
/// subject to `g_i(x) ≤ s` (inside a large ball, with `s ≥ −1`).
pub fn phase_one(inst: &QcqpInstance, cfg: &SolverConfig) -> Result<Vector> {
    phase_one_from(inst, Vector::zeros(inst.n_vars()), cfg)
}

pub fn phase_one_from(inst: &QcqpInstance, x0: Vector, cfg: &SolverConfig) -> Result<Vector> {
    cfg.validate()?;
    let n = inst.n_vars();
    if x0.len() != n {
        return Err(Error::DimensionMismatch { what: "phase-one start", expected: n, got: x0.len() });
    }
    let m = inst.n_constraints();
    let max0 = inst.max_violation(&x0);
    if m == 0 || max0 < 0.0 {
        return Ok(x0);
    }
    // lifted variables y = (x, s)
    let d = n + 1;
    let lift_quad = |a: &Mat| Mat::from_fn(d, d, |i, j| if i < n && j < n { a[(i, j)] } else { 0.0 });
    let mut lifted = Vec::with_capacity(m + 2);
    for con in inst.constraints() {
        let mut b = Vector::zeros(d);
        b.rows_mut(0, n).copy_from(&con.b);
        b[n] = -1.0;
        lifted.push(QuadConstraint::new(lift_quad(&con.a), b, con.gamma));
    }
    let radius = 1e4 * (1.0 + x0.norm());
    lifted.push(QuadConstraint::new(lift_quad(&Mat::identity(n, n)), Vector::zeros(d), -radius * radius));
    let mut lower = Vector::zeros(d);
    lower[n] = -1.0;
    lifted.push(QuadConstraint::new(Mat::zeros(d, d), lower, -1.0));
    let mut c = Vector::zeros(d);
    c[n] = 1.0;
    let mut linear: Vec<bool> = (0..m).map(|i| inst.is_linear_constraint(i)).collect();
    linear.push(false);
    linear.push(true);
    let p = Problem { q_mat: Mat::zeros(d, d), c, q: 0.0, cons: &lifted, linear };

    let mut y0 = Vector::zeros(d);
    y0.rows_mut(0, n).copy_from(&x0);
    y0[n] = max0.max(-0.5) + 1.0;

    let n_lifted = (m + 2) as f64;
    let mut verdict: Option<bool> = None;
    let out = barrier_path(&p, y0, cfg, |y, t, centered| {
        let x = y.rows(0, n).into_owned();
        let worst = inst.max_violation(&x);
        let s = y[n];
        let lower_bound = s - n_lifted / t;
        if worst < 0.0 && (worst <= -1e-6 || n_lifted / t <= 1e-10) {
            verdict = Some(true);
            return true;
        }
        if centered && (lower_bound > 0.0 || (n_lifted / t <= 1e-10 && s >= -1e-9)) {
            verdict = Some(false);
            return true;
        }
        false
    });
    let x = out.x.rows(0, n).into_owned();
    match verdict {
        Some(true) => Ok(x),
        Some(false) => Err(Error::Infeasible { slack: out.x[n] }),
        None if inst.max_violation(&x) < 0.0 => Ok(x),
        None if out.status == SolveStatus::NumericalFailure => Err(Error::NumericalFailure("phase one".to_string())),
        None => Err(Error::Infeasible { slack: out.x[n] }),
    }
}

/// Multipliers, residuals and active flags at `(x, mu)`.
fn assess(p: &Problem<'_>, x: &Vector, mu: &Vector, eps_active: f64) -> (f64, f64, f64, Vec<bool>) {
    let mut stat = p.objective_grad(x);
    let mut comp = 0.0f64;
    let mut max_g = f64::NEG_INFINITY;
    let mut active = Vec::with_capacity(p.m());
    for i in 0..p.m() {
        let gi = p.g(i, x);
        stat.axpy(mu[i], &p.grad_g(i, x), 1.0);
        comp = comp.max((mu[i] * gi).abs());
        max_g = max_g.max(gi);
        active.push(mu[i] >= eps_active);
    }
    (stat.amax(), comp, max_g, active)
}

/// Newton refinement of `(x, μ_K)` on `∇f + Σ_K μ_i ∇g_i = 0`, `g_K = 0`
/// for the constraints whose multiplier exceeds `threshold`.
/// Constraints with `μ_i > threshold`, largest multipliers first.
fn active_by_multiplier(mu: &Vector, threshold: f64) -> Vec<usize> {
    let mut active: Vec<usize> = (0..mu.len()).filter(|&i| mu[i] > threshold).collect();
    active.sort_by(|&a, &b| mu[b].total_cmp(&mu[a]));
    active
}

/// Support of the nonnegative least-squares multipliers for stationarity
/// restricted to `candidates`; its gradients are linearly independent.
fn nnls_support(p: &Problem<'_>, x: &Vector, candidates: &[usize]) -> Vec<usize> {
    let mut g = Mat::zeros(p.n(), candidates.len());
    for (c, &i) in candidates.iter().enumerate() {
        g.set_column(c, &p.grad_g(i, x));
    }
    let y = nnls(&g, &(-p.objective_grad(x)));
    candidates.iter().zip(y.iter()).filter(|(_, v)| **v > 0.0).map(|(i, _)| *i).collect()
}

fn polish(p: &Problem<'_>, x: &Vector, mu: &Vector, mut active: Vec<usize>) -> Option<(Vector, Vector)> {
    let n = p.n();
    active.sort_unstable();
    let k = active.len();
    let mut x = x.clone();
    let mut mu_k = Vector::from_iterator(k, active.iter().map(|&i| mu[i]));
    let residual = |x: &Vector, mu_k: &Vector| -> (Vector, f64) {
        let mut r = Vector::zeros(n + k);
        let mut stat = p.objective_grad(x);
        for (j, &i) in active.iter().enumerate() {
            stat.axpy(mu_k[j], &p.grad_g(i, x), 1.0);
            r[n + j] = p.g(i, x);
        }
        r.rows_mut(0, n).copy_from(&stat);
        let norm = r.amax();
        (r, norm)
    };
    let (mut r, mut norm) = residual(&x, &mu_k);
    let start = norm;
    for _ in 0..20 {
        if norm <= 1e-14 {
            break;
        }
        let mut kkt = Mat::zeros(n + k, n + k);
        let mut h = &p.q_mat * 2.0;
        for (j, &i) in active.iter().enumerate() {
            if !p.linear[i] {
                h += &p.cons[i].a * (2.0 * mu_k[j]);
            }
            let gi = p.grad_g(i, &x);
            kkt.view_mut((0, n + j), (n, 1)).copy_from(&gi);
            kkt.view_mut((n + j, 0), (1, n)).copy_from(&gi.transpose());
        }
        kkt.view_mut((0, 0), (n, n)).copy_from(&h);
        let lu = FullPivLU::new(kkt);
        let step = lu.solve(&(-&r))?;
        if step.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..8 {
            let x_new = &x + step.rows(0, n) * alpha;
            let mu_new = &mu_k + step.rows(n, k) * alpha;
            let (r_new, norm_new) = residual(&x_new, &mu_new);
            if norm_new < norm {
                accepted = Some((x_new, mu_new, r_new, norm_new));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, mu_new, r_new, norm_new)) = accepted else {
            break;
        };
        x = x_new;
        mu_k = mu_new;
        r = r_new;
        norm = norm_new;
    }
    if norm >= start || mu_k.iter().any(|v| *v <= 0.0) {
        return None;
    }
    let mut full_mu = Vector::zeros(p.m());
    for (j, &i) in active.iter().enumerate() {
        full_mu[i] = mu_k[j];
    }
    for i in 0..p.m() {
        if full_mu[i] == 0.0 && p.g(i, &x) > KKT_TOL {
            return None;
        }
    }
    Some((x, full_mu))
}

/// Solves the deterministic QCQP. Non-optimal outcomes are reported through
/// [`KktSolution::status`]; `Err` is reserved for malformed input.
pub fn solve_det(inst: &QcqpInstance, cfg: &SolverConfig) -> Result<KktSolution> {
    cfg.validate()?;
    let n = inst.n_vars();
    let m = inst.n_constraints();
    let p = Problem::from_instance(inst, cfg.regularization);

    if m == 0 {
        return Ok(solve_unconstrained(&p, cfg));
    }

    let x0 = match phase_one(inst, cfg) {
        Ok(x) => x,
        Err(Error::Infeasible { slack }) => return Ok(KktSolution::failed(n, m, SolveStatus::Infeasible, slack, cfg.regularization)),
        Err(Error::NumericalFailure(_)) => return Ok(KktSolution::failed(n, m, SolveStatus::NumericalFailure, f64::NAN, cfg.regularization)),
        Err(e) => return Err(e),
    };

    let out = barrier_path(&p, x0, cfg, |_, _, _| false);
    if out.status == SolveStatus::NumericalFailure {
        let mut sol = KktSolution::failed(n, m, SolveStatus::NumericalFailure, p.max_g(&out.x), cfg.regularization);
        sol.barrier_objectives = out.objectives;
        return Ok(sol);
    }
    let mut x = out.x;
    let mut mu = Vector::from_fn(m, |i, _| 1.0 / (out.t * -p.g(i, &x)));
    let mut polished = false;
    if cfg.polish {
        // near-degenerate constraints (e.g. almost parallel cuts) make the
        // full KKT matrix singular; the reduced candidates drop them
        let mu_max = mu.amax();
        let (s0, c0, _, _) = assess(&p, &x, &mu, cfg.eps_active);
        let mut best = s0.max(c0);
        let loose = active_by_multiplier(&mu, cfg.eps_active);
        // ratio test: on the central path μ_i·(−g_i) = 1/t, so the larger of
        // the two tells active from inactive even when both are small
        let ratio: Vec<usize> = loose.iter().copied().filter(|&i| mu[i] > -p.g(i, &x)).collect();
        let candidates = [
            nnls_support(&p, &x, &ratio),
            loose.clone(),
            nnls_support(&p, &x, &loose),
            active_by_multiplier(&mu, 1e-3 * mu_max),
        ];
        for active in candidates {
            if let Some((xp, mp)) = polish(&p, &x, &mu, active) {
                let (s1, c1, g1, _) = assess(&p, &xp, &mp, cfg.eps_active);
                let score = s1.max(c1).max(g1.max(0.0));
                if score <= best && g1 <= KKT_TOL {
                    best = score;
                    x = xp;
                    mu = mp;
                    polished = true;
                    if score <= KKT_TOL {
                        break;
                    }
                }
            }
        }
    }
    let (stationarity, comp, max_g, active_flags) = assess(&p, &x, &mu, cfg.eps_active);
    let optimal = out.status == SolveStatus::Optimal
        && stationarity <= KKT_TOL
        && comp <= KKT_TOL
        && max_g <= KKT_TOL
        && mu.iter().all(|v| *v >= -DUAL_TOL);
    Ok(KktSolution {
        objective: inst.eval_objective(&x)?,
        x_star: x,
        mu,
        stationarity_residual: stationarity,
        comp_slack_residual: comp,
        max_constraint: max_g,
        active_flags,
        status: if optimal { SolveStatus::Optimal } else { SolveStatus::MaxIter },
        newton_steps: out.newton_steps,
        barrier_objectives: out.objectives,
        regularization: cfg.regularization,
        polished,
        trace: out.trace,
    })
}

fn solve_unconstrained(p: &Problem<'_>, cfg: &SolverConfig) -> KktSolution {
    let n = p.n();
    let h = &p.q_mat * 2.0;
    let x = Cholesky::new(h.clone()).map(|ch| ch.solve(&(-&p.c))).or_else(|| FullPivLU::new(h).solve(&(-&p.c)));
    let Some(x) = x.filter(|x| x.iter().all(|v| v.is_finite())) else {
        return KktSolution::failed(n, 0, SolveStatus::NumericalFailure, f64::NEG_INFINITY, cfg.regularization);
    };
    let stationarity = p.objective_grad(&x).amax();
    let objective = quad_form(&(&p.q_mat - Mat::identity(n, n) * cfg.regularization), &x) + p.c.dot(&x) + p.q;
    KktSolution {
        x_star: x,
        mu: Vector::zeros(0),
        objective,
        stationarity_residual: stationarity,
        comp_slack_residual: 0.0,
        max_constraint: f64::NEG_INFINITY,
        active_flags: Vec::new(),
        status: if stationarity <= KKT_TOL { SolveStatus::Optimal } else { SolveStatus::NumericalFailure },
        newton_steps: 1,
        barrier_objectives: vec![objective],
        regularization: cfg.regularization,
        polished: false,
        trace: Vec::new(),
    }
}

#[cfg(test)]
mod tests;
