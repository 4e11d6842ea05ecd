//! Exact robust machinery used as ground truth: per-constraint pessimization
//! by a trust-region subproblem, robust feasibility verdicts and a
//! cutting-plane robust solver.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::det::{solve_det, SolveStatus, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, sym_eigen, Mat, Vector};
use crate::qcqp::{PEllipsoid, QcqpInstance, QuadConstraint, Theta, UncertaintySet};
use crate::wc::worst_case_a;

#[derive(Debug, Clone, PartialEq)]
pub struct TrsResult {
    pub u_star: Vector,
    pub worst_value: f64,
    /// `‖u*‖ = 1`.
    pub boundary: bool,
}

/// Minimizes `½uᵀBu + gᵀu` over `‖u‖ ≤ 1`.
///
/// Works in the eigenbasis of `B` and solves the secular equation
/// `1/‖u(ν)‖ = 1` with Newton steps safeguarded by bisection. The hard case
/// (g orthogonal to the lowest eigenspace) is completed along the lowest
/// eigenvector.
pub fn trust_region(b: &Mat, g: &Vector) -> Result<Vector> {
    let l = g.len();
    if l == 0 {
        return Ok(Vector::zeros(0));
    }
    let (beta, v) = sym_eigen(b)?;
    let gh = v.tr_mul(g);
    let scale = beta.amax().max(g.amax()).max(1.0);
    let gnorm = g.norm();
    let b1 = beta[0];

    if b1 > 0.0 {
        // interior Newton point if it fits
        let u = Vector::from_fn(l, |i, _| -gh[i] / beta[i]);
        if u.norm() <= 1.0 {
            return Ok(&v * u);
        }
    }
    let u_of = |nu: f64| Vector::from_fn(l, |i, _| -gh[i] / (beta[i] + nu));

    let tie = 1e-12 * scale;
    let low_space: Vec<usize> = (0..l).filter(|&i| beta[i] - b1 <= tie).collect();
    let g_low: f64 = low_space.iter().map(|&i| gh[i] * gh[i]).sum::<f64>().sqrt();
    let nu_min = (-b1).max(0.0);

    if g_low <= 1e-14 * scale {
        // possible hard case: evaluate the norm at ν = −β₁ without the low space
        let mut u = Vector::zeros(l);
        for i in 0..l {
            if !low_space.contains(&i) {
                u[i] = -gh[i] / (beta[i] + nu_min);
            }
        }
        let un = u.norm();
        if un <= 1.0 {
            if b1 >= 0.0 && gnorm == 0.0 {
                return Ok(Vector::zeros(l));
            }
            if b1 >= 0.0 {
                return Ok(&v * u);
            }
            let tau = (1.0 - un * un).max(0.0).sqrt();
            u[low_space[0]] += tau;
            return Ok(&v * u);
        }
    }

    // ‖u(ν)‖ = 1 with ν ∈ (ν_min, ν_min + ‖g‖]
    let mut lo = nu_min;
    let mut hi = nu_min + gnorm.max(f64::MIN_POSITIVE);
    let mut nu = hi;
    for _ in 0..200 {
        let u = u_of(nu);
        let un = u.norm();
        if !un.is_finite() {
            nu = 0.5 * (lo + hi);
            continue;
        }
        if un > 1.0 {
            lo = nu;
        } else {
            hi = nu;
        }
        if (un - 1.0).abs() <= 1e-14 || hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
        // Newton on 1/‖u‖ − 1: derivative of ‖u‖ is −Σ ĝ²/(β+ν)³ / ‖u‖
        let d3: f64 = (0..l).map(|i| gh[i] * gh[i] / (beta[i] + nu).powi(3)).sum();
        let dphi = d3 / (un * un * un);
        let step = (1.0 / un - 1.0) / dphi;
        let next = nu - step;
        nu = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
    }
    let u = u_of(nu);
    let un = u.norm();
    Ok(&v * (u / un.max(1.0)))
}

/// Exact maximum of the constraint value over a P-ellipsoid at fixed `x`.
pub fn trs_worst_case(set: &PEllipsoid, x: &Vector) -> Result<TrsResult> {
    if x.len() != set.n_vars() {
        return Err(Error::DimensionMismatch { what: "trs decision", expected: set.n_vars(), got: x.len() });
    }
    let l = set.len();
    let a = &set.p0 * x;
    let w = Mat::from_columns(&set.generators.iter().map(|g| &g.p * x).collect::<Vec<_>>());
    let e = Vector::from_iterator(l, set.generators.iter().map(|g| g.gamma + g.b.dot(x)));
    // φ(u) = uᵀWᵀWu + (2Wᵀa + e)ᵀu + φ(0)
    let lin = w.tr_mul(&a) * 2.0 + e;
    let hess = w.tr_mul(&w) * -2.0;
    let u = trust_region(&hess, &(-&lin))?;
    let u_slice: Vec<f64> = u.iter().copied().collect();
    let mut worst_value = set.value_at(x, &u_slice);
    let mut u_star = u;
    let nominal = set.value_at(x, &alloc::vec![0.0; l]);
    if nominal > worst_value {
        worst_value = nominal;
        u_star = Vector::zeros(l);
    }
    let boundary = (u_star.norm() - 1.0).abs() <= 1e-9;
    Ok(TrsResult { u_star, worst_value, boundary })
}

/// Worst-case value of every constraint at `x`.
pub fn worst_values(inst: &QcqpInstance, x: &Vector) -> Result<Vec<f64>> {
    if x.len() != inst.n_vars() {
        return Err(Error::DimensionMismatch { what: "decision", expected: inst.n_vars(), got: x.len() });
    }
    inst.constraints().iter().map(|con| Ok(worst_theta(con, x)?.1)).collect()
}

/// Worst-case realization of one constraint at `x` and its value.
fn worst_theta(con: &QuadConstraint, x: &Vector) -> Result<(Theta, f64)> {
    if let UncertaintySet::PEllipsoid(set) = &con.uncertainty {
        let r = trs_worst_case(set, x)?;
        let u: Vec<f64> = r.u_star.iter().copied().collect();
        return Ok((set.realize_theta(&u), r.worst_value));
    }
    let theta = worst_case_a(con, x).expect("case-A or certain constraint");
    let value = theta.eval(x);
    Ok((theta, value))
}

/// `(robust feasible at tol, per-constraint worst values)`.
pub fn robust_feasible(inst: &QcqpInstance, x: &Vector, tol: f64) -> Result<(bool, Vec<f64>)> {
    let vals = worst_values(inst, x)?;
    Ok((vals.iter().all(|v| *v <= tol), vals))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CuttingPlaneConfig {
    pub tol_cut: f64,
    pub max_cuts: usize,
    pub solver: SolverConfig,
}

impl Default for CuttingPlaneConfig {
    fn default() -> Self {
        Self { tol_cut: 1e-7, max_cuts: 200, solver: SolverConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustSolveReport {
    pub x_robust: Vector,
    pub objective: f64,
    pub cuts_added: usize,
    pub max_residual_violation: f64,
    pub iterations: usize,
    /// Objective after each master solve.
    pub objective_history: Vec<f64>,
    /// A violated realization coincided with an existing cut, or a master
    /// solve was accepted without an exact KKT point.
    pub degenerate: bool,
}

const DUPLICATE_TOL: f64 = 1e-10;
/// Residuals accepted from an unpolished master solve. Cuts converging on
/// the same scenario make the master degenerate near the end; feasibility
/// stays strict, stationarity only bounds the objective error.
const MASTER_FEAS_TOL: f64 = 1e-8;
const MASTER_STAT_TOL: f64 = 1e-4;

/// Robust QCQP by scenario cuts: solve the nominal problem plus all cuts,
/// pessimize every uncertain constraint at the incumbent, add violated
/// realizations as certain constraints, repeat.
pub fn cutting_plane_robust(inst: &QcqpInstance, cfg: &CuttingPlaneConfig) -> Result<RobustSolveReport> {
    let base = inst.nominal();
    let mut cuts: Vec<Theta> = Vec::new();
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut degenerate = false;
    loop {
        iterations += 1;
        let master = base.with_extra_constraints(cuts.iter().map(|t| QuadConstraint::new(t.a.clone(), t.b.clone(), t.gamma)))?;
        let sol = solve_det(&master, &cfg.solver)?;
        match sol.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => return Err(Error::Infeasible { slack: sol.max_constraint }),
            SolveStatus::MaxIter
                if sol.max_constraint <= MASTER_FEAS_TOL
                    && sol.stationarity_residual <= MASTER_STAT_TOL
                    && sol.comp_slack_residual <= MASTER_STAT_TOL =>
            {
                degenerate = true
            }
            SolveStatus::MaxIter => return Err(Error::MaxIter),
            SolveStatus::NumericalFailure => return Err(Error::NumericalFailure("master problem".into())),
        }
        let x = sol.x_star;
        history.push(sol.objective);

        let mut new_cuts = Vec::new();
        let mut max_violation = f64::NEG_INFINITY;
        for (i, con) in inst.constraints().iter().enumerate() {
            if con.uncertainty.is_certain() {
                max_violation = max_violation.max(con.eval(&x));
                continue;
            }
            let (theta, value) = worst_theta(con, &x)?;
            max_violation = max_violation.max(value);
            if value > cfg.tol_cut {
                if cuts.iter().any(|c| c.max_abs_diff(&theta) <= DUPLICATE_TOL) {
                    degenerate = true;
                    continue;
                }
                let min_eig = min_eigenvalue(&theta.a)?;
                if min_eig < -crate::qcqp::PSD_TOL {
                    return Err(Error::NonConvexScenario { index: i, min_eig });
                }
                new_cuts.push(theta);
            }
        }
        let done = new_cuts.is_empty();
        if !done && cuts.len() + new_cuts.len() > cfg.max_cuts {
            return Err(Error::MaxIter);
        }
        if done {
            return Ok(RobustSolveReport {
                objective: sol.objective,
                x_robust: x,
                cuts_added: cuts.len(),
                max_residual_violation: max_violation,
                iterations,
                objective_history: history,
                degenerate,
            });
        }
        cuts.extend(new_cuts);
    }
}
