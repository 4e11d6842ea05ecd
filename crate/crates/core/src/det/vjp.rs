use alloc::vec::Vec;

use nalgebra::FullPivLU;

use super::{KktSolution, SolveStatus, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::pack::InstanceGrad;
use crate::qcqp::QcqpInstance;

/// Output of [`kkt_vjp`].
#[derive(Debug, Clone, PartialEq)]
pub struct VjpResult {
    pub grad: InstanceGrad,
    /// Some constraint had `|g_i| ≤ ε` and `μ_i ≤ ε` at once; the returned
    /// gradient is whatever the damped system produced.
    pub nondifferentiable_point: bool,
    /// Diagonal damping that was needed (0 when the plain system solved).
    pub damping: f64,
}

const PIVOT_RATIO: f64 = 1e-14;

fn solve_checked(m: &Mat, rhs: &Vector) -> Option<Vector> {
    let lu = FullPivLU::new(m.clone());
    let u = lu.u();
    let diag: Vec<f64> = (0..u.nrows().min(u.ncols())).map(|i| u[(i, i)].abs()).collect();
    let largest = diag.iter().copied().fold(0.0, f64::max);
    let smallest = diag.iter().copied().fold(f64::INFINITY, f64::min);
    if diag.is_empty() {
        return Some(Vector::zeros(0));
    }
    if !(largest > 0.0) || smallest <= PIVOT_RATIO * largest {
        return None;
    }
    let y = lu.solve(rhs)?;
    y.iter().all(|v| v.is_finite()).then_some(y)
}

/// Vector-Jacobian product through the solution map of the deterministic
/// QCQP.
///
/// With `R(x, μ) = (∇f + Σ μ_i ∇g_i, μ_i g_i)`, solves `R'ᵀ y = (gx, 0)` and
/// returns `−yᵀ ∂R/∂θ` for every coefficient `θ`. Constraints that are
/// clearly inactive (`μ_i ≤ ε`, `g_i < −ε`) are dropped and get exactly zero
/// gradient. Rows of strictly active constraints are divided by `μ_i`.
pub fn kkt_vjp(inst: &QcqpInstance, sol: &KktSolution, gx: &Vector, cfg: &SolverConfig) -> Result<VjpResult> {
    let eps_active = cfg.eps_active;
    let damping = cfg.kkt_damping;
    if sol.status != SolveStatus::Optimal {
        return Err(Error::NumericalFailure("kkt_vjp needs an optimal solution".into()));
    }
    let n = inst.n_vars();
    let m = inst.n_constraints();
    if gx.len() != n {
        return Err(Error::DimensionMismatch { what: "upstream gradient", expected: n, got: gx.len() });
    }
    if sol.x_star.len() != n || sol.mu.len() != m {
        return Err(Error::DimensionMismatch { what: "solution vs instance", expected: n + m, got: sol.x_star.len() + sol.mu.len() });
    }
    let x = &sol.x_star;
    let mu = &sol.mu;
    let cons = inst.constraints();
    let gvals: Vec<f64> = cons.iter().map(|c| c.eval(x)).collect();

    let mut kept = Vec::new();
    let mut strong = Vec::new();
    let mut nondiff = false;
    for i in 0..m {
        let is_strong = mu[i] > eps_active;
        let near = gvals[i] >= -eps_active;
        if is_strong || near {
            kept.push(i);
            strong.push(is_strong);
            nondiff |= !is_strong;
        }
    }
    let k = kept.len();
    let dim = n + k;

    let mut h = inst.objective_matrix() * 2.0 + Mat::identity(n, n) * (2.0 * sol.regularization);
    for &i in &kept {
        h += &cons[i].a * (2.0 * mu[i]);
    }
    // J' with scaled complementarity rows; we need its transpose
    let mut jac = Mat::zeros(dim, dim);
    jac.view_mut((0, 0), (n, n)).copy_from(&h);
    for (j, &i) in kept.iter().enumerate() {
        let grad = cons[i].grad(x);
        jac.view_mut((0, n + j), (n, 1)).copy_from(&grad);
        if strong[j] {
            jac.view_mut((n + j, 0), (1, n)).copy_from(&grad.transpose());
            jac[(n + j, n + j)] = gvals[i] / mu[i];
        } else {
            jac.view_mut((n + j, 0), (1, n)).copy_from(&(grad.transpose() * mu[i]));
            jac[(n + j, n + j)] = gvals[i];
        }
    }
    let jt = jac.transpose();
    let mut rhs = Vector::zeros(dim);
    rhs.rows_mut(0, n).copy_from(gx);

    let mut used = 0.0;
    let mut y = solve_checked(&jt, &rhs);
    if y.is_none() {
        for delta in [damping, 1e-6] {
            let damped = &jt + Mat::identity(dim, dim) * delta;
            y = solve_checked(&damped, &rhs);
            if y.is_some() {
                used = delta;
                nondiff = true;
                break;
            }
        }
    }
    let y = y.ok_or(Error::SingularKkt)?;
    let yx = y.rows(0, n).into_owned();

    let sym_outer = &yx * x.transpose() + x * yx.transpose();
    let xx = x * x.transpose();
    let mut grad = InstanceGrad::zeros(n, m);
    grad.q_mat = -&sym_outer;
    grad.c = -&yx;
    grad.q = 0.0;
    for (j, &i) in kept.iter().enumerate() {
        // w_i = μ_i · (multiplier component of y in unscaled form)
        let w = if strong[j] { y[n + j] } else { y[n + j] * mu[i] };
        let t = &mut grad.constraints[i];
        t.a = -(&sym_outer * mu[i]) - &xx * w;
        t.b = -(&yx * mu[i]) - x * w;
        t.gamma = -w;
    }
    Ok(VjpResult { grad, nondifferentiable_point: nondiff, damping: used })
}
