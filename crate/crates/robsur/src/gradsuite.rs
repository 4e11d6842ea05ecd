//! Finite-difference gradient suites shared by `check-grads` and the
//! acceptance tests.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use robsur_core::det::{kkt_vjp, solve_det, KktSolution, SolverConfig};
use robsur_core::gen::{random_convex_instance, random_p_ellipsoid};
use robsur_core::gradcheck::central_difference;
use robsur_core::linalg::{symmetrize, Mat, Vector};
use robsur_core::pack::{InstanceGrad, PackLayout, ParamPack};
use robsur_core::qcqp::{QcqpInstance, QuadConstraint, SetCase, Theta};
use robsur_core::train::{train_step, Model, TrainConfig};
use robsur_core::wc::{rob2, Rob2};
use robsur_core::{Error, Result};

/// Multiplier / slack separation required of test instances.
pub const ACTIVE_MARGIN: f64 = 1e-3;
/// Distance from loss kinks required by the end-to-end suite.
pub const KINK_MARGIN: f64 = 1e-3;
const FD_STEP: f64 = 1e-5;
const MAX_DRAWS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub tol: f64,
    pub instances: usize,
    /// Directional comparisons performed.
    pub checks: usize,
    pub max_rel_err: f64,
    /// Draws rejected by the margin or differentiability filters.
    pub rejected: usize,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.instances > 0 && self.max_rel_err <= self.tol
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn rand_sym<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Mat {
    symmetrize(&Mat::from_fn(n, n, |_, _| gaussian(rng)))
}

fn rand_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| gaussian(rng))
}

/// One unit-norm direction per coefficient block: `Q, c, q, (A_i, b_i, γ_i)…`.
fn block_directions<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> Vec<(String, InstanceGrad)> {
    let mut out = raw_block_directions(rng, n, m);
    for (_, d) in &mut out {
        let norm = d.dot(d).sqrt();
        let scaled = InstanceGrad {
            q_mat: &d.q_mat / norm,
            c: &d.c / norm,
            q: d.q / norm,
            constraints: d.constraints.iter().map(|t| Theta::new(&t.a / norm, &t.b / norm, t.gamma / norm)).collect(),
        };
        *d = scaled;
    }
    out
}

fn raw_block_directions<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> Vec<(String, InstanceGrad)> {
    let mut out = Vec::new();
    let mut d = InstanceGrad::zeros(n, m);
    d.q_mat = rand_sym(rng, n);
    out.push(("Q".to_string(), d));
    let mut d = InstanceGrad::zeros(n, m);
    d.c = rand_vec(rng, n);
    out.push(("c".to_string(), d));
    let mut d = InstanceGrad::zeros(n, m);
    d.q = 1.0;
    out.push(("q".to_string(), d));
    for i in 0..m {
        let mut d = InstanceGrad::zeros(n, m);
        d.constraints[i] = Theta::new(rand_sym(rng, n), Vector::zeros(n), 0.0);
        out.push((format!("A{i}"), d));
        let mut d = InstanceGrad::zeros(n, m);
        d.constraints[i] = Theta::new(Mat::zeros(n, n), rand_vec(rng, n), 0.0);
        out.push((format!("b{i}"), d));
        let mut d = InstanceGrad::zeros(n, m);
        d.constraints[i] = Theta::new(Mat::zeros(n, n), Vector::zeros(n), gaussian(rng));
        out.push((format!("gamma{i}"), d));
    }
    out
}

/// Strictly convex instance whose optimum has every constraint either
/// clearly active (`μ ≥ margin`) or clearly inactive (`g ≤ −margin`).
pub fn margin_instance<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize, cfg: &SolverConfig) -> Result<(QcqpInstance, usize)> {
    for draw in 0..MAX_DRAWS {
        let inst = random_convex_instance(rng, n, m);
        let sol = solve_det(&inst, cfg)?;
        if !sol.is_optimal() {
            continue;
        }
        if has_margin(&inst, &sol) {
            return Ok((inst, draw));
        }
    }
    Err(Error::NumericalFailure("no instance met the active-set margin".into()))
}

fn has_margin(inst: &QcqpInstance, sol: &KktSolution) -> bool {
    (0..inst.n_constraints()).all(|i| {
        let g = inst.eval_constraint(i, &sol.x_star).unwrap_or(f64::NAN);
        sol.mu[i] >= ACTIVE_MARGIN || g <= -ACTIVE_MARGIN
    })
}

/// Away from the kinks of the worst-case loss: violations and eigenvalues
/// bounded away from zero, eigenvalues separated, at most one negative.
fn smooth_worst_case(rob: &Rob2) -> bool {
    match rob {
        Rob2::A(real) => real.iter().all(|r| r.violation.abs() > KINK_MARGIN),
        Rob2::P(certs) => certs.iter().all(|c| {
            let v = c.eigvals.as_slice();
            v.iter().filter(|e| **e < 0.0).count() <= 1
                && v.iter().all(|e| e.abs() > KINK_MARGIN)
                && v.windows(2).all(|w| w[1] - w[0] > KINK_MARGIN)
        }),
    }
}

fn scaled_rel_err(fd: f64, an: f64, floor: f64) -> f64 {
    (fd - an).abs() / fd.abs().max(an.abs()).max(floor)
}

/// `kkt_vjp` against central differences of `gxᵀ x*(θ + h·d)` along one
/// random direction per coefficient block.
pub fn vjp_suite(seed: u64, instances: usize, tol: f64) -> Result<SuiteReport> {
    let cfg = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport { name: "kkt_vjp", tol, instances: 0, checks: 0, max_rel_err: 0.0, rejected: 0 };
    for _ in 0..instances {
        let n = rng.random_range(3..=20);
        let m = rng.random_range(1..=5);
        let (inst, rejected) = margin_instance(&mut rng, n, m, &cfg)?;
        report.rejected += rejected;
        let sol = solve_det(&inst, &cfg)?;
        let gx = rand_vec(&mut rng, n);
        let vjp = kkt_vjp(&inst, &sol, &gx, &cfg)?;
        let scale = gx.norm() * (1.0 + sol.x_star.norm()).powi(2);
        for (_, dir) in block_directions(&mut rng, n, m) {
            let analytic = vjp.grad.dot(&dir);
            let mut failed = None;
            let fd = central_difference(
                |h| match dir.apply_to(&inst, h).and_then(|p| solve_det(&p, &cfg)) {
                    Ok(s) if s.is_optimal() => gx.dot(&s.x_star),
                    Ok(s) => {
                        failed = Some(Error::NumericalFailure(format!("perturbed solve ended with {:?}", s.status)));
                        f64::NAN
                    }
                    Err(e) => {
                        failed = Some(e);
                        f64::NAN
                    }
                },
                FD_STEP,
            );
            if let Some(e) = failed {
                return Err(e);
            }
            let floor = 1e-6 * scale;
            report.max_rel_err = report.max_rel_err.max(scaled_rel_err(fd, analytic, floor));
            report.checks += 1;
        }
        report.instances += 1;
    }
    Ok(report)
}

fn uncertain_instance<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize, case: SetCase) -> Result<QcqpInstance> {
    let base = random_convex_instance(rng, n, m);
    let cons: Vec<QuadConstraint> = match case {
        SetCase::A => base.constraints().iter().map(|c| QuadConstraint::frobenius_ball(c.a.clone(), c.b.clone(), c.gamma, 0.2)).collect(),
        SetCase::P => (0..m).map(|_| QuadConstraint::from_p_ellipsoid(random_p_ellipsoid(rng, n, n, 2, 0.2))).collect(),
    };
    QcqpInstance::new(base.objective_matrix().clone(), base.c().clone(), base.q(), cons)
}

/// Full-chain gradient (`solve → worst case → loss → VJP → pack`) against
/// central differences along random pack directions. Draws alternate over
/// `cases`.
pub fn end_to_end_suite(seed: u64, instances: usize, tol: f64, cases: &[SetCase]) -> Result<SuiteReport> {
    if cases.is_empty() {
        return Err(Error::InvalidConfig("no loss case selected".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport { name: "train_step", tol, instances: 0, checks: 0, max_rel_err: 0.0, rejected: 0 };
    let mut draws = 0;
    while report.instances < instances {
        draws += 1;
        if draws > MAX_DRAWS {
            return Err(Error::NumericalFailure("too few differentiable end-to-end configurations".into()));
        }
        let case = cases[draws % cases.len()];
        let n = rng.random_range(3..=8);
        let m = rng.random_range(1..=3);
        let observed = uncertain_instance(&mut rng, n, m, case)?;
        let template = observed.nominal();
        let layout = Arc::new(PackLayout::full(n, m));
        let pack = ParamPack::from_instance(layout.clone(), &template)?;
        let cfg = TrainConfig { loss_case: case, penalty: 3.0, ..TrainConfig::default() };
        let surrogate = pack.materialize(&template, cfg.factor_jitter)?;
        let sol = solve_det(&surrogate, &cfg.solver)?;
        let out = train_step(Model::Params(&pack), &observed, &template, &cfg, 0, false)?;
        let (Some(grad), Some(x)) = (out.grad, out.x_star) else {
            report.rejected += 1;
            continue;
        };
        let smooth = has_margin(&surrogate, &sol) && smooth_worst_case(&rob2(&observed, &x, case)?);
        if !smooth || out.record.nondifferentiable || out.record.repeated_eigenvalue || out.record.penalty_sum == 0.0 {
            report.rejected += 1;
            continue;
        }
        let loss_at = |v: &[f64]| -> f64 {
            let p = ParamPack::from_values(layout.clone(), v.to_vec()).expect("same layout");
            match train_step(Model::Params(&p), &observed, &template, &cfg, 0, false) {
                Ok(o) if o.grad.is_some() => o.record.loss,
                _ => f64::NAN,
            }
        };
        let mut errs = Vec::new();
        for _ in 0..3 {
            let mut d: Vec<f64> = (0..grad.len()).map(|_| gaussian(&mut rng)).collect();
            let dn = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            d.iter_mut().for_each(|v| *v /= dn);
            let analytic: f64 = grad.iter().zip(&d).map(|(g, v)| g * v).sum();
            let fd = central_difference(
                |h| {
                    let v: Vec<f64> = pack.values().iter().zip(&d).map(|(p, dv)| p + h * dv).collect();
                    loss_at(&v)
                },
                FD_STEP,
            );
            let gn = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
            errs.push(scaled_rel_err(fd, analytic, 1e-6 * gn));
        }
        if errs.iter().any(|e| !e.is_finite()) {
            report.rejected += 1;
            continue;
        }
        for e in errs {
            report.max_rel_err = report.max_rel_err.max(e);
            report.checks += 1;
        }
        report.instances += 1;
    }
    Ok(report)
}
