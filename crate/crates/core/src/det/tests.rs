use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::gen::{gaussian_mat, gaussian_vec, random_convex_instance};
use crate::gradcheck::rel_err;
use crate::pack::InstanceGrad;

fn e1(n: usize) -> Vector {
    let mut v = Vector::zeros(n);
    v[0] = 1.0;
    v
}

fn shifted_norm(n: usize, cons: Vec<QuadConstraint>) -> QcqpInstance {
    QcqpInstance::new(Mat::identity(n, n), e1(n) * -2.0, 0.0, cons).unwrap()
}

/// Maximizes the Lagrange dual by projected gradient ascent on `μ ≥ 0`.
/// Returns the dual value and the primal minimizer of the Lagrangian.
fn dual_ascent(inst: &QcqpInstance, step: f64, iters: usize) -> (f64, Vector) {
    let n = inst.n_vars();
    let m = inst.n_constraints();
    let mut mu = Vector::zeros(m);
    let lagr_min = |mu: &Vector| {
        let mut h = inst.objective_matrix() * 2.0;
        let mut lin = inst.c().clone();
        let mut cst = inst.q();
        for (i, con) in inst.constraints().iter().enumerate() {
            h += &con.a * (2.0 * mu[i]);
            lin += &con.b * mu[i];
            cst += mu[i] * con.gamma;
        }
        let x = h.clone().cholesky().unwrap().solve(&(-&lin));
        let val = quad_form(&(&h * 0.5), &x) + lin.dot(&x) + cst;
        (val, x)
    };
    for _ in 0..iters {
        let (_, x) = lagr_min(&mu);
        let mut moved = 0.0f64;
        for (i, con) in inst.constraints().iter().enumerate() {
            let next = (mu[i] + step * con.eval(&x)).max(0.0);
            moved = moved.max((next - mu[i]).abs());
            mu[i] = next;
        }
        if moved < 1e-14 {
            break;
        }
    }
    let _ = n;
    lagr_min(&mu)
}

#[test]
fn unconstrained_minimizer() {
    let inst = shifted_norm(3, vec![]);
    let sol = solve_det(&inst, &SolverConfig::default()).unwrap();
    assert!(sol.is_optimal());
    assert!((&sol.x_star - e1(3)).amax() < 1e-12);
    assert!((sol.objective + 1.0).abs() < 1e-12);
}

#[test]
fn ball_projection_and_multiplier() {
    let inst = shifted_norm(3, vec![QuadConstraint::new(Mat::identity(3, 3), Vector::zeros(3), -0.25)]);
    let sol = solve_det(&inst, &SolverConfig::default()).unwrap();
    assert!(sol.is_optimal(), "{:?}", sol.status);
    assert!((&sol.x_star - e1(3) * 0.5).amax() < 1e-8);
    assert!((sol.mu[0] - 1.0).abs() < 1e-7);
    assert_eq!(sol.active_flags, vec![true]);
}

#[test]
fn matches_dual_ascent_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..3 {
        let inst = random_convex_instance(&mut rng, 10, 5);
        let sol = solve_det(&inst, &SolverConfig::default()).unwrap();
        assert!(sol.is_optimal());
        let (dual, x_dual) = dual_ascent(&inst, 1e-3, 1_000_000);
        assert!((sol.objective - dual).abs() <= 1e-5, "{} vs {}", sol.objective, dual);
        assert!((&sol.x_star - &x_dual).amax() <= 1e-4);
    }
}

#[test]
fn kkt_residuals_and_sign_conditions() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (n, m) in [(2, 1), (5, 3), (8, 8), (15, 4)] {
        let inst = random_convex_instance(&mut rng, n, m);
        let sol = solve_det(&inst, &SolverConfig::default()).unwrap();
        assert!(sol.is_optimal());
        assert!(sol.stationarity_residual <= KKT_TOL);
        assert!(sol.comp_slack_residual <= KKT_TOL);
        assert!(sol.max_constraint <= KKT_TOL);
        assert!(sol.mu.iter().all(|v| *v >= -DUAL_TOL));
        let mut grad = inst.objective_grad(&sol.x_star);
        for (i, con) in inst.constraints().iter().enumerate() {
            grad += con.grad(&sol.x_star) * sol.mu[i];
        }
        assert!(grad.amax() <= 1e-8);
    }
}

#[test]
fn barrier_objectives_are_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inst = random_convex_instance(&mut rng, 6, 4);
    let sol = solve_det(&inst, &SolverConfig::default()).unwrap();
    let objs = &sol.barrier_objectives;
    assert!(objs.len() > 2);
    for w in objs.windows(2) {
        assert!(w[1] <= w[0] + 1e-9 * (1.0 + w[0].abs()), "{objs:?}");
    }
}

#[test]
fn objective_scaling_leaves_solution_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let inst = random_convex_instance(&mut rng, 5, 3);
    let cfg = SolverConfig::default();
    let a = solve_det(&inst, &cfg).unwrap();
    let b = solve_det(&inst.scaled_objective(7.0), &cfg).unwrap();
    assert!((&a.x_star - &b.x_star).amax() <= 1e-7);
    assert!((&a.mu * 7.0 - &b.mu).amax() <= 1e-6);
}

#[test]
fn contradictory_constraints_are_infeasible() {
    let n = 2;
    let cons = vec![
        QuadConstraint::linear(e1(n), 1.0),
        QuadConstraint::linear(-e1(n), 1.0),
    ];
    let inst = shifted_norm(n, cons);
    assert!(matches!(phase_one(&inst, &SolverConfig::default()), Err(Error::Infeasible { .. })));
    let sol = solve_det(&inst, &SolverConfig::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Infeasible);
    assert!(sol.objective.is_nan());
}

#[test]
fn phase_one_finds_interior_points() {
    let ball = shifted_norm(3, vec![QuadConstraint::new(Mat::identity(3, 3), Vector::zeros(3), -1.0)]);
    let x = phase_one_from(&ball, Vector::from_element(3, 10.0), &SolverConfig::default()).unwrap();
    assert!(x.norm() < 1.0);

    // ellipsoids around a known point away from the origin
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..5 {
        let n = 7;
        let center = gaussian_vec(&mut rng, n) * 3.0;
        let cons = (0..6)
            .map(|_| {
                let h = gaussian_mat(&mut rng, n, n);
                let a = h.transpose() * &h / n as f64 + Mat::identity(n, n) * 0.1;
                let radius = 0.2 + gaussian_vec(&mut rng, 1)[0].abs();
                // (x − x̂)ᵀA(x − x̂) − r ≤ 0
                let b = -(&a * &center) * 2.0;
                let gamma = quad_form(&a, &center) - radius;
                QuadConstraint::new(a, b, gamma)
            })
            .collect();
        let inst = shifted_norm(n, cons);
        assert!(inst.max_violation(&center) < 0.0);
        assert!(inst.max_violation(&Vector::zeros(n)) > 0.0);
        let x = phase_one(&inst, &SolverConfig::default()).unwrap();
        assert!(inst.max_violation(&x) < 0.0);
    }
}

fn loss_through_solver(inst: &QcqpInstance, w: &Vector) -> f64 {
    let sol = solve_det(inst, &SolverConfig::default()).unwrap();
    assert!(sol.is_optimal());
    w.dot(&sol.x_star)
}

#[test]
fn vjp_closed_form_unconstrained() {
    let n = 4;
    let c = Vector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
    let inst = QcqpInstance::new(Mat::identity(n, n) * 0.5, c.clone(), 0.0, vec![]).unwrap();
    let sol = solve_det(&inst, &SolverConfig::default()).unwrap();
    assert!((&sol.x_star + &c).amax() < 1e-12);
    let gx = Vector::from_vec(vec![0.3, 0.1, -1.0, 2.0]);
    let out = kkt_vjp(&inst, &sol, &gx, &SolverConfig::default()).unwrap();
    assert!((&out.grad.c + &gx).amax() < 1e-12);
    assert!(!out.nondifferentiable_point);
}

#[test]
fn vjp_ignores_inactive_constraints() {
    let inst = shifted_norm(2, vec![QuadConstraint::new(Mat::identity(2, 2), Vector::zeros(2), -100.0)]);
    let cfg = SolverConfig::default();
    let sol = solve_det(&inst, &cfg).unwrap();
    let out = kkt_vjp(&inst, &sol, &Vector::from_vec(vec![1.0, 1.0]), &cfg).unwrap();
    let t = &out.grad.constraints[0];
    assert_eq!(t.a.amax(), 0.0);
    assert_eq!(t.b.amax(), 0.0);
    assert_eq!(t.gamma, 0.0);
}

fn random_direction(rng: &mut ChaCha8Rng, n: usize, m: usize) -> InstanceGrad {
    let mut d = InstanceGrad::zeros(n, m);
    let s = gaussian_mat(rng, n, n);
    d.q_mat = (&s + s.transpose()) * 0.5;
    d.c = gaussian_vec(rng, n);
    for t in &mut d.constraints {
        let s = gaussian_mat(rng, n, n);
        t.a = (&s + s.transpose()) * 0.5;
        t.b = gaussian_vec(rng, n);
        t.gamma = gaussian_vec(rng, 1)[0];
    }
    d
}

#[test]
fn vjp_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let cfg = SolverConfig::default();
    let h = 1e-5;
    for _ in 0..4 {
        let (n, m) = (5, 3);
        let inst = random_convex_instance(&mut rng, n, m);
        let sol = solve_det(&inst, &cfg).unwrap();
        let w = gaussian_vec(&mut rng, n);
        let out = kkt_vjp(&inst, &sol, &w, &cfg).unwrap();
        if out.nondifferentiable_point {
            continue;
        }
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for _ in 0..6 {
            let d = random_direction(&mut rng, n, m);
            analytic.push(out.grad.dot(&d));
            let fp = loss_through_solver(&d.apply_to(&inst, h).unwrap(), &w);
            let fm = loss_through_solver(&d.apply_to(&inst, -h).unwrap(), &w);
            numeric.push((fp - fm) / (2.0 * h));
        }
        assert!(rel_err(&analytic, &numeric, 1e-6) <= 1e-4, "{analytic:?} {numeric:?}");
        // coordinate checks on c and γ
        for i in 0..m {
            let mut d = InstanceGrad::zeros(n, m);
            d.constraints[i].gamma = 1.0;
            let fp = loss_through_solver(&d.apply_to(&inst, h).unwrap(), &w);
            let fm = loss_through_solver(&d.apply_to(&inst, -h).unwrap(), &w);
            let num = (fp - fm) / (2.0 * h);
            let ana = out.grad.constraints[i].gamma;
            assert!((num - ana).abs() <= 1e-4 * num.abs().max(ana.abs()).max(1e-6), "γ{i}: {ana} vs {num}");
        }
    }
}

#[test]
fn vjp_is_adjoint_of_forward_sensitivity() {
    // ⟨VJP(w), d⟩ is linear in w: check it against two upstream vectors.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = SolverConfig::default();
    let inst = random_convex_instance(&mut rng, 6, 4);
    let sol = solve_det(&inst, &cfg).unwrap();
    let w1 = gaussian_vec(&mut rng, 6);
    let w2 = gaussian_vec(&mut rng, 6);
    let d = random_direction(&mut rng, 6, 4);
    let g1 = kkt_vjp(&inst, &sol, &w1, &cfg).unwrap().grad.dot(&d);
    let g2 = kkt_vjp(&inst, &sol, &w2, &cfg).unwrap().grad.dot(&d);
    let g12 = kkt_vjp(&inst, &sol, &(&w1 * 2.0 - &w2), &cfg).unwrap().grad.dot(&d);
    assert!((2.0 * g1 - g2 - g12).abs() <= 1e-9 * (1.0 + g12.abs()));
}

#[test]
fn vjp_rejects_non_optimal_solutions() {
    let inst = shifted_norm(2, vec![QuadConstraint::linear(e1(2), 1.0), QuadConstraint::linear(-e1(2), 1.0)]);
    let cfg = SolverConfig::default();
    let sol = solve_det(&inst, &cfg).unwrap();
    assert!(kkt_vjp(&inst, &sol, &Vector::zeros(2), &cfg).is_err());
}

