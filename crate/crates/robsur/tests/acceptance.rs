//! Acceptance criteria. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits nonzero on any failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use robsur::exp1::{gen_exp1, run_exp1, Exp1Config};
use robsur::exp2::{run_exp2, Exp2Config};
use robsur::gradsuite::{end_to_end_suite, vjp_suite};
use robsur::metrics::relative_gap;
use robsur_core::det::{solve_det, SolverConfig};
use robsur_core::gen::{random_convex_instance, random_p_ellipsoid, random_theta_ellipsoid, sample_unit_ball, sample_unit_sphere};
use robsur_core::linalg::{min_eigenvalue, Mat, Vector};
use robsur_core::oracle::{cutting_plane_robust, robust_feasible, trs_worst_case, CuttingPlaneConfig};
use robsur_core::pack::{PackLayout, ParamPack};
use robsur_core::qcqp::{QcqpInstance, QuadConstraint, SetCase, Theta, ThetaEllipsoid};
use robsur_core::train::{fit_single_instance, TrainConfig, TrainMode};
use robsur_core::wc::{certify, rob2_a, s_matrix, CertConfig};

type Outcome = Result<String, String>;

fn gvec(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> String {
    format!("{:.1}s of {limit_secs}s", elapsed.as_secs_f64())
}

fn gradient_fidelity() -> Outcome {
    let t = Instant::now();
    let vjp = vjp_suite(2024, 50, 1e-4).map_err(|e| e.to_string())?;
    let e2e = end_to_end_suite(2024, 30, 1e-3, &[SetCase::P, SetCase::A]).map_err(|e| e.to_string())?;
    let el = t.elapsed();
    check(
        vjp.passed() && vjp.instances == 50 && e2e.passed() && el <= Duration::from_secs(120),
        format!(
            "kkt_vjp max rel err {:.2e} over {} checks; train_step max rel err {:.2e} over {} checks; {}",
            vjp.max_rel_err,
            vjp.checks,
            e2e.max_rel_err,
            e2e.checks,
            within(el, 120)
        ),
    )
}

fn certificate_oracle_equivalence() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut disagreements = 0;
    let mut worst_band = 0.0f64;
    for trial in 0..200 {
        let n = rng.random_range(2..=5);
        let l = rng.random_range(1..=4);
        let set = random_p_ellipsoid(&mut rng, n, n, l, 0.5);
        let x = gvec(&mut rng, n) * (0.3 + (trial % 5) as f64 * 0.4);
        let cert = certify(&set, &x, 0, &CertConfig::default()).map_err(|e| e.to_string())?;
        let worst = trs_worst_case(&set, &x).map_err(|e| e.to_string())?.worst_value;
        if cert.feasible != (worst <= 0.0) {
            disagreements += 1;
            worst_band = worst_band.max(worst.abs());
        }
    }
    let el = t.elapsed();
    check(
        worst_band <= 1e-6 && el <= Duration::from_secs(60),
        format!("{disagreements} disagreements in 200 pairs, largest |worst value| among them {worst_band:.1e}; {}", within(el, 60)),
    )
}

/// Orthonormal basis of symmetric n×n matrices under the Frobenius inner product.
fn symmetric_basis(n: usize) -> Vec<Mat> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in i..n {
            let mut e = Mat::zeros(n, n);
            if i == j {
                e[(i, i)] = 1.0;
            } else {
                e[(i, j)] = std::f64::consts::FRAC_1_SQRT_2;
                e[(j, i)] = std::f64::consts::FRAC_1_SQRT_2;
            }
            out.push(e);
        }
    }
    out
}

/// Largest sampled value over 10⁴ draws (half interior, half on the sphere)
/// and whether every draw stays below `closed`.
fn sampled_max(rng: &mut ChaCha8Rng, dim: usize, closed: f64, value: impl Fn(&[f64]) -> f64) -> (f64, bool) {
    let mut best = f64::NEG_INFINITY;
    let mut dominated = true;
    for k in 0..10_000 {
        let u = if k % 2 == 0 { sample_unit_ball(rng, dim) } else { sample_unit_sphere(rng, dim) };
        let v = value(&u);
        dominated &= v <= closed + 1e-12;
        best = best.max(v);
    }
    (best, dominated)
}

/// Maximum over the unit disk by a 1000×1000 polar grid, refined by a
/// second grid over the neighbouring cells of the best point.
fn polar_grid_max(f: impl Fn(&[f64]) -> f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let eval = |r: f64, a: f64| f(&[r * a.cos(), r * a.sin()]);
    let (mut best, mut br, mut ba) = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..=1000 {
        let r = i as f64 / 1000.0;
        for j in 0..1000 {
            let a = j as f64 / 1000.0 * tau;
            let v = eval(r, a);
            if v > best {
                (best, br, ba) = (v, r, a);
            }
        }
    }
    let (dr, da) = (2.0 / 1000.0, 2.0 * tau / 1000.0);
    for i in 0..=1000 {
        let r = (br - dr + 2.0 * dr * i as f64 / 1000.0).clamp(0.0, 1.0);
        for j in 0..=1000 {
            best = best.max(eval(r, ba - da + 2.0 * da * j as f64 / 1000.0));
        }
    }
    best
}

fn pessimization_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut max_gap = 0.0f64;
    let mut dominated = true;
    for trial in 0..10 {
        let n = 2;
        let base = random_convex_instance(&mut rng, n, 1);
        let con = &base.constraints()[0];
        let x = gvec(&mut rng, n) * 0.7;
        let (closed, sampled) = if trial % 2 == 0 {
            let set = random_theta_ellipsoid(&mut rng, con.nominal(), 3, 0.3);
            let inst = QcqpInstance::new(base.objective_matrix().clone(), base.c().clone(), 0.0, vec![QuadConstraint::from_theta_ellipsoid(set.clone())])
                .map_err(|e| e.to_string())?;
            let closed = rob2_a(&inst, &x).map_err(|e| e.to_string())?[0].violation;
            (closed, sampled_max(&mut rng, 3, closed, |u| set.realize(u).eval(&x)))
        } else {
            let radius = 0.5;
            let inst = QcqpInstance::new(
                base.objective_matrix().clone(),
                base.c().clone(),
                0.0,
                vec![QuadConstraint::frobenius_ball(con.a.clone(), con.b.clone(), con.gamma, radius)],
            )
            .map_err(|e| e.to_string())?;
            let closed = rob2_a(&inst, &x).map_err(|e| e.to_string())?[0].violation;
            // the Frobenius ball written as an ellipsoid over a symmetric basis
            let gens: Vec<Theta> = symmetric_basis(n).into_iter().map(|e| Theta::new(e * radius, Vector::zeros(n), 0.0)).collect();
            let set = ThetaEllipsoid::new(con.nominal(), gens).map_err(|e| e.to_string())?;
            (closed, sampled_max(&mut rng, 3, closed, |u| set.realize(u).eval(&x)))
        };
        dominated &= sampled.1;
        max_gap = max_gap.max(closed - sampled.0);
    }

    let mut grid_err = 0.0f64;
    for l in [1usize, 2] {
        for _ in 0..3 {
            let set = random_p_ellipsoid(&mut rng, 3, 3, l, 0.8);
            let x = gvec(&mut rng, 3);
            let trs = trs_worst_case(&set, &x).map_err(|e| e.to_string())?.worst_value;
            let mut grid = f64::NEG_INFINITY;
            if l == 1 {
                for k in 0..=200_000 {
                    grid = grid.max(set.value_at(&x, &[-1.0 + 2.0 * k as f64 / 200_000.0]));
                }
            } else {
                grid = polar_grid_max(|u| set.value_at(&x, u));
            }
            if trs < grid - 1e-12 {
                return Err(format!("trust-region value {trs} below grid {grid}"));
            }
            grid_err = grid_err.max(trs - grid);
        }
    }
    check(
        dominated && max_gap <= 1e-3 && grid_err <= 1e-4,
        format!("closed form dominates all samples: {dominated}; closed minus sampled max ≤ {max_gap:.1e}; trust region vs grid ≤ {grid_err:.1e}"),
    )
}

fn experiment_one() -> Outcome {
    let cfg = Exp1Config { sizes: vec![10, 20, 30], ..Exp1Config::default() };
    let t = Instant::now();
    let insts = gen_exp1(&cfg).map_err(|e| e.to_string())?;
    let table = run_exp1(&cfg).map_err(|e| e.to_string())?;
    let el = t.elapsed();
    let mut parts = Vec::new();
    let mut ok = el <= Duration::from_secs(600 * 3);
    for (o, (_, inst)) in table.outcomes.iter().zip(&insts) {
        match (&o.row, &o.best) {
            (Some(row), Some(best)) => {
                let feasible = robust_feasible(inst, &best.x, 1e-6).map_err(|e| e.to_string())?.0;
                ok &= feasible && row.rel_gap <= 0.15 && o.robust_seconds + o.surrogate_seconds <= 600.0;
                parts.push(format!("n={} gap {:.4} (rc {:.4}, sur {:.4}, feasible {feasible})", row.size, row.rel_gap, row.rc_opt, row.sur_opt));
            }
            _ => {
                ok = false;
                parts.push(format!("n={} failed: {}", o.size, o.error.as_deref().unwrap_or("no feasible decision")));
            }
        }
    }
    check(ok, format!("{}; target band 0.05-0.07; {:.1}s total", parts.join(", "), el.as_secs_f64()))
}

fn metric_reconstruction() -> Outcome {
    // (size, RC, SUR, published gap)
    let rows = [
        (10, -0.1949, -0.1816, 0.0683),
        (20, -0.5704, -0.5402, 0.0529),
        (30, -0.5077, -0.4809, 0.0528),
        (40, -0.5866, -0.5479, 0.0660),
        (50, -0.6000, -0.5608, 0.0653),
    ];
    let mut max_err = 0.0f64;
    for (_, rc, sur, gap) in rows {
        max_err = max_err.max((relative_gap(sur, rc).map_err(|e| e.to_string())? - gap).abs());
    }
    check(max_err <= 1e-3, format!("largest deviation from the published gaps {max_err:.1e}"))
}

fn experiment_two() -> Outcome {
    let t = Instant::now();
    let (mut robust_feasible, mut vanilla_feasible, mut n_test) = (0, 0, 0);
    let (mut robust_obj, mut vanilla_obj) = (0.0, 0.0);
    let seeds = [0u64, 1, 2, 3, 4];
    for seed in seeds {
        let report = run_exp2(&Exp2Config { seed, ..Exp2Config::default() }).map_err(|e| e.to_string())?;
        robust_feasible += report.robust.feasible();
        vanilla_feasible += report.vanilla.feasible();
        n_test += report.n_test;
        robust_obj += report.robust.eval.mean_objective / seeds.len() as f64;
        vanilla_obj += report.vanilla.eval.mean_objective / seeds.len() as f64;
    }
    let el = t.elapsed();
    check(
        robust_feasible > vanilla_feasible && vanilla_obj < robust_obj && el <= Duration::from_secs(1200),
        format!(
            "feasible robust {robust_feasible}/{n_test} vs vanilla {vanilla_feasible}/{n_test}; mean objective robust {robust_obj:.4} vs vanilla {vanilla_obj:.4}; {}",
            within(el, 1200)
        ),
    )
}

fn p_instance(rng: &mut ChaCha8Rng, n: usize, m: usize, scale: f64) -> Result<QcqpInstance, String> {
    let base = random_convex_instance(rng, n, 0);
    let cons = (0..m).map(|_| QuadConstraint::from_p_ellipsoid(random_p_ellipsoid(rng, n, n, 2, scale))).collect();
    QcqpInstance::new(base.objective_matrix().clone(), base.c().clone(), base.q(), cons).map_err(|e| e.to_string())
}

fn property_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut failures = Vec::new();
    let cfg = SolverConfig::default();

    for _ in 0..40 {
        let n = rng.random_range(2..12);
        let m = rng.random_range(0..6);
        let inst = random_convex_instance(&mut rng, n, m);
        let sol = solve_det(&inst, &cfg).map_err(|e| e.to_string())?;
        let ok = sol.is_optimal()
            && sol.stationarity_residual <= 1e-8
            && sol.comp_slack_residual <= 1e-8
            && sol.max_constraint <= 1e-8
            && sol.mu.iter().all(|v| *v >= -1e-10)
            && sol.barrier_objectives.windows(2).all(|w| w[1] <= w[0] + 1e-10);
        if !ok {
            failures.push("kkt residuals");
            break;
        }
    }

    for _ in 0..200 {
        let set = random_p_ellipsoid(&mut rng, 3, 3, 2, 0.5);
        let x = gvec(&mut rng, 3);
        let (l1, l2) = (rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
        let h = |l: f64| min_eigenvalue(&s_matrix(&set, &x, l).expect("dimensions match")).expect("eigensolver converges");
        if h(0.5 * (l1 + l2)) < 0.5 * (h(l1) + h(l2)) - 1e-10 {
            failures.push("lambda_min concavity");
            break;
        }
    }

    for _ in 0..3 {
        let inst = p_instance(&mut rng, 4, 3, 0.4)?;
        let rep = cutting_plane_robust(&inst, &CuttingPlaneConfig::default()).map_err(|e| e.to_string())?;
        let nominal = solve_det(&inst.nominal(), &cfg).map_err(|e| e.to_string())?;
        if !rep.objective_history.windows(2).all(|w| w[1] >= w[0] - 1e-9) || rep.objective < nominal.objective - 1e-8 {
            failures.push("cutting-plane monotonicity");
            break;
        }
    }

    let observed = p_instance(&mut rng, 4, 2, 0.3)?;
    let layout = std::sync::Arc::new(PackLayout::linear_objective(4, 2));
    let init = ParamPack::from_instance(layout, &observed.nominal()).map_err(|e| e.to_string())?;
    let tcfg = TrainConfig { mode: TrainMode::SingleInstance, loss_case: SetCase::P, steps: 20, ..TrainConfig::default() };
    let off = TrainConfig { penalty: 0.0, ..tcfg.clone() };
    let fit_off = fit_single_instance(&observed, &observed.nominal(), init.clone(), &off).map_err(|e| e.to_string())?;
    if !fit_off.records.iter().filter(|r| r.skipped == 0).all(|r| r.loss == r.objective_term) {
        failures.push("penalty-off equivalence");
    }
    let a = fit_single_instance(&observed, &observed.nominal(), init.clone(), &tcfg).map_err(|e| e.to_string())?;
    let b = fit_single_instance(&observed, &observed.nominal(), init, &tcfg).map_err(|e| e.to_string())?;
    if a != b {
        failures.push("seed determinism");
    }
    let small = Exp1Config { sizes: vec![5, 7], ..Exp1Config::default() };
    if gen_exp1(&small).map_err(|e| e.to_string())? != gen_exp1(&small).map_err(|e| e.to_string())? {
        failures.push("generator determinism");
    }

    check(
        failures.is_empty(),
        if failures.is_empty() {
            "kkt residuals, barrier descent, lambda_min concavity, cutting-plane monotonicity, penalty-off equivalence, seed determinism".into()
        } else {
            format!("failed: {}", failures.join(", "))
        },
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("gradient fidelity", gradient_fidelity),
        ("certificate/oracle equivalence", certificate_oracle_equivalence),
        ("pessimization exactness", pessimization_exactness),
        ("experiment 1 analog", experiment_one),
        ("gap metric reconstruction", metric_reconstruction),
        ("experiment 2 analog", experiment_two),
        ("property suites", property_suites),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
