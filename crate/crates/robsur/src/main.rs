use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use robsur::error::{AppError, AppResult};
use robsur::exp1::{run_exp1, Exp1Config, GapRow};
use robsur::exp2::{run_exp2, run_exp2_arm, ArmReport, Exp2Config};
use robsur::gradsuite::{end_to_end_suite, vjp_suite, SuiteReport};
use robsur::io::{self, DetSolutionJson, RobustSolveJson, RunManifest};
use robsur_core::det::{solve_det, SolverConfig};
use robsur_core::linalg::Vector;
use robsur_core::oracle::{cutting_plane_robust, worst_values, CuttingPlaneConfig};
use robsur_core::qcqp::{QcqpInstance, SetCase, UncertaintySet};
use robsur_core::wc::{certify, CertConfig};

#[derive(Parser)]
#[command(name = "robsur", version, about = "Deterministic surrogates for robust QCQPs")]
struct Cli {
    /// JSON config file for the experiment subcommands.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worst-case treatment; must match the uncertainty sets in use.
    #[arg(long, global = true, value_enum)]
    loss_case: Option<LossCase>,
    /// Train with the plain decision loss (no worst-case penalty).
    #[arg(long, global = true)]
    ablation_vanilla_loss: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LossCase {
    P,
    A,
}

impl LossCase {
    fn set_case(self) -> SetCase {
        match self {
            LossCase::P => SetCase::P,
            LossCase::A => SetCase::A,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Surrogate vs robust optimum on random factor-ellipsoid instances.
    Exp1,
    /// Contextual portfolio problem, robust loss vs decision loss.
    Exp2,
    /// Solve one instance file.
    Solve {
        instance: PathBuf,
        /// Robust optimum by cutting planes instead of the nominal problem.
        #[arg(long)]
        robust: bool,
        /// Print one JSON line per barrier iteration (or master solve) to stderr.
        #[arg(long)]
        trace: bool,
    },
    /// Worst-case report of an instance at a fixed decision.
    Pessimize {
        instance: PathBuf,
        /// JSON file holding the decision: an array, or an object with an `x` field.
        #[arg(long = "x")]
        x: PathBuf,
    },
    /// Finite-difference gradient suites.
    CheckGrads {
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long, default_value_t = 30)]
        end_to_end_instances: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> AppResult<u8> {
    if cli.ablation_vanilla_loss && !matches!(cli.command, Command::Exp2) {
        return Err(AppError::Config("--ablation-vanilla-loss only applies to exp2".into()));
    }
    match &cli.command {
        Command::Exp1 => cmd_exp1(cli),
        Command::Exp2 => cmd_exp2(cli),
        Command::Solve { instance, robust, trace } => cmd_solve(cli, instance, *robust, *trace),
        Command::Pessimize { instance, x } => cmd_pessimize(cli, instance, x),
        Command::CheckGrads { instances, end_to_end_instances } => cmd_check_grads(cli, *instances, *end_to_end_instances),
    }
}

fn require_case(cli: &Cli, expected: SetCase, what: &str) -> AppResult<()> {
    match cli.loss_case {
        Some(c) if c.set_case() != expected => Err(AppError::Config(format!("{what} uses case-{expected:?} uncertainty sets; --loss-case does not match"))),
        _ => Ok(()),
    }
}

fn out_dir(cli: &Cli) -> AppResult<Option<&Path>> {
    if let Some(dir) = &cli.out {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    Ok(cli.out.as_deref())
}

fn print_json<T: Serialize>(value: &T) -> AppResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| AppError::Format(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn cmd_exp1(cli: &Cli) -> AppResult<u8> {
    let mut cfg: Exp1Config = io::read_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    require_case(cli, SetCase::P, "exp1")?;
    let out = out_dir(cli)?;
    let table = run_exp1(&cfg)?;

    let mut manifest = RunManifest::new("exp1", cfg.seed, &cfg)?;
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    let mut failed = 0;
    for o in &table.outcomes {
        match (&o.row, &o.error) {
            (Some(row), _) => rows.push(row.clone()),
            (None, err) => {
                failed += 1;
                manifest.warnings.push(format!("size {}: {}", o.size, err.as_deref().unwrap_or("failed")));
                rows.push(GapRow { size: o.size, rc_opt: f64::NAN, sur_opt: f64::NAN, rel_gap: f64::NAN });
            }
        }
        timings.push(json!({
            "size": o.size,
            "cutting_plane_seconds": o.robust_seconds,
            "cuts": o.robust_cuts,
            "surrogate_solve_seconds": o.surrogate_solve_seconds,
            "training_seconds": o.surrogate_seconds,
            "best_step": o.best.as_ref().map(|b| b.step),
        }));
    }
    manifest.notes.push("failed sizes appear in gap_table.csv with NaN entries".into());

    if let Some(dir) = out {
        io::write_gap_table(io::create_file(dir, "gap_table.csv")?, &rows)?;
        manifest.outputs.push("gap_table.csv".into());
        for o in &table.outcomes {
            let name = format!("steps_size{}.csv", o.size);
            io::write_step_records(io::create_file(dir, &name)?, &o.records)?;
            manifest.outputs.push(name);
            if let Some(best) = &o.best {
                let stem = format!("best_size{}", o.size);
                io::write_checkpoint(dir, &stem, "surrogate_pack", &[], &best.params)?;
                manifest.outputs.push(format!("{stem}.json"));
            }
        }
        io::write_json(&dir.join("timings.json"), &timings)?;
        manifest.outputs.push("timings.json".into());
        io::write_json(&dir.join("manifest.json"), &manifest)?;
    }
    let stdout = std::io::stdout();
    io::write_gap_table(stdout.lock(), &rows)?;
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    Ok(if failed > 0 { 3 } else { 0 })
}

fn arm_summary(arm: &ArmReport, n_test: usize) -> serde_json::Value {
    json!({
        "arm": if arm.vanilla { "vanilla" } else { "robust" },
        "n_test": n_test,
        "feasible": arm.feasible(),
        "robust_feasible": arm.eval.robust_feasible_count,
        "solved": arm.eval.solved_count,
        "mean_objective": arm.eval.mean_objective,
    })
}

fn cmd_exp2(cli: &Cli) -> AppResult<u8> {
    let mut cfg: Exp2Config = io::read_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    require_case(cli, SetCase::A, "exp2")?;
    let out = out_dir(cli)?;
    let n_test = cfg.n_samples - cfg.n_train();
    let arms = if cli.ablation_vanilla_loss {
        vec![run_exp2_arm(&cfg, true)?]
    } else {
        let r = run_exp2(&cfg)?;
        vec![r.robust, r.vanilla]
    };

    let mut manifest = RunManifest::new("exp2", cfg.seed, &cfg)?;
    manifest.notes.push(format!("covariance convention: {:?}", cfg.covariance_convention).to_lowercase());
    manifest.notes.push("feasible counts test decisions satisfying the realized covariance constraint".into());
    let summary: Vec<_> = arms.iter().map(|a| arm_summary(a, n_test)).collect();
    for a in &arms {
        if a.eval.solved_count < n_test {
            manifest.warnings.push(format!("{} arm: {} of {n_test} test problems not solved", if a.vanilla { "vanilla" } else { "robust" }, n_test - a.eval.solved_count));
        }
    }
    if let Some(dir) = out {
        io::write_json(&dir.join("report.json"), &summary)?;
        manifest.outputs.push("report.json".into());
        for a in &arms {
            let arm = if a.vanilla { "vanilla" } else { "robust" };
            let name = format!("steps_{arm}.csv");
            io::write_step_records(io::create_file(dir, &name)?, &a.records)?;
            manifest.outputs.push(name);
            io::write_checkpoint(dir, &format!("net_{arm}"), "predictor", &a.net.widths(), &a.net.params())?;
            manifest.outputs.push(format!("net_{arm}.json"));
        }
        io::write_json(&dir.join("manifest.json"), &manifest)?;
    }
    print_json(&summary)?;
    Ok(0)
}

fn cmd_solve(cli: &Cli, path: &Path, robust: bool, trace: bool) -> AppResult<u8> {
    let inst = io::read_instance(path)?;
    let out = out_dir(cli)?;
    let mut stderr = std::io::stderr().lock();
    if robust {
        let report = cutting_plane_robust(&inst, &CuttingPlaneConfig::default())?;
        if trace {
            for (k, obj) in report.objective_history.iter().enumerate() {
                let _ = writeln!(stderr, "{}", json!({ "master": k, "objective": obj }));
            }
        }
        let body = RobustSolveJson::from(&report);
        if let Some(dir) = out {
            io::write_json(&dir.join("robust_solution.json"), &body)?;
        }
        print_json(&body)?;
        return Ok(0);
    }
    let cfg = SolverConfig { trace, ..SolverConfig::default() };
    let sol = solve_det(&inst.nominal(), &cfg)?;
    for t in &sol.trace {
        let _ = writeln!(stderr, "{}", json!({ "outer": t.outer, "newton_steps": t.newton_steps, "t": t.t, "objective": t.objective, "gap": t.gap }));
    }
    let body = DetSolutionJson::from(&sol);
    if let Some(dir) = out {
        io::write_json(&dir.join("solution.json"), &body)?;
    }
    print_json(&body)?;
    Ok(if sol.is_optimal() { 0 } else { 3 })
}

fn read_decision(path: &Path, n: usize) -> AppResult<Vector> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| AppError::Format(format!("{}: {e}", path.display())))?;
    let arr = match &value {
        serde_json::Value::Object(map) => map.get("x").cloned().unwrap_or(serde_json::Value::Null),
        v => v.clone(),
    };
    let x: Vec<f64> = serde_json::from_value(arr).map_err(|e| AppError::Format(format!("{}: decision: {e}", path.display())))?;
    if x.len() != n {
        return Err(AppError::Format(format!("decision has {} entries, instance has {n} variables", x.len())));
    }
    Ok(Vector::from_vec(x))
}

fn cmd_pessimize(cli: &Cli, path: &Path, x_path: &Path) -> AppResult<u8> {
    let inst = io::read_instance(path)?;
    let x = read_decision(x_path, inst.n_vars())?;
    if let Some(c) = cli.loss_case {
        if let Some(i) = inst.constraints().iter().position(|con| con.uncertainty.case().is_some_and(|k| k != c.set_case())) {
            return Err(AppError::Config(format!("constraint {i} does not carry a case-{:?} set", c.set_case())));
        }
    }
    let report = pessimize_report(&inst, &x)?;
    if let Some(dir) = out_dir(cli)? {
        io::write_json(&dir.join("pessimize.json"), &report)?;
    }
    print_json(&report)?;
    Ok(0)
}

fn pessimize_report(inst: &QcqpInstance, x: &Vector) -> AppResult<serde_json::Value> {
    let worst = worst_values(inst, x)?;
    let mut rows = Vec::new();
    for (i, con) in inst.constraints().iter().enumerate() {
        let kind = match &con.uncertainty {
            UncertaintySet::None => "none",
            UncertaintySet::ThetaEllipsoid(_) => "theta_ellipsoid",
            UncertaintySet::FrobeniusBall { .. } => "frobenius_ball",
            UncertaintySet::PEllipsoid(_) => "p_ellipsoid",
        };
        let mut row = json!({ "index": i, "kind": kind, "nominal": con.eval(x), "worst": worst[i], "feasible": worst[i] <= 0.0 });
        if let UncertaintySet::PEllipsoid(set) = &con.uncertainty {
            let cert = certify(set, x, i, &CertConfig::default())?;
            row["certificate"] = json!({
                "l_star": cert.l_star,
                "lambda_min": cert.lambda_min(),
                "negative_mass": cert.negative_mass(),
                "feasible": cert.feasible,
                "unbounded": cert.unbounded,
            });
        }
        rows.push(row);
    }
    Ok(json!({ "robust_feasible": worst.iter().all(|v| *v <= 0.0), "constraints": rows }))
}

fn suite_line(r: &SuiteReport) -> String {
    format!(
        "{} {}: {} instances, {} checks, max rel err {:.3e} (tol {:.0e}), {} draws rejected",
        if r.passed() { "PASS" } else { "FAIL" },
        r.name,
        r.instances,
        r.checks,
        r.max_rel_err,
        r.tol,
        r.rejected
    )
}

fn cmd_check_grads(cli: &Cli, instances: usize, e2e: usize) -> AppResult<u8> {
    let seed = cli.seed.unwrap_or(0);
    let cases: Vec<SetCase> = match cli.loss_case {
        Some(c) => vec![c.set_case()],
        None => vec![SetCase::P, SetCase::A],
    };
    let reports = vec![vjp_suite(seed, instances, 1e-4)?, end_to_end_suite(seed, e2e, 1e-3, &cases)?];
    for r in &reports {
        println!("{}", suite_line(r));
    }
    if let Some(dir) = out_dir(cli)? {
        let body: Vec<_> = reports
            .iter()
            .map(|r| json!({ "name": r.name, "instances": r.instances, "checks": r.checks, "max_rel_err": r.max_rel_err, "tol": r.tol, "rejected": r.rejected, "passed": r.passed() }))
            .collect();
        io::write_json(&dir.join("grad_checks.json"), &body)?;
    }
    Ok(if reports.iter().all(SuiteReport::passed) { 0 } else { 3 })
}
