//! Random linear-objective instances with factor-ellipsoid uncertainty and
//! the surrogate-vs-robust gap table.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use robsur_core::det::SolverConfig;
use robsur_core::linalg::{frobenius, Mat, Vector};
use robsur_core::oracle::{cutting_plane_robust, robust_feasible, CuttingPlaneConfig};
use robsur_core::pack::{PackLayout, ParamPack};
use robsur_core::predictor::AdamConfig;
use robsur_core::qcqp::{PEllipsoid, PGenerator, QcqpInstance, QuadConstraint, SetCase};
use robsur_core::train::{fit_single_instance, BestFeasible, StepRecord, TrainConfig, TrainMode};
use robsur_core::{Error, Result};

use crate::metrics::relative_gap;

const MAX_REGENERATE: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exp1Config {
    pub sizes: Vec<usize>,
    pub n_constraints: usize,
    /// Generators per uncertainty set.
    pub l: usize,
    pub seed: u64,
    pub steps: usize,
    /// Generator size relative to the norm of the matching center part.
    pub gen_scale: f64,
    /// Std of the Gaussian perturbation applied to the observed parameters
    /// when initializing the surrogate.
    pub init_noise: f64,
    pub penalty: f64,
    pub lr: f64,
    pub factor_jitter: f64,
    pub max_cuts: usize,
}

impl Default for Exp1Config {
    fn default() -> Self {
        Self {
            sizes: vec![10, 20, 30, 40, 50],
            n_constraints: 5,
            l: 4,
            seed: 0,
            steps: 200,
            gen_scale: 0.1,
            init_noise: 0.1,
            penalty: 10.0,
            lr: 5e-3,
            factor_jitter: 1e-6,
            max_cuts: 500,
        }
    }
}

impl Exp1Config {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.contains(&0) || self.n_constraints == 0 {
            return Err(Error::InvalidConfig("sizes and n_constraints must be positive".into()));
        }
        if !(self.gen_scale >= 0.0) || !(self.init_noise >= 0.0) || !(self.penalty >= 0.0) || !(self.lr > 0.0) {
            return Err(Error::InvalidConfig("scales must be nonnegative and lr positive".into()));
        }
        Ok(())
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            mode: TrainMode::SingleInstance,
            loss_case: SetCase::P,
            penalty: self.penalty,
            steps: self.steps,
            seed: self.seed,
            factor_jitter: self.factor_jitter,
            adam: AdamConfig { lr: self.lr, ..AdamConfig::default() },
            ..TrainConfig::default()
        }
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Random direction with Frobenius norm `norm`.
fn scaled_direction<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, norm: f64) -> Mat {
    let d = Mat::from_fn(rows, cols, |_, _| gaussian(rng));
    let len = frobenius(&d);
    if len == 0.0 {
        d
    } else {
        d * (norm / len)
    }
}

fn random_set<R: Rng + ?Sized>(rng: &mut R, n: usize, l: usize, gen_scale: f64) -> Result<PEllipsoid> {
    let p0 = Mat::identity(n, n) + Mat::from_fn(n, n, |_, _| gaussian(rng)) * (0.5 / (n as f64).sqrt());
    let b0 = Vector::from_fn(n, |_, _| gaussian(rng)) * 0.3;
    let gamma0: f64 = -Uniform::new(0.5, 1.5).expect("valid range").sample(rng);
    let (p_norm, b_norm) = (frobenius(&p0), b0.norm());
    let generators = (0..l)
        .map(|_| {
            let p = scaled_direction(rng, n, n, gen_scale * p_norm);
            let b = scaled_direction(rng, n, 1, gen_scale * b_norm).column(0).into_owned();
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            PGenerator::new(p, b, sign * gen_scale * gamma0.abs())
        })
        .collect();
    PEllipsoid::new(p0, b0, gamma0, generators)
}

/// One instance of size `n`: `min cᵀx` with unit-norm `c` over
/// `n_constraints` factor-ellipsoid constraints.
pub fn gen_exp1_instance<R: Rng + ?Sized>(rng: &mut R, n: usize, cfg: &Exp1Config) -> Result<QcqpInstance> {
    for _ in 0..MAX_REGENERATE {
        let mut c = Vector::from_fn(n, |_, _| gaussian(rng));
        c /= c.norm();
        let cons = (0..cfg.n_constraints)
            .map(|_| random_set(rng, n, cfg.l, cfg.gen_scale).map(QuadConstraint::from_p_ellipsoid))
            .collect::<Result<Vec<_>>>()?;
        let inst = QcqpInstance::new(Mat::zeros(n, n), c, 0.0, cons)?;
        // the origin is the interior point we certify
        if robust_feasible(&inst, &Vector::zeros(n), -1e-9)?.0 {
            return Ok(inst);
        }
    }
    Err(Error::InvalidInstance("no robustly feasible interior point after retries".into()))
}

/// One instance per configured size, drawn from a single seeded stream.
pub fn gen_exp1(cfg: &Exp1Config) -> Result<Vec<(usize, QcqpInstance)>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    cfg.sizes.iter().map(|&n| Ok((n, gen_exp1_instance(&mut rng, n, cfg)?))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub size: usize,
    pub rc_opt: f64,
    pub sur_opt: f64,
    pub rel_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeOutcome {
    pub size: usize,
    /// `None` when this size failed; the message is in `error`.
    pub row: Option<GapRow>,
    pub error: Option<String>,
    pub best: Option<BestFeasible>,
    pub records: Vec<StepRecord>,
    pub robust_cuts: usize,
    pub robust_seconds: f64,
    pub surrogate_seconds: f64,
    /// Wall-clock of a single deterministic surrogate solve.
    pub surrogate_solve_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapTable {
    pub outcomes: Vec<SizeOutcome>,
}

impl GapTable {
    pub fn rows(&self) -> impl Iterator<Item = &GapRow> {
        self.outcomes.iter().filter_map(|o| o.row.as_ref())
    }
}

/// Surrogate initialization: observed parameters plus Gaussian noise.
pub fn initial_pack(inst: &QcqpInstance, noise: f64, seed: u64) -> Result<ParamPack> {
    let layout = Arc::new(PackLayout::linear_objective(inst.n_vars(), inst.n_constraints()));
    let mut pack = ParamPack::from_instance(layout, &inst.nominal())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in pack.values_mut() {
        *v += noise * gaussian(&mut rng);
    }
    Ok(pack)
}

/// Robust optimum, surrogate fit and gap for one instance.
pub fn run_size(size: usize, inst: &QcqpInstance, cfg: &Exp1Config, seed: u64) -> SizeOutcome {
    let mut out = SizeOutcome {
        size,
        row: None,
        error: None,
        best: None,
        records: Vec::new(),
        robust_cuts: 0,
        robust_seconds: 0.0,
        surrogate_seconds: 0.0,
        surrogate_solve_seconds: 0.0,
    };
    let result = (|| -> Result<()> {
        let t0 = Instant::now();
        let cp_cfg = CuttingPlaneConfig { max_cuts: cfg.max_cuts, ..CuttingPlaneConfig::default() };
        let robust = cutting_plane_robust(inst, &cp_cfg)?;
        out.robust_seconds = t0.elapsed().as_secs_f64();
        out.robust_cuts = robust.cuts_added;

        let init = initial_pack(inst, cfg.init_noise, seed)?;
        let t1 = Instant::now();
        let _ = robsur_core::det::solve_det(&init.materialize(&inst.nominal(), cfg.factor_jitter)?, &SolverConfig::default())?;
        out.surrogate_solve_seconds = t1.elapsed().as_secs_f64();

        let t2 = Instant::now();
        let template = inst.nominal();
        let fit = fit_single_instance(inst, &template, init, &cfg.train_config())?;
        out.surrogate_seconds = t2.elapsed().as_secs_f64();
        out.records = fit.records;
        let best = fit.best.ok_or_else(|| Error::NumericalFailure("no robust-feasible surrogate decision found".into()))?;
        out.row = Some(GapRow { size, rc_opt: robust.objective, sur_opt: best.objective, rel_gap: relative_gap(best.objective, robust.objective)? });
        out.best = Some(best);
        Ok(())
    })();
    out.error = result.err().map(|e| e.to_string());
    out
}

/// Every configured size; a failing size is reported in its row and does
/// not abort the table.
pub fn run_exp1(cfg: &Exp1Config) -> Result<GapTable> {
    let instances = gen_exp1(cfg)?;
    let job = |(k, (size, inst)): (usize, &(usize, QcqpInstance))| run_size(*size, inst, cfg, cfg.seed.wrapping_add(1 + k as u64));
    #[cfg(feature = "parallel")]
    let outcomes = {
        use rayon::prelude::*;
        instances.par_iter().enumerate().map(job).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes = instances.iter().enumerate().map(job).collect();
    Ok(GapTable { outcomes })
}
