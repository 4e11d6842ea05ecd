//! Training loops: prediction → deterministic solve → worst case → loss,
//! and back through the same chain.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::det::{kkt_vjp, solve_det, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::oracle::robust_feasible;
use crate::pack::ParamPack;
use crate::predictor::{adam_step, AdamConfig, AdamState, ForwardCache, PredictorNet};
use crate::qcqp::{QcqpInstance, SetCase};
use crate::wc::{loss, loss_grad_x, rob2, rob2_a, Rob2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// A network maps contexts to surrogate parameters.
    Contextual,
    /// The surrogate parameters themselves are trained.
    SingleInstance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub loss_case: SetCase,
    /// Default `τ_i` / `λ_i` for every constraint.
    pub penalty: f64,
    /// Per-constraint override of `penalty`.
    pub penalty_coeffs: Option<Vec<f64>>,
    /// Multiplies the case-A coefficients; `-1` reproduces the literal
    /// negative-λ reading.
    pub penalty_sign: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub solver: SolverConfig,
    /// Evaluate robust feasibility every this many steps (0 = never).
    pub eval_every: usize,
    pub adam: AdamConfig,
    /// `δ` in `A = MᵀM + δI`.
    pub factor_jitter: f64,
    /// Tolerance of the robust feasibility oracle.
    pub feas_tol: f64,
    /// Replace the worst case by the observed parameters in the loss.
    pub vanilla_loss: bool,
    /// Read `x*` straight from the first `n` predicted values, skipping the
    /// solver (identity Jacobian).
    pub bypass: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::SingleInstance,
            loss_case: SetCase::P,
            penalty: 10.0,
            penalty_coeffs: None,
            penalty_sign: 1.0,
            steps: 200,
            batch_size: 10,
            seed: 0,
            solver: SolverConfig::default(),
            eval_every: 1,
            adam: AdamConfig::default(),
            factor_jitter: 1e-6,
            feas_tol: 1e-6,
            vanilla_loss: false,
            bypass: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.batch_size == 0 || !(self.adam.lr > 0.0) || self.factor_jitter < 0.0 || self.feas_tol < 0.0 {
            return Err(Error::InvalidConfig("batch size, learning rate and tolerances must be positive".into()));
        }
        if let Some(c) = &self.penalty_coeffs {
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig("penalty coefficients must be finite".into()));
            }
        }
        Ok(())
    }

    /// Effective penalty coefficients for `m` constraints.
    pub fn coefficients(&self, m: usize) -> Result<Vec<f64>> {
        let base = match &self.penalty_coeffs {
            Some(c) if c.len() != m => return Err(Error::DimensionMismatch { what: "penalty coefficients", expected: m, got: c.len() }),
            Some(c) => c.clone(),
            None => vec![self.penalty; m],
        };
        let case_a = self.loss_case == SetCase::A || self.vanilla_loss;
        Ok(if case_a { base.iter().map(|v| v * self.penalty_sign).collect() } else { base })
    }
}

/// One contextual sample: context and the observed (uncertain) instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub z: Vector,
    pub observed: QcqpInstance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub objective_term: f64,
    pub penalty_sum: f64,
    /// Observed objective at `x*`.
    pub objective: f64,
    /// `None` when not evaluated at this step.
    pub robust_feasible: Option<bool>,
    /// Share of evaluated samples that were robust feasible.
    pub feasible_fraction: f64,
    pub nondifferentiable: bool,
    pub repeated_eigenvalue: bool,
    /// Samples whose deterministic solve failed and were skipped.
    pub skipped: usize,
}

impl StepRecord {
    fn skipped(step: usize) -> Self {
        Self {
            step,
            loss: f64::NAN,
            objective_term: f64::NAN,
            penalty_sum: f64::NAN,
            objective: f64::NAN,
            robust_feasible: None,
            feasible_fraction: 0.0,
            nondifferentiable: false,
            repeated_eigenvalue: false,
            skipped: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestFeasible {
    pub x: Vector,
    pub objective: f64,
    pub step: usize,
    pub params: Vec<f64>,
}

/// What produces the surrogate parameters.
#[derive(Debug, Clone, Copy)]
pub enum Model<'a> {
    Net { net: &'a PredictorNet, z: &'a Vector },
    Params(&'a ParamPack),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// Gradient w.r.t. the model parameters; `None` if the step was skipped.
    pub grad: Option<Vec<f64>>,
    pub x_star: Option<Vector>,
    pub record: StepRecord,
}

/// Forward and backward pass of the full chain for one sample.
pub fn train_step(model: Model<'_>, observed: &QcqpInstance, template: &QcqpInstance, cfg: &TrainConfig, step: usize, evaluate: bool) -> Result<StepOutput> {
    let n = observed.n_vars();
    let coeffs = cfg.coefficients(observed.n_constraints())?;
    let (pack, cache): (ParamPack, Option<ForwardCache>) = match model {
        Model::Net { net, z } => {
            let (p, c) = net.forward(z)?;
            (p, Some(c))
        }
        Model::Params(p) => (p.clone(), None),
    };
    let backprop = |g: &[f64]| -> Result<Vec<f64>> {
        match (model, &cache) {
            (Model::Net { net, .. }, Some(c)) => net.backward(c, g),
            _ => Ok(g.to_vec()),
        }
    };

    let (x, sol_inst) = if cfg.bypass {
        if pack.values().len() < n {
            return Err(Error::DimensionMismatch { what: "bypass output", expected: n, got: pack.values().len() });
        }
        (Vector::from_column_slice(&pack.values()[..n]), None)
    } else {
        let inst_hat = pack.materialize(template, cfg.factor_jitter)?;
        let sol = solve_det(&inst_hat, &cfg.solver)?;
        if !sol.is_optimal() {
            return Ok(StepOutput { grad: None, x_star: None, record: StepRecord::skipped(step) });
        }
        (sol.x_star.clone(), Some((inst_hat, sol)))
    };

    let worst = if cfg.vanilla_loss { Rob2::A(rob2_a(&observed.nominal(), &x)?) } else { rob2(observed, &x, cfg.loss_case)? };
    let breakdown = loss(observed, &x, &worst, &coeffs)?;
    let lg = loss_grad_x(&breakdown, observed, &x, &worst)?;

    let mut nondifferentiable = false;
    let g_pack = match &sol_inst {
        None => {
            let mut g = vec![0.0; pack.values().len()];
            g[..n].copy_from_slice(lg.grad.as_slice());
            g
        }
        Some((inst_hat, sol)) => {
            let vjp = kkt_vjp(inst_hat, sol, &lg.grad, &cfg.solver)?;
            nondifferentiable = vjp.nondifferentiable_point;
            pack.pull_back(&vjp.grad)?
        }
    };
    let grad = backprop(&g_pack)?;

    let feasible = if evaluate { Some(robust_feasible(observed, &x, cfg.feas_tol)?.0) } else { None };
    let record = StepRecord {
        step,
        loss: breakdown.total,
        objective_term: breakdown.objective_term,
        penalty_sum: breakdown.penalty_sum(),
        objective: breakdown.objective_term,
        robust_feasible: feasible,
        feasible_fraction: if feasible == Some(true) { 1.0 } else { 0.0 },
        nondifferentiable,
        repeated_eigenvalue: lg.repeated_eigenvalue,
        skipped: 0,
    };
    Ok(StepOutput { grad: Some(grad), x_star: Some(x), record })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleFit {
    pub pack: ParamPack,
    pub best: Option<BestFeasible>,
    /// One record per step plus a final evaluation of the last parameters.
    pub records: Vec<StepRecord>,
}

/// Trains the surrogate parameters of a single instance with Adam, tracking
/// the best robust-feasible decision seen.
pub fn fit_single_instance(observed: &QcqpInstance, template: &QcqpInstance, init: ParamPack, cfg: &TrainConfig) -> Result<SingleFit> {
    cfg.validate()?;
    if cfg.mode != TrainMode::SingleInstance {
        return Err(Error::InvalidConfig("fit_single_instance needs SingleInstance mode".into()));
    }
    let mut pack = init;
    let mut adam = AdamState::new(pack.values().len(), cfg.adam.clone());
    let mut best: Option<BestFeasible> = None;
    let mut records = Vec::with_capacity(cfg.steps + 1);
    for step in 0..=cfg.steps {
        let evaluate = cfg.eval_every > 0 && (step % cfg.eval_every == 0 || step == cfg.steps);
        let out = train_step(Model::Params(&pack), observed, template, cfg, step, evaluate)?;
        if let (Some(true), Some(x)) = (out.record.robust_feasible, &out.x_star) {
            if best.as_ref().map_or(true, |b| out.record.objective < b.objective) {
                best = Some(BestFeasible { x: x.clone(), objective: out.record.objective, step, params: pack.values().to_vec() });
            }
        }
        records.push(out.record);
        if step == cfg.steps {
            break;
        }
        if let Some(g) = out.grad {
            adam_step(&mut adam, pack.values_mut(), &g)?;
        }
    }
    Ok(SingleFit { pack, best, records })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSample {
    pub x: Option<Vector>,
    pub objective: f64,
    pub robust_feasible: bool,
    pub nominal_feasible: bool,
    pub solved: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub samples: Vec<EvalSample>,
    pub robust_feasible_count: usize,
    pub nominal_feasible_count: usize,
    pub solved_count: usize,
    /// Mean observed objective over solved samples.
    pub mean_objective: f64,
}

/// Decisions of `net` on `samples`, checked against the observed instances.
pub fn evaluate(net: &PredictorNet, samples: &[Sample], template: &QcqpInstance, cfg: &TrainConfig) -> Result<EvalReport> {
    let per: Vec<EvalSample> = map_samples(samples, |s| {
        let (pack, _) = net.forward(&s.z)?;
        let inst_hat = pack.materialize(template, cfg.factor_jitter)?;
        let sol = solve_det(&inst_hat, &cfg.solver)?;
        if !sol.is_optimal() {
            return Ok(EvalSample { x: None, objective: f64::NAN, robust_feasible: false, nominal_feasible: false, solved: false });
        }
        let x = sol.x_star;
        let (robust, _) = robust_feasible(&s.observed, &x, cfg.feas_tol)?;
        let nominal = s.observed.max_violation(&x) <= cfg.feas_tol;
        let objective = s.observed.eval_objective(&x)?;
        Ok(EvalSample { x: Some(x), objective, robust_feasible: robust, nominal_feasible: nominal, solved: true })
    })?;
    let solved: Vec<&EvalSample> = per.iter().filter(|s| s.solved).collect();
    let mean_objective = if solved.is_empty() { f64::NAN } else { solved.iter().map(|s| s.objective).sum::<f64>() / solved.len() as f64 };
    Ok(EvalReport {
        robust_feasible_count: per.iter().filter(|s| s.robust_feasible).count(),
        nominal_feasible_count: per.iter().filter(|s| s.nominal_feasible).count(),
        solved_count: solved.len(),
        mean_objective,
        samples: per,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextualFit {
    pub net: PredictorNet,
    pub records: Vec<StepRecord>,
    pub eval: EvalReport,
}

/// Mini-batch Adam over summed per-sample gradients, then evaluation on
/// `test`.
pub fn fit_contextual(train: &[Sample], test: &[Sample], mut net: PredictorNet, template: &QcqpInstance, cfg: &TrainConfig) -> Result<ContextualFit> {
    cfg.validate()?;
    if cfg.mode != TrainMode::Contextual {
        return Err(Error::InvalidConfig("fit_contextual needs Contextual mode".into()));
    }
    if train.is_empty() {
        return Err(Error::InvalidConfig("empty training set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut adam = AdamState::new(net.n_params(), cfg.adam.clone());
    let mut records = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size.min(train.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(&train[order[cursor]]);
            cursor += 1;
        }
        let evaluate = cfg.eval_every > 0 && step % cfg.eval_every == 0;
        let outs = map_samples(&batch, |s| train_step(Model::Net { net: &net, z: &s.z }, &s.observed, template, cfg, step, evaluate))?;

        let mut grad = vec![0.0; net.n_params()];
        let mut rec = StepRecord { skipped: 0, ..StepRecord::skipped(step) };
        let (mut loss_sum, mut obj_sum, mut pen_sum, mut feasible, mut done) = (0.0, 0.0, 0.0, 0usize, 0usize);
        for out in &outs {
            let Some(g) = &out.grad else {
                rec.skipped += 1;
                continue;
            };
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
            done += 1;
            loss_sum += out.record.loss;
            obj_sum += out.record.objective;
            pen_sum += out.record.penalty_sum;
            feasible += usize::from(out.record.robust_feasible == Some(true));
            rec.nondifferentiable |= out.record.nondifferentiable;
            rec.repeated_eigenvalue |= out.record.repeated_eigenvalue;
        }
        if done > 0 {
            let k = done as f64;
            rec.loss = loss_sum / k;
            rec.objective_term = obj_sum / k;
            rec.objective = obj_sum / k;
            rec.penalty_sum = pen_sum / k;
            if evaluate {
                rec.feasible_fraction = feasible as f64 / k;
                rec.robust_feasible = Some(feasible == done);
            }
            let mut params = net.params();
            adam_step(&mut adam, &mut params, &grad)?;
            net.set_params(&params)?;
        }
        records.push(rec);
    }
    let eval = evaluate(&net, test, template, cfg)?;
    Ok(ContextualFit { net, records, eval })
}

#[cfg(feature = "parallel")]
fn map_samples<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> Result<U> + Sync + Send) -> Result<Vec<U>> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_samples<T, U>(items: &[T], f: impl Fn(&T) -> Result<U>) -> Result<Vec<U>> {
    items.iter().map(f).collect()
}
