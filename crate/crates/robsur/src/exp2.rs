//! Contextual portfolio problem: covariances drawn from a conditional
//! Wishart distribution, Frobenius-ball uncertainty on the risk constraint.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use robsur_core::linalg::{min_eigenvalue, symmetrize, Mat, Vector};
use robsur_core::pack::{sqrt_factor, Field, PackLayout};
use robsur_core::predictor::{Activation, AdamConfig, PredictorNet};
use robsur_core::qcqp::{QcqpInstance, QuadConstraint, SetCase};
use robsur_core::train::{fit_contextual, EvalReport, Sample, StepRecord, TrainConfig, TrainMode};
use robsur_core::{Error, Result};

const MAX_RESAMPLE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceConvention {
    /// `Σ = D^{-1/2} C D^{-1/2}`.
    Paper,
    /// `Σ = D^{1/2} C D^{1/2}`.
    Standard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum CostSpec {
    /// Entries drawn from `U(lo, hi)` once per dataset.
    Uniform { lo: f64, hi: f64 },
    Fixed { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exp2Config {
    pub n_samples: usize,
    pub n_context: usize,
    pub wishart_df: usize,
    pub n_assets: usize,
    /// Risk budget `r` in `xᵀΣx ≤ r`.
    pub risk: f64,
    pub cost: CostSpec,
    /// Fraction of samples used for training.
    pub train_fraction: f64,
    pub radius: f64,
    pub seed: u64,
    pub covariance_convention: CovarianceConvention,
    pub hidden: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub penalty: f64,
    pub penalty_sign: f64,
    pub factor_jitter: f64,
}

impl Default for Exp2Config {
    fn default() -> Self {
        Self {
            n_samples: 100,
            n_context: 4,
            wishart_df: 50,
            n_assets: 5,
            risk: 0.3,
            cost: CostSpec::Uniform { lo: 0.5, hi: 1.5 },
            train_fraction: 0.7,
            radius: 1.0,
            seed: 0,
            covariance_convention: CovarianceConvention::Paper,
            hidden: 32,
            steps: 200,
            batch_size: 10,
            lr: 1e-2,
            penalty: 10.0,
            penalty_sign: 1.0,
            factor_jitter: 1e-6,
        }
    }
}

impl Exp2Config {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 || self.n_context == 0 || self.n_assets == 0 || self.hidden == 0 {
            return Err(Error::InvalidConfig("sample, context, asset and hidden counts must be positive".into()));
        }
        if self.wishart_df < self.n_assets {
            return Err(Error::InvalidConfig("wishart_df must be at least n_assets".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) || !(self.risk > 0.0) || !(self.radius >= 0.0) {
            return Err(Error::InvalidConfig("train_fraction in (0,1), risk > 0 and radius >= 0 required".into()));
        }
        match &self.cost {
            CostSpec::Uniform { lo, hi } if !(lo <= hi) || *lo < 0.0 => Err(Error::InvalidConfig("cost range must satisfy 0 <= lo <= hi".into())),
            CostSpec::Fixed { values } if values.len() != self.n_assets || values.iter().any(|v| *v < 0.0) => {
                Err(Error::InvalidConfig("fixed cost needs n_assets nonnegative entries".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn n_train(&self) -> usize {
        ((self.n_samples as f64 * self.train_fraction).round() as usize).clamp(1, self.n_samples - 1)
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Correlation-like matrix from random positive eigenvalues and a random
/// orthogonal basis, rescaled to unit diagonal.
pub fn random_correlation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Mat {
    let g = Mat::from_fn(n, n, |_, _| gaussian(rng));
    let q = g.qr().q();
    let eig = Uniform::new(0.1, 1.0).expect("valid range");
    let d = Mat::from_diagonal(&Vector::from_fn(n, |_, _| eig.sample(rng)));
    let m = symmetrize(&(&q * d * q.transpose()));
    let s = Vector::from_fn(n, |i, _| 1.0 / m[(i, i)].sqrt());
    symmetrize(&Mat::from_fn(n, n, |i, j| m[(i, j)] * s[i] * s[j]))
}

/// `Σ` from conditional variances `sigma2` and correlation `c`.
pub fn conditional_covariance(c: &Mat, sigma2: &Vector, convention: CovarianceConvention) -> Mat {
    let s = sigma2.map(|v| match convention {
        CovarianceConvention::Paper => 1.0 / v.sqrt(),
        CovarianceConvention::Standard => v.sqrt(),
    });
    symmetrize(&Mat::from_fn(c.nrows(), c.ncols(), |i, j| c[(i, j)] * s[i] * s[j]))
}

/// `W / df` with `W ~ Wishart(Σ, df)`, as a sum of `df` outer products.
pub fn sample_wishart_mean<R: Rng + ?Sized>(rng: &mut R, sigma: &Mat, df: usize) -> Result<Mat> {
    let n = sigma.nrows();
    let l = sigma.clone().cholesky().ok_or_else(|| Error::NumericalFailure("covariance is not positive definite".into()))?.l();
    let mut w = Mat::zeros(n, n);
    for _ in 0..df {
        let v = &l * Vector::from_fn(n, |_, _| gaussian(rng));
        w.ger(1.0, &v, &v, 1.0);
    }
    Ok(symmetrize(&(w / df as f64)))
}

/// `min −cᵀx` s.t. `xᵀΣx ≤ r` (Frobenius-ball uncertain), `1ᵀx ≤ 1`,
/// `x ≥ 0`.
pub fn portfolio_instance(sigma: &Mat, cost: &Vector, risk: f64, radius: f64) -> Result<QcqpInstance> {
    let n = cost.len();
    let mut cons = vec![QuadConstraint::frobenius_ball(sigma.clone(), Vector::zeros(n), -risk, radius)];
    cons.push(QuadConstraint::linear(Vector::repeat(n, 1.0), -1.0));
    for i in 0..n {
        let mut b = Vector::zeros(n);
        b[i] = -1.0;
        cons.push(QuadConstraint::linear(b, 0.0));
    }
    QcqpInstance::new(Mat::zeros(n, n), -cost, 0.0, cons)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp2Sample {
    pub z: Vector,
    pub sigma_conditional: Mat,
    pub sigma_realized: Mat,
    pub instance: QcqpInstance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp2Dataset {
    pub correlation: Mat,
    pub cost: Vector,
    /// `n_assets × n_context` row-stochastic mixing weights.
    pub weights: Mat,
    pub samples: Vec<Exp2Sample>,
    pub template: QcqpInstance,
}

pub fn gen_exp2(cfg: &Exp2Config) -> Result<Exp2Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_assets;
    let correlation = random_correlation(&mut rng, n);
    let cost = match &cfg.cost {
        CostSpec::Uniform { lo, hi } => {
            let d = Uniform::new_inclusive(*lo, *hi).expect("validated range");
            Vector::from_fn(n, |_, _| d.sample(&mut rng))
        }
        CostSpec::Fixed { values } => Vector::from_column_slice(values),
    };
    let unit = Uniform::new(0.0, 1.0).expect("valid range");
    let mut weights = Mat::from_fn(n, cfg.n_context, |_, _| unit.sample(&mut rng));
    for mut row in weights.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    let ctx = Uniform::new(0.1, 1.0).expect("valid range");
    let mut samples = Vec::with_capacity(cfg.n_samples);
    for _ in 0..cfg.n_samples {
        let z = Vector::from_fn(cfg.n_context, |_, _| ctx.sample(&mut rng));
        let sigma2 = &weights * &z;
        let sigma_conditional = conditional_covariance(&correlation, &sigma2, cfg.covariance_convention);
        let mut realized = None;
        for _ in 0..MAX_RESAMPLE {
            let w = sample_wishart_mean(&mut rng, &sigma_conditional, cfg.wishart_df)?;
            if min_eigenvalue(&w)? >= -1e-10 {
                realized = Some(w);
                break;
            }
        }
        let sigma_realized = realized.ok_or_else(|| Error::NumericalFailure("no PSD Wishart draw".into()))?;
        let instance = portfolio_instance(&sigma_realized, &cost, cfg.risk, cfg.radius)?;
        samples.push(Exp2Sample { z, sigma_conditional, sigma_realized, instance });
    }
    let template = portfolio_instance(&Mat::identity(n, n), &cost, cfg.risk, cfg.radius)?;
    Ok(Exp2Dataset { correlation, cost, weights, samples, template })
}

/// Learnable fields: the cost vector and a factor of the covariance.
pub fn exp2_layout(n_assets: usize) -> Result<PackLayout> {
    PackLayout::new(n_assets, n_assets + 2, &[(Field::ObjectiveLinear, 0), (Field::ConstraintFactor(0), n_assets)])
}

/// Two-layer ReLU network whose head starts at the training-mean covariance
/// factor and the true cost.
pub fn initial_net(cfg: &Exp2Config, data: &Exp2Dataset) -> Result<PredictorNet> {
    let layout = Arc::new(exp2_layout(cfg.n_assets)?);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let out = layout.len();
    let mut net = PredictorNet::new(&[cfg.n_context, cfg.hidden, out], &[Activation::ReLU, Activation::Identity], layout, &mut rng)?;
    let train = &data.samples[..cfg.n_train()];
    let mean = train.iter().fold(Mat::zeros(cfg.n_assets, cfg.n_assets), |acc, s| acc + &s.sigma_realized) / train.len() as f64;
    let factor = sqrt_factor(&mean)?;
    let flat: Vec<f64> = (0..cfg.n_assets).flat_map(|i| (0..cfg.n_assets).map(move |j| (i, j))).map(|(i, j)| factor[(i, j)]).collect();
    net.set_head_bias(Field::ConstraintFactor(0), &flat)?;
    net.set_head_bias(Field::ObjectiveLinear, (-&data.cost).as_slice())?;
    Ok(net)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmReport {
    pub vanilla: bool,
    pub net: PredictorNet,
    pub eval: EvalReport,
    pub records: Vec<StepRecord>,
}

impl ArmReport {
    /// Test decisions feasible for the realized covariance.
    pub fn feasible(&self) -> usize {
        self.eval.nominal_feasible_count
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp2Report {
    pub n_test: usize,
    pub robust: ArmReport,
    pub vanilla: ArmReport,
}

fn train_arm(cfg: &Exp2Config, data: &Exp2Dataset, vanilla: bool) -> Result<ArmReport> {
    let samples: Vec<Sample> = data.samples.iter().map(|s| Sample { z: s.z.clone(), observed: s.instance.clone() }).collect();
    let (train, test) = samples.split_at(cfg.n_train());
    let tcfg = TrainConfig {
        mode: TrainMode::Contextual,
        loss_case: SetCase::A,
        penalty: cfg.penalty,
        penalty_sign: cfg.penalty_sign,
        steps: cfg.steps,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
        eval_every: 0,
        adam: AdamConfig { lr: cfg.lr, ..AdamConfig::default() },
        factor_jitter: cfg.factor_jitter,
        vanilla_loss: vanilla,
        ..TrainConfig::default()
    };
    let fit = fit_contextual(train, test, initial_net(cfg, data)?, &data.template, &tcfg)?;
    Ok(ArmReport { vanilla, net: fit.net, eval: fit.eval, records: fit.records })
}

/// Trains the robust-loss and vanilla-loss arms from the same
/// initialization and evaluates both on the held-out samples.
pub fn run_exp2(cfg: &Exp2Config) -> Result<Exp2Report> {
    let data = gen_exp2(cfg)?;
    let robust = train_arm(cfg, &data, false)?;
    let vanilla = train_arm(cfg, &data, true)?;
    Ok(Exp2Report { n_test: cfg.n_samples - cfg.n_train(), robust, vanilla })
}

/// Only one arm, as selected by `--ablation-vanilla-loss`.
pub fn run_exp2_arm(cfg: &Exp2Config, vanilla: bool) -> Result<ArmReport> {
    let data = gen_exp2(cfg)?;
    train_arm(cfg, &data, vanilla)
}
