//! Worst-case layer.
//!
//! Case P (uncertainty on the factor `P` of `A = PᵀP`) is handled through a
//! linear matrix certificate `S(x, l)`: the constraint holds for every
//! realization iff `S(x, l) ⪰ 0` for some `l ≥ 0`. We maximize
//! `l ↦ λ_min(S(x, l))` and penalize the negative part of the spectrum.
//!
//! Case A (uncertainty directly on `(A, b, γ)`) has a closed-form worst case
//! because the constraint is affine in the parameters for fixed `x`.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, sym_eigenvalues, Mat, Vector};
use crate::qcqp::{PEllipsoid, QcqpInstance, QuadConstraint, SetCase, Theta, UncertaintySet};

/// Certificate for one case-P constraint at a fixed decision.
#[derive(Debug, Clone, PartialEq)]
pub struct SCertificate {
    pub constraint_index: usize,
    pub l_star: f64,
    pub s_star: Mat,
    /// Ascending.
    pub eigvals: Vector,
    /// Columns match `eigvals`.
    pub eigvecs: Mat,
    pub feasible: bool,
    /// The search reached `l_max` while still improving; treated as feasible
    /// with zero penalty.
    pub unbounded: bool,
}

impl SCertificate {
    pub fn lambda_min(&self) -> f64 {
        self.eigvals.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `Σ_k max(0, −λ_k)`, zero for unbounded certificates.
    pub fn negative_mass(&self) -> f64 {
        if self.unbounded {
            return 0.0;
        }
        self.eigvals.iter().map(|v| (-v).max(0.0)).sum()
    }
}

/// Worst-case parameters of one case-A constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCaseRealization {
    pub constraint_index: usize,
    pub theta_star: Theta,
    pub violation: f64,
}

/// Output of either worst-case subproblem.
#[derive(Debug, Clone, PartialEq)]
pub enum Rob2 {
    P(Vec<SCertificate>),
    A(Vec<WorstCaseRealization>),
}

impl Rob2 {
    pub fn case(&self) -> SetCase {
        match self {
            Rob2::P(_) => SetCase::P,
            Rob2::A(_) => SetCase::A,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub objective_term: f64,
    /// One entry per constraint of the instance.
    pub penalty_terms: Vector,
    pub total: f64,
    /// `τ_i` for case P, `λ_i` for case A.
    pub penalty_coeffs: Vector,
}

impl LossBreakdown {
    pub fn penalty_sum(&self) -> f64 {
        self.penalty_terms.sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub grad: Vector,
    /// Some penalized eigenvalue sat in a cluster narrower than
    /// [`EIGEN_GAP_TOL`]; the gradient is the cluster-averaged subgradient.
    pub repeated_eigenvalue: bool,
}

/// Feasibility threshold on `max_l λ_min(S)`.
pub const CERT_FEAS_TOL: f64 = 1e-9;
/// Eigenvalues closer than this are treated as one cluster.
pub const EIGEN_GAP_TOL: f64 = 1e-8;

/// Search settings for the certificate maximization.
#[derive(Debug, Clone, PartialEq)]
pub struct CertConfig {
    pub l_max: f64,
    /// Bracket width at which golden-section stops (relative to max(1, l)).
    pub width_tol: f64,
    pub max_iter: usize,
}

impl Default for CertConfig {
    fn default() -> Self {
        Self { l_max: 1e8, width_tol: 1e-10, max_iter: 500 }
    }
}

/// Dimension `1 + L + m` of the certificate matrix.
pub fn s_dim(set: &PEllipsoid) -> usize {
    1 + set.len() + set.rows()
}

/// The certificate matrix
///
/// ```text
/// [ −γ₀ − b₀ᵀx − l   cᵀ     (P₀x)ᵀ ]
/// [ c                l·I_L  Wᵀ     ]
/// [ P₀x              W      I_m    ]
/// ```
///
/// with `c_k = −(γ_k + b_kᵀx)/2` and `W = [P₁x … P_Lx]`.
pub fn s_matrix(set: &PEllipsoid, x: &Vector, l: f64) -> Result<Mat> {
    let n = set.n_vars();
    if x.len() != n {
        return Err(Error::DimensionMismatch { what: "s_matrix decision", expected: n, got: x.len() });
    }
    let big_l = set.len();
    let m = set.rows();
    let dim = 1 + big_l + m;
    let mut s = Mat::zeros(dim, dim);
    s[(0, 0)] = -set.gamma0 - set.b0.dot(x) - l;
    let p0x = &set.p0 * x;
    for j in 0..m {
        s[(0, 1 + big_l + j)] = p0x[j];
        s[(1 + big_l + j, 0)] = p0x[j];
        s[(1 + big_l + j, 1 + big_l + j)] = 1.0;
    }
    for (k, g) in set.generators.iter().enumerate() {
        let ck = -(g.gamma + g.b.dot(x)) * 0.5;
        s[(0, 1 + k)] = ck;
        s[(1 + k, 0)] = ck;
        s[(1 + k, 1 + k)] = l;
        let pkx = &g.p * x;
        for j in 0..m {
            s[(1 + big_l + j, 1 + k)] = pkx[j];
            s[(1 + k, 1 + big_l + j)] = pkx[j];
        }
    }
    Ok(s)
}

/// `vᵀ (∂S/∂x_r) v` for every coordinate `r`.
pub fn s_quadratic_dx(set: &PEllipsoid, v: &Vector) -> Vector {
    let big_l = set.len();
    let m = set.rows();
    let v0 = v[0];
    let vm = v.rows(1 + big_l, m);
    let mut out = &set.b0 * (-v0 * v0) + set.p0.tr_mul(&vm) * (2.0 * v0);
    for (k, g) in set.generators.iter().enumerate() {
        let vu = v[1 + k];
        out.axpy(-v0 * vu, &g.b, 1.0);
        out += g.p.tr_mul(&vm) * (2.0 * vu);
    }
    out
}

fn lambda_min_at(set: &PEllipsoid, x: &Vector, l: f64) -> Result<f64> {
    let s = s_matrix(set, x, l)?;
    Ok(sym_eigenvalues(&s)?[0])
}

/// Maximizes `l ↦ λ_min(S(x, l))` over `l ≥ 0`. Returns `(l*, unbounded)`.
pub fn maximize_lambda_min(set: &PEllipsoid, x: &Vector, cfg: &CertConfig) -> Result<(f64, bool)> {
    let h = |l: f64| lambda_min_at(set, x, l);
    // expanding bracket: the maximizer lies in [lo, hi]
    let (mut lo, mut mid, mut hi) = (0.0, 0.0, 1.0);
    let mut h_mid = h(0.0)?;
    let mut h_hi = h(1.0)?;
    while h_hi >= h_mid {
        if hi >= cfg.l_max {
            return Ok((cfg.l_max, true));
        }
        lo = mid;
        mid = hi;
        h_mid = h_hi;
        hi = (hi * 4.0).min(cfg.l_max);
        h_hi = h(hi)?;
    }
    let _ = h_mid;
    let ratio = 0.5 * (5.0f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut hc = h(c)?;
    let mut hd = h(d)?;
    for _ in 0..cfg.max_iter {
        if b - a <= cfg.width_tol * b.max(1.0) {
            break;
        }
        if hc >= hd {
            b = d;
            d = c;
            hd = hc;
            c = b - ratio * (b - a);
            hc = h(c)?;
        } else {
            a = c;
            c = d;
            hc = hd;
            d = a + ratio * (b - a);
            hd = h(d)?;
        }
    }
    Ok((0.5 * (a + b), false))
}

/// Certificate for a single P-ellipsoid constraint.
pub fn certify(set: &PEllipsoid, x: &Vector, index: usize, cfg: &CertConfig) -> Result<SCertificate> {
    let (l_star, unbounded) = maximize_lambda_min(set, x, cfg)?;
    let s_star = s_matrix(set, x, l_star)?;
    let (eigvals, eigvecs) = sym_eigen(&s_star)?;
    let feasible = unbounded || eigvals[0] >= -CERT_FEAS_TOL;
    Ok(SCertificate { constraint_index: index, l_star, s_star, eigvals, eigvecs, feasible, unbounded })
}

/// Case-P worst-case layer: one certificate per constraint carrying a
/// P-ellipsoid. Certain constraints are skipped.
pub fn rob2_p(inst: &QcqpInstance, x: &Vector) -> Result<Vec<SCertificate>> {
    rob2_p_with(inst, x, &CertConfig::default())
}

pub fn rob2_p_with(inst: &QcqpInstance, x: &Vector, cfg: &CertConfig) -> Result<Vec<SCertificate>> {
    check_x(inst, x)?;
    let mut out = Vec::new();
    for (i, con) in inst.constraints().iter().enumerate() {
        match &con.uncertainty {
            UncertaintySet::None => {}
            UncertaintySet::PEllipsoid(set) => out.push(certify(set, x, i, cfg)?),
            _ => return Err(Error::UnsupportedUncertainty { index: i }),
        }
    }
    Ok(out)
}

/// Exact worst-case parameters of one constraint under a case-A set (or
/// the nominal parameters of a certain constraint). `None` for P-ellipsoids.
pub fn worst_case_a(con: &QuadConstraint, x: &Vector) -> Option<Theta> {
    Some(match &con.uncertainty {
        UncertaintySet::None => con.nominal(),
        UncertaintySet::ThetaEllipsoid(set) => {
            let d: Vec<f64> = set.generators.iter().map(|g| g.eval(x)).collect();
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                let u: Vec<f64> = d.iter().map(|v| v / norm).collect();
                set.realize(&u)
            } else {
                set.center.clone()
            }
        }
        UncertaintySet::FrobeniusBall { radius } => {
            let mut t = con.nominal();
            let nx2 = x.norm_squared();
            if nx2 > 0.0 {
                t.a += x * x.transpose() * (radius / nx2);
            }
            t
        }
        UncertaintySet::PEllipsoid(_) => return None,
    })
}

/// Case-A worst-case layer: the exact maximizer of `g_i(x, θ)` for every
/// constraint. Certain constraints report their nominal value.
pub fn rob2_a(inst: &QcqpInstance, x: &Vector) -> Result<Vec<WorstCaseRealization>> {
    check_x(inst, x)?;
    inst.constraints()
        .iter()
        .enumerate()
        .map(|(i, con)| {
            let theta_star = worst_case_a(con, x).ok_or(Error::UnsupportedUncertainty { index: i })?;
            let violation = theta_star.eval(x);
            Ok(WorstCaseRealization { constraint_index: i, theta_star, violation })
        })
        .collect()
}

/// Runs the worst-case layer matching `case`.
pub fn rob2(inst: &QcqpInstance, x: &Vector, case: SetCase) -> Result<Rob2> {
    Ok(match case {
        SetCase::P => Rob2::P(rob2_p(inst, x)?),
        SetCase::A => Rob2::A(rob2_a(inst, x)?),
    })
}

fn check_x(inst: &QcqpInstance, x: &Vector) -> Result<()> {
    if x.len() != inst.n_vars() {
        return Err(Error::DimensionMismatch { what: "decision", expected: inst.n_vars(), got: x.len() });
    }
    Ok(())
}

fn check_coeffs(inst: &QcqpInstance, coeffs: &[f64]) -> Result<()> {
    if coeffs.len() != inst.n_constraints() {
        return Err(Error::DimensionMismatch { what: "penalty coefficients", expected: inst.n_constraints(), got: coeffs.len() });
    }
    Ok(())
}

/// `f(x) + Σ_i τ_i Σ_k max(0, −λ_k(S*_i))`.
pub fn loss_p(inst: &QcqpInstance, x: &Vector, certs: &[SCertificate], tau: &[f64]) -> Result<LossBreakdown> {
    check_coeffs(inst, tau)?;
    if tau.iter().any(|t| *t < 0.0) {
        return Err(Error::InvalidConfig("case-P penalty coefficients must be nonnegative".into()));
    }
    let objective_term = inst.eval_objective(x)?;
    let mut penalty_terms = Vector::zeros(inst.n_constraints());
    for cert in certs {
        let i = cert.constraint_index;
        if i >= tau.len() {
            return Err(Error::IndexOutOfRange { index: i, len: tau.len() });
        }
        penalty_terms[i] = tau[i] * cert.negative_mass();
    }
    let total = objective_term + penalty_terms.sum();
    Ok(LossBreakdown { objective_term, penalty_terms, total, penalty_coeffs: Vector::from_column_slice(tau) })
}

/// `f(x) + Σ_i max(0, λ_i · violation_i)`.
pub fn loss_a(inst: &QcqpInstance, x: &Vector, reals: &[WorstCaseRealization], lam: &[f64]) -> Result<LossBreakdown> {
    check_coeffs(inst, lam)?;
    let objective_term = inst.eval_objective(x)?;
    let mut penalty_terms = Vector::zeros(inst.n_constraints());
    for r in reals {
        let i = r.constraint_index;
        if i >= lam.len() {
            return Err(Error::IndexOutOfRange { index: i, len: lam.len() });
        }
        penalty_terms[i] = (lam[i] * r.violation).max(0.0);
    }
    let total = objective_term + penalty_terms.sum();
    Ok(LossBreakdown { objective_term, penalty_terms, total, penalty_coeffs: Vector::from_column_slice(lam) })
}

/// Loss matching the case of `rob2`.
pub fn loss(inst: &QcqpInstance, x: &Vector, rob2: &Rob2, coeffs: &[f64]) -> Result<LossBreakdown> {
    match rob2 {
        Rob2::P(certs) => loss_p(inst, x, certs, coeffs),
        Rob2::A(reals) => loss_a(inst, x, reals, coeffs),
    }
}

/// `dL/dx` with the worst-case data held fixed (`l*` for case P, `θ*` for
/// case A).
pub fn loss_grad_x(breakdown: &LossBreakdown, inst: &QcqpInstance, x: &Vector, rob2: &Rob2) -> Result<LossGrad> {
    check_x(inst, x)?;
    let coeffs = &breakdown.penalty_coeffs;
    check_coeffs(inst, coeffs.as_slice())?;
    let mut grad = inst.objective_grad(x);
    let mut repeated = false;
    match rob2 {
        Rob2::A(reals) => {
            for r in reals {
                let lam = coeffs[r.constraint_index];
                if lam * r.violation > 0.0 {
                    grad.axpy(lam, &r.theta_star.grad(x), 1.0);
                }
            }
        }
        Rob2::P(certs) => {
            for cert in certs {
                if cert.unbounded {
                    continue;
                }
                let tau = coeffs[cert.constraint_index];
                if tau == 0.0 || cert.eigvals[0] >= 0.0 {
                    continue;
                }
                let UncertaintySet::PEllipsoid(set) = &inst.constraints()[cert.constraint_index].uncertainty else {
                    return Err(Error::UnsupportedUncertainty { index: cert.constraint_index });
                };
                let (d, rep) = negative_spectrum_dx(set, cert);
                repeated |= rep;
                grad.axpy(-tau, &d, 1.0);
            }
        }
    }
    Ok(LossGrad { grad, repeated_eigenvalue: repeated })
}

/// `Σ_{k: λ_k < 0} ∂λ_k/∂x` at fixed `l*`, averaging within eigenvalue
/// clusters.
fn negative_spectrum_dx(set: &PEllipsoid, cert: &SCertificate) -> (Vector, bool) {
    let vals = &cert.eigvals;
    let dim = vals.len();
    let per_vec: Vec<Vector> = (0..dim)
        .map(|k| s_quadratic_dx(set, &cert.eigvecs.column(k).into_owned()))
        .collect();
    // clusters of consecutive eigenvalues
    let mut cluster_of = vec![0usize; dim];
    let mut starts = vec![0usize];
    for k in 1..dim {
        if vals[k] - vals[k - 1] < EIGEN_GAP_TOL {
            cluster_of[k] = cluster_of[k - 1];
        } else {
            cluster_of[k] = starts.len();
            starts.push(k);
        }
    }
    let mut out = Vector::zeros(set.n_vars());
    let mut repeated = false;
    for k in 0..dim {
        if vals[k] >= 0.0 {
            break;
        }
        let c = cluster_of[k];
        let members: Vec<usize> = (0..dim).filter(|&j| cluster_of[j] == c).collect();
        if members.len() > 1 {
            repeated = true;
            let mut avg = Vector::zeros(set.n_vars());
            for &j in &members {
                avg += &per_vec[j];
            }
            out += avg / members.len() as f64;
        } else {
            out += &per_vec[k];
        }
    }
    (out, repeated)
}
