//! QCQP data model.
//!
//! An instance is
//!
//! ```text
//! minimize    xᵀQx + cᵀx + q
//! subject to  xᵀA_i x + b_iᵀx + γ_i ≤ 0,   (A_i, b_i, γ_i) ∈ U_i
//! ```
//!
//! where every constraint carries its own uncertainty set `U_i`. The nominal
//! triple stored on the constraint is the center of that set.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, is_psd, max_abs, quad_form, symmetrize, Mat, Vector};

/// Entrywise symmetry tolerance for incoming quadratic coefficients.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Negative-eigenvalue allowance for the PSD checks.
pub const PSD_TOL: f64 = 1e-9;

/// A packed `(A, b, γ)` triple describing one quadratic function
/// `xᵀAx + bᵀx + γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Theta {
    pub a: Mat,
    pub b: Vector,
    pub gamma: f64,
}

impl Theta {
    pub fn new(a: Mat, b: Vector, gamma: f64) -> Self {
        Self { a, b, gamma }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(Mat::zeros(n, n), Vector::zeros(n), 0.0)
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn eval(&self, x: &Vector) -> f64 {
        quad_form(&self.a, x) + self.b.dot(x) + self.gamma
    }

    /// Gradient `(A + Aᵀ)x + b` of [`Theta::eval`].
    pub fn grad(&self, x: &Vector) -> Vector {
        &self.a * x + self.a.tr_mul(x) + &self.b
    }

    /// `self + t·other`.
    pub fn axpy(&self, t: f64, other: &Theta) -> Theta {
        Theta {
            a: &self.a + &other.a * t,
            b: &self.b + &other.b * t,
            gamma: self.gamma + t * other.gamma,
        }
    }

    pub fn max_abs_diff(&self, other: &Theta) -> f64 {
        let da = max_abs(&(&self.a - &other.a));
        let db = (&self.b - &other.b).amax();
        da.max(db).max((self.gamma - other.gamma).abs())
    }

    fn check_dim(&self, n: usize, what: &'static str) -> Result<()> {
        if self.a.nrows() != n || self.a.ncols() != n {
            return Err(Error::DimensionMismatch { what, expected: n, got: self.a.nrows() });
        }
        if self.b.len() != n {
            return Err(Error::DimensionMismatch { what, expected: n, got: self.b.len() });
        }
        Ok(())
    }
}

/// One generator `(P_k, b_k, γ_k)` of a [`PEllipsoid`].
#[derive(Debug, Clone, PartialEq)]
pub struct PGenerator {
    pub p: Mat,
    pub b: Vector,
    pub gamma: f64,
}

impl PGenerator {
    pub fn new(p: Mat, b: Vector, gamma: f64) -> Self {
        Self { p, b, gamma }
    }
}

/// Ellipsoidal uncertainty on the factor `P` of `A = PᵀP`:
/// `(P, b, γ) = (P₀, b₀, γ₀) + Σ_k u_k (P_k, b_k, γ_k)` with `‖u‖₂ ≤ 1`,
/// and constraint function `xᵀPᵀPx + bᵀx + γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PEllipsoid {
    pub p0: Mat,
    pub b0: Vector,
    pub gamma0: f64,
    pub generators: Vec<PGenerator>,
}

impl PEllipsoid {
    pub fn new(p0: Mat, b0: Vector, gamma0: f64, generators: Vec<PGenerator>) -> Result<Self> {
        let set = Self { p0, b0, gamma0, generators };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.p0.ncols();
        let rows = self.p0.nrows();
        if self.b0.len() != n {
            return Err(Error::DimensionMismatch { what: "p-ellipsoid b0", expected: n, got: self.b0.len() });
        }
        if self.generators.is_empty() {
            return Err(Error::InvalidInstance("p-ellipsoid needs at least one generator".into()));
        }
        for g in &self.generators {
            if g.p.nrows() != rows || g.p.ncols() != n {
                return Err(Error::DimensionMismatch { what: "p-ellipsoid generator P", expected: rows * n, got: g.p.nrows() * g.p.ncols() });
            }
            if g.b.len() != n {
                return Err(Error::DimensionMismatch { what: "p-ellipsoid generator b", expected: n, got: g.b.len() });
            }
        }
        Ok(())
    }

    pub fn n_vars(&self) -> usize {
        self.p0.ncols()
    }

    /// Number of rows `m` of the factor.
    pub fn rows(&self) -> usize {
        self.p0.nrows()
    }

    /// Number of generators `L`.
    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    /// The factor triple at coefficient vector `u`.
    pub fn realize(&self, u: &[f64]) -> PGenerator {
        let mut p = self.p0.clone();
        let mut b = self.b0.clone();
        let mut gamma = self.gamma0;
        for (uk, g) in u.iter().zip(&self.generators) {
            p += &g.p * *uk;
            b += &g.b * *uk;
            gamma += uk * g.gamma;
        }
        PGenerator { p, b, gamma }
    }

    /// The quadratic triple `(PᵀP, b, γ)` at coefficient vector `u`.
    pub fn realize_theta(&self, u: &[f64]) -> Theta {
        let r = self.realize(u);
        Theta::new(r.p.tr_mul(&r.p), r.b, r.gamma)
    }

    /// Constraint value `‖P(u)x‖² + b(u)ᵀx + γ(u)`.
    pub fn value_at(&self, x: &Vector, u: &[f64]) -> f64 {
        let r = self.realize(u);
        (&r.p * x).norm_squared() + r.b.dot(x) + r.gamma
    }

    /// Nominal quadratic triple `(P₀ᵀP₀, b₀, γ₀)`.
    pub fn nominal(&self) -> Theta {
        Theta::new(self.p0.tr_mul(&self.p0), self.b0.clone(), self.gamma0)
    }
}

/// Ellipsoidal uncertainty directly in `(A, b, γ)` space:
/// `{ θ₀ + Σ_k u_k θ_k : ‖u‖₂ ≤ 1 }`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaEllipsoid {
    pub center: Theta,
    pub generators: Vec<Theta>,
}

impl ThetaEllipsoid {
    pub fn new(center: Theta, generators: Vec<Theta>) -> Result<Self> {
        let n = center.dim();
        center.check_dim(n, "theta-ellipsoid center")?;
        if generators.is_empty() {
            return Err(Error::InvalidInstance("theta-ellipsoid needs at least one generator".into()));
        }
        for g in &generators {
            g.check_dim(n, "theta-ellipsoid generator")?;
        }
        Ok(Self { center, generators })
    }

    pub fn realize(&self, u: &[f64]) -> Theta {
        let mut t = self.center.clone();
        for (uk, g) in u.iter().zip(&self.generators) {
            t = t.axpy(*uk, g);
        }
        t
    }
}

/// Per-constraint uncertainty description.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum UncertaintySet {
    /// The constraint is certain.
    #[default]
    None,
    /// Affine ellipsoid in `(A, b, γ)` space.
    ThetaEllipsoid(ThetaEllipsoid),
    /// `{ A + Δ : Δ = Δᵀ, ‖Δ‖_F ≤ ρ }`, with `b` and `γ` certain.
    FrobeniusBall { radius: f64 },
    /// Ellipsoid over the factor of `A = PᵀP`.
    PEllipsoid(PEllipsoid),
}

/// Which worst-case treatment a set calls for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetCase {
    /// Set defined over `A` (linear in the parameters for fixed `x`).
    A,
    /// Set defined over the factor `P`.
    P,
}

impl UncertaintySet {
    pub fn case(&self) -> Option<SetCase> {
        match self {
            UncertaintySet::None => None,
            UncertaintySet::ThetaEllipsoid(_) | UncertaintySet::FrobeniusBall { .. } => Some(SetCase::A),
            UncertaintySet::PEllipsoid(_) => Some(SetCase::P),
        }
    }

    pub fn is_certain(&self) -> bool {
        matches!(self, UncertaintySet::None)
    }
}

/// `xᵀAx + bᵀx + γ ≤ 0` with an attached uncertainty set.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadConstraint {
    pub a: Mat,
    pub b: Vector,
    pub gamma: f64,
    pub uncertainty: UncertaintySet,
}

impl QuadConstraint {
    /// A certain constraint.
    pub fn new(a: Mat, b: Vector, gamma: f64) -> Self {
        Self { a, b, gamma, uncertainty: UncertaintySet::None }
    }

    /// A certain affine constraint `bᵀx + γ ≤ 0`.
    pub fn linear(b: Vector, gamma: f64) -> Self {
        let n = b.len();
        Self::new(Mat::zeros(n, n), b, gamma)
    }

    pub fn with_uncertainty(mut self, uncertainty: UncertaintySet) -> Self {
        self.uncertainty = uncertainty;
        self
    }

    /// Constraint whose nominal triple is the center of `set`.
    pub fn from_p_ellipsoid(set: PEllipsoid) -> Self {
        let nominal = set.nominal();
        Self { a: nominal.a, b: nominal.b, gamma: nominal.gamma, uncertainty: UncertaintySet::PEllipsoid(set) }
    }

    pub fn from_theta_ellipsoid(set: ThetaEllipsoid) -> Self {
        let c = set.center.clone();
        Self { a: c.a, b: c.b, gamma: c.gamma, uncertainty: UncertaintySet::ThetaEllipsoid(set) }
    }

    pub fn frobenius_ball(a: Mat, b: Vector, gamma: f64, radius: f64) -> Self {
        Self::new(a, b, gamma).with_uncertainty(UncertaintySet::FrobeniusBall { radius })
    }

    pub fn nominal(&self) -> Theta {
        Theta::new(self.a.clone(), self.b.clone(), self.gamma)
    }

    pub fn eval(&self, x: &Vector) -> f64 {
        quad_form(&self.a, x) + self.b.dot(x) + self.gamma
    }

    /// `2Ax + b` (A is symmetric after construction).
    pub fn grad(&self, x: &Vector) -> Vector {
        &self.a * x * 2.0 + &self.b
    }

    fn is_linear(&self) -> bool {
        self.a.iter().all(|v| *v == 0.0)
    }
}

/// A QCQP with per-constraint uncertainty.
///
/// Quadratic coefficients are symmetrized on construction; the instance is
/// immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct QcqpInstance {
    n_vars: usize,
    q_mat: Mat,
    c: Vector,
    q: f64,
    constraints: Vec<QuadConstraint>,
    allow_indefinite_constraints: bool,
    linear: Vec<bool>,
}

impl QcqpInstance {
    pub fn new(q_mat: Mat, c: Vector, q: f64, constraints: Vec<QuadConstraint>) -> Result<Self> {
        Self::with_options(q_mat, c, q, constraints, false)
    }

    /// Like [`QcqpInstance::new`]; `allow_indefinite_constraints` lifts the
    /// PSD requirement for constraints carrying `A`-space uncertainty.
    pub fn with_options(
        q_mat: Mat,
        c: Vector,
        q: f64,
        constraints: Vec<QuadConstraint>,
        allow_indefinite_constraints: bool,
    ) -> Result<Self> {
        let n = c.len();
        if n == 0 {
            return Err(Error::InvalidInstance("n_vars must be positive".into()));
        }
        if q_mat.nrows() != n || q_mat.ncols() != n {
            return Err(Error::DimensionMismatch { what: "objective Q", expected: n, got: q_mat.nrows() });
        }
        if !q.is_finite() || q_mat.iter().chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInstance("objective has non-finite entries".into()));
        }
        let q_mat = symmetrize(&q_mat);
        if !is_psd(&q_mat, PSD_TOL) {
            return Err(Error::InvalidInstance("objective Q is not positive semidefinite".into()));
        }
        let mut checked = Vec::with_capacity(constraints.len());
        for (i, mut con) in constraints.into_iter().enumerate() {
            if con.a.nrows() != n || con.a.ncols() != n {
                return Err(Error::DimensionMismatch { what: "constraint A", expected: n, got: con.a.nrows() });
            }
            if con.b.len() != n {
                return Err(Error::DimensionMismatch { what: "constraint b", expected: n, got: con.b.len() });
            }
            if !con.gamma.is_finite() || con.a.iter().chain(con.b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::InvalidInstance(format!("constraint {i} has non-finite entries")));
            }
            con.a = symmetrize(&con.a);
            Self::check_set(i, &con, n)?;
            let indefinite_ok = allow_indefinite_constraints && con.uncertainty.case() == Some(SetCase::A);
            if !indefinite_ok && !is_psd(&con.a, PSD_TOL) {
                return Err(Error::InvalidInstance(format!("constraint {i}: A is not positive semidefinite")));
            }
            checked.push(con);
        }
        let linear = checked.iter().map(QuadConstraint::is_linear).collect();
        Ok(Self { n_vars: n, q_mat, c, q, constraints: checked, allow_indefinite_constraints, linear })
    }

    fn check_set(i: usize, con: &QuadConstraint, n: usize) -> Result<()> {
        let scale = 1.0 + max_abs(&con.a).max(con.b.amax()).max(con.gamma.abs());
        match &con.uncertainty {
            UncertaintySet::None => Ok(()),
            UncertaintySet::FrobeniusBall { radius } => {
                if *radius > 0.0 && radius.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidInstance(format!("constraint {i}: Frobenius radius must be positive")))
                }
            }
            UncertaintySet::ThetaEllipsoid(set) => {
                set.center.check_dim(n, "theta-ellipsoid center")?;
                if set.generators.is_empty() {
                    return Err(Error::InvalidInstance(format!("constraint {i}: empty generator list")));
                }
                for g in &set.generators {
                    g.check_dim(n, "theta-ellipsoid generator")?;
                }
                let mut center = set.center.clone();
                center.a = symmetrize(&center.a);
                if center.max_abs_diff(&con.nominal()) > SYMMETRY_TOL * scale {
                    return Err(Error::InvalidInstance(format!("constraint {i}: set center differs from nominal parameters")));
                }
                Ok(())
            }
            UncertaintySet::PEllipsoid(set) => {
                set.validate()?;
                if set.n_vars() != n {
                    return Err(Error::DimensionMismatch { what: "p-ellipsoid", expected: n, got: set.n_vars() });
                }
                if set.nominal().max_abs_diff(&con.nominal()) > 1e-9 * scale {
                    return Err(Error::InvalidInstance(format!("constraint {i}: P₀ᵀP₀, b₀, γ₀ differ from nominal parameters")));
                }
                Ok(())
            }
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    /// Objective quadratic coefficient `Q`.
    pub fn objective_matrix(&self) -> &Mat {
        &self.q_mat
    }

    pub fn c(&self) -> &Vector {
        &self.c
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn constraints(&self) -> &[QuadConstraint] {
        &self.constraints
    }

    pub fn n_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn constraint(&self, i: usize) -> Result<&QuadConstraint> {
        self.constraints.get(i).ok_or(Error::IndexOutOfRange { index: i, len: self.constraints.len() })
    }

    pub fn allows_indefinite_constraints(&self) -> bool {
        self.allow_indefinite_constraints
    }

    /// True when constraint `i` has `A_i = 0`.
    pub fn is_linear_constraint(&self, i: usize) -> bool {
        self.linear[i]
    }

    pub fn has_uncertainty(&self) -> bool {
        self.constraints.iter().any(|c| !c.uncertainty.is_certain())
    }

    fn check_x(&self, x: &Vector) -> Result<()> {
        if x.len() != self.n_vars {
            return Err(Error::DimensionMismatch { what: "decision vector", expected: self.n_vars, got: x.len() });
        }
        Ok(())
    }

    /// `xᵀQx + cᵀx + q`.
    pub fn eval_objective(&self, x: &Vector) -> Result<f64> {
        self.check_x(x)?;
        Ok(quad_form(&self.q_mat, x) + self.c.dot(x) + self.q)
    }

    /// Nominal `g_i(x) = xᵀA_i x + b_iᵀx + γ_i`.
    pub fn eval_constraint(&self, i: usize, x: &Vector) -> Result<f64> {
        self.check_x(x)?;
        Ok(self.constraint(i)?.eval(x))
    }

    pub fn objective_grad(&self, x: &Vector) -> Vector {
        &self.q_mat * x * 2.0 + &self.c
    }

    /// Largest nominal constraint value (−∞ without constraints).
    pub fn max_violation(&self, x: &Vector) -> f64 {
        self.constraints.iter().map(|c| c.eval(x)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Copy with extra constraints appended (validated like the originals).
    pub fn with_extra_constraints(&self, extra: impl IntoIterator<Item = QuadConstraint>) -> Result<Self> {
        let mut cons = self.constraints.clone();
        cons.extend(extra);
        Self::with_options(self.q_mat.clone(), self.c.clone(), self.q, cons, self.allow_indefinite_constraints)
    }

    /// Copy with every uncertainty set dropped.
    pub fn nominal(&self) -> Self {
        let mut out = self.clone();
        for c in &mut out.constraints {
            c.uncertainty = UncertaintySet::None;
        }
        out
    }

    /// Copy with objective `(αQ, αc, αq)`.
    pub fn scaled_objective(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.q_mat *= alpha;
        out.c *= alpha;
        out.q *= alpha;
        out
    }

    /// Copy with the objective replaced (validated).
    pub fn with_objective(&self, q_mat: Mat, c: Vector, q: f64) -> Result<Self> {
        Self::with_options(q_mat, c, q, self.constraints.clone(), self.allow_indefinite_constraints)
    }
}

/// `MᵀM`, symmetric positive semidefinite by construction.
pub fn psd_from_factor(m: &Mat) -> Mat {
    let a = m.tr_mul(m);
    symmetrize(&a)
}

/// Gradient with respect to `M` of a scalar function of `A = MᵀM`, given the
/// upstream gradient `G = ∂L/∂A`: returns `M(G + Gᵀ)`.
pub fn factor_grad(m: &Mat, g: &Mat) -> Mat {
    m * (g + g.transpose())
}

/// Checks that `m` is symmetric to [`SYMMETRY_TOL`].
pub fn is_symmetric(m: &Mat) -> bool {
    asymmetry(m) <= SYMMETRY_TOL * (1.0 + max_abs(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_quad(a: &Mat, b: &Vector, gamma: f64, x: &Vector) -> f64 {
        let n = x.len();
        let mut s = gamma;
        for i in 0..n {
            for j in 0..n {
                s += x[i] * a[(i, j)] * x[j];
            }
            s += b[i] * x[i];
        }
        s
    }

    fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> Mat {
        let m = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        m.tr_mul(&m)
    }

    #[test]
    fn objective_trivial_cases() {
        let inst = QcqpInstance::new(Mat::identity(2, 2), Vector::zeros(2), 0.0, vec![]).unwrap();
        assert_eq!(inst.eval_objective(&Vector::from_vec(vec![1.0, 1.0])).unwrap(), 2.0);
        let inst = QcqpInstance::new(Mat::zeros(2, 2), Vector::from_vec(vec![1.0, 2.0]), 3.0, vec![]).unwrap();
        assert_eq!(inst.eval_objective(&Vector::from_vec(vec![1.0, 1.0])).unwrap(), 6.0);
        assert!(matches!(inst.eval_objective(&Vector::zeros(3)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn constraint_trivial_cases() {
        let con = QuadConstraint::new(Mat::identity(2, 2), Vector::zeros(2), -1.0);
        let inst = QcqpInstance::new(Mat::zeros(2, 2), Vector::zeros(2), 0.0, vec![con]).unwrap();
        assert_eq!(inst.eval_constraint(0, &Vector::zeros(2)).unwrap(), -1.0);
        assert_eq!(inst.eval_constraint(0, &Vector::from_vec(vec![1.0, 0.0])).unwrap(), 0.0);
        assert!(matches!(inst.eval_constraint(1, &Vector::zeros(2)), Err(Error::IndexOutOfRange { index: 1, len: 1 })));
    }

    #[test]
    fn evaluation_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 5;
        let q = random_psd(&mut rng, n);
        let c = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let a = random_psd(&mut rng, n);
        let b = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let inst = QcqpInstance::new(q.clone(), c.clone(), 0.3, vec![QuadConstraint::new(a.clone(), b.clone(), -0.7)]).unwrap();
        for _ in 0..20 {
            let x = Vector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let f = inst.eval_objective(&x).unwrap();
            assert!((f - dense_quad(&q, &c, 0.3, &x)).abs() <= 1e-12 * (1.0 + f.abs()));
            let g = inst.eval_constraint(0, &x).unwrap();
            assert!((g - dense_quad(&a, &b, -0.7, &x)).abs() <= 1e-12 * (1.0 + g.abs()));
        }
    }

    #[test]
    fn asymmetric_input_is_symmetrized() {
        let q = Mat::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        let inst = QcqpInstance::new(q, Vector::zeros(2), 0.0, vec![]).unwrap();
        assert_eq!(inst.objective_matrix()[(0, 1)], 1.0);
        assert_eq!(inst.objective_matrix()[(1, 0)], 1.0);
        assert!(is_symmetric(inst.objective_matrix()));
    }

    #[test]
    fn rejects_indefinite_unless_flagged() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let con = QuadConstraint::new(a.clone(), Vector::zeros(2), -1.0);
        assert!(QcqpInstance::new(Mat::zeros(2, 2), Vector::zeros(2), 0.0, vec![con.clone()]).is_err());
        // flag alone is not enough for a certain constraint
        assert!(QcqpInstance::with_options(Mat::zeros(2, 2), Vector::zeros(2), 0.0, vec![con.clone()], true).is_err());
        let uncertain = con.with_uncertainty(UncertaintySet::FrobeniusBall { radius: 0.5 });
        assert!(QcqpInstance::with_options(Mat::zeros(2, 2), Vector::zeros(2), 0.0, vec![uncertain], true).is_ok());
    }

    #[test]
    fn rejects_mismatched_set_center() {
        let center = Theta::new(Mat::identity(2, 2), Vector::zeros(2), -1.0);
        let set = ThetaEllipsoid::new(center, vec![Theta::zeros(2)]).unwrap();
        let con = QuadConstraint::new(Mat::identity(2, 2), Vector::zeros(2), -2.0).with_uncertainty(UncertaintySet::ThetaEllipsoid(set));
        assert!(QcqpInstance::new(Mat::zeros(2, 2), Vector::zeros(2), 0.0, vec![con]).is_err());
        let bad_radius = QuadConstraint::frobenius_ball(Mat::identity(2, 2), Vector::zeros(2), -1.0, 0.0);
        assert!(QcqpInstance::new(Mat::zeros(2, 2), Vector::zeros(2), 0.0, vec![bad_radius]).is_err());
    }

    #[test]
    fn psd_from_factor_cases() {
        assert_eq!(psd_from_factor(&Mat::identity(3, 3)), Mat::identity(3, 3));
        assert_eq!(psd_from_factor(&Mat::zeros(3, 3)), Mat::zeros(3, 3));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let m = Mat::from_fn(3, 3, |_, _| rng.random_range(-3.0..3.0));
            let a = psd_from_factor(&m);
            assert!(min_eigenvalue(&a).unwrap() >= -1e-12);
            assert!(is_psd(&a, 1e-10));
        }
    }

    #[test]
    fn factor_grad_cases() {
        let i3 = Mat::identity(3, 3);
        assert_eq!(factor_grad(&i3, &i3), &i3 * 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = Mat::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        assert_eq!(factor_grad(&Mat::zeros(2, 3), &g), Mat::zeros(2, 3));
    }

    #[test]
    fn factor_grad_matches_finite_differences() {
        // f(A) = Σ W∘A + ‖A‖²_F/2 has ∂f/∂A = W + A (not symmetric in general)
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (k, n) = (3, 3);
        let w = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let f = |m: &Mat| {
            let a = m.tr_mul(m);
            w.component_mul(&a).sum() + 0.5 * a.norm_squared()
        };
        let m = Mat::from_fn(k, n, |_, _| rng.random_range(-1.0..1.0));
        let g = &w + m.tr_mul(&m);
        let analytic = factor_grad(&m, &g);
        let h = 1e-6;
        for i in 0..k {
            for j in 0..n {
                let mut mp = m.clone();
                mp[(i, j)] += h;
                let mut mm = m.clone();
                mm[(i, j)] -= h;
                let fd = (f(&mp) - f(&mm)) / (2.0 * h);
                let rel = (fd - analytic[(i, j)]).abs() / analytic[(i, j)].abs().max(1e-8);
                assert!(rel <= 1e-6, "entry ({i},{j}): fd {fd} analytic {}", analytic[(i, j)]);
            }
        }
    }

    #[test]
    fn p_ellipsoid_constraint_uses_center() {
        let p0 = Mat::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 2.0]);
        let set = PEllipsoid::new(p0.clone(), Vector::from_vec(vec![0.1, 0.2]), -1.0, vec![PGenerator::new(Mat::identity(2, 2) * 0.1, Vector::zeros(2), 0.0)]).unwrap();
        let con = QuadConstraint::from_p_ellipsoid(set.clone());
        assert_eq!(con.a, p0.tr_mul(&p0));
        let x = Vector::from_vec(vec![0.3, -0.4]);
        assert!((con.eval(&x) - set.value_at(&x, &[0.0])).abs() < 1e-14);
        let inst = QcqpInstance::new(Mat::zeros(2, 2), Vector::zeros(2), 0.0, vec![con]).unwrap();
        assert_eq!(inst.constraints()[0].uncertainty.case(), Some(SetCase::P));
    }
}
