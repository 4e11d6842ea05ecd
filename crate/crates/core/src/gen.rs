//! Random instance generators.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::linalg::{Mat, Vector};
use crate::qcqp::{PEllipsoid, PGenerator, QcqpInstance, QuadConstraint, Theta, ThetaEllipsoid};

pub(crate) fn gaussian_mat<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub(crate) fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Strictly convex instance with `m` ellipsoidal constraints, all strictly
/// feasible at the origin. The unconstrained minimizer usually lies outside
/// the feasible set, so some constraints end up active.
pub fn random_convex_instance<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> QcqpInstance {
    let scale = 1.0 / (n as f64);
    let g = gaussian_mat(rng, n, n);
    let q_mat = g.transpose() * &g * scale + Mat::identity(n, n) * 0.2;
    let c = gaussian_vec(rng, n) * 2.0;
    let gamma_dist = Uniform::new(0.5, 1.5).expect("valid range");
    let cons: Vec<QuadConstraint> = (0..m)
        .map(|_| {
            let h = gaussian_mat(rng, n, n);
            let a = h.transpose() * &h * scale + Mat::identity(n, n) * 0.1;
            let b = gaussian_vec(rng, n) * 0.3;
            QuadConstraint::new(a, b, -gamma_dist.sample(rng))
        })
        .collect();
    QcqpInstance::new(q_mat, c, rng.random_range(-1.0..1.0), cons).expect("generated instance is valid")
}

/// Random P-ellipsoid with `rows × n` factors and `l` generators whose
/// entries are scaled by `gen_scale` relative to the center.
pub fn random_p_ellipsoid<R: Rng + ?Sized>(rng: &mut R, n: usize, rows: usize, l: usize, gen_scale: f64) -> PEllipsoid {
    let p0 = gaussian_mat(rng, rows, n) / (n as f64).sqrt();
    let b0 = gaussian_vec(rng, n) * 0.3;
    let gamma0 = -Uniform::new(0.5, 1.5).expect("valid range").sample(rng);
    let generators = (0..l)
        .map(|_| {
            PGenerator::new(
                gaussian_mat(rng, rows, n) * (gen_scale / (n as f64).sqrt()),
                gaussian_vec(rng, n) * (0.3 * gen_scale),
                gen_scale * Distribution::<f64>::sample(&StandardNormal, rng) * 0.5,
            )
        })
        .collect();
    PEllipsoid::new(p0, b0, gamma0, generators).expect("generated set is valid")
}

/// Random ellipsoid in `(A, b, γ)` space around `center`; generator matrices
/// are symmetric.
pub fn random_theta_ellipsoid<R: Rng + ?Sized>(rng: &mut R, center: Theta, l: usize, gen_scale: f64) -> ThetaEllipsoid {
    let n = center.dim();
    let generators = (0..l)
        .map(|_| {
            let g = gaussian_mat(rng, n, n);
            Theta::new(
                (&g + g.transpose()) * (0.5 * gen_scale / (n as f64).sqrt()),
                gaussian_vec(rng, n) * (0.3 * gen_scale),
                gen_scale * Distribution::<f64>::sample(&StandardNormal, rng) * 0.5,
            )
        })
        .collect();
    ThetaEllipsoid::new(center, generators).expect("generated set is valid")
}

/// Uniform sample from the unit ball in `ℝ^l`.
pub fn sample_unit_ball<R: Rng + ?Sized>(rng: &mut R, l: usize) -> Vec<f64> {
    let dir = gaussian_vec(rng, l);
    let norm = dir.norm();
    let radius: f64 = rng.random::<f64>().powf(1.0 / l as f64);
    dir.iter().map(|v| v / norm * radius).collect()
}

/// Uniform sample from the unit sphere in `ℝ^l`.
pub fn sample_unit_sphere<R: Rng + ?Sized>(rng: &mut R, l: usize) -> Vec<f64> {
    let dir = gaussian_vec(rng, l);
    let norm = dir.norm();
    dir.iter().map(|v| v / norm).collect()
}
