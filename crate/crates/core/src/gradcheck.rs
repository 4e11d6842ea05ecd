//! Central finite differences used by the gradient checks.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

/// `(f(h) − f(−h)) / 2h` for a scalar path `f(t)`.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, h: f64) -> f64 {
    (f(h) - f(-h)) / (2.0 * h)
}

/// Coordinatewise central differences of `f` at `x`.
pub fn fd_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = work[i];
            work[i] = orig + h;
            let fp = f(&work);
            work[i] = orig - h;
            let fm = f(&work);
            work[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(floor)
}

/// Scalar version of [`rel_err`].
pub fn rel_err_scalar(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
