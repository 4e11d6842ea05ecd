//! Scalar metrics reported by the experiments.

use robsur_core::{Error, Result};

const GAP_GUARD: f64 = 1e-12;

/// `(surrogate − robust) / |robust|`.
pub fn relative_gap(surrogate_obj: f64, robust_obj: f64) -> Result<f64> {
    if robust_obj.abs() < GAP_GUARD {
        return Err(Error::DivisionGuard(robust_obj.abs()));
    }
    Ok((surrogate_obj - robust_obj) / robust_obj.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_rows() {
        let rows = [
            (-0.1949, -0.1816, 0.0683),
            (-0.5704, -0.5402, 0.0529),
            (-0.5077, -0.4809, 0.0528),
            (-0.5866, -0.5479, 0.0660),
            (-0.6000, -0.5608, 0.0653),
        ];
        for (rc, sur, gap) in rows {
            assert!((relative_gap(sur, rc).unwrap() - gap).abs() <= 1e-3, "{rc} {sur}");
        }
    }

    #[test]
    fn equal_inputs_and_guard() {
        assert_eq!(relative_gap(-0.3, -0.3).unwrap(), 0.0);
        assert!(matches!(relative_gap(1.0, 1e-13), Err(Error::DivisionGuard(_))));
        assert_eq!(relative_gap(2.0, 1.0).unwrap(), 1.0);
    }
}
