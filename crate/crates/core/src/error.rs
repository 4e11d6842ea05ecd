use alloc::string::String;

use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("constraint index {index} out of range ({len} constraints)")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("problem is infeasible (best phase-one slack {slack:.3e})")]
    Infeasible { slack: f64 },
    #[error("iteration limit reached")]
    MaxIter,
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("KKT system is singular after damping")]
    SingularKkt,
    #[error("symmetric eigensolver did not converge")]
    EigenFailure,
    #[error("constraint {index} carries an uncertainty set this operation does not support")]
    UnsupportedUncertainty { index: usize },
    #[error("worst-case realization of constraint {index} is not convex (min eigenvalue {min_eig:.3e})")]
    NonConvexScenario { index: usize, min_eig: f64 },
    #[error("division guard: |denominator| = {0:.3e} is too small")]
    DivisionGuard(f64),
}

pub type Result<T> = core::result::Result<T, Error>;
