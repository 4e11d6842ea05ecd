#![cfg_attr(not(any(feature = "std", test)), no_std)]
//! Deterministic surrogates for robust convex QCQPs.
//!
//! The crate trains parameterizations of a deterministic QCQP so that its
//! ordinary solution is (approximately) robust for an uncertain QCQP. The
//! pipeline is a prediction block, a differentiable interior-point layer
//! ([`det`]) and a differentiable worst-case layer ([`wc`]); [`oracle`] holds
//! the exact robust machinery used for verification.
//!
//! Everything here is `no_std` + `alloc`. File formats, the CLI and the
//! experiment drivers live in the `robsur` crate.

extern crate alloc;

pub mod det;
pub mod error;
pub mod gen;
pub mod gradcheck;
pub mod linalg;
pub mod oracle;
pub mod pack;
pub mod predictor;
pub mod qcqp;
pub mod train;
pub mod wc;

pub use error::{Error, Result};
