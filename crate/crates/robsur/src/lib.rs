//! Experiment drivers, file formats and the command-line front end for
//! `robsur-core`.

pub mod error;
pub mod exp1;
pub mod exp2;
pub mod gradsuite;
pub mod io;
pub mod metrics;

pub use error::{AppError, AppResult};
