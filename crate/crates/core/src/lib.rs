//! Recovery of group-sparse signals from sparsely corrupted measurements.

pub mod certificate;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod instance;
pub mod linalg;
pub mod parallel;
pub mod solver;

pub use error::{Error, Result};
