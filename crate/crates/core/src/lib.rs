//! Sparse polynomial chaos recovery by transformed-l1 (TL1) minimization.

pub mod basis;
pub mod error;
pub mod harness;
pub mod kdv;
pub mod penalty;
pub mod solvers;
pub mod theory;

pub use error::{Error, Result};
