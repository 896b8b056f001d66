//! Exact tabular softmax policy-gradient dynamics, plus numerical certificates
//! for their convergence theory.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod gradients;
pub mod instance;
pub mod mdp;
pub mod optimizer;

pub use error::{Error, Result};
