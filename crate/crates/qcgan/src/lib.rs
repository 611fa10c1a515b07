//! Hybrid quantum-classical GAN laboratory.
//!
//! The generator is a 5-qubit variational circuit (angle-encoded noise,
//! alternating Rx/Rz layers with a CRX entangling ring) whose basis
//! probabilities feed a single linear layer; the discriminator and the
//! classical baseline generators are small dense networks. Training is
//! plain SGD with exact gradients end to end, and image quality is scored
//! with a pixel-space Frechet distance built on a from-scratch Jacobi
//! eigensolver.

// The numerical kernels index rows and columns symmetrically; iterator
// rewrites of those loops obscure the math they mirror.
#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod data;
pub mod metrics;
pub mod model;
pub mod qsim;
pub mod train;

/// Crate-wide error type. Variants map onto process exit codes in the CLI:
/// configuration/shape/domain problems exit 1, data and parse problems
/// exit 2, numerical failures exit 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("structural error: {0}")]
    Shape(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Shape(_) | Error::Domain(_) => 1,
            Error::Parse(_) | Error::Io(_) => 2,
            Error::Numerical(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
