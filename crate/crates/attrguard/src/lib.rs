//! File formats, end-to-end pipelines and the `attrguard` command line on
//! top of [`attrguard_core`].

pub mod io;
pub mod pipeline;

pub use attrguard_core as core;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Format(#[from] io::FormatError),
    #[error(transparent)]
    Core(#[from] attrguard_core::Error),
    #[error(
        "residual homophily {w_hat} is not below the necessary convergence bound 1/(2*rho) = {necessary_bound}; \
         linear propagation would diverge"
    )]
    WouldDiverge { w_hat: f64, necessary_bound: f64 },
    #[error("{0}")]
    Config(String),
}

impl Error {
    /// True for bad input, false for numerical failures.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Format(e) => e.is_validation(),
            Error::Core(e) => e.is_validation(),
            Error::WouldDiverge { .. } => false,
            Error::Config(_) => true,
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.is_validation() {
            2
        } else {
            3
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
