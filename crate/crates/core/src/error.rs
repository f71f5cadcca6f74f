use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the numerical core.
///
/// Variants are split between input validation ([`Error::is_validation`]) and
/// numerical failures, which callers map onto different exit codes.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("self-loop on node {node}")]
    SelfLoop { node: usize },
    #[error("duplicate edge ({u}, {v})")]
    DuplicateEdge { u: usize, v: usize },
    #[error("node id {id} out of range for {count} nodes")]
    NodeOutOfRange { id: usize, count: usize },
    #[error("value out of range: {value} at ({user}, {object})")]
    ValueOutOfRange { user: usize, object: usize, value: f64 },
    #[error("duplicate entry ({user}, {object})")]
    DuplicateEntry { user: usize, object: usize },
    #[error("unknown user {0}")]
    UnknownUser(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("training set is missing class {0}")]
    MissingClass(String),
    #[error("graph has {nodes} nodes; exact enumeration is capped at {cap}")]
    TooLarge { nodes: usize, cap: usize },
    #[error("non-finite loss during training: {0}")]
    NonFiniteLoss(String),
    #[error("non-finite message on directed edge {from} -> {to} at iteration {iteration}")]
    NonFiniteMessage { from: usize, to: usize, iteration: usize },
    #[error(
        "linear propagation diverged at iteration {iteration} (l1 norm {norm:e}); \
         residual homophily {w_hat} violates the necessary bound 1/(2*rho) = {necessary_bound}"
    )]
    Divergence { iteration: usize, norm: f64, w_hat: f64, necessary_bound: f64 },
    #[error("budget {budget} is infeasible: smallest noise norm is {min_norm}")]
    Infeasible { budget: f64, min_norm: f64 },
    #[error("root finding did not converge: residual {residual:e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("linear program failed: {0}")]
    Lp(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for errors caused by bad input rather than numerical trouble.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::NonFiniteLoss(_)
                | Error::NonFiniteMessage { .. }
                | Error::Divergence { .. }
                | Error::NoConvergence { .. }
                | Error::Lp(_)
        )
    }
}
