//! Numerical core for graph-based attribute inference and for the two-phase
//! evasion-noise defense against it.
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is a pure
//! function of its inputs and an explicit seed; file formats, pipelines and the
//! command line live in the `attrguard` companion crate.
//!
//! Inference side:
//! - [`graph`]: social graph, behavior matrix, label sets, synthetic worlds
//! - [`prior`]: logistic-regression prior learner
//! - [`lbp`]: pairwise MRF, loopy belief propagation, exact enumeration
//! - [`linear`]: linearized residual propagation and convergence analysis
//!
//! Defense side:
//! - [`classifier`]: differentiable multi-class classifiers
//! - [`panda`]: policy-aware minimum-noise search
//! - [`mechanism`]: KL-optimal randomized noise selection
//! - [`game_lp`]: micro-scale game-theoretic LP used as a reference
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod classifier;
pub mod error;
pub mod game_lp;
pub mod graph;
pub mod lbp;
pub mod linear;
pub mod mechanism;
pub mod metrics;
pub mod panda;
pub mod prior;
pub mod rng;

mod math;
mod rows;

pub use error::{Error, Result};
