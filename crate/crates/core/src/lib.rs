//! Bayesian inference workbench.
//!
//! Four model pipelines share one set of probability primitives:
//!
//! * [`hier`]: two-level hierarchical model with Student-t(5) errors fit by a
//!   six-step Gibbs sampler, with outlier flags and Bayesian p-values.
//! * [`spatial`]: Gaussian-process regression with Matérn correlation and a
//!   nugget, a block Metropolis sampler over a `(φ, γ²)` grid, Gibbs
//!   imputation of missing responses, and kriging.
//! * [`mtd`]: mixture-transition-distribution Markov chains with augmented
//!   Gibbs, order selection, stationary analysis, and forecasting.
//! * [`dpmm`]: truncated mean-field variational inference for a Dirichlet
//!   process mixture of Normals, and a collapsed Gibbs benchmark.
//!
//! Every sampler draws from an explicit [`stats::RngStream`], so a seed fixes
//! the output bit for bit.

pub mod dpmm;
pub mod error;
pub mod hier;
pub mod io;
pub mod linalg;
pub mod mtd;
pub mod simulate;
pub mod spatial;
pub mod stats;

pub use error::{Error, Result};
