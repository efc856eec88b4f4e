//! Shared probability primitives: the seeded random stream, samplers,
//! special functions, conjugate posteriors, and chain diagnostics.

mod chain;
mod conjugate;
mod dist;
mod rng;
mod special;

pub use chain::{ess, quantile, summarize_column, PosteriorChain, PosteriorSummary, RunLength};
pub use conjugate::{beta_bernoulli_posterior, normal_normal_posterior, BetaPosterior};
pub use dist::{
    sample, sample_beta, sample_categorical, sample_categorical_log, sample_dirichlet,
    sample_gamma, sample_inv_gamma, sample_multinomial, sample_mvnormal, sample_normal,
    sample_std_normal, Dist, Draw,
};
pub use rng::RngStream;
pub use special::{digamma, ln_beta, ln_gamma, log_sum_exp, normal_pdf};
