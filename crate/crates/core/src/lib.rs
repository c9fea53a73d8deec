//! Bayesian estimation of factor multivariate stochastic volatility models with
//! leverage by particle Gibbs, particle Gibbs with ancestor sampling, and a
//! mixed pseudo-marginal/particle Gibbs sampler.

pub mod diagnostics;
pub mod error;
pub mod model;
pub mod parallel;
pub mod samplers;
pub mod score;
pub mod smc;

pub use error::{Error, Result};
pub use model::{FactorLoadings, LatentState, LoadingPrior, ModelDims, SvParams, Theta};
pub use parallel::Parallelism;
