//! Posterior samplers for the factor SV model and their building blocks.

pub mod chain;
pub mod config;
pub mod draws;
pub mod gibbs;
pub mod gig;
pub mod hmc;
pub mod interweave;
pub mod shrinkage;
pub mod signs;
pub mod sv_params;

pub use chain::{initial_state, pm_log_acceptance, run_chain, Chain, ChainState, PmPoint, SweepReport};
pub use config::{MixedKernel, NutsSettings, PhiCorrection, SamplerConfig, Scheme, UpdateMask};
pub use draws::{param_names, param_values, ChainDraws};
pub use signs::identify_signs;
