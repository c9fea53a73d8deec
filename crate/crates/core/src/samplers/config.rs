use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LoadingPrior;
use crate::parallel::Parallelism;
use crate::score::DEFAULT_LAMBDA;

/// Which posterior sampler drives the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Particle Gibbs with conditional SMC.
    Pg,
    /// Particle Gibbs with ancestor sampling.
    Pgas,
    /// Pseudo-marginal Langevin updates for every `tau2`, particle Gibbs for the rest.
    #[default]
    Mixed,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Pg => "pg",
            Scheme::Pgas => "pgas",
            Scheme::Mixed => "mixed",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pg" => Ok(Scheme::Pg),
            "pgas" => Ok(Scheme::Pgas),
            "mixed" | "mix" => Ok(Scheme::Mixed),
            other => Err(Error::InvalidArgument(format!("unknown scheme '{other}' (expected pg, pgas or mixed)"))),
        }
    }
}

/// Correction factor in the `phi` acceptance ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PhiCorrection {
    /// `sqrt((1 - phi*^2) / (1 - phi^2))`, the ratio of stationary initial densities
    /// left over by the Gaussian proposal.
    #[default]
    Stationary,
    /// `sqrt((1 + phi*^2) / (1 + phi^2))`.
    AsPrinted,
}

/// Conditional SMC variant used for the latent paths in the particle Gibbs
/// part of the mixed sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MixedKernel {
    #[default]
    Plain,
    /// Ancestor sampling; the pseudo-marginal step then refreshes its particle
    /// system with a plain conditional run before proposing.
    AncestorSampling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NutsSettings {
    pub target_accept: f64,
    pub max_depth: usize,
}

impl Default for NutsSettings {
    fn default() -> Self {
        NutsSettings { target_accept: 0.8, max_depth: 10 }
    }
}

/// Switches for individual sweep steps. Disabling steps leaves the
/// corresponding state untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateMask {
    pub sv_params: bool,
    pub loadings: bool,
    pub shrinkage: bool,
    pub interweave: bool,
    pub factors: bool,
    pub latents: bool,
}

impl Default for UpdateMask {
    fn default() -> Self {
        UpdateMask { sv_params: true, loadings: true, shrinkage: true, interweave: true, factors: true, latents: true }
    }
}

impl UpdateMask {
    /// Only the conditional SMC refresh of the latent paths.
    pub fn latents_only() -> Self {
        UpdateMask { sv_params: false, loadings: false, shrinkage: false, interweave: false, factors: false, latents: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub scheme: Scheme,
    pub particles: usize,
    pub iters: usize,
    pub burnin: usize,
    pub seed: u64,
    pub nuts: NutsSettings,
    pub prior: LoadingPrior,
    pub phi_correction: PhiCorrection,
    pub mixed_kernel: MixedKernel,
    /// Forgetting factor of the score recursion.
    pub score_lambda: f64,
    /// Initial Langevin step size on the `log tau2` scale.
    pub langevin_eps: f64,
    /// Acceptance rate the Langevin step size is tuned toward during burn-in.
    pub langevin_target: f64,
    /// Store full latent paths every `thin_latent` retained sweeps.
    pub thin_latent: usize,
    #[serde(skip)]
    pub parallelism: Parallelism,
    #[serde(skip)]
    pub mask: UpdateMask,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            scheme: Scheme::Mixed,
            particles: 500,
            iters: 15_000,
            burnin: 5_000,
            seed: 1,
            nuts: NutsSettings::default(),
            prior: LoadingPrior::default(),
            phi_correction: PhiCorrection::default(),
            mixed_kernel: MixedKernel::default(),
            score_lambda: DEFAULT_LAMBDA,
            langevin_eps: 0.3,
            langevin_target: 0.15,
            thin_latent: 10,
            parallelism: Parallelism::default(),
            mask: UpdateMask::default(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.particles < 2 {
            return bad(format!("particles must be at least 2 (got {})", self.particles));
        }
        if self.burnin >= self.iters {
            return bad(format!("burnin ({}) must be below iters ({})", self.burnin, self.iters));
        }
        if !(self.nuts.target_accept > 0.0 && self.nuts.target_accept < 1.0) {
            return bad(format!("NUTS target acceptance {} outside (0, 1)", self.nuts.target_accept));
        }
        if self.nuts.max_depth == 0 {
            return bad("NUTS max tree depth must be positive".into());
        }
        if !(self.score_lambda > 0.0 && self.score_lambda <= 1.0) {
            return bad(format!("score lambda {} outside (0, 1]", self.score_lambda));
        }
        if !(self.langevin_eps > 0.0 && self.langevin_eps.is_finite()) {
            return bad(format!("Langevin step {} must be positive", self.langevin_eps));
        }
        if !(self.langevin_target > 0.0 && self.langevin_target < 1.0) {
            return bad(format!("Langevin target acceptance {} outside (0, 1)", self.langevin_target));
        }
        if self.thin_latent == 0 {
            return bad("thin_latent must be positive".into());
        }
        match self.prior {
            LoadingPrior::Normal { variance } if !(variance > 0.0 && variance.is_finite()) => {
                bad(format!("loading prior variance {variance} must be positive"))
            }
            LoadingPrior::NormalGamma { a, c, d } if !(a > 0.0 && c > 0.0 && d > 0.0) => {
                bad(format!("normal-gamma hyperparameters must be positive (a = {a}, c = {c}, d = {d})"))
            }
            _ => Ok(()),
        }
    }

    pub fn retained(&self) -> usize {
        self.iters - self.burnin
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_parsing() {
        assert_eq!("PG".parse::<Scheme>().unwrap(), Scheme::Pg);
        assert_eq!("pgas".parse::<Scheme>().unwrap(), Scheme::Pgas);
        assert_eq!("mixed".parse::<Scheme>().unwrap(), Scheme::Mixed);
        assert!("gibbs".parse::<Scheme>().is_err());
        assert_eq!(Scheme::Pgas.to_string(), "pgas");
    }

    #[test]
    fn validation() {
        assert!(SamplerConfig::default().validate().is_ok());
        let c = SamplerConfig { burnin: 10, iters: 10, ..Default::default() };
        assert!(c.validate().is_err());
        let c = SamplerConfig { particles: 1, ..Default::default() };
        assert!(c.validate().is_err());
        let mut c = SamplerConfig::default();
        c.nuts.target_accept = 1.0;
        assert!(c.validate().is_err());
        let c = SamplerConfig { prior: LoadingPrior::NormalGamma { a: 0.5, c: 0.0, d: 1.0 }, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
