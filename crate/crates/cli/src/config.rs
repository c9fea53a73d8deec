//! Run configuration and manifest files.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use fmsv_core::model::benchmark_theta;
use fmsv_core::samplers::SamplerConfig;
use fmsv_core::{FactorLoadings, ModelDims, SvParams, Theta};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Simulation design. Every series shares the same SV parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Design {
    pub p: usize,
    pub t: usize,
    pub mu: f64,
    pub phi: f64,
    pub tau2: f64,
    pub rho: f64,
    pub phi_f: f64,
    pub tau2_f: f64,
    /// Loading matrix as `p` rows of `k` entries. When absent, the leading
    /// block of the built-in 10 x 2 design is used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loadings: Option<Vec<Vec<f64>>>,
}

impl Default for Design {
    fn default() -> Self {
        Design { p: 10, t: 1000, mu: 0.01, phi: 0.98, tau2: 0.05, rho: -0.1, phi_f: 0.98, tau2_f: 0.05, loadings: None }
    }
}

impl Design {
    pub fn theta(&self, k: usize) -> Result<Theta, CliError> {
        let loadings = match &self.loadings {
            Some(rows) => {
                if rows.len() != self.p || rows.iter().any(|r| r.len() != k) {
                    return Err(CliError::Usage(format!("design.loadings must be {} rows of {k} values", self.p)));
                }
                FactorLoadings::new(DMatrix::from_fn(self.p, k, |s, j| rows[s][j]))?
            }
            None => benchmark_theta(self.p, k)?.loadings,
        };
        Ok(Theta {
            idio: vec![SvParams::new(self.mu, self.phi, self.tau2, self.rho)?; self.p],
            fac: vec![SvParams::factor(self.phi_f, self.tau2_f)?; k],
            loadings,
            shrink: None,
        })
    }
}

/// Everything a command needs; the sampler seed is the single source of randomness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub factors: usize,
    pub design: Design,
    pub sampler: SamplerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { factors: 2, design: Design::default(), sampler: SamplerConfig::default() }
    }
}

impl RunConfig {
    /// Built-in presets by name.
    pub fn preset(name: &str) -> Result<Self, CliError> {
        match name {
            "paper-sim" => Ok(RunConfig::default()),
            other => Err(CliError::Usage(format!("unknown preset '{other}' (available: paper-sim)"))),
        }
    }

    /// Reads a config file, or the config recorded in a manifest.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let value: toml::Table =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("malformed config {}: {e}", path.display())))?;
        let parsed = if value.contains_key("command") && value.contains_key("config") {
            toml::from_str::<Manifest>(&text).map(|m| m.config)
        } else {
            toml::from_str::<RunConfig>(&text)
        };
        parsed.map_err(|e| CliError::Usage(format!("malformed config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.sampler.seed > i64::MAX as u64 {
            return Err(CliError::Usage(format!("seed {} exceeds {}", self.sampler.seed, i64::MAX)));
        }
        ModelDims::new(self.design.p, self.factors, self.design.t)?;
        self.sampler.validate()?;
        Ok(())
    }
}

/// Record of one command invocation, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub started: f64,
    pub finished: f64,
    /// Output files relative to the output directory.
    pub files: Vec<String>,
    pub config: RunConfig,
}

impl Manifest {
    pub fn start(command: &str, config: &RunConfig) -> Self {
        let now = unix_now();
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            started: now,
            finished: now,
            files: Vec::new(),
            config: config.clone(),
        }
    }

    pub fn write(mut self, dir: &Path) -> Result<(), CliError> {
        self.finished = unix_now();
        self.files.push("manifest.toml".into());
        let text = toml::to_string(&self).expect("manifest serializes");
        crate::io::write_text(&dir.join("manifest.toml"), &text)
    }
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}
