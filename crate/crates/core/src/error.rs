use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("particle collapse at t = {t}: every log-weight is log-zero")]
    ParticleCollapse { t: usize },

    #[error("weights not normalized (sum = {sum})")]
    WeightsNotNormalized { sum: f64 },

    #[error("precision matrix is not positive definite in {0}")]
    NotPositiveDefinite(&'static str),

    #[error("GIG sampler failed to accept within {retries} proposals (m = {m}, k = {k}, l = {l})")]
    GigFailure { m: f64, k: f64, l: f64, retries: usize },

    #[error("zero variance chain")]
    ZeroVariance,

    #[error("chain too short: length {len}, need at least {min}")]
    TooShort { len: usize, min: usize },

    #[error("series {series}: {source}")]
    InSeries {
        series: String,
        #[source]
        source: Box<Error>,
    },

    #[error("sweep {sweep}: {source}")]
    AtSweep {
        sweep: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn in_series(self, series: impl Into<String>) -> Self {
        Error::InSeries {
            series: series.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn at_sweep(self, sweep: usize) -> Self {
        Error::AtSweep {
            sweep,
            source: Box::new(self),
        }
    }

    /// True when the root cause is a numerical failure (collapse, lost definiteness,
    /// GIG exhaustion) rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::ParticleCollapse { .. }
            | Error::NotPositiveDefinite(_)
            | Error::GigFailure { .. }
            | Error::ZeroVariance => true,
            Error::InSeries { source, .. } | Error::AtSweep { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
