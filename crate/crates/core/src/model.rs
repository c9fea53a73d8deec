//! Factor stochastic volatility model with leverage in the idiosyncratic errors.
//!
//! Observations follow `y_t = B f_t + u_t`. Each idiosyncratic log-variance `h1[s]`
//! and each factor log-variance `h2[j]` is a stationary AR(1). The error `u_st`
//! is correlated (coefficient `rho_s`) with the innovation that moved `h1[s]` from
//! `t-1` to `t`, so the measurement density of `y_st` depends on both `h1[s, t]`
//! and `h1[s, t-1]`. The first period has no preceding innovation and carries no
//! leverage term.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::samplers::shrinkage::ShrinkState;
use crate::smc::SeriesModel;

/// Designated log-density for values outside a prior's support.
pub const LOG_ZERO: f64 = f64::NEG_INFINITY;

pub(crate) const VAR_FLOOR: f64 = 1e-300;
pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Number of observed series.
    pub p: usize,
    /// Number of latent factors.
    pub k: usize,
    /// Number of time periods.
    pub t: usize,
}

impl ModelDims {
    pub fn new(p: usize, k: usize, t: usize) -> Result<Self> {
        let dims = ModelDims { p, k, t };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidArgument("p must be at least 1".into()));
        }
        if self.k == 0 || self.k > self.p {
            return Err(Error::InvalidArgument(format!(
                "k must satisfy 1 <= k <= p (k = {}, p = {})",
                self.k, self.p
            )));
        }
        if self.t < 2 {
            return Err(Error::InvalidArgument(format!("T must be at least 2 (T = {})", self.t)));
        }
        Ok(())
    }

    /// Number of unrestricted loadings in row `s` (0-based): `min(s + 1, k)`.
    pub fn free_loadings(&self, s: usize) -> usize {
        (s + 1).min(self.k)
    }

    pub fn n_free_loadings(&self) -> usize {
        (0..self.p).map(|s| self.free_loadings(s)).sum()
    }
}

/// Parameters of one univariate SV process. `rho` is zero for factor series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvParams {
    pub mu: f64,
    pub phi: f64,
    pub tau2: f64,
    pub rho: f64,
}

impl SvParams {
    pub fn new(mu: f64, phi: f64, tau2: f64, rho: f64) -> Result<Self> {
        let prm = SvParams { mu, phi, tau2, rho };
        prm.validate()?;
        Ok(prm)
    }

    /// Factor-series parameters: level fixed at zero and no leverage.
    pub fn factor(phi: f64, tau2: f64) -> Result<Self> {
        Self::new(0.0, phi, tau2, 0.0)
    }

    pub fn is_valid(&self) -> bool {
        self.mu.is_finite()
            && self.phi.is_finite()
            && self.phi.abs() < 1.0
            && self.tau2.is_finite()
            && self.tau2 > 0.0
            && self.rho.is_finite()
            && self.rho.abs() < 1.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{self:?}")))
        }
    }

    #[inline]
    pub fn tau(&self) -> f64 {
        self.tau2.sqrt()
    }

    #[inline]
    pub fn stationary_var(&self) -> f64 {
        self.tau2 / (1.0 - self.phi * self.phi)
    }

    /// Innovation `h - mu - phi (h_prev - mu)`.
    #[inline]
    pub fn innovation(&self, h: f64, h_prev: f64) -> f64 {
        h - self.mu - self.phi * (h_prev - self.mu)
    }
}

/// Lower-triangular `p x k` loading matrix; entries strictly above the diagonal are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorLoadings(DMatrix<f64>);

impl FactorLoadings {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.ncols() > matrix.nrows() {
            return Err(Error::InvalidArgument("loadings must have k <= p".into()));
        }
        for s in 0..matrix.nrows() {
            for j in (s + 1)..matrix.ncols() {
                if matrix[(s, j)] != 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "loading ({s}, {j}) above the diagonal must be zero"
                    )));
                }
            }
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("loadings"));
        }
        Ok(FactorLoadings(matrix))
    }

    pub fn zeros(p: usize, k: usize) -> Self {
        FactorLoadings(DMatrix::zeros(p, k))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn p(&self) -> usize {
        self.0.nrows()
    }

    pub fn k(&self) -> usize {
        self.0.ncols()
    }

    #[inline]
    pub fn get(&self, s: usize, j: usize) -> f64 {
        self.0[(s, j)]
    }

    /// Sets a free entry. Writes above the diagonal are rejected.
    pub fn set(&mut self, s: usize, j: usize, value: f64) -> Result<()> {
        if j > s {
            return Err(Error::InvalidArgument(format!("loading ({s}, {j}) is restricted to zero")));
        }
        self.0[(s, j)] = value;
        Ok(())
    }

    pub(crate) fn set_free_row(&mut self, s: usize, values: &[f64]) {
        debug_assert!(values.len() <= s + 1);
        for (j, v) in values.iter().enumerate() {
            self.0[(s, j)] = *v;
        }
    }

    pub(crate) fn scale_column(&mut self, j: usize, c: f64) {
        self.0.column_mut(j).scale_mut(c);
    }

    /// `B_s . f_t` for every `t`.
    pub fn row_times_factors(&self, s: usize, f: &DMatrix<f64>) -> Vec<f64> {
        let k = self.k();
        (0..f.ncols())
            .map(|t| (0..k.min(s + 1)).map(|j| self.0[(s, j)] * f[(j, t)]).sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    /// Idiosyncratic log-variances, `p x T`.
    pub h1: DMatrix<f64>,
    /// Factor log-variances, `k x T`.
    pub h2: DMatrix<f64>,
    /// Factors, `k x T`.
    pub f: DMatrix<f64>,
}

impl LatentState {
    pub fn zeros(dims: ModelDims) -> Self {
        LatentState {
            h1: DMatrix::zeros(dims.p, dims.t),
            h2: DMatrix::zeros(dims.k, dims.t),
            f: DMatrix::zeros(dims.k, dims.t),
        }
    }

    pub fn check(&self, dims: ModelDims) -> Result<()> {
        check_shape("h1", &self.h1, dims.p, dims.t)?;
        check_shape("h2", &self.h2, dims.k, dims.t)?;
        check_shape("f", &self.f, dims.k, dims.t)?;
        if self.h1.iter().chain(self.h2.iter()).chain(self.f.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("latent state"));
        }
        Ok(())
    }
}

pub(crate) fn check_shape(
    what: &'static str,
    m: &DMatrix<f64>,
    rows: usize,
    cols: usize,
) -> Result<()> {
    if m.nrows() != rows {
        return Err(Error::DimensionMismatch { what, expected: rows, found: m.nrows() });
    }
    if m.ncols() != cols {
        return Err(Error::DimensionMismatch { what, expected: cols, found: m.ncols() });
    }
    Ok(())
}

/// Full parameter state.
#[derive(Debug, Clone, PartialEq)]
pub struct Theta {
    pub idio: Vec<SvParams>,
    pub fac: Vec<SvParams>,
    pub loadings: FactorLoadings,
    pub shrink: Option<ShrinkState>,
}

impl Theta {
    pub fn dims_for(&self, t: usize) -> ModelDims {
        ModelDims { p: self.idio.len(), k: self.fac.len(), t }
    }

    pub fn validate(&self, dims: ModelDims) -> Result<()> {
        if self.idio.len() != dims.p {
            return Err(Error::DimensionMismatch { what: "idio params", expected: dims.p, found: self.idio.len() });
        }
        if self.fac.len() != dims.k {
            return Err(Error::DimensionMismatch { what: "factor params", expected: dims.k, found: self.fac.len() });
        }
        check_shape("loadings", self.loadings.matrix(), dims.p, dims.k)?;
        for prm in &self.idio {
            prm.validate()?;
        }
        for prm in &self.fac {
            prm.validate()?;
            if prm.mu != 0.0 || prm.rho != 0.0 {
                return Err(Error::InvalidParameter("factor series must have mu = 0 and rho = 0".into()));
            }
        }
        Ok(())
    }
}

/// Prior on the free loadings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LoadingPrior {
    /// Independent `N(0, variance)` on each free loading.
    Normal { variance: f64 },
    /// Normal-gamma hierarchy: `B_sj ~ N(0, s2_sj)`, `s2_sj ~ G(a, lambda2_s / 2)`,
    /// `lambda2_s ~ G(c, d)` (shape, rate).
    NormalGamma { a: f64, c: f64, d: f64 },
}

impl Default for LoadingPrior {
    fn default() -> Self {
        LoadingPrior::Normal { variance: 1.0 }
    }
}

/// Evaluates `log N(x | mean, var)`, flooring the variance.
#[inline]
pub(crate) fn ln_normal(x: f64, mean: f64, var: f64) -> f64 {
    let var = var.max(VAR_FLOOR);
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

/// Leverage-adjusted mean shift and variance of `u_st` given `h_t` and (when it
/// exists) `h_{t-1}`.
#[inline]
pub(crate) fn leverage_moments(h: f64, h_prev: Option<f64>, prm: &SvParams) -> (f64, f64) {
    match h_prev {
        Some(hp) => {
            let sd = (0.5 * h).exp();
            let shift = prm.rho / prm.tau() * sd * prm.innovation(h, hp);
            let var = (1.0 - prm.rho * prm.rho) * sd * sd;
            (shift, var.max(VAR_FLOOR))
        }
        None => (0.0, h.exp().max(VAR_FLOOR)),
    }
}

#[inline]
pub(crate) fn idio_measurement_ln(y: f64, bf: f64, h: f64, h_prev: Option<f64>, prm: &SvParams) -> f64 {
    let (shift, var) = leverage_moments(h, h_prev, prm);
    ln_normal(y, bf + shift, var)
}

fn ensure_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Log measurement density of `y_st` given `h_t`, `h_{t-1}` and the factor
/// contribution `bf = B_s . f_t`.
pub fn idio_measurement_logdensity(y: f64, bf: f64, h: f64, h_prev: f64, prm: &SvParams) -> Result<f64> {
    ensure_finite(&[y, bf, h, h_prev, prm.mu, prm.phi, prm.tau2, prm.rho], "idiosyncratic measurement")?;
    if prm.rho.abs() >= 1.0 {
        return Err(Error::InvalidParameter(format!("|rho| = {} gives a degenerate variance", prm.rho.abs())));
    }
    if prm.tau2 <= 0.0 {
        return Err(Error::InvalidParameter("tau2 must be positive".into()));
    }
    Ok(idio_measurement_ln(y, bf, h, Some(h_prev), prm))
}

/// Log measurement density of `y_s1`, the first period, which carries no leverage term.
pub fn idio_initial_measurement_logdensity(y: f64, bf: f64, h: f64) -> Result<f64> {
    ensure_finite(&[y, bf, h], "idiosyncratic measurement")?;
    Ok(ln_normal(y, bf, h.exp()))
}

/// `log N(f | 0, exp(h))`.
pub fn factor_measurement_logdensity(f: f64, h: f64) -> Result<f64> {
    ensure_finite(&[f, h], "factor measurement")?;
    Ok(ln_normal(f, 0.0, h.exp()))
}

/// `log N(h | mu + phi (h_prev - mu), tau2)`.
pub fn transition_logdensity(h: f64, h_prev: f64, prm: &SvParams) -> Result<f64> {
    ensure_finite(&[h, h_prev, prm.mu, prm.phi, prm.tau2], "transition")?;
    if prm.tau2 <= 0.0 {
        return Err(Error::InvalidParameter("tau2 must be positive".into()));
    }
    Ok(ln_normal(h, prm.mu + prm.phi * (h_prev - prm.mu), prm.tau2))
}

/// Stationary AR(1) log-density of the first state.
pub fn initial_logdensity(h: f64, prm: &SvParams) -> Result<f64> {
    ensure_finite(&[h, prm.mu, prm.phi, prm.tau2], "initial state")?;
    if prm.phi.abs() >= 1.0 {
        return Err(Error::InvalidParameter(format!("|phi| = {} is not stationary", prm.phi.abs())));
    }
    if prm.tau2 <= 0.0 {
        return Err(Error::InvalidParameter("tau2 must be positive".into()));
    }
    Ok(ln_normal(h, prm.mu, prm.stationary_var()))
}

/// Half-Cauchy prior on `tau`, expressed as a density on `tau2`.
pub fn ln_prior_tau2(tau2: f64) -> f64 {
    if !(tau2 > 0.0) || !tau2.is_finite() {
        return LOG_ZERO;
    }
    -(std::f64::consts::PI * (1.0 + tau2) * tau2.sqrt()).ln()
}

/// `U(-1, 1)` prior used for `phi` and `rho`.
pub fn ln_prior_unit_interval(x: f64) -> f64 {
    if x.abs() < 1.0 {
        -std::f64::consts::LN_2
    } else {
        LOG_ZERO
    }
}

/// `log G(x | shape, rate)`.
pub(crate) fn ln_gamma_density(x: f64, shape: f64, rate: f64) -> f64 {
    if !(x > 0.0) {
        return LOG_ZERO;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Sum of the log prior terms of `theta`. The flat prior on the idiosyncratic
/// levels contributes zero; values outside a support give [`LOG_ZERO`].
pub fn prior_logdensity(theta: &Theta, prior: &LoadingPrior) -> f64 {
    let mut lp = 0.0;
    for prm in &theta.idio {
        lp += ln_prior_tau2(prm.tau2) + ln_prior_unit_interval(prm.phi) + ln_prior_unit_interval(prm.rho);
    }
    for prm in &theta.fac {
        lp += ln_prior_tau2(prm.tau2) + ln_prior_unit_interval(prm.phi);
    }
    if lp == LOG_ZERO {
        return LOG_ZERO;
    }
    let b = &theta.loadings;
    match (prior, theta.shrink.as_ref()) {
        (LoadingPrior::NormalGamma { .. }, Some(sh)) => {
            for s in 0..b.p() {
                if !(sh.lambda2[s] > 0.0) {
                    return LOG_ZERO;
                }
                lp += ln_gamma_density(sh.lambda2[s], sh.c, sh.d);
                for j in 0..b.k().min(s + 1) {
                    let s2 = sh.sigma2[(s, j)];
                    if !(s2 > 0.0) {
                        return LOG_ZERO;
                    }
                    lp += ln_gamma_density(s2, sh.a[s], 0.5 * sh.lambda2[s]);
                    lp += ln_normal(b.get(s, j), 0.0, s2);
                }
            }
        }
        (LoadingPrior::NormalGamma { .. }, None) => return LOG_ZERO,
        (LoadingPrior::Normal { variance }, _) => {
            for s in 0..b.p() {
                for j in 0..b.k().min(s + 1) {
                    lp += ln_normal(b.get(s, j), 0.0, *variance);
                }
            }
        }
    }
    lp
}

fn simulate_ar1_path<R: Rng>(prm: &SvParams, t: usize, rng: &mut R, z: &mut Vec<f64>) -> Vec<f64> {
    let mut h = Vec::with_capacity(t);
    z.clear();
    let e0: f64 = StandardNormal.sample(rng);
    h.push(prm.mu + prm.stationary_var().sqrt() * e0);
    z.push(0.0);
    let tau = prm.tau();
    for i in 1..t {
        let e: f64 = StandardNormal.sample(rng);
        h.push(prm.mu + prm.phi * (h[i - 1] - prm.mu) + tau * e);
        z.push(e);
    }
    h
}

/// Draws a panel from the model. Returns `(y, latent)` with `y` of shape `p x T`.
pub fn simulate(dims: ModelDims, theta: &Theta, seed: u64) -> Result<(DMatrix<f64>, LatentState)> {
    dims.validate()?;
    theta.validate(dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut latent = LatentState::zeros(dims);
    let mut z = Vec::with_capacity(dims.t);

    let mut y = DMatrix::zeros(dims.p, dims.t);
    for (s, prm) in theta.idio.iter().enumerate() {
        let h = simulate_ar1_path(prm, dims.t, &mut rng, &mut z);
        let rho_c = (1.0 - prm.rho * prm.rho).sqrt();
        for t in 0..dims.t {
            let e: f64 = StandardNormal.sample(&mut rng);
            let sd = (0.5 * h[t]).exp();
            // z[t] is the standardized innovation that produced h[t]; zero at t = 0.
            let u = if t == 0 { sd * e } else { sd * (prm.rho * z[t] + rho_c * e) };
            latent.h1[(s, t)] = h[t];
            y[(s, t)] = u;
        }
    }
    for (j, prm) in theta.fac.iter().enumerate() {
        let h = simulate_ar1_path(prm, dims.t, &mut rng, &mut z);
        for t in 0..dims.t {
            let e: f64 = StandardNormal.sample(&mut rng);
            latent.h2[(j, t)] = h[t];
            latent.f[(j, t)] = (0.5 * h[t]).exp() * e;
        }
    }
    y += theta.loadings.matrix() * &latent.f;
    Ok((y, latent))
}

/// `log p(y | theta, latents)`: the sum of idiosyncratic measurement densities
/// over the whole panel, conditional on the factors.
pub fn conditional_loglik(y: &DMatrix<f64>, state: &LatentState, theta: &Theta) -> Result<f64> {
    let dims = ModelDims { p: y.nrows(), k: theta.fac.len(), t: y.ncols() };
    check_shape("h1", &state.h1, dims.p, dims.t)?;
    check_shape("h2", &state.h2, dims.k, dims.t)?;
    check_shape("f", &state.f, dims.k, dims.t)?;
    if theta.idio.len() != dims.p {
        return Err(Error::DimensionMismatch { what: "idio params", expected: dims.p, found: theta.idio.len() });
    }
    check_shape("loadings", theta.loadings.matrix(), dims.p, dims.k)?;
    let bf = theta.loadings.matrix() * &state.f;
    let mut total = 0.0;
    for s in 0..dims.p {
        let prm = &theta.idio[s];
        for t in 0..dims.t {
            let hp = if t == 0 { None } else { Some(state.h1[(s, t - 1)]) };
            total += idio_measurement_ln(y[(s, t)], bf[(s, t)], state.h1[(s, t)], hp, prm);
        }
    }
    Ok(total)
}

/// The simulation design used to benchmark the samplers: `phi = 0.98`,
/// `rho = -0.1`, `mu = 0.01`, `tau2 = 0.05` for every series, factor
/// persistence 0.98 and variance 0.05, and the loading matrix whose transpose is
///
/// ```text
/// [1 .9 .8 .7 .6 .5 .4 .3 .2 .1]
/// [0  1 .1 .2 .3 .4 .5 .6 .7 .8]
/// ```
///
/// `p <= 10` and `k <= 2` select the leading rows and columns.
pub fn benchmark_theta(p: usize, k: usize) -> Result<Theta> {
    if p == 0 || p > 10 || k == 0 || k > 2 || k > p {
        return Err(Error::InvalidArgument(format!(
            "benchmark design supports 1 <= k <= 2, k <= p <= 10 (p = {p}, k = {k})"
        )));
    }
    const COL1: [f64; 10] = [1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1];
    const COL2: [f64; 10] = [0.0, 1.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
    let b = DMatrix::from_fn(p, k, |s, j| if j == 0 { COL1[s] } else { COL2[s] });
    Ok(Theta {
        idio: vec![SvParams::new(0.01, 0.98, 0.05, -0.1)?; p],
        fac: vec![SvParams::factor(0.98, 0.05)?; k],
        loadings: FactorLoadings::new(b)?,
        shrink: None,
    })
}

/// One univariate SV series as a state-space model for the particle filters.
///
/// With `offset = Some(bf)` the observations are the idiosyncratic series
/// `y_s` with mean `bf[t] = B_s . f_t`; with `None` they are a factor series,
/// whose parameters carry `rho = 0`.
#[derive(Debug, Clone, Copy)]
pub struct SvSeries<'a> {
    pub prm: SvParams,
    pub offset: Option<&'a [f64]>,
    tau: f64,
    stationary_sd: f64,
}

impl<'a> SvSeries<'a> {
    pub fn new(prm: SvParams, offset: Option<&'a [f64]>) -> Self {
        SvSeries { prm, offset, tau: prm.tau(), stationary_sd: prm.stationary_var().sqrt() }
    }

    #[inline]
    pub(crate) fn offset_at(&self, t: usize) -> f64 {
        self.offset.map_or(0.0, |o| o[t])
    }
}

impl SeriesModel for SvSeries<'_> {
    #[inline]
    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.prm.mu + self.stationary_sd * z
    }

    #[inline]
    fn initial_logdensity(&self, h: f64) -> f64 {
        ln_normal(h, self.prm.mu, self.stationary_sd * self.stationary_sd)
    }

    #[inline]
    fn sample_transition<R: Rng + ?Sized>(&self, _t: usize, h_prev: f64, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.prm.mu + self.prm.phi * (h_prev - self.prm.mu) + self.tau * z
    }

    #[inline]
    fn transition_logdensity(&self, _t: usize, h: f64, h_prev: f64) -> f64 {
        ln_normal(h, self.prm.mu + self.prm.phi * (h_prev - self.prm.mu), self.prm.tau2)
    }

    #[inline]
    fn measurement_logdensity(&self, t: usize, y: f64, h: f64, h_prev: Option<f64>) -> f64 {
        idio_measurement_ln(y, self.offset_at(t), h, h_prev, &self.prm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

    fn prm(mu: f64, phi: f64, tau2: f64, rho: f64) -> SvParams {
        SvParams::new(mu, phi, tau2, rho).unwrap()
    }

    #[test]
    fn idio_measurement_examples() {
        let p0 = prm(0.0, 0.0, 1.0, 0.0);
        let v = idio_measurement_logdensity(0.0, 0.0, 0.0, 0.0, &p0).unwrap();
        assert!((v + HALF_LN_2PI).abs() < 1e-12);
        let v = idio_measurement_logdensity(1.0, 0.0, 0.0, 0.0, &p0).unwrap();
        assert!((v + HALF_LN_2PI + 0.5).abs() < 1e-12);

        // Hand evaluation: mean = 0.5 e^{0.1} (0.2 - 0.05), var = 0.75 e^{0.2}.
        let p1 = prm(0.0, 0.5, 1.0, 0.5);
        let mean = 0.5 * 0.1f64.exp() * 0.15;
        let var = 0.75 * 0.2f64.exp();
        let expected = -0.5 * (2.0 * std::f64::consts::PI * var).ln() - mean * mean / (2.0 * var);
        let v = idio_measurement_logdensity(0.0, 0.0, 0.2, 0.1, &p1).unwrap();
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
    }

    #[test]
    fn idio_measurement_errors() {
        let p0 = prm(0.0, 0.0, 1.0, 0.0);
        assert!(idio_measurement_logdensity(f64::NAN, 0.0, 0.0, 0.0, &p0).is_err());
        let bad = SvParams { mu: 0.0, phi: 0.0, tau2: 1.0, rho: 1.0 };
        assert!(idio_measurement_logdensity(0.0, 0.0, 0.0, 0.0, &bad).is_err());
    }

    #[test]
    fn leverage_reduces_to_plain_gaussian() {
        let p = prm(0.3, 0.9, 0.2, 0.0);
        for &(y, bf, h, hp) in &[(0.4, -0.1, 0.5, -1.0), (-2.0, 1.0, -3.0, 2.0), (0.0, 0.0, 1.0, 1.0)] {
            let a = idio_measurement_logdensity(y, bf, h, hp, &p).unwrap();
            let b = ln_normal(y, bf, f64::exp(h));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn factor_measurement_examples() {
        assert!((factor_measurement_logdensity(0.0, 0.0).unwrap() + HALF_LN_2PI).abs() < 1e-12);
        assert!((factor_measurement_logdensity(2.0, 0.0).unwrap() + HALF_LN_2PI + 2.0).abs() < 1e-12);
        let expected = -0.5 * (8.0 * std::f64::consts::PI).ln() - 0.125;
        assert!((factor_measurement_logdensity(1.0, 4f64.ln()).unwrap() - expected).abs() < 1e-12);
        assert!(factor_measurement_logdensity(f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn transition_examples() {
        let p = prm(0.0, 0.98, 0.05, 0.0);
        let expected = -0.5 * (2.0 * std::f64::consts::PI * 0.05).ln();
        assert!((transition_logdensity(0.0, 0.0, &p).unwrap() - expected).abs() < 1e-12);

        let p = prm(0.7, 0.3, 1.0, 0.0);
        assert!((transition_logdensity(0.7, 0.7, &p).unwrap() + HALF_LN_2PI).abs() < 1e-12);

        let p = prm(0.2, 0.0, 0.4, 0.0);
        let a = transition_logdensity(1.0, -5.0, &p).unwrap();
        let b = transition_logdensity(1.0, 9.0, &p).unwrap();
        assert_eq!(a, b);
        assert!((a - ln_normal(1.0, 0.2, 0.4)).abs() < 1e-15);
    }

    #[test]
    fn initial_examples() {
        let p = prm(0.0, 0.0, 1.0, 0.0);
        assert!((initial_logdensity(0.0, &p).unwrap() + HALF_LN_2PI).abs() < 1e-12);
        let p = prm(0.01, 0.98, 0.05, 0.0);
        assert!((p.stationary_var() - 0.05 / 0.0396).abs() < 1e-12);
        assert!((p.stationary_var() - 1.2626).abs() < 1e-4);
        let expected = -0.5 * (2.0 * std::f64::consts::PI * p.stationary_var()).ln();
        assert!((initial_logdensity(0.01, &p).unwrap() - expected).abs() < 1e-12);
        let bad = SvParams { mu: 0.0, phi: 1.0, tau2: 1.0, rho: 0.0 };
        assert!(initial_logdensity(0.0, &bad).is_err());
    }

    fn quad(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        // composite Simpson
        let h = (hi - lo) / n as f64;
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            let x = lo + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn densities_integrate_to_one() {
        let p = prm(0.2, 0.7, 0.3, -0.6);
        let i1 = quad(|y| idio_measurement_logdensity(y, 0.3, 0.4, -0.2, &p).unwrap().exp(), -30.0, 30.0, 20_000);
        let i2 = quad(|f| factor_measurement_logdensity(f, 0.5).unwrap().exp(), -30.0, 30.0, 20_000);
        let i3 = quad(|h| transition_logdensity(h, 0.3, &p).unwrap().exp(), -30.0, 30.0, 20_000);
        let i4 = quad(|h| initial_logdensity(h, &p).unwrap().exp(), -30.0, 30.0, 20_000);
        for v in [i1, i2, i3, i4] {
            assert!((v - 1.0).abs() < 1e-3, "{v}");
        }
    }

    #[test]
    fn prior_terms() {
        assert!((ln_prior_tau2(1.0) - (1.0 / (2.0 * std::f64::consts::PI)).ln()).abs() < 1e-12);
        assert!((ln_prior_tau2(1.0) + 1.837_877).abs() < 1e-6);
        assert!((ln_prior_unit_interval(0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(ln_prior_unit_interval(1.5), LOG_ZERO);

        let mut theta = benchmark_theta(3, 1).unwrap();
        assert!(prior_logdensity(&theta, &LoadingPrior::default()).is_finite());
        theta.idio[1].phi = 1.5;
        assert_eq!(prior_logdensity(&theta, &LoadingPrior::default()), LOG_ZERO);
    }

    #[test]
    fn simulate_shapes_and_determinism() {
        let dims = ModelDims::new(10, 2, 1000).unwrap();
        let theta = benchmark_theta(10, 2).unwrap();
        let (y, lat) = simulate(dims, &theta, 7).unwrap();
        assert_eq!((y.nrows(), y.ncols()), (10, 1000));
        assert_eq!((lat.h2.nrows(), lat.h2.ncols()), (2, 1000));
        assert_eq!((lat.f.nrows(), lat.f.ncols()), (2, 1000));
        let (y2, lat2) = simulate(dims, &theta, 7).unwrap();
        assert_eq!(y, y2);
        assert_eq!(lat, lat2);
    }

    #[test]
    fn simulate_degenerate_ar_is_constant() {
        let dims = ModelDims::new(1, 1, 20).unwrap();
        let theta = Theta {
            idio: vec![prm(0.4, 0.0, 1e-300, 0.0)],
            fac: vec![SvParams::factor(0.0, 1e-300).unwrap()],
            loadings: FactorLoadings::new(DMatrix::from_element(1, 1, 1.0)).unwrap(),
            shrink: None,
        };
        let (_, lat) = simulate(dims, &theta, 1).unwrap();
        assert!(lat.h1.iter().all(|h| (h - 0.4).abs() < 1e-100));
        assert!(lat.h2.iter().all(|h| h.abs() < 1e-100));
    }

    #[test]
    fn conditional_loglik_examples() {
        let dims = ModelDims::new(1, 1, 3).unwrap();
        let theta = Theta {
            idio: vec![prm(0.0, 0.0, 1.0, 0.0)],
            fac: vec![SvParams::factor(0.5, 0.1).unwrap()],
            loadings: FactorLoadings::zeros(1, 1),
            shrink: None,
        };
        let mut lat = LatentState::zeros(dims);
        lat.f[(0, 1)] = 3.0;
        let y = DMatrix::zeros(1, 3);
        let v = conditional_loglik(&y, &lat, &theta).unwrap();
        assert!((v + 3.0 * HALF_LN_2PI).abs() < 1e-12);

        let bad = DMatrix::zeros(2, 3);
        assert!(conditional_loglik(&bad, &lat, &theta).is_err());
    }

    #[test]
    fn loadings_reject_upper_entries() {
        let mut m = DMatrix::zeros(3, 2);
        m[(0, 1)] = 1.0;
        assert!(FactorLoadings::new(m).is_err());
        let mut b = FactorLoadings::zeros(3, 2);
        assert!(b.set(0, 1, 1.0).is_err());
        assert!(b.set(2, 1, 1.0).is_ok());
    }
}
