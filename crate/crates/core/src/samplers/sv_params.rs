//! Metropolis-within-Gibbs updates of the parameters of one SV series given its
//! latent log-variance path.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::config::PhiCorrection;
use super::hmc::{nuts_step, DualAveraging, HmcOutcome};
use crate::model::{idio_measurement_ln, SvParams};

/// Observations attached to an SV series. Factor series carry no leverage,
/// so their measurement density does not involve the SV parameters and is
/// skipped in acceptance ratios.
#[derive(Debug, Clone, Copy)]
pub enum SeriesData<'a> {
    Idiosyncratic { y: &'a [f64], offset: &'a [f64] },
    Factor,
}

impl SeriesData<'_> {
    /// `sum_t log p(y_t | h_t, h_{t-1}, prm)`, or zero for a factor series.
    pub fn measurement_loglik(&self, h: &[f64], prm: &SvParams) -> f64 {
        match *self {
            SeriesData::Idiosyncratic { y, offset } => {
                let mut ll = idio_measurement_ln(y[0], offset[0], h[0], None, prm);
                for t in 1..h.len() {
                    ll += idio_measurement_ln(y[t], offset[t], h[t], Some(h[t - 1]), prm);
                }
                ll
            }
            SeriesData::Factor => 0.0,
        }
    }

    fn has_leverage(&self, prm: &SvParams) -> bool {
        matches!(self, SeriesData::Idiosyncratic { .. }) && prm.rho != 0.0
    }
}

/// Sum of squared innovations including the stationary first period,
/// `(1 - phi^2)(h_1 - mu)^2 + sum_{t>=2} (h_t - mu - phi (h_{t-1} - mu))^2`.
pub fn innovation_ss(h: &[f64], prm: &SvParams) -> f64 {
    let d0 = h[0] - prm.mu;
    let mut m = (1.0 - prm.phi * prm.phi) * d0 * d0;
    for t in 1..h.len() {
        let e = prm.innovation(h[t], h[t - 1]);
        m += e * e;
    }
    m
}

/// Shape and scale of the inverse-gamma proposal for `tau2`.
pub fn tau2_proposal(h: &[f64], prm: &SvParams) -> (f64, f64) {
    (0.5 * (h.len() as f64 - 1.0), 0.5 * innovation_ss(h, prm))
}

fn mh_accept<R: Rng + ?Sized>(log_r: f64, rng: &mut R) -> bool {
    log_r >= 0.0 || rng.random::<f64>().ln() < log_r
}

/// Log acceptance ratio of moving `tau2` to `tau2_new` under the inverse-gamma proposal.
pub fn tau2_log_ratio(h: &[f64], prm: &SvParams, tau2_new: f64, data: &SeriesData<'_>) -> f64 {
    let new = SvParams { tau2: tau2_new, ..*prm };
    let mut log_r = (1.0 + prm.tau2).ln() - (1.0 + tau2_new).ln();
    if data.has_leverage(prm) {
        log_r += data.measurement_loglik(h, &new) - data.measurement_loglik(h, prm);
    }
    log_r
}

/// Independence MH step for `tau2` with proposal `IG((T - 1) / 2, M / 2)`.
pub fn update_tau2_pg<R: Rng + ?Sized>(h: &[f64], prm: &SvParams, data: &SeriesData<'_>, rng: &mut R) -> (SvParams, bool) {
    let (shape, scale) = tau2_proposal(h, prm);
    let Ok(g) = Gamma::new(shape, 1.0 / scale) else { return (*prm, false) };
    let tau2_new = 1.0 / g.sample(rng);
    if !(tau2_new > 0.0 && tau2_new.is_finite()) {
        return (*prm, false);
    }
    if mh_accept(tau2_log_ratio(h, prm, tau2_new, data), rng) {
        (SvParams { tau2: tau2_new, ..*prm }, true)
    } else {
        (*prm, false)
    }
}

/// Mean and variance of the Gaussian proposal for `phi`, or `None` when the
/// path carries no information about `phi`.
pub fn phi_proposal(h: &[f64], prm: &SvParams) -> Option<(f64, f64)> {
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for t in 1..h.len() {
        let x = h[t - 1] - prm.mu;
        sxx += x * x;
        sxy += x * (h[t] - prm.mu);
    }
    let d0 = h[0] - prm.mu;
    let denom = sxx - d0 * d0;
    if !(denom > 1e-12) {
        return None;
    }
    let var = prm.tau2 / denom;
    Some((var * sxy / prm.tau2, var))
}

pub fn phi_log_ratio(h: &[f64], prm: &SvParams, phi_new: f64, data: &SeriesData<'_>, correction: PhiCorrection) -> f64 {
    if phi_new.abs() >= 1.0 {
        return f64::NEG_INFINITY;
    }
    let new = SvParams { phi: phi_new, ..*prm };
    let (a, b) = (phi_new * phi_new, prm.phi * prm.phi);
    let mut log_r = match correction {
        PhiCorrection::Stationary => 0.5 * ((1.0 - a).ln() - (1.0 - b).ln()),
        PhiCorrection::AsPrinted => 0.5 * ((1.0 + a).ln() - (1.0 + b).ln()),
    };
    if data.has_leverage(prm) {
        log_r += data.measurement_loglik(h, &new) - data.measurement_loglik(h, prm);
    }
    log_r
}

/// Independence MH step for `phi` with the Gaussian proposal from the AR(1)
/// regression; proposals outside `(-1, 1)` are rejected.
pub fn update_phi_pg<R: Rng + ?Sized>(
    h: &[f64],
    prm: &SvParams,
    data: &SeriesData<'_>,
    correction: PhiCorrection,
    rng: &mut R,
) -> (SvParams, bool) {
    let Some((c, d)) = phi_proposal(h, prm) else { return (*prm, false) };
    let z: f64 = StandardNormal.sample(rng);
    let phi_new = c + d.sqrt() * z;
    if phi_new.abs() >= 1.0 {
        return (*prm, false);
    }
    if mh_accept(phi_log_ratio(h, prm, phi_new, data, correction), rng) {
        (SvParams { phi: phi_new, ..*prm }, true)
    } else {
        (*prm, false)
    }
}

/// Mean and variance of the exact Gaussian conditional of `mu` given the path.
pub fn mu_proposal(h: &[f64], prm: &SvParams) -> (f64, f64) {
    let phi = prm.phi;
    let n = h.len() as f64 - 1.0;
    let prec = 1.0 - phi * phi + n * (1.0 - phi) * (1.0 - phi);
    let mut s = (1.0 - phi * phi) * h[0];
    for t in 1..h.len() {
        s += (1.0 - phi) * (h[t] - phi * h[t - 1]);
    }
    (s / prec, prm.tau2 / prec)
}

/// MH step for `mu` (flat prior) whose acceptance ratio is the measurement
/// density ratio alone.
pub fn update_mu_pg<R: Rng + ?Sized>(h: &[f64], prm: &SvParams, data: &SeriesData<'_>, rng: &mut R) -> (SvParams, bool) {
    let (c, d) = mu_proposal(h, prm);
    let z: f64 = StandardNormal.sample(rng);
    let new = SvParams { mu: c + d.sqrt() * z, ..*prm };
    if !data.has_leverage(prm) {
        return (new, true);
    }
    let log_r = data.measurement_loglik(h, &new) - data.measurement_loglik(h, prm);
    if mh_accept(log_r, rng) {
        (new, true)
    } else {
        (*prm, false)
    }
}

/// Sufficient statistics of the leverage coefficient's conditional: with
/// `r_t = y_t - offset_t`, `a_t = exp(h_t / 2) eta_t / tau` and weights
/// `exp(-h_t)` over `t >= 2`, `A = sum a^2 w`, `B = sum a r w`, `C = sum r^2 w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoStats {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub n: f64,
}

impl RhoStats {
    pub fn new(h: &[f64], y: &[f64], offset: &[f64], prm: &SvParams) -> Self {
        let tau = prm.tau();
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for t in 1..h.len() {
            let w = (-h[t]).exp();
            let at = (0.5 * h[t]).exp() * prm.innovation(h[t], h[t - 1]) / tau;
            let r = y[t] - offset[t];
            a += at * at * w;
            b += at * r * w;
            c += r * r * w;
        }
        RhoStats { a, b, c, n: h.len() as f64 - 1.0 }
    }

    /// Log conditional density of `rho` up to a constant, with its derivative.
    pub fn log_density(&self, rho: f64) -> (f64, f64) {
        let q = 1.0 - rho * rho;
        if !(q > 0.0) {
            return (f64::NEG_INFINITY, f64::NAN);
        }
        let quad = self.c - 2.0 * rho * self.b + rho * rho * self.a;
        let lp = -0.5 * self.n * q.ln() - quad / (2.0 * q);
        let d = self.n * rho / q - (rho * self.a - self.b) / q - rho * quad / (q * q);
        (lp, d)
    }

    /// Log density of `z = atanh(rho)` including the Jacobian `1 - rho^2`.
    pub fn log_density_z(&self, z: f64) -> (f64, f64) {
        let rho = z.tanh();
        let q = 1.0 - rho * rho;
        let (lp, d) = self.log_density(rho);
        (lp + q.ln(), d * q - 2.0 * rho)
    }
}

/// One NUTS transition for `rho` on the `atanh` scale. During adaptation
/// `adapt` receives the acceptance statistic.
pub fn update_rho_hmc<R: Rng + ?Sized>(
    stats: &RhoStats,
    rho: f64,
    step: &mut DualAveraging,
    max_depth: usize,
    adapt: bool,
    rng: &mut R,
) -> (f64, HmcOutcome) {
    let out = nuts_step(rho.atanh(), |z| stats.log_density_z(z), step.eps, max_depth, rng);
    if adapt {
        step.update(out.accept_stat);
    }
    let rho_new = out.x.tanh();
    if out.divergent && !out.accepted || !(rho_new.abs() < 1.0) {
        return (rho, HmcOutcome { accepted: false, ..out });
    }
    (rho_new, out)
}
