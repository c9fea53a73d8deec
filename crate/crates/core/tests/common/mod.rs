//! Oracles shared by the integration tests.

#![allow(dead_code)]

use fmsv_core::model::SvParams;
use fmsv_core::smc::SeriesModel;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn ln_norm(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

/// `x_1 ~ N(0, p0)`, `x_t = a x_{t-1} + N(0, q)`, `y_t = x_t + N(0, r)`.
#[derive(Debug, Clone, Copy)]
pub struct LinearGaussian {
    pub a: f64,
    pub q: f64,
    pub r: f64,
    pub p0: f64,
}

impl LinearGaussian {
    pub fn simulate<R: Rng>(&self, len: usize, rng: &mut R) -> Vec<f64> {
        let mut x = self.p0.sqrt() * { let z: f64 = StandardNormal.sample(rng); z };
        let mut y = Vec::with_capacity(len);
        for t in 0..len {
            if t > 0 {
                let z: f64 = StandardNormal.sample(rng);
                x = self.a * x + self.q.sqrt() * z;
            }
            let e: f64 = StandardNormal.sample(rng);
            y.push(x + self.r.sqrt() * e);
        }
        y
    }

    /// Exact log-likelihood by the Kalman filter.
    pub fn kalman_loglik(&self, y: &[f64]) -> f64 {
        let (mut m, mut p) = (0.0, self.p0);
        let mut ll = 0.0;
        for (t, &obs) in y.iter().enumerate() {
            if t > 0 {
                m *= self.a;
                p = self.a * self.a * p + self.q;
            }
            let s = p + self.r;
            ll += ln_norm(obs, m, s);
            let gain = p / s;
            m += gain * (obs - m);
            p *= 1.0 - gain;
        }
        ll
    }
}

impl SeriesModel for LinearGaussian {
    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.p0.sqrt() * { let z: f64 = StandardNormal.sample(rng); z }
    }
    fn initial_logdensity(&self, h: f64) -> f64 {
        ln_norm(h, 0.0, self.p0)
    }
    fn sample_transition<R: Rng + ?Sized>(&self, _t: usize, h_prev: f64, rng: &mut R) -> f64 {
        self.a * h_prev + self.q.sqrt() * { let z: f64 = StandardNormal.sample(rng); z }
    }
    fn transition_logdensity(&self, _t: usize, h: f64, h_prev: f64) -> f64 {
        ln_norm(h, self.a * h_prev, self.q)
    }
    fn measurement_logdensity(&self, _t: usize, y: f64, h: f64, _h_prev: Option<f64>) -> f64 {
        ln_norm(y, h, self.r)
    }
}

/// Measurement log-density of an SV observation with leverage, written out
/// independently of the library.
pub fn sv_measurement(y: f64, h: f64, h_prev: Option<f64>, prm: &SvParams) -> f64 {
    match h_prev {
        None => ln_norm(y, 0.0, h.exp()),
        Some(hp) => {
            let eta = h - prm.mu - prm.phi * (hp - prm.mu);
            let mean = prm.rho / prm.tau2.sqrt() * (0.5 * h).exp() * eta;
            ln_norm(y, mean, (1.0 - prm.rho * prm.rho) * h.exp())
        }
    }
}

/// Common random numbers for [`crn_sv_loglik`].
pub struct CrnDraws {
    pub z: Vec<Vec<f64>>,
    pub u: Vec<f64>,
}

impl CrnDraws {
    pub fn new<R: Rng>(len: usize, n: usize, rng: &mut R) -> Self {
        let z = (0..len).map(|_| (0..n).map(|_| StandardNormal.sample(rng)).collect()).collect();
        let u = (0..len).map(|_| rng.random::<f64>()).collect();
        CrnDraws { z, u }
    }
}

/// Bootstrap filter log-likelihood of a univariate SV series driven entirely
/// by fixed draws. Particles are sorted before systematic resampling, which
/// makes the estimate piecewise smooth in the parameters.
pub fn crn_sv_loglik(y: &[f64], prm: &SvParams, crn: &CrnDraws) -> f64 {
    let n = crn.z[0].len();
    let sd0 = (prm.tau2 / (1.0 - prm.phi * prm.phi)).sqrt();
    let mut h: Vec<f64> = crn.z[0].iter().map(|z| prm.mu + sd0 * z).collect();
    let mut hp: Vec<Option<f64>> = vec![None; n];
    let mut ll = 0.0;
    let mut lw = vec![0.0; n];
    for t in 0..y.len() {
        if t > 0 {
            let mut pairs: Vec<(f64, f64)> = h.iter().copied().zip(lw.iter().copied()).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let max = pairs.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = pairs.iter().map(|p| (p.1 - max).exp()).collect();
            let total: f64 = w.iter().sum();
            let mut cum = 0.0;
            let mut j = 0;
            let mut parents = Vec::with_capacity(n);
            for i in 0..n {
                let target = (i as f64 + crn.u[t]) / n as f64 * total;
                while j < n - 1 && cum + w[j] < target {
                    cum += w[j];
                    j += 1;
                }
                parents.push(pairs[j].0);
            }
            for i in 0..n {
                let prev = parents[i];
                h[i] = prm.mu + prm.phi * (prev - prm.mu) + prm.tau2.sqrt() * crn.z[t][i];
                hp[i] = Some(prev);
            }
        }
        for i in 0..n {
            lw[i] = sv_measurement(y[t], h[i], hp[i], prm);
        }
        let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        ll += max + (lw.iter().map(|v| (v - max).exp()).sum::<f64>() / n as f64).ln();
    }
    ll
}

/// Simulates a univariate SV series whose observation at `t >= 2` is
/// correlated (coefficient `rho`) with the innovation that produced `h_t`.
pub fn simulate_sv<R: Rng>(prm: &SvParams, len: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let sd0 = (prm.tau2 / (1.0 - prm.phi * prm.phi)).sqrt();
    let mut h: Vec<f64> = Vec::with_capacity(len);
    let mut y = Vec::with_capacity(len);
    for t in 0..len {
        let z: f64 = StandardNormal.sample(rng);
        let e: f64 = StandardNormal.sample(rng);
        let (ht, u) = if t == 0 {
            (prm.mu + sd0 * z, e)
        } else {
            let ht = prm.mu + prm.phi * (h[t - 1] - prm.mu) + prm.tau2.sqrt() * z;
            (ht, prm.rho * z + (1.0 - prm.rho * prm.rho).sqrt() * e)
        };
        h.push(ht);
        y.push((0.5 * ht).exp() * u);
    }
    (y, h)
}

/// Log-likelihood of a univariate SV series with leverage by deterministic
/// quadrature on a uniform grid of `g` log-variance values.
pub fn grid_sv_loglik(y: &[f64], prm: &SvParams, g: usize) -> f64 {
    let sd0 = (prm.tau2 / (1.0 - prm.phi * prm.phi)).sqrt();
    let (lo, hi) = (prm.mu - 9.0 * sd0, prm.mu + 9.0 * sd0);
    let dx = (hi - lo) / (g - 1) as f64;
    let grid: Vec<f64> = (0..g).map(|i| lo + i as f64 * dx).collect();
    // Filtering masses, kept normalized; `ll` collects the normalizers.
    let mut alpha: Vec<f64> = grid.iter().map(|&h| (ln_norm(h, prm.mu, sd0 * sd0) + sv_measurement(y[0], h, None, prm)).exp() * dx).collect();
    let mut ll = 0.0;
    let total: f64 = alpha.iter().sum();
    ll += total.ln();
    alpha.iter_mut().for_each(|a| *a /= total);
    let mut next = vec![0.0; g];
    for &obs in &y[1..] {
        for (j, &h) in grid.iter().enumerate() {
            let mut acc = 0.0;
            for (i, &hp) in grid.iter().enumerate() {
                if alpha[i] < 1e-300 {
                    continue;
                }
                let mean = prm.mu + prm.phi * (hp - prm.mu);
                acc += alpha[i] * (ln_norm(h, mean, prm.tau2) + sv_measurement(obs, h, Some(hp), prm)).exp();
            }
            next[j] = acc * dx;
        }
        let total: f64 = next.iter().sum();
        ll += total.ln();
        for (a, n) in alpha.iter_mut().zip(&next) {
            *a = n / total;
        }
    }
    ll
}
