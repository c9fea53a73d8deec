//! Particle estimates of the score with respect to `theta = log tau2`, and the
//! one-step Langevin proposal that uses them.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{leverage_moments, SvSeries, LN_2PI};
use crate::smc::{bootstrap_pf, ParticleSystem, SeriesModel};

/// Default forgetting factor of the score recursion.
pub const DEFAULT_LAMBDA: f64 = 0.95;

/// A state-space model with gradients of its log-densities with respect to one
/// scalar parameter.
pub trait ScoreModel: SeriesModel {
    fn initial_gradient(&self, h: f64) -> f64;
    fn transition_gradient(&self, t: usize, h: f64, h_prev: f64) -> f64;
    fn measurement_gradient(&self, t: usize, y: f64, h: f64, h_prev: Option<f64>) -> f64;
}

impl ScoreModel for SvSeries<'_> {
    fn initial_gradient(&self, h: f64) -> f64 {
        let p = &self.prm;
        let d = h - p.mu;
        -0.5 + d * d * (1.0 - p.phi * p.phi) / (2.0 * p.tau2)
    }

    fn transition_gradient(&self, _t: usize, h: f64, h_prev: f64) -> f64 {
        let eta = self.prm.innovation(h, h_prev);
        -0.5 + eta * eta / (2.0 * self.prm.tau2)
    }

    fn measurement_gradient(&self, t: usize, y: f64, h: f64, h_prev: Option<f64>) -> f64 {
        let p = &self.prm;
        if h_prev.is_none() || p.rho == 0.0 {
            return 0.0;
        }
        let (shift, var) = leverage_moments(h, h_prev, p);
        let resid = y - self.offset_at(t) - shift;
        // d shift / d log tau2 = -shift / 2.
        resid / var * (-0.5 * shift)
    }
}

/// Per-particle statistics of the score recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreAccumulator {
    pub m: Vec<f64>,
    pub s: f64,
    pub lambda: f64,
}

impl ScoreAccumulator {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidArgument(format!("lambda = {lambda} outside (0, 1]")));
        }
        Ok(ScoreAccumulator { m: Vec::new(), s: 0.0, lambda })
    }

    /// Runs the recursion over a stored particle system and returns `S_T`.
    ///
    /// `m_t^i = lambda m_{t-1}^{a_i} + (1 - lambda) S_{t-1} + grad log g + grad log p`,
    /// `S_t = sum_i W_t^i m_t^i`, starting from `m_0 = 0` and `S_0 = 0`.
    pub fn run<M: ScoreModel + ?Sized>(&mut self, model: &M, obs: &[f64], sys: &ParticleSystem) -> Result<f64> {
        if obs.len() != sys.len() {
            return Err(Error::DimensionMismatch { what: "observations", expected: sys.len(), found: obs.len() });
        }
        let n = sys.n();
        let lam = self.lambda;
        self.m.clear();
        for &h in sys.particles_at(0) {
            self.m.push(model.measurement_gradient(0, obs[0], h, None) + model.initial_gradient(h));
        }
        self.s = weighted_sum(sys.normweights_at(0), &self.m);
        let mut next = vec![0.0; n];
        for t in 1..sys.len() {
            let prev = sys.particles_at(t - 1);
            let cur = sys.particles_at(t);
            let anc = sys.ancestors_at(t);
            let carry = (1.0 - lam) * self.s;
            for i in 0..n {
                let a = anc[i];
                let (h, hp) = (cur[i], prev[a]);
                next[i] = lam * self.m[a]
                    + carry
                    + model.measurement_gradient(t, obs[t], h, Some(hp))
                    + model.transition_gradient(t, h, hp);
            }
            std::mem::swap(&mut self.m, &mut next);
            self.s = weighted_sum(sys.normweights_at(t), &self.m);
        }
        if !self.s.is_finite() {
            return Err(Error::NonFinite("score estimate"));
        }
        Ok(self.s)
    }
}

fn weighted_sum(w: &[f64], m: &[f64]) -> f64 {
    w.iter().zip(m).map(|(a, b)| a * b).sum()
}

/// Score estimate computed from an existing particle system.
pub fn score_from_system<M: ScoreModel + ?Sized>(model: &M, obs: &[f64], sys: &ParticleSystem, lambda: f64) -> Result<f64> {
    ScoreAccumulator::new(lambda)?.run(model, obs, sys)
}

/// Runs a bootstrap filter and the score recursion on it. Returns the score,
/// the log-likelihood estimate and the particle system.
pub fn estimate_score<M, R>(model: &M, obs: &[f64], n: usize, lambda: f64, rng: &mut R) -> Result<(f64, f64, ParticleSystem)>
where
    M: ScoreModel + ?Sized,
    R: Rng + ?Sized,
{
    ScoreAccumulator::new(lambda)?;
    let sys = bootstrap_pf(model, obs, n, rng)?;
    let score = score_from_system(model, obs, &sys, lambda)?;
    Ok((score, sys.log_z(), sys))
}

/// Gradient of the log-target on the `log tau2` scale: the likelihood score plus
/// the half-Cauchy prior gradient plus the log-Jacobian `+1`.
pub fn log_target_gradient(score: f64, tau2: f64) -> f64 {
    score + 0.5 - tau2 / (1.0 + tau2)
}

/// A proposed value together with its forward proposal log-density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LangevinProposal {
    pub log_tau2: f64,
    pub tau2: f64,
    /// `log q(theta* | theta)`.
    pub log_q_forward: f64,
}

/// Deterministic part of the Langevin step: `theta + eps^2 / 2 * grad + eps * r`.
pub fn langevin_step(log_tau2: f64, grad: f64, eps: f64, r: f64) -> f64 {
    log_tau2 + 0.5 * eps * eps * grad + eps * r
}

/// `log q(to | from) = log N(to; from + eps^2 / 2 * grad_from, eps^2)`.
pub fn langevin_logq(from: f64, to: f64, grad_from: f64, eps: f64) -> f64 {
    let mean = from + 0.5 * eps * eps * grad_from;
    let d = (to - mean) / eps;
    -0.5 * (LN_2PI + d * d) - eps.ln()
}

/// Proposes `log tau2* = log tau2 + eps^2 / 2 * grad + eps r` with `r ~ N(0, 1)`,
/// where `grad` is the log-target gradient on the `log tau2` scale (see
/// [`log_target_gradient`]).
pub fn langevin_proposal_tau2<R: Rng + ?Sized>(tau2: f64, grad: f64, eps: f64, rng: &mut R) -> Result<LangevinProposal> {
    if !(tau2 > 0.0) || !(eps > 0.0) || !grad.is_finite() {
        return Err(Error::InvalidArgument(format!("Langevin step with tau2 = {tau2}, eps = {eps}, grad = {grad}")));
    }
    let r: f64 = StandardNormal.sample(rng);
    let from = tau2.ln();
    let to = langevin_step(from, grad, eps, r);
    Ok(LangevinProposal { log_tau2: to, tau2: to.exp(), log_q_forward: langevin_logq(from, to, grad, eps) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SvParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn series_fixture() -> (SvParams, Vec<f64>, Vec<f64>) {
        let prm = SvParams::new(0.1, 0.9, 0.2, -0.4).unwrap();
        let y = vec![0.4, -1.2, 0.3, 0.9, -0.1, 2.0];
        let bf = vec![0.1, 0.0, -0.2, 0.3, 0.0, 0.5];
        (prm, y, bf)
    }

    #[test]
    fn gradients_match_numerical_derivatives() {
        let (prm, y, bf) = series_fixture();
        let at = |lt: f64| SvParams { tau2: lt.exp(), ..prm };
        let lt = prm.tau2.ln();
        let d = 1e-6;
        let (h, hp) = (0.3, -0.5);
        let fd = |f: &dyn Fn(&SvSeries) -> f64| {
            let (pa, pb) = (at(lt + d), at(lt - d));
            (f(&SvSeries::new(pa, Some(&bf))) - f(&SvSeries::new(pb, Some(&bf)))) / (2.0 * d)
        };
        let m = SvSeries::new(prm, Some(&bf));
        let g = fd(&|s: &SvSeries| s.initial_logdensity(h));
        assert!((m.initial_gradient(h) - g).abs() < 1e-6);
        let g = fd(&|s: &SvSeries| s.transition_logdensity(1, h, hp));
        assert!((m.transition_gradient(1, h, hp) - g).abs() < 1e-6);
        let g = fd(&|s: &SvSeries| s.measurement_logdensity(2, y[2], h, Some(hp)));
        assert!((m.measurement_gradient(2, y[2], h, Some(hp)) - g).abs() < 1e-6);
        assert_eq!(m.measurement_gradient(0, y[0], h, None), 0.0);
    }

    #[test]
    fn single_period_score() {
        let (prm, y, bf) = series_fixture();
        let m = SvSeries::new(prm, Some(&bf));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (score, _, sys) = estimate_score(&m, &y[..1], 100, 0.95, &mut rng).unwrap();
        let direct: f64 = sys
            .particles_at(0)
            .iter()
            .zip(sys.normweights_at(0))
            .map(|(&h, &w)| w * m.initial_gradient(h))
            .sum();
        assert!((score - direct).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_lambda() {
        assert!(ScoreAccumulator::new(0.0).is_err());
        assert!(ScoreAccumulator::new(1.5).is_err());
        assert!(ScoreAccumulator::new(1.0).is_ok());
    }

    #[test]
    fn langevin_arithmetic() {
        assert!((langevin_step(-3.0, 2.0, 0.1, 0.5) - (-2.94)).abs() < 1e-12);
        assert_eq!(langevin_step(-1.0, 0.0, 0.3, 0.0), -1.0);
        assert_eq!(langevin_logq(-1.0, -1.0, 0.0, 0.3), langevin_logq(-1.0, -1.0, 0.0, 0.3));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let p = langevin_proposal_tau2(0.05, 3.0, 1e-8, &mut rng).unwrap();
            assert!((p.log_tau2 - 0.05f64.ln()).abs() < 1e-6);
        }
        assert!(langevin_proposal_tau2(0.05, f64::NAN, 0.1, &mut rng).is_err());
    }

    #[test]
    fn prior_gradient_on_log_scale() {
        // d/dtheta [-log(1 + e^theta) - theta / 2 + theta] by central differences.
        let f = |th: f64| -(1.0 + th.exp()).ln() + 0.5 * th;
        let th = -1.3f64;
        let fd = (f(th + 1e-6) - f(th - 1e-6)) / 2e-6;
        assert!((log_target_gradient(0.0, th.exp()) - fd).abs() < 1e-8);
    }
}
