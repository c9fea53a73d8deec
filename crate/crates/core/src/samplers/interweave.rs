//! Deep interweaving of the factor scales: each factor's loading column, path
//! and log-variance level are re-parameterised so that the diagonal loading
//! becomes the level `mu_j = log B_jj^2` of the factor log-variance, which is
//! then updated by Metropolis-Hastings.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::model::{ln_normal, FactorLoadings, LatentState, SvParams};

/// Diagonal loadings smaller than this in magnitude skip the move.
pub const PIVOT_TOL: f64 = 1e-12;

/// Per-factor result of one interweaving pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterweaveResult {
    Accepted,
    Rejected,
    /// `|B_jj|` was below [`PIVOT_TOL`].
    Skipped,
}

/// Multiplies column `j` of the loadings by `c`, divides factor `j` by `c` and
/// shifts its log-variance by `-2 log |c|`, leaving `B f` and the factor's
/// standardized path unchanged.
pub fn rescale_factor(loadings: &mut FactorLoadings, latent: &mut LatentState, j: usize, c: f64) {
    loadings.scale_column(j, c);
    let inv = 1.0 / c;
    let shift = -2.0 * c.abs().ln();
    for t in 0..latent.f.ncols() {
        latent.f[(j, t)] *= inv;
        latent.h2[(j, t)] += shift;
    }
}

/// Log target of the level `mu` in the starred parameterisation, divided by
/// the auxiliary prior of the independence proposal.
fn log_weight(mu: f64, h_star_1: f64, b_star: &[(f64, f64)], prm: &SvParams, v_diag: f64) -> f64 {
    let implied_prior = 0.5 * mu - mu.exp() / (2.0 * v_diag);
    let initial = ln_normal(h_star_1, mu, prm.stationary_var());
    let loadings: f64 = b_star.iter().map(|&(b, v)| ln_normal(b, 0.0, v * (-mu).exp())).sum();
    let one_minus_phi = 1.0 - prm.phi;
    let aux = ln_normal(mu, 0.0, v_diag * prm.tau2 / (one_minus_phi * one_minus_phi));
    implied_prior + initial + loadings - aux
}

/// Mean and variance of the independence proposal for the level given the
/// starred path.
pub fn level_proposal(h_star: &[f64], prm: &SvParams, v_diag: f64) -> (f64, f64) {
    let len = h_star.len();
    let phi = prm.phi;
    let denom = (len as f64 - 1.0) + 1.0 / v_diag;
    let inner: f64 = h_star[1..len - 1].iter().sum();
    let mean = (inner + (h_star[len - 1] - phi * h_star[0]) / (1.0 - phi)) / denom;
    let var = prm.tau2 / ((1.0 - phi) * (1.0 - phi) * denom);
    (mean, var)
}

/// One interweaving pass over all factors. `prior_var(s, j)` is the prior
/// variance of loading `(s, j)`.
pub fn deep_interweave<R, V>(
    loadings: &mut FactorLoadings,
    latent: &mut LatentState,
    fac: &[SvParams],
    prior_var: V,
    rng: &mut R,
) -> Vec<InterweaveResult>
where
    R: Rng + ?Sized,
    V: Fn(usize, usize) -> f64,
{
    let (p, k) = (loadings.p(), loadings.k());
    let len = latent.h2.ncols();
    let mut out = Vec::with_capacity(k);
    let mut h_star = vec![0.0; len];
    for j in 0..k {
        let b = loadings.get(j, j);
        if !(b.abs() >= PIVOT_TOL) || len < 2 {
            out.push(InterweaveResult::Skipped);
            continue;
        }
        let prm = &fac[j];
        let mu_old = (b * b).ln();
        for t in 0..len {
            h_star[t] = latent.h2[(j, t)] + mu_old;
        }
        let b_star: Vec<(f64, f64)> = (j + 1..p).map(|s| (loadings.get(s, j) / b, prior_var(s, j))).collect();
        let v_diag = prior_var(j, j);
        let (mean, var) = level_proposal(&h_star, prm, v_diag);
        let z: f64 = StandardNormal.sample(rng);
        let mu_new = mean + var.sqrt() * z;
        let log_r = log_weight(mu_new, h_star[0], &b_star, prm, v_diag) - log_weight(mu_old, h_star[0], &b_star, prm, v_diag);
        let accept = log_r.is_finite() && (log_r >= 0.0 || rng.random::<f64>().ln() < log_r);
        if accept {
            let b_new = b.signum() * (0.5 * mu_new).exp();
            rescale_factor(loadings, latent, j, b_new / b);
            out.push(InterweaveResult::Accepted);
        } else {
            out.push(InterweaveResult::Rejected);
        }
    }
    out
}
