//! Chain-quality and model-selection metrics: IACT, TNV, DIC7 and posterior
//! summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Theta;
use crate::samplers::draws::{param_values, ChainDraws};

/// Shortest chain accepted by [`iact`].
pub const MIN_IACT_LEN: usize = 10;

/// Empirical autocorrelation at `lag` with the biased `1/M` normalizer.
fn autocorr(centred: &[f64], var: f64, lag: usize) -> f64 {
    let m = centred.len();
    let cov: f64 = centred[..m - lag].iter().zip(&centred[lag..]).map(|(a, b)| a * b).sum::<f64>() / m as f64;
    cov / var
}

/// Integrated autocorrelation time `1 + 2 sum rho_t`, summing lags until the
/// first one with `|rho_t| < 2 / sqrt(M)` (that lag excluded).
pub fn iact(chain: &[f64]) -> Result<f64> {
    let m = chain.len();
    if m < MIN_IACT_LEN {
        return Err(Error::TooShort { len: m, min: MIN_IACT_LEN });
    }
    if chain.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("chain"));
    }
    let mean = chain.iter().sum::<f64>() / m as f64;
    let centred: Vec<f64> = chain.iter().map(|x| x - mean).collect();
    let var = centred.iter().map(|x| x * x).sum::<f64>() / m as f64;
    if !(var > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let cutoff = 2.0 / (m as f64).sqrt();
    let mut sum = 0.0;
    for lag in 1..m {
        let r = autocorr(&centred, var, lag);
        if r.abs() < cutoff {
            break;
        }
        sum += r;
    }
    Ok(1.0 + 2.0 * sum)
}

/// Time-normalised variance: mean IACT times computing time.
pub fn tnv(iact_mean: f64, ct_seconds: f64) -> f64 {
    iact_mean * ct_seconds
}

/// `-4 mean(loglik) + 2 loglik_at_map`.
pub fn dic7(loglik_draws: &[f64], loglik_at_map: f64) -> Result<f64> {
    if loglik_draws.is_empty() {
        return Err(Error::TooShort { len: 0, min: 1 });
    }
    let mean = loglik_draws.iter().sum::<f64>() / loglik_draws.len() as f64;
    Ok(-4.0 * mean + 2.0 * loglik_at_map)
}

/// DIC7 of a chain, with the plug-in point at the retained draw of highest
/// conditional log-likelihood plus log prior.
pub fn dic7_from_draws(draws: &ChainDraws) -> Result<f64> {
    let map = draws.map_index().ok_or(Error::TooShort { len: 0, min: 1 })?;
    dic7(&draws.loglik, draws.loglik[map])
}

/// Percentile `q` in `[0, 1]` of sorted data, linear interpolation between
/// order statistics.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Percentiles `qs` of unsorted data.
pub fn percentiles(data: &[f64], qs: &[f64]) -> Vec<f64> {
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    qs.iter().map(|&q| percentile_sorted(&sorted, q)).collect()
}

/// Posterior summary of one scalar parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q005: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub q995: f64,
    /// `None` when the chain is too short or constant.
    pub iact: Option<f64>,
    pub truth: Option<f64>,
    pub in_ci90: Option<bool>,
    pub in_ci99: Option<bool>,
}

/// Summary of one trace.
pub fn summarize_trace(name: &str, trace: &[f64], truth: Option<f64>) -> Result<ParamSummary> {
    let n = trace.len();
    if n == 0 {
        return Err(Error::TooShort { len: 0, min: 1 });
    }
    let mean = trace.iter().sum::<f64>() / n as f64;
    let sd = if n < 2 {
        0.0
    } else {
        (trace.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    let q = percentiles(trace, &[0.005, 0.05, 0.5, 0.95, 0.995]);
    let inside = |lo: f64, hi: f64| truth.map(|v| lo <= v && v <= hi);
    Ok(ParamSummary {
        name: name.to_string(),
        mean,
        sd,
        q005: q[0],
        q05: q[1],
        q50: q[2],
        q95: q[3],
        q995: q[4],
        iact: iact(trace).ok(),
        truth,
        in_ci90: inside(q[1], q[3]),
        in_ci99: inside(q[0], q[4]),
    })
}

/// Per-parameter summaries of a chain; `truth` adds credible-interval flags.
/// The truth is sign-identified like the draws.
pub fn summarize(draws: &ChainDraws, truth: Option<&Theta>) -> Result<Vec<ParamSummary>> {
    let truth = truth.map(|t| {
        let mut t = t.clone();
        crate::samplers::signs::identify_signs_in_place(&mut t, None);
        param_values(&t, &draws.prior)
    });
    draws
        .columns()
        .iter()
        .enumerate()
        .map(|(c, trace)| summarize_trace(&draws.names[c], trace, truth.as_ref().and_then(|v| v.get(c).copied())))
        .collect()
}

/// Efficiency summary of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    /// IACT per parameter; constant or too-short traces are omitted.
    pub iact: BTreeMap<String, f64>,
    pub iact_mean: f64,
    pub acceptance: BTreeMap<String, f64>,
    pub tnv: f64,
    pub runtime_seconds: f64,
}

impl ChainStats {
    pub fn from_draws(draws: &ChainDraws) -> Self {
        let iact: BTreeMap<String, f64> = draws
            .columns()
            .iter()
            .zip(&draws.names)
            .filter_map(|(trace, name)| self::iact(trace).ok().map(|v| (name.clone(), v)))
            .collect();
        let iact_mean = if iact.is_empty() { f64::NAN } else { iact.values().sum::<f64>() / iact.len() as f64 };
        ChainStats {
            iact,
            iact_mean,
            acceptance: draws.acceptance.rates(),
            tnv: tnv(iact_mean, draws.runtime_seconds),
            runtime_seconds: draws.runtime_seconds,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn ar1(phi: f64, m: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = 0.0;
        (0..m)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x = phi * x + z;
                x
            })
            .collect()
    }

    #[test]
    fn iid_chain() {
        let v = iact(&ar1(0.0, 100_000, 1)).unwrap();
        assert!((v - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn ar1_chain_matches_analytic_value() {
        let v = iact(&ar1(0.9, 200_000, 2)).unwrap();
        assert!((v / 19.0 - 1.0).abs() < 0.15, "{v}");
    }

    #[test]
    fn iact_errors_and_affine_invariance() {
        assert!(matches!(iact(&[1.0; 9]), Err(Error::TooShort { len: 9, .. })));
        assert!(matches!(iact(&[2.0; 50]), Err(Error::ZeroVariance)));
        let x = ar1(0.5, 1000, 3);
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 2.5 * v).collect();
        assert!((iact(&x).unwrap() - iact(&y).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn tnv_rows() {
        assert!((tnv(70.45, 1.07) - 75.38).abs() < 0.01);
        assert!((tnv(10.42, 1.75) - 18.23).abs() < 0.01);
        assert_eq!(tnv(1.0, 1.0), 1.0);
    }

    #[test]
    fn dic_arithmetic() {
        assert_eq!(dic7(&[-10.0, -12.0], -9.0).unwrap(), 26.0);
        assert_eq!(dic7(&[-5.0; 4], -5.0).unwrap(), 10.0);
        assert_eq!(dic7(&[-12.0, -10.0], -9.0).unwrap(), 26.0);
        assert!(dic7(&[], 0.0).is_err());
    }

    #[test]
    fn summaries() {
        let s = summarize_trace("x", &[4.0], Some(4.0)).unwrap();
        assert_eq!((s.mean, s.sd, s.q50), (4.0, 0.0, 4.0));
        assert_eq!(s.in_ci99, Some(true));
        let s = summarize_trace("x", &[3.0, 1.0, 2.0], None).unwrap();
        assert_eq!((s.mean, s.q50), (2.0, 2.0));
        assert_eq!(s.in_ci90, None);
    }

    #[test]
    fn percentiles_match_sort_oracle() {
        let data = ar1(0.3, 101, 9);
        let mut sorted = data.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // With 101 points, the q-th percentile is exactly the (100 q)-th order statistic.
        for (i, q) in [0.0, 0.05, 0.5, 0.95, 1.0].iter().enumerate() {
            let idx = [0, 5, 50, 95, 100][i];
            assert_eq!(percentiles(&data, &[*q])[0], sorted[idx]);
        }
        let mid = percentiles(&[0.0, 10.0], &[0.25])[0];
        assert_eq!(mid, 2.5);
    }
}
