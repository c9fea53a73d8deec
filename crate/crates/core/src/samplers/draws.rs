//! Storage of retained draws and streamed latent-path summaries.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::model::{LatentState, LoadingPrior, ModelDims, Theta};

/// Names of the scalar parameters in draw order: `mu_s`, `phi_s`, `tau2_s`,
/// `rho_s` for every series, `phi_fj`, `tau2_fj` for every factor, the free
/// loadings `B_s_j` column by column and, under the normal-gamma prior,
/// `lambda2_s` and `sigma2_s_j`. Indices are 1-based.
pub fn param_names(dims: ModelDims, prior: &LoadingPrior) -> Vec<String> {
    let mut names = Vec::new();
    for prefix in ["mu", "phi", "tau2", "rho"] {
        names.extend((1..=dims.p).map(|s| format!("{prefix}_{s}")));
    }
    for prefix in ["phi", "tau2"] {
        names.extend((1..=dims.k).map(|j| format!("{prefix}_f{j}")));
    }
    for j in 0..dims.k {
        names.extend((j..dims.p).map(|s| format!("B_{}_{}", s + 1, j + 1)));
    }
    if matches!(prior, LoadingPrior::NormalGamma { .. }) {
        names.extend((1..=dims.p).map(|s| format!("lambda2_{s}")));
        for j in 0..dims.k {
            names.extend((j..dims.p).map(|s| format!("sigma2_{}_{}", s + 1, j + 1)));
        }
    }
    names
}

/// Scalar parameters of `theta` in the order of [`param_names`].
pub fn param_values(theta: &Theta, prior: &LoadingPrior) -> Vec<f64> {
    let (p, k) = (theta.idio.len(), theta.fac.len());
    let mut v = Vec::new();
    v.extend(theta.idio.iter().map(|q| q.mu));
    v.extend(theta.idio.iter().map(|q| q.phi));
    v.extend(theta.idio.iter().map(|q| q.tau2));
    v.extend(theta.idio.iter().map(|q| q.rho));
    v.extend(theta.fac.iter().map(|q| q.phi));
    v.extend(theta.fac.iter().map(|q| q.tau2));
    for j in 0..k {
        v.extend((j..p).map(|s| theta.loadings.get(s, j)));
    }
    if matches!(prior, LoadingPrior::NormalGamma { .. }) {
        if let Some(sh) = &theta.shrink {
            v.extend(sh.lambda2.iter().copied());
            for j in 0..k {
                v.extend((j..p).map(|s| sh.sigma2[(s, j)]));
            }
        }
    }
    v
}

/// Running mean and variance of every cell of a matrix-valued quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSummary {
    pub count: usize,
    mean: DMatrix<f64>,
    m2: DMatrix<f64>,
}

impl PathSummary {
    pub fn new(rows: usize, cols: usize) -> Self {
        PathSummary { count: 0, mean: DMatrix::zeros(rows, cols), m2: DMatrix::zeros(rows, cols) }
    }

    pub fn push(&mut self, x: &DMatrix<f64>) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x.iter()) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn mean(&self) -> &DMatrix<f64> {
        &self.mean
    }

    /// Sample standard deviation (zero for fewer than two draws).
    pub fn sd(&self) -> DMatrix<f64> {
        if self.count < 2 {
            return DMatrix::zeros(self.mean.nrows(), self.mean.ncols());
        }
        self.m2.map(|v| (v / (self.count as f64 - 1.0)).max(0.0).sqrt())
    }
}

/// Accepted and attempted counts per update type.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AcceptanceTally(pub BTreeMap<String, (u64, u64)>);

impl AcceptanceTally {
    pub fn record(&mut self, name: &str, accepted: bool) {
        let e = self.0.entry(name.to_string()).or_insert((0, 0));
        e.0 += accepted as u64;
        e.1 += 1;
    }

    pub fn rates(&self) -> BTreeMap<String, f64> {
        self.0.iter().map(|(k, &(a, n))| (k.clone(), if n == 0 { 0.0 } else { a as f64 / n as f64 })).collect()
    }

    pub fn rate(&self, name: &str) -> Option<f64> {
        self.0.get(name).map(|&(a, n)| if n == 0 { 0.0 } else { a as f64 / n as f64 })
    }
}

/// Retained output of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDraws {
    pub dims: ModelDims,
    pub prior: LoadingPrior,
    pub names: Vec<String>,
    /// One parameter state per retained sweep.
    pub thetas: Vec<Theta>,
    /// Conditional log-likelihood `log p(y | theta, latents)` per retained sweep.
    pub loglik: Vec<f64>,
    pub logprior: Vec<f64>,
    /// Full latent states of every `thin`-th retained sweep, keyed by retained index.
    pub latent_paths: Vec<(usize, LatentState)>,
    pub h1: PathSummary,
    pub h2: PathSummary,
    pub f: PathSummary,
    /// Acceptance counts over retained sweeps.
    pub acceptance: AcceptanceTally,
    pub runtime_seconds: f64,
}

impl ChainDraws {
    pub fn new(dims: ModelDims, prior: LoadingPrior) -> Self {
        ChainDraws {
            dims,
            prior,
            names: param_names(dims, &prior),
            thetas: Vec::new(),
            loglik: Vec::new(),
            logprior: Vec::new(),
            latent_paths: Vec::new(),
            h1: PathSummary::new(dims.p, dims.t),
            h2: PathSummary::new(dims.k, dims.t),
            f: PathSummary::new(dims.k, dims.t),
            acceptance: AcceptanceTally::default(),
            runtime_seconds: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    /// One row per retained sweep in the order of [`Self::names`].
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.thetas.iter().map(|t| param_values(t, &self.prior)).collect()
    }

    /// The trace of every parameter, one vector per name.
    pub fn columns(&self) -> Vec<Vec<f64>> {
        let rows = self.rows();
        (0..self.names.len()).map(|c| rows.iter().map(|r| r[c]).collect()).collect()
    }

    /// Index of the draw maximizing conditional log-likelihood plus log prior.
    pub fn map_index(&self) -> Option<usize> {
        (0..self.len())
            .filter(|&i| (self.loglik[i] + self.logprior[i]).is_finite())
            .max_by(|&a, &b| (self.loglik[a] + self.logprior[a]).total_cmp(&(self.loglik[b] + self.logprior[b])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::benchmark_theta;
    use crate::samplers::shrinkage::ShrinkState;

    #[test]
    fn names_match_values() {
        let dims = ModelDims::new(4, 2, 10).unwrap();
        let mut theta = benchmark_theta(4, 2).unwrap();
        let normal = LoadingPrior::default();
        assert_eq!(param_names(dims, &normal).len(), param_values(&theta, &normal).len());
        assert_eq!(param_names(dims, &normal).len(), 4 * 4 + 2 * 2 + 7);
        let ng = LoadingPrior::NormalGamma { a: 0.5, c: 1.0, d: 1.0 };
        theta.shrink = Some(ShrinkState::new(dims, 0.5, 1.0, 1.0).unwrap());
        let names = param_names(dims, &ng);
        assert_eq!(names.len(), param_values(&theta, &ng).len());
        assert_eq!(names[20], "B_1_1");
        assert_eq!(names[24], "B_2_2");
        assert_eq!(param_values(&theta, &ng)[24], 1.0);
    }

    #[test]
    fn running_summary() {
        let mut s = PathSummary::new(1, 2);
        for v in [1.0, 2.0, 3.0] {
            s.push(&DMatrix::from_row_slice(1, 2, &[v, 5.0]));
        }
        assert_eq!(s.mean()[(0, 0)], 2.0);
        assert_eq!(s.sd()[(0, 0)], 1.0);
        assert_eq!(s.sd()[(0, 1)], 0.0);
    }
}
