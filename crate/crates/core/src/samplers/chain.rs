//! Chain state, the particle Gibbs and mixed sweeps, and the chain runner.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{MixedKernel, SamplerConfig, Scheme};
use super::draws::{AcceptanceTally, ChainDraws};
use super::gibbs::{update_factors_gibbs, update_loadings_gibbs};
use super::hmc::{find_reasonable_eps, DualAveraging};
use super::interweave::{deep_interweave, InterweaveResult};
use super::shrinkage::{update_shrinkage, ShrinkState};
use super::signs::identify_state_signs;
use super::sv_params::{update_mu_pg, update_phi_pg, update_rho_hmc, update_tau2_pg, RhoStats, SeriesData};
use crate::error::{Error, Result};
use crate::model::{
    conditional_loglik, ln_prior_tau2, prior_logdensity, FactorLoadings, LatentState, LoadingPrior, ModelDims,
    SvParams, SvSeries, Theta,
};
use crate::parallel::{par_map, stream_rng};
use crate::score::{langevin_logq, langevin_proposal_tau2, log_target_gradient, score_from_system};
use crate::smc::{
    ancestral_trace, bootstrap_pf, conditional_smc, csmc_ancestor_sampling, sample_trajectory_index, ParticleSystem,
    ReferenceTrajectory,
};

const STAGE_IDIO_PARAMS: u32 = 0;
const STAGE_FACTOR_PARAMS: u32 = 1;
const STAGE_STATIC: u32 = 2;
const STAGE_LATENTS: u32 = 3;
const STAGE_PM: u32 = 4;
const STAGE_INIT: u32 = 5;

/// Bounds of the adapted Langevin step size on the `log tau2` scale.
pub const LANGEVIN_EPS_MIN: f64 = 0.01;
pub const LANGEVIN_EPS_MAX: f64 = 5.0;

/// Likelihood estimate and score of the particle system that produced the
/// current reference path of a series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmCache {
    pub log_z: f64,
    pub score: f64,
}

/// One end of a pseudo-marginal Langevin move on `log tau2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmPoint {
    pub log_tau2: f64,
    pub log_z: f64,
    /// Log-target gradient on the `log tau2` scale at this point.
    pub grad: f64,
}

/// Log acceptance ratio of a pseudo-marginal Langevin move from `current` to
/// `proposed`: likelihood estimates, proposal densities, half-Cauchy prior and
/// the Jacobian of the log transform.
pub fn pm_log_acceptance(current: &PmPoint, proposed: &PmPoint, eps: f64) -> f64 {
    proposed.log_z - current.log_z + langevin_logq(proposed.log_tau2, current.log_tau2, proposed.grad, eps)
        - langevin_logq(current.log_tau2, proposed.log_tau2, current.grad, eps)
        + ln_prior_tau2(proposed.log_tau2.exp())
        - ln_prior_tau2(current.log_tau2.exp())
        + (proposed.log_tau2 - current.log_tau2)
}

/// Everything a sweep reads and writes.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub theta: Theta,
    pub latent: LatentState,
    /// Completed sweeps.
    pub sweep: usize,
    pm: Vec<Option<PmCache>>,
    rho_step: Vec<Option<DualAveraging>>,
    langevin_eps: Vec<f64>,
}

impl ChainState {
    /// Current Langevin step sizes, idiosyncratic series first.
    pub fn langevin_eps(&self) -> &[f64] {
        &self.langevin_eps
    }

    /// Current NUTS step sizes of the leverage updates.
    pub fn rho_step_sizes(&self) -> Vec<Option<f64>> {
        self.rho_step.iter().map(|s| s.as_ref().map(|d| d.eps)).collect()
    }
}

/// What one sweep did.
#[derive(Debug, Clone, Default)]
pub struct SweepReport {
    pub tally: AcceptanceTally,
    /// Per series (idiosyncratic first), the fraction of periods at which the
    /// refreshed latent path differs from the previous one.
    pub path_change: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kernel {
    Plain,
    AncestorSampling,
}

/// Starting values: principal-component loadings rotated to lower-triangular
/// form, least-squares factors, constant log-variance paths at the log sample
/// variances, `phi = 0.9`, `tau2 = 0.1`, `rho = 0`.
pub fn initial_state(y: &DMatrix<f64>, k: usize, prior: &LoadingPrior) -> Result<(Theta, LatentState)> {
    let (p, len) = y.shape();
    let dims = ModelDims::new(p, k, len)?;
    let means: Vec<f64> = (0..p).map(|s| y.row(s).mean()).collect();
    let centred = DMatrix::from_fn(p, len, |s, t| y[(s, t)] - means[s]);
    let cov = &centred * centred.transpose() / len as f64;
    let eig = cov.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut b = DMatrix::from_fn(p, k, |s, j| {
        let c = order[j];
        eig.eigenvectors[(s, c)] * eig.eigenvalues[c].max(1e-8).sqrt()
    });
    let top = b.rows(0, k).transpose();
    let q = top.qr().q();
    b = &b * q;
    for s in 0..p {
        for j in 0..k {
            if j > s {
                b[(s, j)] = 0.0;
            }
        }
    }
    for j in 0..k {
        if b[(j, j)].abs() < 1e-3 {
            b[(j, j)] = 1e-3;
        }
    }
    let btb = b.transpose() * &b + DMatrix::identity(k, k) * 1e-8;
    let chol = btb.cholesky().ok_or(Error::NotPositiveDefinite("initial loadings"))?;
    let f = chol.solve(&(b.transpose() * y));
    let resid = y - &b * &f;

    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
    };
    let mut latent = LatentState::zeros(dims);
    latent.f = f;
    let mut idio = Vec::with_capacity(p);
    for s in 0..p {
        let ys: Vec<f64> = y.row(s).iter().copied().collect();
        let rs: Vec<f64> = resid.row(s).iter().copied().collect();
        let level = var(&rs).max(0.1 * var(&ys)).max(1e-8).ln();
        latent.h1.row_mut(s).fill(level);
        idio.push(SvParams::new(level, 0.9, 0.1, 0.0)?);
    }
    for j in 0..k {
        let fj: Vec<f64> = latent.f.row(j).iter().copied().collect();
        latent.h2.row_mut(j).fill(var(&fj).max(1e-8).ln());
    }
    let shrink = match *prior {
        LoadingPrior::NormalGamma { a, c, d } => Some(ShrinkState::new(dims, a, c, d)?),
        LoadingPrior::Normal { .. } => None,
    };
    let theta = Theta { idio, fac: vec![SvParams::factor(0.9, 0.1)?; k], loadings: FactorLoadings::new(b)?, shrink };
    Ok((theta, latent))
}

/// A running chain over a fixed data panel `y` (`p x T`).
pub struct Chain<'a> {
    y: &'a DMatrix<f64>,
    y_rows: Vec<Vec<f64>>,
    dims: ModelDims,
    config: SamplerConfig,
    state: ChainState,
    rng: ChaCha8Rng,
}

struct SeriesView {
    obs: Vec<f64>,
    offset: Option<Vec<f64>>,
    path: Vec<f64>,
    prm: SvParams,
}

impl<'a> Chain<'a> {
    /// Starts a chain with `k` factors from [`initial_state`].
    pub fn new(y: &'a DMatrix<f64>, k: usize, config: SamplerConfig) -> Result<Self> {
        check_data(y)?;
        let (theta, latent) = initial_state(y, k, &config.prior)?;
        Self::with_state(y, config, theta, latent)
    }

    /// Starts a chain from given parameters and latent paths.
    pub fn with_state(y: &'a DMatrix<f64>, config: SamplerConfig, theta: Theta, latent: LatentState) -> Result<Self> {
        config.validate()?;
        check_data(y)?;
        let dims = ModelDims::new(y.nrows(), theta.fac.len(), y.ncols())?;
        theta.validate(dims)?;
        latent.check(dims)?;
        if matches!(config.prior, LoadingPrior::NormalGamma { .. }) && theta.shrink.is_none() {
            return Err(Error::InvalidArgument("normal-gamma prior needs a shrinkage state".into()));
        }
        let n_series = dims.p + dims.k;
        let state = ChainState {
            theta,
            latent,
            sweep: 0,
            pm: vec![None; n_series],
            rho_step: vec![None; dims.p],
            langevin_eps: vec![config.langevin_eps; n_series],
        };
        let y_rows = (0..dims.p).map(|s| y.row(s).iter().copied().collect()).collect();
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut chain = Chain { y, y_rows, dims, config, state, rng };
        if chain.config.mask.latents {
            let seed = chain.rng.random::<u64>();
            let cache = chain.config.scheme == Scheme::Mixed;
            let mut report = SweepReport::default();
            chain.update_latents(seed ^ (STAGE_INIT as u64), Kernel::Plain, cache, &mut report)?;
        }
        Ok(chain)
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut ChainState {
        &mut self.state
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    /// One sweep of the configured scheme.
    pub fn sweep(&mut self) -> Result<SweepReport> {
        let sweep = self.state.sweep + 1;
        let out = match self.config.scheme {
            Scheme::Pg | Scheme::Pgas => self.pg_sweep(),
            Scheme::Mixed => self.mixed_sweep(),
        };
        out.map_err(|e| e.at_sweep(sweep))
    }

    /// Particle Gibbs sweep: SV parameters of every series, shrinkage scales,
    /// loadings, interweaving, factors, then a conditional SMC refresh and
    /// trajectory draw for every latent path. Under [`Scheme::Pgas`] the
    /// refresh uses ancestor sampling.
    pub fn pg_sweep(&mut self) -> Result<SweepReport> {
        let seed = self.rng.random::<u64>();
        let adapt = self.state.sweep < self.config.burnin;
        let mut report = SweepReport::default();
        let mask = self.config.mask;
        if mask.sv_params {
            self.update_idio_params(seed, true, adapt, &mut report)?;
            self.update_factor_params(seed, true, &mut report);
        }
        self.update_static(seed, &mut report)?;
        if mask.latents {
            let kernel = if self.config.scheme == Scheme::Pgas { Kernel::AncestorSampling } else { Kernel::Plain };
            self.update_latents(seed, kernel, false, &mut report)?;
        }
        self.finish_sweep();
        Ok(report)
    }

    /// Mixed sweep: a pseudo-marginal Langevin move on every `tau2` with a
    /// fresh bootstrap filter, followed by the particle Gibbs steps for all
    /// other quantities.
    pub fn mixed_sweep(&mut self) -> Result<SweepReport> {
        let seed = self.rng.random::<u64>();
        let adapt = self.state.sweep < self.config.burnin;
        let mut report = SweepReport::default();
        let mask = self.config.mask;
        let kernel = match self.config.mixed_kernel {
            MixedKernel::Plain => Kernel::Plain,
            MixedKernel::AncestorSampling => Kernel::AncestorSampling,
        };
        if mask.sv_params {
            self.update_tau2_pm(seed, adapt, kernel, &mut report)?;
            self.update_idio_params(seed, false, adapt, &mut report)?;
            self.update_factor_params(seed, false, &mut report);
        }
        self.update_static(seed, &mut report)?;
        if mask.latents {
            self.update_latents(seed, kernel, kernel == Kernel::Plain, &mut report)?;
        } else {
            self.state.pm.iter_mut().for_each(|c| *c = None);
        }
        self.finish_sweep();
        Ok(report)
    }

    fn finish_sweep(&mut self) {
        self.state.sweep += 1;
        if self.state.sweep == self.config.burnin {
            for step in self.state.rho_step.iter_mut().flatten() {
                step.finish();
            }
        }
    }

    fn series_name(&self, i: usize) -> String {
        if i < self.dims.p {
            format!("idiosyncratic series {}", i + 1)
        } else {
            format!("factor {}", i - self.dims.p + 1)
        }
    }

    fn series(&self, i: usize) -> SeriesView {
        let st = &self.state;
        if i < self.dims.p {
            SeriesView {
                obs: self.y_rows[i].clone(),
                offset: Some(st.theta.loadings.row_times_factors(i, &st.latent.f)),
                path: st.latent.h1.row(i).iter().copied().collect(),
                prm: st.theta.idio[i],
            }
        } else {
            let j = i - self.dims.p;
            SeriesView {
                obs: st.latent.f.row(j).iter().copied().collect(),
                offset: None,
                path: st.latent.h2.row(j).iter().copied().collect(),
                prm: st.theta.fac[j],
            }
        }
    }

    fn set_path(&mut self, i: usize, path: &[f64]) {
        let p = self.dims.p;
        let row = if i < p { self.state.latent.h1.row_mut(i) } else { self.state.latent.h2.row_mut(i - p) };
        for (dst, &v) in row.into_iter().zip(path) {
            *dst = v;
        }
    }

    fn set_params(&mut self, i: usize, prm: SvParams) {
        let p = self.dims.p;
        if i < p {
            self.state.theta.idio[i] = prm;
        } else {
            self.state.theta.fac[i - p] = prm;
        }
    }

    fn update_idio_params(&mut self, seed: u64, with_tau2: bool, adapt: bool, report: &mut SweepReport) -> Result<()> {
        let cfg = &self.config;
        let results = par_map(cfg.parallelism, self.dims.p, |s| {
            let mut rng = stream_rng(seed, STAGE_IDIO_PARAMS, s as u32);
            let v = self.series(s);
            let offset = v.offset.as_deref().unwrap_or(&[]);
            let data = SeriesData::Idiosyncratic { y: &v.obs, offset };
            let mut prm = v.prm;
            let (q, a_mu) = update_mu_pg(&v.path, &prm, &data, &mut rng);
            prm = q;
            let (q, a_phi) = update_phi_pg(&v.path, &prm, &data, cfg.phi_correction, &mut rng);
            prm = q;
            let a_tau = with_tau2.then(|| {
                let (q, a) = update_tau2_pg(&v.path, &prm, &data, &mut rng);
                prm = q;
                a
            });
            let stats = RhoStats::new(&v.path, &v.obs, offset, &prm);
            let target = |z: f64| stats.log_density_z(z);
            let mut step = self.state.rho_step[s].clone().unwrap_or_else(|| {
                DualAveraging::new(find_reasonable_eps(prm.rho.atanh(), target, &mut rng), cfg.nuts.target_accept)
            });
            let (rho, out) = update_rho_hmc(&stats, prm.rho, &mut step, cfg.nuts.max_depth, adapt, &mut rng);
            prm.rho = rho;
            (prm, step, a_mu, a_phi, a_tau, out.accepted, out.divergent)
        });
        for (s, (prm, step, a_mu, a_phi, a_tau, a_rho, divergent)) in results.into_iter().enumerate() {
            if !prm.is_valid() {
                return Err(Error::InvalidParameter(format!("{prm:?}")).in_series(self.series_name(s)));
            }
            self.state.theta.idio[s] = prm;
            self.state.rho_step[s] = Some(step);
            report.tally.record("mu", a_mu);
            report.tally.record("phi", a_phi);
            if let Some(a) = a_tau {
                report.tally.record("tau2", a);
            }
            report.tally.record("rho", a_rho);
            report.tally.record("rho_divergent", divergent);
        }
        Ok(())
    }

    fn update_factor_params(&mut self, seed: u64, with_tau2: bool, report: &mut SweepReport) {
        let p = self.dims.p;
        let cfg = &self.config;
        let results = par_map(cfg.parallelism, self.dims.k, |j| {
            let mut rng = stream_rng(seed, STAGE_FACTOR_PARAMS, j as u32);
            let v = self.series(p + j);
            let (mut prm, a_phi) = update_phi_pg(&v.path, &v.prm, &SeriesData::Factor, cfg.phi_correction, &mut rng);
            let a_tau = with_tau2.then(|| {
                let (q, a) = update_tau2_pg(&v.path, &prm, &SeriesData::Factor, &mut rng);
                prm = q;
                a
            });
            (prm, a_phi, a_tau)
        });
        for (j, (prm, a_phi, a_tau)) in results.into_iter().enumerate() {
            self.state.theta.fac[j] = prm;
            report.tally.record("phi_f", a_phi);
            if let Some(a) = a_tau {
                report.tally.record("tau2_f", a);
            }
        }
    }

    fn update_static(&mut self, seed: u64, report: &mut SweepReport) -> Result<()> {
        let mask = self.config.mask;
        let mut rng = stream_rng(seed, STAGE_STATIC, 0);
        let prior = self.config.prior;
        let Theta { idio, fac, loadings, shrink } = &mut self.state.theta;
        let latent = &mut self.state.latent;
        if mask.shrinkage {
            if let Some(sh) = shrink.as_mut() {
                *sh = update_shrinkage(loadings, sh, &mut rng)?;
            }
        }
        let prior_var = |s: usize, j: usize| match (prior, shrink.as_ref()) {
            (LoadingPrior::NormalGamma { .. }, Some(sh)) => sh.sigma2[(s, j)],
            (LoadingPrior::Normal { variance }, _) => variance,
            (LoadingPrior::NormalGamma { .. }, None) => 1.0,
        };
        if mask.loadings {
            update_loadings_gibbs(self.y, latent, idio, loadings, prior_var, &mut rng)?;
        }
        if mask.interweave {
            for res in deep_interweave(loadings, latent, fac, prior_var, &mut rng) {
                if res != InterweaveResult::Skipped {
                    report.tally.record("interweave", res == InterweaveResult::Accepted);
                }
            }
        }
        if mask.factors {
            update_factors_gibbs(self.y, latent, idio, loadings, &mut rng)?;
        }
        Ok(())
    }

    fn run_conditional(
        &self,
        kernel: Kernel,
        model: &SvSeries<'_>,
        obs: &[f64],
        path: &[f64],
        rng: &mut ChaCha8Rng,
    ) -> Result<ParticleSystem> {
        let n = self.config.particles;
        let reference = ReferenceTrajectory::new(path.to_vec(), n);
        match kernel {
            Kernel::Plain => conditional_smc(model, obs, n, &reference, rng),
            Kernel::AncestorSampling => csmc_ancestor_sampling(model, obs, n, &reference, rng),
        }
    }

    fn draw_path(sys: &ParticleSystem, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let j = sample_trajectory_index(sys.normweights_at(sys.len() - 1), rng)?;
        Ok(ancestral_trace(sys, j))
    }

    fn update_latents(&mut self, seed: u64, kernel: Kernel, cache: bool, report: &mut SweepReport) -> Result<()> {
        let n_series = self.dims.p + self.dims.k;
        let lambda = self.config.score_lambda;
        let results = par_map(self.config.parallelism, n_series, |i| -> Result<(Vec<f64>, Option<PmCache>, f64)> {
            let mut rng = stream_rng(seed, STAGE_LATENTS, i as u32);
            let v = self.series(i);
            let model = SvSeries::new(v.prm, v.offset.as_deref());
            let sys = self.run_conditional(kernel, &model, &v.obs, &v.path, &mut rng)?;
            let path = Self::draw_path(&sys, &mut rng)?;
            let changed = path.iter().zip(&v.path).filter(|(a, b)| a != b).count() as f64 / path.len() as f64;
            let pm = if cache {
                Some(PmCache { log_z: sys.log_z(), score: score_from_system(&model, &v.obs, &sys, lambda)? })
            } else {
                None
            };
            Ok((path, pm, changed))
        });
        report.path_change = vec![0.0; n_series];
        for (i, res) in results.into_iter().enumerate() {
            let (path, pm, changed) = res.map_err(|e| e.in_series(self.series_name(i)))?;
            self.set_path(i, &path);
            self.state.pm[i] = pm;
            report.path_change[i] = changed;
        }
        Ok(())
    }

    fn update_tau2_pm(&mut self, seed: u64, adapt: bool, kernel: Kernel, report: &mut SweepReport) -> Result<()> {
        let n_series = self.dims.p + self.dims.k;
        let n = self.config.particles;
        let lambda = self.config.score_lambda;
        let step_count = (self.state.sweep + 1) as f64;
        type PmOut = (SvParams, Vec<f64>, PmCache, f64, bool);
        let results = par_map(self.config.parallelism, n_series, |i| -> Result<PmOut> {
            let mut rng = stream_rng(seed, STAGE_PM, i as u32);
            let v = self.series(i);
            let offset = v.offset.as_deref();
            let model = SvSeries::new(v.prm, offset);
            let mut path = v.path.clone();
            let cache = match self.state.pm[i] {
                Some(c) if kernel == Kernel::Plain => c,
                _ => {
                    let sys = self.run_conditional(Kernel::Plain, &model, &v.obs, &v.path, &mut rng)?;
                    path = Self::draw_path(&sys, &mut rng)?;
                    PmCache { log_z: sys.log_z(), score: score_from_system(&model, &v.obs, &sys, lambda)? }
                }
            };
            let eps = self.state.langevin_eps[i];
            let current = PmPoint {
                log_tau2: v.prm.tau2.ln(),
                log_z: cache.log_z,
                grad: log_target_gradient(cache.score, v.prm.tau2),
            };
            let prop = langevin_proposal_tau2(v.prm.tau2, current.grad, eps, &mut rng)?;
            let candidate = SvParams { tau2: prop.tau2, ..v.prm };
            let mut out = (v.prm, path, cache, eps, false);
            let mut accept_prob = 0.0;
            if candidate.is_valid() {
                let proposed_model = SvSeries::new(candidate, offset);
                match bootstrap_pf(&proposed_model, &v.obs, n, &mut rng) {
                    // A collapsed filter is a zero likelihood estimate: reject.
                    Err(Error::ParticleCollapse { .. }) => {}
                    Err(e) => return Err(e),
                    Ok(sys) => {
                        if let Ok(score) = score_from_system(&proposed_model, &v.obs, &sys, lambda) {
                            let proposed = PmPoint {
                                log_tau2: prop.log_tau2,
                                log_z: sys.log_z(),
                                grad: log_target_gradient(score, prop.tau2),
                            };
                            let log_a = pm_log_acceptance(&current, &proposed, eps);
                            if log_a.is_finite() {
                                accept_prob = log_a.exp().min(1.0);
                                if log_a >= 0.0 || rng.random::<f64>().ln() < log_a {
                                    let new_path = Self::draw_path(&sys, &mut rng)?;
                                    out = (candidate, new_path, PmCache { log_z: sys.log_z(), score }, eps, true);
                                }
                            }
                        }
                    }
                }
            }
            if adapt {
                let target = self.config.langevin_target;
                out.3 = (eps.ln() + step_count.powf(-0.6) * (accept_prob - target)).exp().clamp(LANGEVIN_EPS_MIN, LANGEVIN_EPS_MAX);
            }
            Ok(out)
        });
        let p = self.dims.p;
        for (i, res) in results.into_iter().enumerate() {
            let (prm, path, cache, eps, accepted) = res.map_err(|e| e.in_series(self.series_name(i)))?;
            self.set_params(i, prm);
            self.set_path(i, &path);
            self.state.pm[i] = Some(cache);
            self.state.langevin_eps[i] = eps;
            report.tally.record(if i < p { "tau2" } else { "tau2_f" }, accepted);
        }
        Ok(())
    }

    /// Runs all configured sweeps and returns the retained, sign-identified draws.
    pub fn run(mut self) -> Result<(ChainDraws, ChainState)> {
        let start = Instant::now();
        let mut draws = ChainDraws::new(self.dims, self.config.prior);
        let burnin = self.config.burnin;
        for it in 0..self.config.iters {
            let report = self.sweep()?;
            if it < burnin {
                continue;
            }
            for (name, &(a, n)) in &report.tally.0 {
                let e = draws.acceptance.0.entry(name.clone()).or_insert((0, 0));
                e.0 += a;
                e.1 += n;
            }
            let mut theta = self.state.theta.clone();
            let mut latent = self.state.latent.clone();
            identify_state_signs(&mut theta, &mut latent);
            draws.loglik.push(conditional_loglik(self.y, &latent, &theta)?);
            draws.logprior.push(prior_logdensity(&theta, &self.config.prior));
            draws.h1.push(&latent.h1);
            draws.h2.push(&latent.h2);
            draws.f.push(&latent.f);
            let idx = it - burnin;
            if idx % self.config.thin_latent == 0 {
                draws.latent_paths.push((idx, latent));
            }
            draws.thetas.push(theta);
        }
        draws.runtime_seconds = start.elapsed().as_secs_f64();
        Ok((draws, self.state))
    }
}

fn check_data(y: &DMatrix<f64>) -> Result<()> {
    for t in 0..y.ncols() {
        for s in 0..y.nrows() {
            if !y[(s, t)].is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite observation at row {}, column {}",
                    t + 1,
                    s + 1
                )));
            }
        }
    }
    Ok(())
}

/// Runs a full chain with `k` factors.
pub fn run_chain(y: &DMatrix<f64>, k: usize, config: &SamplerConfig) -> Result<ChainDraws> {
    Ok(Chain::new(y, k, config.clone())?.run()?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{benchmark_theta, simulate};
    use crate::parallel::Parallelism;

    fn data(p: usize, k: usize, t: usize) -> (DMatrix<f64>, Theta, LatentState) {
        let theta = benchmark_theta(p, k).unwrap();
        let (y, latent) = simulate(ModelDims::new(p, k, t).unwrap(), &theta, 7).unwrap();
        (y, theta, latent)
    }

    fn small_config(scheme: Scheme) -> SamplerConfig {
        SamplerConfig { scheme, particles: 20, iters: 6, burnin: 2, seed: 3, ..Default::default() }
    }

    #[test]
    fn pm_acceptance_is_one_for_identical_points() {
        let x = PmPoint { log_tau2: -2.0, log_z: -140.2, grad: 0.7 };
        assert_eq!(pm_log_acceptance(&x, &x, 0.2), 0.0);
    }

    #[test]
    fn initial_state_is_valid() {
        let (y, _, _) = data(5, 2, 80);
        let (theta, latent) = initial_state(&y, 2, &LoadingPrior::default()).unwrap();
        let dims = ModelDims::new(5, 2, 80).unwrap();
        theta.validate(dims).unwrap();
        latent.check(dims).unwrap();
        assert_eq!(theta.loadings.get(0, 1), 0.0);
    }

    #[test]
    fn sweeps_are_seed_deterministic_and_thread_independent() {
        let (y, _, _) = data(4, 1, 40);
        for scheme in [Scheme::Pg, Scheme::Pgas, Scheme::Mixed] {
            let a = run_chain(&y, 1, &small_config(scheme)).unwrap();
            let cfg = SamplerConfig { parallelism: Parallelism::Sequential, ..small_config(scheme) };
            let b = run_chain(&y, 1, &cfg).unwrap();
            assert_eq!(a.thetas, b.thetas, "{scheme}");
            assert_eq!(a.loglik, b.loglik);
            assert_eq!(a.len(), 4);
        }
    }

    #[test]
    fn normal_gamma_chain_keeps_support() {
        let (y, _, _) = data(4, 2, 40);
        let cfg = SamplerConfig { prior: LoadingPrior::NormalGamma { a: 0.5, c: 1.0, d: 1.0 }, ..small_config(Scheme::Mixed) };
        let draws = run_chain(&y, 2, &cfg).unwrap();
        for th in &draws.thetas {
            let sh = th.shrink.as_ref().unwrap();
            assert!(sh.is_valid());
            assert!(th.idio.iter().chain(&th.fac).all(|q| q.is_valid()));
        }
        assert_eq!(draws.names.len(), draws.rows()[0].len());
    }

    #[test]
    fn rejects_bad_data() {
        let (mut y, _, _) = data(3, 1, 20);
        y[(1, 5)] = f64::NAN;
        let err = Chain::new(&y, 1, small_config(Scheme::Pg)).err().unwrap();
        assert!(err.to_string().contains("row 6, column 2"));
    }

    #[test]
    fn latents_only_sweep_leaves_parameters() {
        let (y, theta, latent) = data(3, 1, 30);
        let cfg = SamplerConfig { mask: super::super::config::UpdateMask::latents_only(), ..small_config(Scheme::Pgas) };
        let mut chain = Chain::with_state(&y, cfg, theta.clone(), latent.clone()).unwrap();
        for _ in 0..3 {
            chain.sweep().unwrap();
        }
        assert_eq!(chain.state().theta, theta);
        assert_eq!(chain.state().latent.f, latent.f);
        assert_ne!(chain.state().latent.h1, latent.h1);
    }
}
