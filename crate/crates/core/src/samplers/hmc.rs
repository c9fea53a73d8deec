//! Hamiltonian Monte Carlo on a scalar target: leapfrog integration, a
//! fixed-length HMC step, the No-U-Turn sampler and dual-averaging step-size
//! adaptation.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const DELTA_MAX: f64 = 1000.0;

/// One leapfrog step of size `eps` for `d/dt x = r`, `d/dt r = grad(x)`.
pub fn leapfrog<G: Fn(f64) -> f64>(x: f64, r: f64, eps: f64, grad: G) -> (f64, f64) {
    let r_half = r + 0.5 * eps * grad(x);
    let x_new = x + eps * r_half;
    (x_new, r_half + 0.5 * eps * grad(x_new))
}

/// Result of one HMC or NUTS transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmcOutcome {
    pub x: f64,
    /// Whether the chain moved to a new point.
    pub accepted: bool,
    /// Mean Metropolis acceptance probability over the trajectory.
    pub accept_stat: f64,
    pub n_leapfrog: usize,
    /// A non-finite density or gradient, or an energy error beyond the
    /// divergence threshold, was met.
    pub divergent: bool,
}

fn eval<F: Fn(f64) -> (f64, f64)>(target: &F, x: f64) -> Option<(f64, f64)> {
    let (lp, g) = target(x);
    if lp.is_finite() && g.is_finite() {
        Some((lp, g))
    } else {
        None
    }
}

/// Standard HMC with `n_leapfrog` steps and a Metropolis correction. `target`
/// returns the log-density and its gradient.
pub fn hmc_step<F, R>(x: f64, target: F, eps: f64, n_leapfrog: usize, rng: &mut R) -> HmcOutcome
where
    F: Fn(f64) -> (f64, f64),
    R: Rng + ?Sized,
{
    let stay = |divergent: bool| HmcOutcome { x, accepted: n_leapfrog == 0 && !divergent, accept_stat: if divergent { 0.0 } else { 1.0 }, n_leapfrog: 0, divergent };
    let Some((lp0, mut g)) = eval(&target, x) else { return stay(true) };
    let r0: f64 = StandardNormal.sample(rng);
    if n_leapfrog == 0 {
        return stay(false);
    }
    let (mut xn, mut r) = (x, r0);
    let mut lp = lp0;
    for _ in 0..n_leapfrog {
        r += 0.5 * eps * g;
        xn += eps * r;
        match eval(&target, xn) {
            Some((l, gn)) => {
                lp = l;
                g = gn;
            }
            None => return HmcOutcome { n_leapfrog, ..stay(true) },
        }
        r += 0.5 * eps * g;
    }
    let log_alpha = (lp - 0.5 * r * r) - (lp0 - 0.5 * r0 * r0);
    let accept_stat = log_alpha.exp().min(1.0);
    let accepted = rng.random::<f64>().ln() < log_alpha;
    HmcOutcome { x: if accepted { xn } else { x }, accepted, accept_stat, n_leapfrog, divergent: false }
}

struct Tree {
    x_minus: f64,
    r_minus: f64,
    g_minus: f64,
    x_plus: f64,
    r_plus: f64,
    g_plus: f64,
    x_prop: f64,
    n: f64,
    ok: bool,
    alpha: f64,
    n_alpha: f64,
    divergent: bool,
}

struct Nuts<'a, F> {
    target: &'a F,
    eps: f64,
    log_u: f64,
    h0: f64,
    n_leapfrog: usize,
}

impl<F: Fn(f64) -> (f64, f64)> Nuts<'_, F> {
    fn build<R: Rng + ?Sized>(&mut self, x: f64, r: f64, g: f64, v: f64, depth: usize, rng: &mut R) -> Tree {
        if depth == 0 {
            self.n_leapfrog += 1;
            let e = v * self.eps;
            let r_half = r + 0.5 * e * g;
            let x1 = x + e * r_half;
            let Some((lp1, g1)) = eval(self.target, x1) else {
                return Tree {
                    x_minus: x1, r_minus: r_half, g_minus: g, x_plus: x1, r_plus: r_half, g_plus: g,
                    x_prop: x, n: 0.0, ok: false, alpha: 0.0, n_alpha: 1.0, divergent: true,
                };
            };
            let r1 = r_half + 0.5 * e * g1;
            let h = lp1 - 0.5 * r1 * r1;
            let ok = self.log_u < h + DELTA_MAX;
            return Tree {
                x_minus: x1, r_minus: r1, g_minus: g1, x_plus: x1, r_plus: r1, g_plus: g1,
                x_prop: x1,
                n: if self.log_u <= h { 1.0 } else { 0.0 },
                ok,
                alpha: (h - self.h0).exp().min(1.0),
                n_alpha: 1.0,
                divergent: !ok,
            };
        }
        let mut t = self.build(x, r, g, v, depth - 1, rng);
        if !t.ok {
            return t;
        }
        let t2 = if v < 0.0 {
            let t2 = self.build(t.x_minus, t.r_minus, t.g_minus, v, depth - 1, rng);
            t.x_minus = t2.x_minus;
            t.r_minus = t2.r_minus;
            t.g_minus = t2.g_minus;
            t2
        } else {
            let t2 = self.build(t.x_plus, t.r_plus, t.g_plus, v, depth - 1, rng);
            t.x_plus = t2.x_plus;
            t.r_plus = t2.r_plus;
            t.g_plus = t2.g_plus;
            t2
        };
        let total = t.n + t2.n;
        if total > 0.0 && rng.random::<f64>() < t2.n / total {
            t.x_prop = t2.x_prop;
        }
        t.alpha += t2.alpha;
        t.n_alpha += t2.n_alpha;
        t.divergent |= t2.divergent;
        let span = t.x_plus - t.x_minus;
        t.ok = t2.ok && span * t.r_minus >= 0.0 && span * t.r_plus >= 0.0;
        t.n = total;
        t
    }
}

/// One No-U-Turn transition with slice sampling and step size `eps`.
pub fn nuts_step<F, R>(x: f64, target: F, eps: f64, max_depth: usize, rng: &mut R) -> HmcOutcome
where
    F: Fn(f64) -> (f64, f64),
    R: Rng + ?Sized,
{
    let Some((lp0, g0)) = eval(&target, x) else {
        return HmcOutcome { x, accepted: false, accept_stat: 0.0, n_leapfrog: 0, divergent: true };
    };
    let r0: f64 = StandardNormal.sample(rng);
    let h0 = lp0 - 0.5 * r0 * r0;
    let log_u = h0 + rng.random::<f64>().ln();
    let mut nuts = Nuts { target: &target, eps, log_u, h0, n_leapfrog: 0 };

    let (mut x_minus, mut r_minus, mut g_minus) = (x, r0, g0);
    let (mut x_plus, mut r_plus, mut g_plus) = (x, r0, g0);
    let mut x_new = x;
    let mut n = 1.0;
    let mut alpha = 0.0;
    let mut n_alpha = 0.0;
    let mut divergent = false;
    for depth in 0..max_depth {
        let v = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let t = if v < 0.0 {
            let t = nuts.build(x_minus, r_minus, g_minus, v, depth, rng);
            x_minus = t.x_minus;
            r_minus = t.r_minus;
            g_minus = t.g_minus;
            t
        } else {
            let t = nuts.build(x_plus, r_plus, g_plus, v, depth, rng);
            x_plus = t.x_plus;
            r_plus = t.r_plus;
            g_plus = t.g_plus;
            t
        };
        alpha += t.alpha;
        n_alpha += t.n_alpha;
        divergent |= t.divergent;
        if t.ok && rng.random::<f64>() < t.n / n {
            x_new = t.x_prop;
        }
        n += t.n;
        let span = x_plus - x_minus;
        if !(t.ok && span * r_minus >= 0.0 && span * r_plus >= 0.0) {
            break;
        }
    }
    HmcOutcome {
        x: x_new,
        accepted: x_new != x,
        accept_stat: if n_alpha > 0.0 { alpha / n_alpha } else { 0.0 },
        n_leapfrog: nuts.n_leapfrog,
        divergent,
    }
}

/// Dual-averaging adaptation of the log step size toward a target mean
/// acceptance statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct DualAveraging {
    pub eps: f64,
    pub eps_bar: f64,
    mu: f64,
    h_bar: f64,
    log_eps_bar: f64,
    m: f64,
    target: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    pub fn new(eps0: f64, target: f64) -> Self {
        DualAveraging {
            eps: eps0,
            eps_bar: eps0,
            mu: (10.0 * eps0).ln(),
            h_bar: 0.0,
            log_eps_bar: eps0.ln(),
            m: 0.0,
            target,
        }
    }

    /// Feeds one acceptance statistic and returns the next step size.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        self.m += 1.0;
        let m = self.m;
        let w = 1.0 / (m + Self::T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_stat);
        let log_eps = self.mu - m.sqrt() / Self::GAMMA * self.h_bar;
        let eta = m.powf(-Self::KAPPA);
        self.log_eps_bar = eta * log_eps + (1.0 - eta) * self.log_eps_bar;
        self.eps = log_eps.exp();
        self.eps_bar = self.log_eps_bar.exp();
        self.eps
    }

    /// Fixes the step size at the averaged value.
    pub fn finish(&mut self) {
        self.eps = self.eps_bar;
    }
}

/// Heuristic initial step size: doubles or halves `eps` until a single
/// leapfrog step's acceptance probability crosses 1/2.
pub fn find_reasonable_eps<F, R>(x: f64, target: F, rng: &mut R) -> f64
where
    F: Fn(f64) -> (f64, f64),
    R: Rng + ?Sized,
{
    let Some((lp0, _)) = eval(&target, x) else { return 0.1 };
    let r0: f64 = StandardNormal.sample(rng);
    let log_p = |eps: f64| {
        let (x1, r1) = leapfrog(x, r0, eps, |z| target(z).1);
        let lp1 = target(x1).0;
        (lp1 - 0.5 * r1 * r1) - (lp0 - 0.5 * r0 * r0)
    };
    let mut eps = 1.0;
    let a = if log_p(eps) > -std::f64::consts::LN_2 { 1.0 } else { -1.0 };
    for _ in 0..50 {
        let lp = log_p(eps);
        if !(a * lp > -a * std::f64::consts::LN_2) || !lp.is_finite() {
            break;
        }
        eps *= 2f64.powf(a);
    }
    eps.clamp(1e-4, 10.0)
}
