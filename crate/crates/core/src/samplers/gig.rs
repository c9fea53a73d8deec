//! Generalized inverse Gaussian variates.
//!
//! `GIG(lambda, psi, chi)` has density proportional to
//! `x^(lambda - 1) exp(-(psi x + chi / x) / 2)` on `x > 0`. Sampling follows the
//! ratio-of-uniforms and transformed-density-rejection methods of Hörmann and
//! Leydold, applied to the standardized form with `psi = chi = omega`.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};

const ZTOL: f64 = 10.0 * f64::EPSILON;
const MAX_RETRIES: usize = 1000;

/// Draws one `GIG(lambda, psi, chi)` variate.
pub fn sample_gig<R: Rng + ?Sized>(lambda: f64, psi: f64, chi: f64, rng: &mut R) -> Result<f64> {
    let fail = || Error::GigFailure { m: lambda, k: psi, l: chi, retries: MAX_RETRIES };
    if !(lambda.is_finite() && psi.is_finite() && chi.is_finite()) || psi < 0.0 || chi < 0.0 {
        return Err(Error::InvalidParameter(format!("GIG({lambda}, {psi}, {chi})")));
    }
    if chi < ZTOL {
        if lambda > 0.0 && psi > 0.0 {
            let g = Gamma::new(lambda, 2.0 / psi).map_err(|_| fail())?;
            return Ok(g.sample(rng));
        }
        return Err(Error::InvalidParameter(format!("GIG({lambda}, {psi}, {chi}) is improper")));
    }
    if psi < ZTOL {
        if lambda < 0.0 {
            let g = Gamma::new(-lambda, 2.0 / chi).map_err(|_| fail())?;
            return Ok(1.0 / g.sample(rng));
        }
        return Err(Error::InvalidParameter(format!("GIG({lambda}, {psi}, {chi}) is improper")));
    }

    let lam = lambda.abs();
    let alpha = (chi / psi).sqrt();
    let omega = (psi * chi).sqrt();
    let x = if lam > 2.0 || omega > 3.0 {
        rou_shift(lam, omega, rng)
    } else if lam >= 1.0 - 2.25 * omega * omega || omega > 0.2 {
        rou_noshift(lam, omega, rng)
    } else {
        concave_tdr(lam, omega, rng)
    }
    .ok_or_else(fail)?;
    Ok(if lambda < 0.0 { alpha / x } else { alpha * x })
}

fn mode(lambda: f64, omega: f64) -> f64 {
    if lambda >= 1.0 {
        ((lambda - 1.0).hypot(omega) + (lambda - 1.0)) / omega
    } else {
        omega / ((1.0 - lambda).hypot(omega) + (1.0 - lambda))
    }
}

fn rou_noshift<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> Option<f64> {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);
    let ym = ((lambda + 1.0) + (lambda + 1.0).hypot(omega)) / omega;
    let um = (0.5 * (lambda + 1.0) * ym.ln() - s * (ym + 1.0 / ym) - nc).exp();
    for _ in 0..MAX_RETRIES {
        let u = um * rng.random::<f64>();
        let v: f64 = rng.random();
        let x = u / v;
        if x > 0.0 && x.is_finite() && v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return Some(x);
        }
    }
    None
}

fn rou_shift<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> Option<f64> {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);

    // Roots of x^3 + a x^2 + b x + c bound the shifted bounding rectangle.
    let a = -(2.0 * (lambda + 1.0) / omega + xm);
    let b = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
    let c = xm;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let fi = (-q / (2.0 * (-(p * p * p) / 27.0).sqrt())).clamp(-1.0, 1.0).acos();
    let fak = 2.0 * (-p / 3.0).sqrt();
    let y1 = fak * (fi / 3.0).cos() - a / 3.0;
    let y2 = fak * (fi / 3.0 + 4.0 / 3.0 * std::f64::consts::PI).cos() - a / 3.0;
    let uplus = (y1 - xm) * (t * y1.ln() - s * (y1 + 1.0 / y1) - nc).exp();
    let uminus = (y2 - xm) * (t * y2.ln() - s * (y2 + 1.0 / y2) - nc).exp();

    for _ in 0..MAX_RETRIES {
        let u = uminus + rng.random::<f64>() * (uplus - uminus);
        let v: f64 = rng.random();
        let x = u / v + xm;
        if x > 0.0 && x.is_finite() && v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return Some(x);
        }
    }
    None
}

/// Rejection from a three-piece hat for `0 <= lambda < 1` and small `omega`,
/// where the log-density is concave.
fn concave_tdr<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> Option<f64> {
    let xm = mode(lambda, omega);
    let x0 = omega / (1.0 - lambda);
    let k0 = ((lambda - 1.0) * xm.ln() - 0.5 * omega * (xm + 1.0 / xm)).exp();
    let a0 = k0 * x0;
    let (k1, a1, k2, a2);
    if x0 >= 2.0 / omega {
        k1 = 0.0;
        a1 = 0.0;
        k2 = x0.powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-omega * x0 / 2.0).exp() / omega;
    } else {
        k1 = (-omega).exp();
        a1 = if lambda == 0.0 {
            k1 * (2.0 / (omega * omega)).ln()
        } else {
            k1 / lambda * ((2.0 / omega).powf(lambda) - x0.powf(lambda))
        };
        k2 = (2.0 / omega).powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-1.0f64).exp() / omega;
    }
    let total = a0 + a1 + a2;

    for _ in 0..MAX_RETRIES {
        let mut v = total * rng.random::<f64>();
        let (x, hx);
        if v <= a0 {
            x = x0 * v / a0;
            hx = k0;
        } else {
            v -= a0;
            if v <= a1 {
                if lambda == 0.0 {
                    x = omega * (omega.exp() * v).exp();
                    hx = k1 / x;
                } else {
                    x = (x0.powf(lambda) + lambda / k1 * v).powf(1.0 / lambda);
                    hx = k1 * x.powf(lambda - 1.0);
                }
            } else {
                v -= a1;
                let a = x0.max(2.0 / omega);
                x = -2.0 / omega * ((-omega / 2.0 * a).exp() - omega / (2.0 * k2) * v).ln();
                hx = k2 * (-omega / 2.0 * x).exp();
            }
        }
        let u = rng.random::<f64>() * hx;
        if x > 0.0 && x.is_finite() && u.ln() <= (lambda - 1.0) * x.ln() - omega / 2.0 * (x + 1.0 / x) {
            return Some(x);
        }
    }
    None
}
