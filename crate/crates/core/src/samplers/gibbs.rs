//! Exact Gaussian conditionals for the loadings and the factors.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{leverage_moments, FactorLoadings, LatentState, SvParams};

/// Draws from `N(P^{-1} b, P^{-1})` given the precision `P` and `b`.
pub(crate) fn draw_from_precision<R: Rng + ?Sized>(
    precision: DMatrix<f64>,
    rhs: &DVector<f64>,
    what: &'static str,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let chol = precision.cholesky().ok_or(Error::NotPositiveDefinite(what))?;
    let mean = chol.solve(rhs);
    let z = DVector::from_fn(rhs.len(), |_, _| StandardNormal.sample(rng));
    let noise = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or(Error::NotPositiveDefinite(what))?;
    Ok(mean + noise)
}

/// Moments `(precision, P * mean)` of the conditional of the free loadings of
/// one row. `f` holds the first `k_s` factors (`k_s x T`); `prior_var` the
/// prior variance of each free loading.
pub fn loadings_row_moments(
    f: &DMatrix<f64>,
    y: &[f64],
    h: &[f64],
    prm: &SvParams,
    prior_var: &[f64],
) -> (DMatrix<f64>, DVector<f64>) {
    let ks = prior_var.len();
    let mut prec = DMatrix::from_diagonal(&DVector::from_iterator(ks, prior_var.iter().map(|v| 1.0 / v)));
    let mut rhs = DVector::zeros(ks);
    for t in 0..y.len() {
        let hp = if t == 0 { None } else { Some(h[t - 1]) };
        let (shift, var) = leverage_moments(h[t], hp, prm);
        let target = y[t] - shift;
        for a in 0..ks {
            let fa = f[(a, t)] / var;
            rhs[a] += fa * target;
            for b in 0..=a {
                prec[(a, b)] += fa * f[(b, t)];
            }
        }
    }
    for a in 0..ks {
        for b in 0..a {
            prec[(b, a)] = prec[(a, b)];
        }
    }
    (prec, rhs)
}

/// Gibbs draw of the free loadings of one row given the factors and the
/// row's log-variance path. With no observations the draw is from the prior.
pub fn update_loadings_row<R: Rng + ?Sized>(
    f: &DMatrix<f64>,
    y: &[f64],
    h: &[f64],
    prm: &SvParams,
    prior_var: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    if f.ncols() != y.len() || h.len() != y.len() {
        return Err(Error::DimensionMismatch { what: "loadings row", expected: y.len(), found: f.ncols().min(h.len()) });
    }
    if f.nrows() < prior_var.len() {
        return Err(Error::DimensionMismatch { what: "factors", expected: prior_var.len(), found: f.nrows() });
    }
    let (prec, rhs) = loadings_row_moments(f, y, h, prm, prior_var);
    Ok(draw_from_precision(prec, &rhs, "loadings conditional", rng)?.iter().copied().collect())
}

/// Moments `(precision, P * mean)` of the conditional of `f_t`.
pub fn factor_moments(
    y_t: &[f64],
    b: &DMatrix<f64>,
    h1_t: &[f64],
    h1_prev: Option<&[f64]>,
    h2_t: &[f64],
    idio: &[SvParams],
) -> (DMatrix<f64>, DVector<f64>) {
    let k = b.ncols();
    let mut prec = DMatrix::from_diagonal(&DVector::from_iterator(k, h2_t.iter().map(|h| (-h).exp())));
    let mut rhs = DVector::zeros(k);
    for s in 0..y_t.len() {
        let (shift, var) = leverage_moments(h1_t[s], h1_prev.map(|hp| hp[s]), &idio[s]);
        let target = y_t[s] - shift;
        for a in 0..k {
            let ba = b[(s, a)] / var;
            if ba == 0.0 {
                continue;
            }
            rhs[a] += ba * target;
            for c in 0..=a {
                prec[(a, c)] += ba * b[(s, c)];
            }
        }
    }
    for a in 0..k {
        for c in 0..a {
            prec[(c, a)] = prec[(a, c)];
        }
    }
    (prec, rhs)
}

/// Gibbs draw of the factors at one period.
pub fn update_factors_t<R: Rng + ?Sized>(
    y_t: &[f64],
    b: &DMatrix<f64>,
    h1_t: &[f64],
    h1_prev: Option<&[f64]>,
    h2_t: &[f64],
    idio: &[SvParams],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let (prec, rhs) = factor_moments(y_t, b, h1_t, h1_prev, h2_t, idio);
    Ok(draw_from_precision(prec, &rhs, "factor conditional", rng)?.iter().copied().collect())
}

/// Gibbs update of every free loading, row by row. `prior_var(s, j)` gives the
/// prior variance of loading `(s, j)`.
pub fn update_loadings_gibbs<R, V>(
    y: &DMatrix<f64>,
    latent: &LatentState,
    idio: &[SvParams],
    loadings: &mut FactorLoadings,
    prior_var: V,
    rng: &mut R,
) -> Result<()>
where
    R: Rng + ?Sized,
    V: Fn(usize, usize) -> f64,
{
    let (p, k) = (loadings.p(), loadings.k());
    let mut yrow = vec![0.0; y.ncols()];
    let mut hrow = vec![0.0; y.ncols()];
    for s in 0..p {
        let ks = (s + 1).min(k);
        let f = latent.f.rows(0, ks).into_owned();
        for t in 0..y.ncols() {
            yrow[t] = y[(s, t)];
            hrow[t] = latent.h1[(s, t)];
        }
        let pv: Vec<f64> = (0..ks).map(|j| prior_var(s, j)).collect();
        let row = update_loadings_row(&f, &yrow, &hrow, &idio[s], &pv, rng).map_err(|e| e.in_series(format!("loadings row {}", s + 1)))?;
        loadings.set_free_row(s, &row);
    }
    Ok(())
}

/// Gibbs update of the factors at every period.
pub fn update_factors_gibbs<R: Rng + ?Sized>(
    y: &DMatrix<f64>,
    latent: &mut LatentState,
    idio: &[SvParams],
    loadings: &FactorLoadings,
    rng: &mut R,
) -> Result<()> {
    let (p, len) = y.shape();
    let k = loadings.k();
    let mut y_t = vec![0.0; p];
    let mut h_t = vec![0.0; p];
    let mut h_prev = vec![0.0; p];
    let mut h2_t = vec![0.0; k];
    for t in 0..len {
        for s in 0..p {
            y_t[s] = y[(s, t)];
            h_t[s] = latent.h1[(s, t)];
        }
        for j in 0..k {
            h2_t[j] = latent.h2[(j, t)];
        }
        let prev = if t == 0 { None } else { Some(h_prev.as_slice()) };
        let f = update_factors_t(&y_t, loadings.matrix(), &h_t, prev, &h2_t, idio, rng)?;
        for j in 0..k {
            latent.f[(j, t)] = f[j];
        }
        std::mem::swap(&mut h_prev, &mut h_t);
    }
    Ok(())
}
