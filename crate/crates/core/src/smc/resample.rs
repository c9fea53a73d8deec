//! Resampling schemes over normalized weights.

use rand::Rng;

use crate::error::{Error, Result};

const NORM_TOL: f64 = 1e-9;

pub(crate) fn check_normalized(w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return Err(Error::InvalidArgument("empty weight vector".into()));
    }
    let mut sum = 0.0;
    for &x in w {
        if !(x >= 0.0) || !x.is_finite() {
            return Err(Error::WeightsNotNormalized { sum: f64::NAN });
        }
        sum += x;
    }
    if (sum - 1.0).abs() > NORM_TOL {
        return Err(Error::WeightsNotNormalized { sum });
    }
    Ok(())
}

/// Systematic resampling with offset `u in [0, 1)`: the grid `(u + m) / N`
/// is mapped through the cumulative weights. Output indices are non-decreasing.
pub fn systematic_resample(normweights: &[f64], u: f64) -> Result<Vec<usize>> {
    check_normalized(normweights)?;
    if !(0.0..1.0).contains(&u) {
        return Err(Error::InvalidArgument(format!("offset u = {u} outside [0, 1)")));
    }
    let mut out = vec![0; normweights.len()];
    systematic_into(normweights, u, &mut out);
    Ok(out)
}

/// Maps the grid `(u + m) / out.len()` through the cumulative weights.
pub(crate) fn systematic_into(w: &[f64], u: f64, out: &mut [usize]) {
    let n = w.len();
    let inv_n = 1.0 / out.len() as f64;
    let mut j = 0;
    let mut cum = w[0];
    for (m, slot) in out.iter_mut().enumerate() {
        let x = (u + m as f64) * inv_n;
        while x >= cum && j + 1 < n {
            j += 1;
            cum += w[j];
        }
        *slot = j;
    }
}

/// Systematic resampling conditioned on `out[slot] == pinned`.
///
/// The offset is drawn with density proportional to the number of grid points
/// that land in the pinned particle's cumulative-weight interval, which is the
/// conditional law of the offset given that one grid point selects `pinned`.
/// One selected copy of `pinned` is then moved to `slot`.
pub fn conditional_systematic_resample<R: Rng + ?Sized>(
    normweights: &[f64],
    pinned: usize,
    slot: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    check_normalized(normweights)?;
    let n = normweights.len();
    if pinned >= n || slot >= n {
        return Err(Error::InvalidArgument(format!(
            "pinned ({pinned}) and slot ({slot}) must be below N = {n}"
        )));
    }
    let mut out = vec![0; n];
    conditional_systematic_into(normweights, pinned, slot, rng, &mut out);
    Ok(out)
}

pub(crate) fn conditional_systematic_into<R: Rng + ?Sized>(
    w: &[f64],
    pinned: usize,
    slot: usize,
    rng: &mut R,
    out: &mut [usize],
) {
    let n = w.len();
    let lo: f64 = w[..pinned].iter().sum();
    let v: f64 = rng.random();
    let x = (lo + w[pinned] * v) * n as f64;
    let m0 = (x.floor() as usize).min(n - 1);
    let u = (x - m0 as f64).clamp(0.0, 1.0 - f64::EPSILON);
    systematic_into(w, u, out);
    // Guard against cumulative-sum rounding at the interval edges.
    let pos = if out[m0] == pinned {
        m0
    } else {
        out.iter().position(|&a| a == pinned).unwrap_or(m0)
    };
    out[pos] = pinned;
    out.swap(pos, slot);
}

/// Draws `out.len()` indices independently from the categorical distribution `w`.
pub(crate) fn multinomial_into<R: Rng + ?Sized>(w: &[f64], rng: &mut R, out: &mut [usize], cum: &mut Vec<f64>) {
    cum.clear();
    let mut c = 0.0;
    for &x in w {
        c += x;
        cum.push(c);
    }
    let total = c;
    for slot in out.iter_mut() {
        let u = rng.random::<f64>() * total;
        *slot = cum.partition_point(|&v| v <= u).min(w.len() - 1);
    }
}

/// Categorical draw of one index with probabilities `normweights`.
pub fn sample_trajectory_index<R: Rng + ?Sized>(normweights: &[f64], rng: &mut R) -> Result<usize> {
    check_normalized(normweights)?;
    Ok(categorical(normweights, rng))
}

pub(crate) fn categorical<R: Rng + ?Sized>(w: &[f64], rng: &mut R) -> usize {
    let total: f64 = w.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut c = 0.0;
    let mut last_positive = 0;
    for (i, &x) in w.iter().enumerate() {
        if x > 0.0 {
            c += x;
            last_positive = i;
            if u < c {
                return i;
            }
        }
    }
    last_positive
}
