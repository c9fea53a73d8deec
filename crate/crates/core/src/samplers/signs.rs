//! A-posteriori sign identification of the factors.

use super::draws::ChainDraws;
use crate::model::{LatentState, Theta};

/// Flips every factor whose diagonal loading is negative: column `j` of the
/// loadings and row `j` of the factors change sign, the log-variances do not.
/// Returns the indices of factors whose pivot is exactly zero (left unflipped).
pub fn identify_signs_in_place(theta: &mut Theta, f: Option<&mut nalgebra::DMatrix<f64>>) -> Vec<usize> {
    let k = theta.loadings.k();
    let mut zero = Vec::new();
    let mut flips = Vec::new();
    for j in 0..k {
        let pivot = theta.loadings.get(j, j);
        if pivot == 0.0 {
            zero.push(j);
        } else if pivot < 0.0 {
            theta.loadings.scale_column(j, -1.0);
            flips.push(j);
        }
    }
    if let Some(f) = f {
        for &j in &flips {
            f.row_mut(j).neg_mut();
        }
    }
    zero
}

/// Sign-identifies one parameter draw and its latent state together.
pub fn identify_state_signs(theta: &mut Theta, latent: &mut LatentState) -> Vec<usize> {
    identify_signs_in_place(theta, Some(&mut latent.f))
}

/// Applies sign identification to every stored draw. Stored latent paths are
/// flipped with the parameter draw of the same sweep.
pub fn identify_signs(draws: &ChainDraws) -> ChainDraws {
    let mut out = draws.clone();
    let mut flipped_latents = out.latent_paths.clone();
    for (idx, latent) in flipped_latents.iter_mut() {
        let mut theta = out.thetas[*idx].clone();
        identify_state_signs(&mut theta, latent);
    }
    for theta in out.thetas.iter_mut() {
        identify_signs_in_place(theta, None);
    }
    out.latent_paths = flipped_latents;
    out
}
