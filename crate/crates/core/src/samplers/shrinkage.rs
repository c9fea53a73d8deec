//! Normal-gamma shrinkage on the loadings: `B_sj ~ N(0, sigma2_sj)`,
//! `sigma2_sj ~ G(a_s, lambda2_s / 2)`, `lambda2_s ~ G(c, d)`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::gig::sample_gig;
use crate::error::{Error, Result};
use crate::model::{FactorLoadings, ModelDims};

/// Floor applied to `B_sj^2` before the `sigma2_sj` draw.
pub const LOADING_SQ_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkState {
    /// Local variances `sigma2_sj`, `p x k`; entries above the diagonal are unused and zero.
    pub sigma2: DMatrix<f64>,
    /// Row-wise global scales `lambda2_s`.
    pub lambda2: Vec<f64>,
    /// Row-wise shape `a_s`.
    pub a: Vec<f64>,
    pub c: f64,
    pub d: f64,
}

impl ShrinkState {
    /// Starts every scale at its prior mean.
    pub fn new(dims: ModelDims, a: f64, c: f64, d: f64) -> Result<Self> {
        if !(a > 0.0 && c > 0.0 && d > 0.0) {
            return Err(Error::InvalidParameter(format!("normal-gamma hyperparameters must be positive (a = {a}, c = {c}, d = {d})")));
        }
        let lambda2 = c / d;
        let mut sigma2 = DMatrix::zeros(dims.p, dims.k);
        for s in 0..dims.p {
            for j in 0..dims.free_loadings(s) {
                sigma2[(s, j)] = 2.0 * a / lambda2;
            }
        }
        Ok(ShrinkState { sigma2, lambda2: vec![lambda2; dims.p], a: vec![a; dims.p], c, d })
    }

    /// Prior variance of free loading `(s, j)`.
    pub fn variance(&self, s: usize, j: usize) -> f64 {
        self.sigma2[(s, j)]
    }

    pub fn is_valid(&self) -> bool {
        let (p, k) = self.sigma2.shape();
        self.lambda2.len() == p
            && self.a.len() == p
            && self.c > 0.0
            && self.d > 0.0
            && self.lambda2.iter().chain(self.a.iter()).all(|v| *v > 0.0 && v.is_finite())
            && (0..p).all(|s| (0..(s + 1).min(k)).all(|j| self.sigma2[(s, j)] > 0.0 && self.sigma2[(s, j)].is_finite()))
    }
}

/// One Gibbs pass over the shrinkage scales: `lambda2_s` given the row's
/// `sigma2`, then each `sigma2_sj ~ GIG(a_s - 1/2, lambda2_s, B_sj^2)`.
pub fn update_shrinkage<R: Rng + ?Sized>(
    loadings: &FactorLoadings,
    shrink: &ShrinkState,
    rng: &mut R,
) -> Result<ShrinkState> {
    let (p, k) = (loadings.p(), loadings.k());
    let mut next = shrink.clone();
    for s in 0..p {
        let ks = (s + 1).min(k);
        let a = shrink.a[s];
        let sum: f64 = (0..ks).map(|j| shrink.sigma2[(s, j)]).sum();
        let shape = shrink.c + a * ks as f64;
        let rate = shrink.d + 0.5 * sum;
        let lambda2 = Gamma::new(shape, 1.0 / rate)
            .map_err(|_| Error::InvalidParameter(format!("lambda2 conditional G({shape}, {rate})")))?
            .sample(rng);
        next.lambda2[s] = lambda2;
        for j in 0..ks {
            let b2 = loadings.get(s, j).powi(2).max(LOADING_SQ_FLOOR);
            next.sigma2[(s, j)] = sample_gig(a - 0.5, lambda2, b2, rng)?;
        }
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lambda2_conditional_moments() {
        // c = 2, d = 2, a = 0.5, one free loading, sigma2 = 2: lambda2 ~ G(2.5, rate 3).
        let dims = ModelDims::new(1, 1, 2).unwrap();
        let mut st = ShrinkState::new(dims, 0.5, 2.0, 2.0).unwrap();
        st.sigma2[(0, 0)] = 2.0;
        let b = FactorLoadings::new(DMatrix::from_element(1, 1, 0.7)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        let (mut m, mut m2) = (0.0, 0.0);
        for _ in 0..n {
            let x = update_shrinkage(&b, &st, &mut rng).unwrap().lambda2[0];
            m += x;
            m2 += x * x;
        }
        m /= n as f64;
        let var = m2 / n as f64 - m * m;
        assert!((m - 2.5 / 3.0).abs() < 3.0 * (2.5f64 / 9.0 / n as f64).sqrt() * 1.5);
        assert!((var - 2.5 / 9.0).abs() / (2.5 / 9.0) < 0.03);
    }

    #[test]
    fn zero_loading_is_floored() {
        let dims = ModelDims::new(3, 2, 2).unwrap();
        let st = ShrinkState::new(dims, 0.5, 1.0, 1.0).unwrap();
        let b = FactorLoadings::zeros(3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let next = update_shrinkage(&b, &st, &mut rng).unwrap();
        assert!(next.is_valid());
        assert_eq!(next.sigma2[(0, 1)], 0.0);
    }

    #[test]
    fn rejects_nonpositive_hyperparameters() {
        let dims = ModelDims::new(2, 1, 2).unwrap();
        assert!(ShrinkState::new(dims, 0.0, 1.0, 1.0).is_err());
    }
}
