mod common;

use common::LinearGaussian;
use fmsv_core::score::{estimate_score, ScoreModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

impl ScoreModel for LinearGaussian {
    fn initial_gradient(&self, _h: f64) -> f64 {
        0.0
    }
    fn transition_gradient(&self, _t: usize, h: f64, h_prev: f64) -> f64 {
        let e = h - self.a * h_prev;
        -0.5 + e * e / (2.0 * self.q)
    }
    fn measurement_gradient(&self, _t: usize, _y: f64, _h: f64, _h_prev: Option<f64>) -> f64 {
        0.0
    }
}

/// Without forgetting the recursion is a consistent estimate of the score, so
/// its average over replicates matches the Kalman derivative with respect to `log q`.
#[test]
fn recursion_without_forgetting_matches_kalman_derivative() {
    let model = LinearGaussian { a: 0.9, q: 0.5, r: 1.0, p0: 1.0 };
    let y = model.simulate(100, &mut ChaCha8Rng::seed_from_u64(3));
    let d = 1e-5;
    let at = |log_q: f64| LinearGaussian { q: log_q.exp(), ..model }.kalman_loglik(&y);
    let exact = (at(model.q.ln() + d) - at(model.q.ln() - d)) / (2.0 * d);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let est: Vec<f64> = (0..40).map(|_| estimate_score(&model, &y, 2000, 1.0, &mut rng).unwrap().0).collect();
    let mean = est.iter().sum::<f64>() / est.len() as f64;
    let var = est.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (est.len() - 1) as f64;
    let se = (var / est.len() as f64).sqrt();
    assert!((mean - exact).abs() < 3.0 * se, "mean {mean} exact {exact} se {se}");
}
