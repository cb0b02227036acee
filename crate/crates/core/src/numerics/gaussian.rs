use std::f64::consts::{E, PI};

use rand::Rng;
use rand_distr::StandardNormal;

pub const LOG_STD_MIN: f64 = -4.0;
pub const LOG_STD_MAX: f64 = 1.0;

/// Diagonal Gaussian action distribution with a learned, state-independent
/// log standard deviation per action dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHead {
    log_std: Vec<f64>,
}

impl GaussianHead {
    pub fn new(dim: usize, init_log_std: f64) -> Self {
        Self {
            log_std: vec![init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX); dim],
        }
    }

    pub fn from_log_std(log_std: Vec<f64>) -> Self {
        let mut head = Self { log_std };
        head.clamp();
        head
    }

    pub fn dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    /// Raw mutable access for the optimizer; call [`GaussianHead::clamp`] afterwards.
    pub fn log_std_mut(&mut self) -> &mut [f64] {
        &mut self.log_std
    }

    pub fn clamp(&mut self) {
        for s in &mut self.log_std {
            *s = s.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    /// Draw `mean + exp(log_std) * eps` and return it with its log-density.
    pub fn sample<R: Rng + ?Sized>(&self, mean: &[f64], rng: &mut R) -> (Vec<f64>, f64) {
        assert_eq!(mean.len(), self.dim(), "mean/log_std length mismatch");
        let action: Vec<f64> = mean
            .iter()
            .zip(&self.log_std)
            .map(|(&m, &s)| {
                let eps: f64 = rng.sample(StandardNormal);
                m + s.exp() * eps
            })
            .collect();
        let log_prob = self.log_prob(mean, &action);
        (action, log_prob)
    }

    pub fn log_prob(&self, mean: &[f64], action: &[f64]) -> f64 {
        assert_eq!(mean.len(), self.dim(), "mean/log_std length mismatch");
        assert_eq!(action.len(), self.dim(), "action/log_std length mismatch");
        let half_log_two_pi = 0.5 * (2.0 * PI).ln();
        mean.iter()
            .zip(action)
            .zip(&self.log_std)
            .map(|((&m, &a), &s)| {
                let z = (a - m) / s.exp();
                -0.5 * z * z - s - half_log_two_pi
            })
            .sum()
    }

    /// Gradients of `log_prob` with respect to the mean and to each log-std.
    pub fn log_prob_grads(&self, mean: &[f64], action: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut d_mean = Vec::with_capacity(self.dim());
        let mut d_log_std = Vec::with_capacity(self.dim());
        for ((&m, &a), &s) in mean.iter().zip(action).zip(&self.log_std) {
            let var = (2.0 * s).exp();
            let diff = a - m;
            d_mean.push(diff / var);
            d_log_std.push(diff * diff / var - 1.0);
        }
        (d_mean, d_log_std)
    }

    /// Differential entropy, `sum_d (log_std_d + 0.5 ln(2 pi e))`.
    pub fn entropy(&self) -> f64 {
        let c = 0.5 * (2.0 * PI * E).ln();
        self.log_std.iter().map(|s| s + c).sum()
    }
}
