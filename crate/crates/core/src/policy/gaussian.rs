//! Continuous-action policy: a tanh MLP maps features to the means of two
//! independent fixed-variance Gaussians (pan, tilt).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::features::FeatureVector;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    hidden: usize,
    features: usize,
    pub sigma: f64,
    pub max_accel: f64,
    /// `W1 [H×N] | b1 [H] | W2 [2×H] | b2 [2]`.
    params: Vec<f64>,
}

/// Hidden activations and output means from one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub hidden: Vec<f64>,
    pub mean: [f64; 2],
}

impl GaussianPolicy {
    pub fn new(hidden: usize, features: usize, sigma: f64, max_accel: f64) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::config("policy.hidden", "need at least one hidden unit"));
        }
        if !(sigma > 0.0) {
            return Err(Error::config("policy.sigma", "must be positive"));
        }
        Ok(GaussianPolicy {
            hidden,
            features,
            sigma,
            max_accel,
            params: vec![0.0; Self::count(hidden, features)],
        })
    }

    /// `(N+1)·H + (H+1)·2`.
    pub fn count(hidden: usize, features: usize) -> usize {
        (features + 1) * hidden + (hidden + 1) * 2
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.features;
        let w2 = b1 + self.hidden;
        let b2 = w2 + 2 * self.hidden;
        (b1, w2, b2)
    }

    pub fn forward(&self, f: &FeatureVector) -> Result<Forward> {
        let (b1, w2, b2) = self.offsets();
        let x = f.as_slice();
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|h| {
                let row = &self.params[h * self.features..(h + 1) * self.features];
                let pre: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.params[b1 + h];
                pre.tanh()
            })
            .collect();
        let mut mean = [0.0; 2];
        for (o, m) in mean.iter_mut().enumerate() {
            let row = &self.params[w2 + o * self.hidden..w2 + (o + 1) * self.hidden];
            *m = row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + self.params[b2 + o];
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Numeric {
                frame: 0,
                message: "non-finite Gaussian policy mean".into(),
            });
        }
        Ok(Forward { hidden, mean })
    }

    /// Backpropagate per-output sensitivities `d = ∂L/∂μ` to all parameters.
    fn backprop(&self, f: &FeatureVector, fwd: &Forward, d: [f64; 2]) -> Vec<f64> {
        let (b1, w2, b2) = self.offsets();
        let mut grad = vec![0.0; self.params.len()];
        for o in 0..2 {
            for h in 0..self.hidden {
                grad[w2 + o * self.hidden + h] = d[o] * fwd.hidden[h];
            }
            grad[b2 + o] = d[o];
        }
        for h in 0..self.hidden {
            let back = (0..2).map(|o| d[o] * self.params[w2 + o * self.hidden + h]).sum::<f64>()
                * (1.0 - fwd.hidden[h] * fwd.hidden[h]);
            grad[b1 + h] = back;
            for (g, x) in grad[h * self.features..(h + 1) * self.features]
                .iter_mut()
                .zip(f.as_slice())
            {
                *g = back * x;
            }
        }
        grad
    }

    /// Jacobian of the two means with respect to every parameter.
    pub fn mean_jacobian(&self, f: &FeatureVector) -> Result<[Vec<f64>; 2]> {
        let fwd = self.forward(f)?;
        Ok([self.backprop(f, &fwd, [1.0, 0.0]), self.backprop(f, &fwd, [0.0, 1.0])])
    }

    /// Gradient of `-Σ (a-μ)²/(2σ²)` for the pre-clip sample `a`.
    pub fn grad_log(&self, f: &FeatureVector, sample: [f64; 2]) -> Result<Vec<f64>> {
        let fwd = self.forward(f)?;
        let s2 = self.sigma * self.sigma;
        let d = [(sample[0] - fwd.mean[0]) / s2, (sample[1] - fwd.mean[1]) / s2];
        Ok(self.backprop(f, &fwd, d))
    }

    /// Log-density of a pre-clip sample, up to the constant normalizer.
    pub fn log_density(&self, f: &FeatureVector, sample: [f64; 2]) -> Result<f64> {
        let m = self.forward(f)?.mean;
        let s2 = self.sigma * self.sigma;
        Ok(-((sample[0] - m[0]).powi(2) + (sample[1] - m[1]).powi(2)) / (2.0 * s2))
    }
}

/// Per-axis `N(μ, σ²)` draw. Returns the raw sample; clipping is the caller's concern.
pub fn sample_gaussian<R: Rng + ?Sized>(mean: [f64; 2], sigma: f64, rng: &mut R) -> [f64; 2] {
    let z0: f64 = rng.sample(StandardNormal);
    let z1: f64 = rng.sample(StandardNormal);
    [mean[0] + sigma * z0, mean[1] + sigma * z1]
}
