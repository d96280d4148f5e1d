//! Discrete-action policy: one linear softmax network per axis over K
//! equally spaced accelerations.

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::FeatureVector;

use super::Axis;

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxPolicy {
    actions: usize,
    features: usize,
    pub temperature: f64,
    pub max_accel: f64,
    /// Layout `[axis][action][feature]`.
    weights: Vec<f64>,
}

impl SoftmaxPolicy {
    pub fn new(actions: usize, features: usize, temperature: f64, max_accel: f64) -> Result<Self> {
        if actions < 2 {
            return Err(Error::config("policy.actions", "need at least two discrete actions"));
        }
        if !(temperature > 0.0) {
            return Err(Error::config("policy.temperature", "must be positive"));
        }
        Ok(SoftmaxPolicy {
            actions,
            features,
            temperature,
            max_accel,
            weights: vec![0.0; 2 * actions * features],
        })
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn params(&self) -> &[f64] {
        &self.weights
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn param_count(&self) -> usize {
        self.weights.len()
    }

    fn row(&self, axis: Axis, k: usize) -> &[f64] {
        let start = (axis.index() * self.actions + k) * self.features;
        &self.weights[start..start + self.features]
    }

    /// Output activations `z_k = θ_kᵀ f` for one axis.
    pub fn activations(&self, f: &FeatureVector, axis: Axis) -> Vec<f64> {
        (0..self.actions)
            .map(|k| self.row(axis, k).iter().zip(f.as_slice()).map(|(w, x)| w * x).sum())
            .collect()
    }

    /// Acceleration for action index `k`: `-max + k·2max/(K-1)`.
    pub fn accel_of(&self, k: usize) -> f64 {
        let step = 2.0 * self.max_accel / (self.actions - 1) as f64;
        -self.max_accel + k as f64 * step
    }

    pub fn probs(&self, f: &FeatureVector, axis: Axis) -> Result<Vec<f64>> {
        softmax(&self.activations(f, axis), self.temperature)
    }

    /// Most probable action per axis. Ties go to the smaller |acceleration|, then the negative one.
    pub fn greedy_indices(&self, f: &FeatureVector) -> Result<[usize; 2]> {
        let mut out = [0; 2];
        for axis in Axis::BOTH {
            let z = self.activations(f, axis);
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    frame: 0,
                    message: "non-finite softmax activation".into(),
                });
            }
            out[axis.index()] = greedy_index(&z, |k| self.accel_of(k));
        }
        Ok(out)
    }

    /// `∂ log π_k / ∂θ_i = ((1{i=k} - π_i)/T) f`, for both axes, in parameter layout.
    pub fn grad_log(&self, f: &FeatureVector, choice: [usize; 2]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.weights.len()];
        for axis in Axis::BOTH {
            let k = choice[axis.index()];
            if k >= self.actions {
                return Err(Error::Argument(format!("action index {k} out of range")));
            }
            let pi = self.probs(f, axis)?;
            for (i, p) in pi.iter().enumerate() {
                let scale = ((if i == k { 1.0 } else { 0.0 }) - p) / self.temperature;
                let start = (axis.index() * self.actions + i) * self.features;
                for (g, x) in grad[start..start + self.features].iter_mut().zip(f.as_slice()) {
                    *g = scale * x;
                }
            }
        }
        Ok(grad)
    }

    /// Log-probability of a joint choice; used by gradient checks.
    pub fn log_prob(&self, f: &FeatureVector, choice: [usize; 2]) -> Result<f64> {
        let mut lp = 0.0;
        for axis in Axis::BOTH {
            lp += self.probs(f, axis)?[choice[axis.index()]].ln();
        }
        Ok(lp)
    }
}

/// Numerically stable `exp(z_i/T) / Σ_j exp(z_j/T)`.
pub fn softmax(z: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            frame: 0,
            message: "non-finite softmax activation".into(),
        });
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut e: Vec<f64> = z.iter().map(|v| ((v - max) / temperature).exp()).collect();
    let total: f64 = e.iter().sum();
    e.iter_mut().for_each(|v| *v /= total);
    Ok(e)
}

/// Draw an index from a probability vector.
pub fn sample_softmax<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // Rounding left u above the final cumulative sum.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

fn greedy_index(z: &[f64], accel: impl Fn(usize) -> f64) -> usize {
    let mut best = 0;
    for k in 1..z.len() {
        let better = z[k] > z[best]
            || (z[k] == z[best] && {
                let (a, b) = (accel(k), accel(best));
                a.abs() < b.abs() || (a.abs() == b.abs() && a < b)
            });
        if better {
            best = k;
        }
    }
    best
}
