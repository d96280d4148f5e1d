//! Actor parameterizations and the natural actor-critic learner.
//!
//! Two heads are available: a pair of linear softmax networks over a
//! discrete acceleration grid, and a small tanh MLP driving fixed-variance
//! Gaussians. Both expose the same sampling, greedy, and score-function
//! interface so the learner is head-agnostic.

mod gaussian;
mod nac;
mod softmax;

pub use gaussian::{sample_gaussian, Forward, GaussianPolicy};
pub use nac::{nac_update, ActorRule, CriticState, NacParams, NacStep};
pub use softmax::{sample_softmax, softmax, SoftmaxPolicy};

use rand::Rng;

use crate::environment::Action;
use crate::error::Result;
use crate::features::FeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Pan,
    Tilt,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::Pan, Axis::Tilt];

    pub fn index(self) -> usize {
        match self {
            Axis::Pan => 0,
            Axis::Tilt => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Softmax,
    Gaussian,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Softmax => "softmax",
            HeadKind::Gaussian => "gaussian",
        }
    }

    pub fn parse(s: &str) -> Option<HeadKind> {
        match s {
            "softmax" => Some(HeadKind::Softmax),
            "gaussian" => Some(HeadKind::Gaussian),
            _ => None,
        }
    }
}

/// What the actor drew: action indices, or the raw pre-clip Gaussian sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Choice {
    Discrete([usize; 2]),
    Continuous([f64; 2]),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Softmax(SoftmaxPolicy),
    Gaussian(GaussianPolicy),
}

impl Policy {
    pub fn kind(&self) -> HeadKind {
        match self {
            Policy::Softmax(_) => HeadKind::Softmax,
            Policy::Gaussian(_) => HeadKind::Gaussian,
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Policy::Softmax(p) => p.params(),
            Policy::Gaussian(p) => p.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Policy::Softmax(p) => p.params_mut(),
            Policy::Gaussian(p) => p.params_mut(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().len()
    }

    pub fn max_accel(&self) -> f64 {
        match self {
            Policy::Softmax(p) => p.max_accel,
            Policy::Gaussian(p) => p.max_accel,
        }
    }

    /// Fill every parameter uniformly from `[-scale, scale]`.
    pub fn randomize<R: Rng + ?Sized>(&mut self, scale: f64, rng: &mut R) {
        for v in self.params_mut() {
            *v = if scale > 0.0 { rng.random_range(-scale..=scale) } else { 0.0 };
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, f: &FeatureVector, rng: &mut R) -> Result<Choice> {
        match self {
            Policy::Softmax(p) => {
                let pan = sample_softmax(&p.probs(f, Axis::Pan)?, rng);
                let tilt = sample_softmax(&p.probs(f, Axis::Tilt)?, rng);
                Ok(Choice::Discrete([pan, tilt]))
            }
            Policy::Gaussian(p) => {
                let mean = p.forward(f)?.mean;
                Ok(Choice::Continuous(sample_gaussian(mean, p.sigma, rng)))
            }
        }
    }

    /// The acceleration a choice commands, clipped to the action bound.
    pub fn action_of(&self, choice: Choice) -> Action {
        let bound = self.max_accel();
        match (self, choice) {
            (Policy::Softmax(p), Choice::Discrete([i, j])) => Action::new(p.accel_of(i), p.accel_of(j)),
            (_, Choice::Continuous([x, y])) => Action::new(x.clamp(-bound, bound), y.clamp(-bound, bound)),
            (Policy::Gaussian(_), Choice::Discrete(_)) => {
                panic!("discrete choice passed to a Gaussian policy")
            }
        }
    }

    /// Maximum-likelihood action: argmax command per axis, or the clipped mean.
    pub fn greedy(&self, f: &FeatureVector) -> Result<Action> {
        match self {
            Policy::Softmax(p) => {
                let [i, j] = p.greedy_indices(f)?;
                Ok(Action::new(p.accel_of(i), p.accel_of(j)))
            }
            Policy::Gaussian(p) => {
                let m = p.forward(f)?.mean;
                Ok(self.action_of(Choice::Continuous(m)))
            }
        }
    }

    /// Score function `∇_θ log π(choice | f)` over all parameters.
    pub fn grad_log(&self, f: &FeatureVector, choice: Choice) -> Result<Vec<f64>> {
        match (self, choice) {
            (Policy::Softmax(p), Choice::Discrete(c)) => p.grad_log(f, c),
            (Policy::Gaussian(p), Choice::Continuous(a)) => p.grad_log(f, a),
            _ => Err(crate::error::Error::Argument(
                "choice does not match the policy head".into(),
            )),
        }
    }

    /// Log-likelihood of a choice (Gaussian: up to a constant).
    pub fn log_prob(&self, f: &FeatureVector, choice: Choice) -> Result<f64> {
        match (self, choice) {
            (Policy::Softmax(p), Choice::Discrete(c)) => p.log_prob(f, c),
            (Policy::Gaussian(p), Choice::Continuous(a)) => p.log_density(f, a),
            _ => Err(crate::error::Error::Argument(
                "choice does not match the policy head".into(),
            )),
        }
    }
}
