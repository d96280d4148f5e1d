//! Online natural actor-critic with compatible features.
//!
//! Per transition `(f_t, choice, reward, f_next)`:
//!
//! ```text
//! δ  = reward + γ·V(f_next) − V(f_t)          V(f) = vᵀf + b
//! v += α_v·δ·e_v                               e_v = γλ·e_v + [f_t; 1]
//! ψ  = ∇_θ log π(choice | f_t)
//! w += α_w·(δ·e_w − (ψᵀw)·ψ)                   e_w = γλ·e_w + ψ
//! θ += α_θ·w                                   (natural gradient step)
//! ```
//!
//! `w` tracks the least-squares fit of the advantage by `ψᵀw`, which is
//! the natural policy gradient. The vanilla rule replaces the last line by
//! `θ += α_θ·δ·ψ`.

use crate::error::{Error, Result};
use crate::features::FeatureVector;

use super::{Choice, Policy};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActorRule {
    Natural,
    Vanilla,
}

impl ActorRule {
    pub fn name(self) -> &'static str {
        match self {
            ActorRule::Natural => "natural",
            ActorRule::Vanilla => "vanilla",
        }
    }

    pub fn parse(s: &str) -> Option<ActorRule> {
        match s {
            "natural" => Some(ActorRule::Natural),
            "vanilla" => Some(ActorRule::Vanilla),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NacParams {
    pub gamma: f64,
    pub lambda: f64,
    pub alpha_v: f64,
    pub alpha_w: f64,
    pub alpha_theta: f64,
    pub rule: ActorRule,
}

impl Default for NacParams {
    fn default() -> Self {
        NacParams {
            gamma: 0.3,
            lambda: 0.0,
            alpha_v: 1e-2,
            alpha_w: 5e-3,
            alpha_theta: 5e-3,
            rule: ActorRule::Natural,
        }
    }
}

impl NacParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("nac.gamma", "must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config("nac.lambda", "must lie in [0, 1]"));
        }
        for (key, v) in [
            ("nac.alpha_v", self.alpha_v),
            ("nac.alpha_w", self.alpha_w),
            ("nac.alpha_theta", self.alpha_theta),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(key, "must be a non-negative finite number"));
            }
        }
        if !(self.alpha_v >= self.alpha_w && self.alpha_w >= self.alpha_theta) {
            return Err(Error::config(
                "nac.alpha_theta",
                "step sizes must satisfy alpha_v >= alpha_w >= alpha_theta",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticState {
    pub params: NacParams,
    /// Value weights over features.
    pub v: Vec<f64>,
    pub v_bias: f64,
    /// Advantage weights over the policy's compatible features.
    pub w: Vec<f64>,
    pub trace_v: Vec<f64>,
    pub trace_v_bias: f64,
    pub trace_w: Vec<f64>,
}

impl CriticState {
    pub fn new(features: usize, policy_params: usize, params: NacParams) -> Self {
        CriticState {
            params,
            v: vec![0.0; features],
            v_bias: 0.0,
            w: vec![0.0; policy_params],
            trace_v: vec![0.0; features],
            trace_v_bias: 0.0,
            trace_w: vec![0.0; policy_params],
        }
    }

    pub fn value(&self, f: &FeatureVector) -> f64 {
        self.v.iter().zip(f.as_slice()).map(|(a, b)| a * b).sum::<f64>() + self.v_bias
    }
}

/// Diagnostics from one learning step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NacStep {
    pub td_error: f64,
}

/// Apply one actor-critic step in place. On a non-finite TD error nothing is
/// modified and a numeric error is returned.
pub fn nac_update(
    critic: &mut CriticState,
    policy: &mut Policy,
    f_t: &FeatureVector,
    choice: Choice,
    reward: f64,
    f_next: &FeatureVector,
) -> Result<NacStep> {
    let p = critic.params;
    let delta = reward + p.gamma * critic.value(f_next) - critic.value(f_t);
    if !delta.is_finite() {
        return Err(Error::Numeric {
            frame: 0,
            message: format!("non-finite TD error {delta}"),
        });
    }
    let psi = policy.grad_log(f_t, choice)?;
    if psi.len() != critic.w.len() {
        return Err(Error::Argument(format!(
            "critic holds {} advantage weights, policy has {} parameters",
            critic.w.len(),
            psi.len()
        )));
    }

    let decay = p.gamma * p.lambda;
    for ((e, v), x) in critic.trace_v.iter_mut().zip(critic.v.iter_mut()).zip(f_t.as_slice()) {
        *e = decay * *e + x;
        *v += p.alpha_v * delta * *e;
    }
    critic.trace_v_bias = decay * critic.trace_v_bias + 1.0;
    critic.v_bias += p.alpha_v * delta * critic.trace_v_bias;

    match p.rule {
        ActorRule::Natural => {
            let advantage: f64 = psi.iter().zip(&critic.w).map(|(a, b)| a * b).sum();
            for ((e, w), g) in critic.trace_w.iter_mut().zip(critic.w.iter_mut()).zip(&psi) {
                *e = decay * *e + g;
                *w += p.alpha_w * (delta * *e - advantage * g);
            }
            for (theta, w) in policy.params_mut().iter_mut().zip(&critic.w) {
                *theta += p.alpha_theta * w;
            }
        }
        ActorRule::Vanilla => {
            for (theta, g) in policy.params_mut().iter_mut().zip(&psi) {
                *theta += p.alpha_theta * delta * g;
            }
        }
    }
    Ok(NacStep { td_error: delta })
}
