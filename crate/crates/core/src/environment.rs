//! Planar target/eye dynamics in pixel and frame units.
//!
//! A textured target translates at a constant velocity for one episode
//! (10 frames), then a new texture and velocity are drawn. The eye changes
//! its velocity by the chosen acceleration each frame. The retina sees the
//! texture through a window at the eye position expressed in texture
//! coordinates, so image content moves by the retinal slip
//! `target.velocity - eye.velocity` each frame.

use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imagery::{sample_window, Corpus, FramePair};
use crate::rng::{stream_rng, RngState, Stream};

pub const PX_PER_DEG: f64 = 5.0;
pub const FRAMES_PER_S: f64 = 30.0;

/// Convert deg/s to px/frame.
pub fn deg_per_s_to_px_per_frame(v: f64) -> f64 {
    v * PX_PER_DEG / FRAMES_PER_S
}

/// Convert deg/s² to px/frame².
pub fn deg_per_s2_to_px_per_frame2(a: f64) -> f64 {
    a * PX_PER_DEG / (FRAMES_PER_S * FRAMES_PER_S)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    /// Clip each component to `[-bound, bound]`.
    pub fn clip(self, bound: f64) -> Vec2 {
        Vec2::new(self.x.clamp(-bound, bound), self.y.clamp(-bound, bound))
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvParams {
    /// Frames per episode before texture and target velocity are redrawn.
    pub episode_frames: u32,
    /// Per-axis speed bound for target and eye, px/frame (24 deg/s).
    pub max_speed: f64,
    /// Per-axis acceleration bound, px/frame² (900 deg/s²).
    pub max_accel: f64,
}

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams {
            episode_frames: 10,
            max_speed: 4.0,
            max_accel: 5.0,
        }
    }
}

impl EnvParams {
    pub fn validate(&self) -> Result<()> {
        if self.episode_frames == 0 {
            return Err(Error::config("env.episode_frames", "must be at least 1"));
        }
        if !(self.max_speed > 0.0 && self.max_speed.is_finite()) {
            return Err(Error::config("env.max_speed", "must be positive"));
        }
        if !(self.max_accel > 0.0 && self.max_accel.is_finite()) {
            return Err(Error::config("env.max_accel", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetState {
    pub texture_id: usize,
    pub velocity: Vec2,
    /// Frames elapsed in the current episode.
    pub phase: u32,
    pub position: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EyeState {
    pub velocity: Vec2,
    pub position: Vec2,
}

/// Eye acceleration command, px/frame².
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Action {
    pub accel: Vec2,
}

impl Action {
    pub fn new(ax: f64, ay: f64) -> Self {
        Action {
            accel: Vec2::new(ax, ay),
        }
    }
}

/// The action that cancels retinal slip in one frame, within the acceleration bound.
pub fn ideal_action(slip: Vec2, max_accel: f64) -> Action {
    Action {
        accel: slip.clip(max_accel),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub target: TargetState,
    pub eye: EyeState,
    pub frame_index: u64,
    pub params: EnvParams,
    rng: ChaCha8Rng,
}

impl EnvState {
    /// Initial state: random texture and target velocity, stationary eye,
    /// gaze at the texture center.
    pub fn reset(seed: u64, corpus: &Corpus, params: EnvParams) -> Result<EnvState> {
        params.validate()?;
        if corpus.is_empty() {
            return Err(Error::config("corpus", "training corpus is empty"));
        }
        let mut rng = stream_rng(seed, Stream::Environment);
        let texture_id = rng.random_range(0..corpus.len());
        let velocity = draw_velocity(&mut rng, params.max_speed);
        let tex = corpus.get(texture_id);
        Ok(EnvState {
            target: TargetState {
                texture_id,
                velocity,
                phase: 0,
                position: Vec2::new(-(tex.width() as f64) / 2.0, -(tex.height() as f64) / 2.0),
            },
            eye: EyeState {
                velocity: Vec2::ZERO,
                position: Vec2::ZERO,
            },
            frame_index: 0,
            params,
            rng,
        })
    }

    pub fn slip(&self) -> Vec2 {
        self.target.velocity - self.eye.velocity
    }

    /// Gaze point in texture coordinates.
    pub fn gaze(&self) -> Vec2 {
        self.eye.position - self.target.position
    }

    /// Advance one frame under `action` and render the resulting frame pair.
    ///
    /// Order: episode redraw, eye velocity update, position advance, render.
    pub fn step(&mut self, corpus: &Corpus, action: Action) -> FramePair {
        if self.target.phase + 1 >= self.params.episode_frames {
            self.redraw_episode(corpus);
        } else {
            self.target.phase += 1;
        }
        let accel = action.accel.clip(self.params.max_accel);
        self.eye.velocity = (self.eye.velocity + accel).clip(self.params.max_speed);
        self.target.position = self.target.position + self.target.velocity;
        self.eye.position = self.eye.position + self.eye.velocity;
        self.wrap_positions(corpus);
        self.frame_index += 1;
        self.render(corpus)
    }

    /// Frames for the transition that ended at the current state.
    pub fn render(&self, corpus: &Corpus) -> FramePair {
        let tex = corpus.get(self.target.texture_id);
        let current = self.gaze();
        let previous = current + self.slip();
        FramePair {
            previous: sample_window(tex, previous.x, previous.y, self.frame_index.saturating_sub(1)),
            current: sample_window(tex, current.x, current.y, self.frame_index),
        }
    }

    pub fn rng_state(&self) -> RngState {
        RngState::capture(&self.rng)
    }

    pub fn restore(
        target: TargetState,
        eye: EyeState,
        frame_index: u64,
        params: EnvParams,
        rng: RngState,
    ) -> EnvState {
        EnvState {
            target,
            eye,
            frame_index,
            params,
            rng: rng.restore(),
        }
    }

    fn redraw_episode(&mut self, corpus: &Corpus) {
        let texture_id = self.rng.random_range(0..corpus.len());
        let velocity = draw_velocity(&mut self.rng, self.params.max_speed);
        let tex = corpus.get(texture_id);
        let offset = Vec2::new(
            self.rng.random_range(0.0..tex.width() as f64),
            self.rng.random_range(0.0..tex.height() as f64),
        );
        self.target = TargetState {
            texture_id,
            velocity,
            phase: 0,
            position: self.eye.position - offset,
        };
    }

    fn wrap_positions(&mut self, corpus: &Corpus) {
        let tex = corpus.get(self.target.texture_id);
        let (w, h) = (tex.width() as f64, tex.height() as f64);
        let wrap = |p: Vec2| Vec2::new(p.x.rem_euclid(w), p.y.rem_euclid(h));
        self.eye.position = wrap(self.eye.position);
        self.target.position = wrap(self.target.position);
    }
}

fn draw_velocity(rng: &mut ChaCha8Rng, bound: f64) -> Vec2 {
    Vec2::new(rng.random_range(-bound..=bound), rng.random_range(-bound..=bound))
}
