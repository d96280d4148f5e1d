//! Joint learning of a sparse spatio-temporal code for visual motion and a
//! smooth-pursuit eye controller, both driven by the same signal: how well
//! the current dictionary reconstructs what the eye sees.
//!
//! Pipeline per frame: [`imagery`] textures are viewed through a moving
//! fovea by the [`environment`]; [`sparsecode`] codes two-frame patches by
//! matching pursuit; [`features`] pools squared coefficients into
//! complex-cell responses; [`policy`] picks an eye acceleration and learns
//! by natural actor-critic from the negative reconstruction error. The
//! [`trainer`] runs the loop and [`analysis`] reproduces the evaluation
//! battery on saved [`checkpoint`]s.

pub mod analysis;
pub mod checkpoint;
pub mod config;
pub mod environment;
pub mod error;
pub mod features;
pub mod imagery;
pub mod policy;
pub mod rng;
pub mod sparsecode;
pub mod trainer;

pub use error::{Error, Result};
