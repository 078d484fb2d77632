//! Core data model and algorithms for controllable co-speech gesture
//! generation: skeleton and motion representations, style statistics,
//! control tracks, speech features, keyframe interpolation, the unit
//! gesture library, evaluation metrics and long-form synthesis.

pub mod controls;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod keyframe;
pub mod metrics;
pub mod motionlib;
pub mod skeleton;
pub mod speech;
pub mod stylestats;
pub mod synthesis;

pub use error::{Error, Result};
