//! Desk-scale end-to-end curved text spotter built around a differentiable
//! rectification operator, so recognition loss can flow back into detection.

pub mod config;
pub mod geometry;
pub mod nn;
pub mod rectify;
pub mod spotter;
pub mod synth;
pub mod targets;
pub mod verify;
