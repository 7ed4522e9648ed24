//! Skeletal motion lifting, regularization and space-time retargeting.
//!
//! The pipeline has three stages, all built on the same 24-joint parametric
//! skeleton and one nonlinear least-squares engine with forward-mode
//! automatic differentiation:
//!
//! 1. [`estimate`] lifts per-frame 2D pose estimates into a consistent world
//!    frame under a pinhole camera, freezing one averaged body shape.
//! 2. [`smoothing`] refits joint angles to temporally filtered joint targets,
//!    removing frame-to-frame jitter while preserving end-effector motion.
//! 3. [`retarget`] transfers the motion to a differently proportioned
//!    skeleton over sliding temporal windows, preserving frame-to-frame
//!    displacement style and honoring per-frame spatial constraints.

pub mod error;
pub mod estimate;
pub mod io;
pub mod kinematics;
pub mod math;
pub mod metrics;
pub mod retarget;
pub mod smoothing;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
