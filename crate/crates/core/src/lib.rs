//! Perception-to-gait pipeline for a biped walking over stepping stones.
//!
//! - [`terrain`]: point cloud to steppable 2.5D grid
//! - [`planner`]: sampling-based footstep planning on that grid
//! - [`pattern`]: step data buffer, ZMP reference, preview control, swing trajectories
//! - [`stabilization`]: compliant-model ZMP stabilizer
//! - [`sim`]: closed-loop scenario runner

pub mod geometry;
pub mod pattern;
pub mod planner;
pub mod sim;
pub mod stabilization;
pub mod terrain;
