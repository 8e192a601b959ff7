//! Walking pattern generation: a step data buffer (SDB) of timed
//! footsteps, the ZMP reference derived from it, preview control of the
//! cart-table model and swing-foot trajectories. The reference is rebuilt
//! from the buffer on every control tick, so edits to the buffer take effect
//! on the next tick without resetting the CoM state.

mod gait;
mod preview;
mod sdb;
mod swing;
mod zmp;

pub use gait::{GaitConfig, GaitGenerator, SupportPhase, TickOutput};
pub use preview::{preview_gains, solve_dare, tick_com, ComState, LipmParams, PreviewGains, PreviewWeights};
pub use sdb::{update_sdb, StepData, StepDataBuffer, StepState, StepTiming};
pub use swing::{retarget_swing, swing_trajectory, Quintic, SwingState, SwingTrajectory};
pub use zmp::{zmp_reference, ZmpKeyframes, ZmpWindow};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PatternError {
    #[error("{available} future steps in the buffer, at least 2 are needed")]
    InsufficientSteps { available: usize },
    #[error("stale buffer revision {found}, current is {expected}")]
    RevisionConflict { expected: u64, found: u64 },
    #[error("landing target moved {displacement:.3} m, limit is {limit} m")]
    ReplanOutOfRange { displacement: f64, limit: f64 },
    #[error("new steps do not alternate with the buffer")]
    SideMismatch,
    #[error("only {remaining:.3} s of swing left, too late to retarget")]
    RetargetTooLate { remaining: f64 },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}
