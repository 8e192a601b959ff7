//! Closed-loop scenario runner: ground-truth terrain, simulated perception
//! frames with pipeline latency, replanning into the step buffer, the gait
//! generator and the stabilizer, with per-tick telemetry.

mod perception;
mod run;
mod scenario;
mod telemetry;
mod world;

pub use perception::{perceive, track_segment};
pub use run::{
    run, FailureReason, FiredDisturbance, PlanKind, PlanRecord, ReplanEvent, ReplanKind, RunOutput, RunReport,
    TouchdownRecord, VibrationSummary,
};
pub use scenario::{Disturbance, LatencyModel, Scenario, SimParams, StartStance, Trigger, WalkParams, SCHEMA_VERSION};
pub use telemetry::{read_telemetry, write_telemetry, TelemetryRow, TELEMETRY_COLUMNS};
pub use world::{apply_disturbance, check_touchdown, DisturbanceEvent, World};

use thiserror::Error;

use crate::pattern::PatternError;
use crate::stabilization::StabilizationError;
use crate::terrain::TerrainError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario parse error at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("io: {0}")]
    Io(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("disturbance references unknown stone {0}")]
    InvalidEvent(u32),
    #[error(transparent)]
    Terrain(#[from] TerrainError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Stabilization(#[from] StabilizationError),
}
