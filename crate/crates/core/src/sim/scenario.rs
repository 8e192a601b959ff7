use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::Side;
use crate::pattern::GaitConfig;
use crate::planner::PlannerConfig;
use crate::stabilization::StabilizerConfig;
use crate::terrain::{MappingConfig, TerrainBox};

pub const SCHEMA_VERSION: u32 = 1;

/// Declarative description of one experiment: terrain, start stance,
/// walking parameters, scripted stone displacements and every module
/// configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub terrain: Vec<TerrainBox>,
    pub start: StartStance,
    /// The walk ends with the first touchdown at or beyond this x.
    pub goal_x: f64,
    pub walk: WalkParams,
    #[serde(default)]
    pub disturbances: Vec<Disturbance>,
    #[serde(default)]
    pub latency: LatencyModel,
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub replan_enabled: bool,
    #[serde(default)]
    pub mapping: MappingConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub gait: GaitConfig,
    #[serde(default)]
    pub stabilizer: StabilizerConfig,
    #[serde(default)]
    pub sim: SimParams,
}

fn default_noise() -> f64 {
    0.002
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartStance {
    pub left: [f64; 2],
    pub right: [f64; 2],
    #[serde(default = "default_first_swing")]
    pub first_swing: Side,
}

fn default_first_swing() -> Side {
    Side::Right
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkParams {
    /// Preferred forward advance per step (m); centers the planner's
    /// forward sampling.
    pub stride: f64,
    pub step_time: f64,
    #[serde(default = "default_dsp")]
    pub dsp_fraction: f64,
    /// Speed the run is expected to reach (m/s); reported, not enforced.
    pub speed_target: f64,
}

fn default_dsp() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Trigger {
    /// At simulated time `t`.
    Time(f64),
    /// When the swing toward `target_stone` passes `phase` (0..1) of its
    /// single-support time.
    SwingPhase { phase: f64, target_stone: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub trigger: Trigger,
    pub stone: u32,
    pub displacement: [f64; 2],
}

/// Stage durations of the perception-to-buffer pipeline (s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatencyModel {
    pub depth_acquire: f64,
    pub mapping: f64,
    pub planning: f64,
    pub comm: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            depth_acquire: 0.033,
            mapping: 0.067,
            planning: 0.005,
            comm: 0.010,
        }
    }
}

impl LatencyModel {
    /// Latency with every stage run back to back.
    pub fn serial_total(&self) -> f64 {
        self.depth_acquire + self.mapping + self.planning + self.comm
    }

    /// Delay from frame capture until the planner starts.
    pub fn until_planning(&self) -> f64 {
        self.depth_acquire + self.mapping
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimParams {
    pub max_time: f64,
    /// Frame rate of the perception pipeline (Hz).
    pub perception_rate_hz: f64,
    /// Synthetic cloud density in points per downsample voxel (per axis).
    pub points_per_voxel: f64,
    /// The region of interest starts this far behind the support foot.
    pub roi_back_offset: f64,
    pub sensor_height: f64,
    /// Rings of border cells removed from each perceived steppable region.
    pub edge_erosion_cells: usize,
    /// Standing time after the final touchdown before the run ends.
    pub settle_time: f64,
    /// A terrain top counts as support for a foot within this height (m).
    pub touchdown_height_tol: f64,
    pub zmp_margin: f64,
    pub zmp_violation_time: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            max_time: 40.0,
            perception_rate_hz: 15.0,
            points_per_voxel: 1.5,
            roi_back_offset: 0.2,
            sensor_height: 1.2,
            edge_erosion_cells: 1,
            settle_time: 1.0,
            touchdown_height_tol: 0.02,
            zmp_margin: 0.01,
            zmp_violation_time: 0.05,
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| SimError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn stone(&self, id: u32) -> Option<&TerrainBox> {
        self.terrain.iter().find(|b| b.id == id)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.terrain.is_empty() {
            return bad("terrain is empty".into());
        }
        for (i, b) in self.terrain.iter().enumerate() {
            if !(b.size[0] > 0.0 && b.size[1] > 0.0) {
                return bad(format!("terrain[{i}] has a non-positive size"));
            }
            if self.terrain[..i].iter().any(|o| o.id == b.id) {
                return bad(format!("duplicate terrain id {}", b.id));
            }
        }
        let w = &self.walk;
        if !(w.stride > 0.0 && w.step_time > 0.0 && w.speed_target > 0.0) {
            return bad("walk.stride, walk.step_time and walk.speed_target must be > 0".into());
        }
        if !(0.0..0.5).contains(&w.dsp_fraction) {
            return bad("walk.dsp_fraction must lie in [0, 0.5)".into());
        }
        for (i, d) in self.disturbances.iter().enumerate() {
            if self.stone(d.stone).is_none() {
                return bad(format!("disturbances[{i}] references unknown stone {}", d.stone));
            }
            match d.trigger {
                Trigger::Time(t) if !(t >= 0.0) => return bad(format!("disturbances[{i}] time must be >= 0")),
                Trigger::SwingPhase { phase, target_stone } => {
                    if !(0.0..=1.0).contains(&phase) {
                        return bad(format!("disturbances[{i}] phase must lie in [0, 1]"));
                    }
                    if self.stone(target_stone).is_none() {
                        return bad(format!("disturbances[{i}] references unknown stone {target_stone}"));
                    }
                }
                _ => {}
            }
        }
        let l = &self.latency;
        if [l.depth_acquire, l.mapping, l.planning, l.comm]
            .iter()
            .any(|v| !(*v >= 0.0))
        {
            return bad("latency stages must be >= 0".into());
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be >= 0".into());
        }
        let p = &self.sim;
        if !(p.max_time > 0.0 && p.perception_rate_hz > 0.0 && p.points_per_voxel > 0.0) {
            return bad("sim.max_time, sim.perception_rate_hz and sim.points_per_voxel must be > 0".into());
        }
        self.mapping
            .validate()
            .map_err(|e| SimError::InvalidScenario(format!("mapping: {e}")))?;
        self.planner
            .validate()
            .map_err(|e| SimError::InvalidScenario(format!("planner: {e}")))?;
        self.gait
            .lipm
            .validate()
            .map_err(|e| SimError::InvalidScenario(format!("gait: {e}")))?;
        Ok(())
    }
}
