use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Footstep, PlanOutcome, PlannerConfig};
use crate::geometry::Side;
use crate::terrain::SteppableGrid;

/// `{"grid": {...} | "grid_path": "...", "q_init": {...}, "config": {...}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<SteppableGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_path: Option<PathBuf>,
    pub q_init: Footstep,
    #[serde(default)]
    pub config: PlannerConfig,
}

impl PlanRequest {
    /// Inline grid, or the grid file named by `grid_path` (relative paths
    /// resolve against `base_dir`).
    pub fn load_grid(&self, base_dir: &Path) -> Result<SteppableGrid, String> {
        match (&self.grid, &self.grid_path) {
            (Some(g), None) => Ok(g.clone()),
            (None, Some(p)) => {
                let path = if p.is_absolute() { p.clone() } else { base_dir.join(p) };
                let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                let de = &mut serde_json::Deserializer::from_str(&text);
                serde_path_to_error::deserialize(de).map_err(|e| format!("{}: {e}", path.display()))
            }
            (Some(_), Some(_)) => Err("give either `grid` or `grid_path`, not both".into()),
            (None, None) => Err("missing `grid` or `grid_path`".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub side: Side,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

impl From<&Footstep> for StepRecord {
    fn from(s: &Footstep) -> Self {
        Self {
            side: s.side,
            x: s.x,
            y: s.y,
            z: s.z,
            yaw: s.yaw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResponse {
    pub steps: Vec<StepRecord>,
    pub score: f64,
    pub length: usize,
    pub iterations: usize,
    pub elapsed_us: u64,
}

impl From<&PlanOutcome> for PlanResponse {
    fn from(o: &PlanOutcome) -> Self {
        Self {
            steps: o.path.steps.iter().map(StepRecord::from).collect(),
            score: o.path.score,
            length: o.path.steps.len(),
            iterations: o.iterations,
            elapsed_us: o.elapsed.as_micros() as u64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{plan, two_stone_fixture};

    #[test]
    fn request_round_trip_and_plan() {
        let f = two_stone_fixture();
        let req = PlanRequest {
            grid: Some(f.grid.clone()),
            grid_path: None,
            q_init: f.q_init,
            config: f.config.clone(),
        };
        let text = serde_json::to_string(&req).unwrap();
        let back: PlanRequest = serde_json::from_str(&text).unwrap();
        let grid = back.load_grid(Path::new(".")).unwrap();
        assert_eq!(grid, f.grid);
        let out = plan(&grid, &back.q_init, &back.config).unwrap();
        let resp = PlanResponse::from(&out);
        assert_eq!(resp.length, 2);
        assert_eq!(resp.steps[0].side, Side::Right);
    }

    #[test]
    fn minimal_request_uses_defaults() {
        let text = r#"{"grid_path": "g.json", "q_init": {"side": "left", "x": 0.0, "y": 0.1}}"#;
        let req: PlanRequest = serde_json::from_str(text).unwrap();
        assert_eq!(req.config, PlannerConfig::default());
        assert!(req.load_grid(Path::new("/nonexistent")).is_err());
    }
}
