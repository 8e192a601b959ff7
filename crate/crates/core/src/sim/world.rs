use super::SimError;
use crate::geometry::{clip_to_aabb, polygon_area, Aabb};
use crate::planner::Footstep;
use crate::terrain::TerrainBox;

/// Ground-truth terrain.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub boxes: Vec<TerrainBox>,
}

/// Translate one stone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbanceEvent {
    pub stone: u32,
    pub displacement: [f64; 2],
}

impl World {
    pub fn new(boxes: Vec<TerrainBox>) -> Self {
        Self { boxes }
    }

    pub fn stone(&self, id: u32) -> Option<&TerrainBox> {
        self.boxes.iter().find(|b| b.id == id)
    }

    /// Highest terrain top under `(x, y)`.
    pub fn height_at(&self, x: f64, y: f64) -> Option<f64> {
        self.boxes
            .iter()
            .filter(|b| b.aabb().contains([x, y]))
            .map(|b| b.top)
            .fold(None, |acc, h| Some(acc.map_or(h, |a: f64| a.max(h))))
    }

    /// Boxes cut to `area`; pieces outside it are dropped.
    pub fn clipped(&self, area: &Aabb) -> Vec<TerrainBox> {
        self.boxes
            .iter()
            .filter_map(|b| {
                let a = b.aabb();
                let min = [a.min[0].max(area.min[0]), a.min[1].max(area.min[1])];
                let max = [a.max[0].min(area.max[0]), a.max[1].min(area.max[1])];
                (max[0] > min[0] && max[1] > min[1]).then(|| TerrainBox {
                    id: b.id,
                    center: [0.5 * (min[0] + max[0]), 0.5 * (min[1] + max[1])],
                    size: [max[0] - min[0], max[1] - min[1]],
                    top: b.top,
                })
            })
            .collect()
    }
}

pub fn apply_disturbance(world: &World, event: &DisturbanceEvent) -> Result<World, SimError> {
    let mut next = world.clone();
    let stone = next
        .boxes
        .iter_mut()
        .find(|b| b.id == event.stone)
        .ok_or(SimError::InvalidEvent(event.stone))?;
    stone.center[0] += event.displacement[0];
    stone.center[1] += event.displacement[1];
    Ok(next)
}

/// Fraction of the footprint over true terrain whose top is within
/// `height_tol` of the foot height.
pub fn check_touchdown(step: &Footstep, truth: &[TerrainBox], height_tol: f64) -> f64 {
    let sole = step.corners();
    let total = step.footprint.area();
    let covered: f64 = truth
        .iter()
        .filter(|b| (b.top - step.z).abs() <= height_tol)
        .map(|b| polygon_area(&clip_to_aabb(&sole, &b.aabb())))
        .sum();
    (covered / total).clamp(0.0, 1.0)
}
