//! Terrain mapping: point cloud → planes → steppable 2.5D grid.
//!
//! The map is rebuilt from scratch for every frame; nothing is carried between
//! calls. All randomness (cloud synthesis, RANSAC sampling) is driven by
//! explicit seeds so a frame can be replayed bit for bit.

mod cloud;
mod grid;
mod ransac;

pub use cloud::{crop_and_downsample, generate_synthetic_cloud, transform_to_base};
pub use grid::{build_steppable_grid, Cell, GridSegment, SteppableGrid};
pub use ransac::segment_planes;

use nalgebra::{Isometry3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, Vec2};

pub type Point = Vector3<f64>;
pub type RigidTransform = Isometry3<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum TerrainError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("scene contains no terrain boxes")]
    EmptyScene,
    #[error("sensor pose is not finite")]
    InvalidPose,
    #[error("cloud is in the {found:?} frame, expected {expected:?}")]
    WrongFrame { expected: Frame, found: Frame },
    #[error("invalid mapping configuration: {0}")]
    InvalidConfig(String),
    #[error("grid serialization: {0}")]
    Serialization(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Sensor,
    Base,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
    pub frame: Frame,
}

impl PointCloud {
    pub fn new(points: Vec<Point>, frame: Frame) -> Self {
        Self { points, frame }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Re-express base-frame points in the frame of a sensor mounted at
    /// `sensor_pose` (the inverse of [`transform_to_base`]).
    pub fn into_sensor_frame(mut self, sensor_pose: &RigidTransform) -> Self {
        let inv = sensor_pose.inverse();
        for p in &mut self.points {
            *p = inv.transform_point(&(*p).into()).coords;
        }
        self.frame = Frame::Sensor;
        self
    }
}

/// A segmented plane `normal · p = offset` with the indices of its inliers in
/// the cloud it was extracted from.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
    pub inliers: Vec<usize>,
    pub mean_height: f64,
}

impl Plane {
    pub fn distance(&self, p: &Point) -> f64 {
        (self.normal.dot(p) - self.offset).abs()
    }

    /// Height of the plane above (x, y).
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        (self.offset - self.normal.x * x - self.normal.y * y) / self.normal.z
    }

    pub fn tilt_deg(&self) -> f64 {
        self.normal.z.abs().clamp(0.0, 1.0).acos().to_degrees()
    }
}

/// Horizontal crop box. `origin` is the rear-center point of the box in the
/// base frame; the box extends `length` forward (+x) and `width / 2` to
/// each side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionOfInterest {
    pub width: f64,
    pub length: f64,
    pub origin: Vec2,
    #[serde(default = "default_z_range")]
    pub z_range: [f64; 2],
}

fn default_z_range() -> [f64; 2] {
    [-1.0, 1.5]
}

impl Default for RegionOfInterest {
    fn default() -> Self {
        Self {
            width: 1.0,
            length: 2.0,
            origin: [0.0, 0.0],
            z_range: default_z_range(),
        }
    }
}

impl RegionOfInterest {
    pub fn footprint(&self) -> Aabb {
        Aabb {
            min: [self.origin[0], self.origin[1] - 0.5 * self.width],
            max: [self.origin[0] + self.length, self.origin[1] + 0.5 * self.width],
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        let fp = self.footprint();
        p.x >= fp.min[0]
            && p.x < fp.max[0]
            && p.y >= fp.min[1]
            && p.y < fp.max[1]
            && p.z >= self.z_range[0]
            && p.z <= self.z_range[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MappingConfig {
    pub roi: RegionOfInterest,
    pub voxel_downsample: f64,
    pub ransac_dist_threshold: f64,
    pub ransac_max_planes: usize,
    pub ransac_min_inliers: usize,
    pub ransac_iterations: usize,
    pub max_tilt_deg: f64,
    pub resolution: f64,
    pub min_points_per_cell: usize,
    pub seed: u64,
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self::with_resolution(0.01)
    }
}

impl MappingConfig {
    /// Defaults for a given grid resolution. The downsample voxel is a third
    /// of a cell so a fully covered cell keeps enough representatives to
    /// pass the per-cell point threshold.
    pub fn with_resolution(resolution: f64) -> Self {
        Self {
            roi: RegionOfInterest::default(),
            voxel_downsample: resolution / 3.0,
            ransac_dist_threshold: 0.01,
            ransac_max_planes: 8,
            ransac_min_inliers: 200,
            ransac_iterations: 300,
            max_tilt_deg: 15.0,
            resolution,
            min_points_per_cell: 3,
            seed: 0,
        }
    }

    /// Fine grid with a narrowed region of interest, used on narrow paths.
    pub fn narrow_path() -> Self {
        let mut cfg = Self::with_resolution(0.005);
        cfg.roi.width = 0.5;
        cfg.roi.length = 1.4;
        cfg
    }

    pub fn validate(&self) -> Result<(), TerrainError> {
        let positive = [
            ("roi.width", self.roi.width),
            ("roi.length", self.roi.length),
            ("voxel_downsample", self.voxel_downsample),
            ("ransac_dist_threshold", self.ransac_dist_threshold),
            ("resolution", self.resolution),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(TerrainError::InvalidConfig(format!("{name} must be > 0")));
            }
        }
        if !(self.max_tilt_deg > 0.0 && self.max_tilt_deg < 90.0) {
            return Err(TerrainError::InvalidConfig("max_tilt_deg must lie in (0, 90)".into()));
        }
        if self.ransac_min_inliers < 3 || self.ransac_iterations == 0 || self.min_points_per_cell == 0 {
            return Err(TerrainError::InvalidConfig(
                "ransac_min_inliers >= 3, ransac_iterations > 0, min_points_per_cell > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Top face of a rectangular terrain piece (stepping stone, platform, beam).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainBox {
    pub id: u32,
    pub center: Vec2,
    pub size: Vec2,
    pub top: f64,
}

impl TerrainBox {
    pub fn aabb(&self) -> Aabb {
        Aabb::from_center_size(self.center, self.size)
    }
}

/// Full per-frame mapping pipeline on a sensor-frame cloud.
pub fn map_cloud(
    cloud: PointCloud,
    sensor_pose: &RigidTransform,
    cfg: &MappingConfig,
) -> Result<SteppableGrid, TerrainError> {
    let base = transform_to_base(cloud, sensor_pose)?;
    let cropped = crop_and_downsample(&base, cfg);
    let planes = if cropped.is_empty() {
        Vec::new()
    } else {
        segment_planes(&cropped, cfg)?
    };
    Ok(build_steppable_grid(&planes, &cropped, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        MappingConfig::default().validate().unwrap();
        MappingConfig::narrow_path().validate().unwrap();
    }

    #[test]
    fn rejects_bad_tilt() {
        let mut cfg = MappingConfig::default();
        cfg.max_tilt_deg = 90.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn roi_box_bounds() {
        let roi = RegionOfInterest {
            width: 1.0,
            length: 2.0,
            origin: [0.5, 0.0],
            z_range: [-1.0, 1.0],
        };
        assert!(roi.contains(&Point::new(0.5, -0.5, 0.0)));
        assert!(!roi.contains(&Point::new(2.5, 0.0, 0.0)));
        assert!(!roi.contains(&Point::new(1.0, 0.0, 1.2)));
    }
}
