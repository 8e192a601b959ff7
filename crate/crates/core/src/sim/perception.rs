use nalgebra::{Isometry3, Translation3, UnitQuaternion};

use super::{Scenario, SimError, World};
use crate::geometry::Vec2;
use crate::terrain::{generate_synthetic_cloud, map_cloud, SteppableGrid};

/// Camera pitch below the horizon (rad); only affects the sensor-frame
/// round trip of the cloud.
const SENSOR_PITCH: f64 = 0.6;

/// Independent random streams derived from the scenario seed.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Stream {
    Cloud = 1,
    Ransac = 2,
    Planner = 3,
}

/// splitmix64 of `(seed, stream, index)`.
pub(crate) fn stream_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add((stream as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE5_E9B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One perception frame: synthesize the cloud the camera would see from
/// `anchor` (the support foot), run the mapping pipeline on it and erode
/// the result. The region of interest is snapped to the grid lattice so
/// cells line up between frames.
pub fn perceive(world: &World, scenario: &Scenario, anchor: Vec2, frame: u64) -> Result<SteppableGrid, SimError> {
    let mut cfg = scenario.mapping.clone();
    let res = cfg.resolution;
    cfg.roi.origin = [
        ((anchor[0] - scenario.sim.roi_back_offset) / res).floor() * res,
        (anchor[1] / res).round() * res,
    ];
    cfg.seed = stream_seed(scenario.seed, Stream::Ransac, frame);

    let mut area = cfg.roi.footprint();
    let pad = 4.0 * scenario.noise_sigma + res;
    area.min = [area.min[0] - pad, area.min[1] - pad];
    area.max = [area.max[0] + pad, area.max[1] + pad];
    let visible = world.clipped(&area);
    if visible.is_empty() {
        return Ok(SteppableGrid::for_config(&cfg));
    }
    let density = (scenario.sim.points_per_voxel / cfg.voxel_downsample).powi(2);
    let cloud = generate_synthetic_cloud(
        &visible,
        scenario.noise_sigma,
        density,
        stream_seed(scenario.seed, Stream::Cloud, frame),
    )?;
    let pose = Isometry3::from_parts(
        Translation3::new(anchor[0], anchor[1], scenario.sim.sensor_height),
        UnitQuaternion::from_euler_angles(0.0, SENSOR_PITCH, 0.0),
    );
    let grid = map_cloud(cloud.into_sensor_frame(&pose), &pose, &cfg)?;
    Ok(grid.eroded(scenario.sim.edge_erosion_cells))
}

/// Horizontal displacement of the steppable segment under `point` between
/// two maps. The segment is looked up in `before`; its match in `after` is
/// the nearest segment of similar height and area that has no counterpart in
/// `before`. Returns `None` if the segment cannot be found or is unmoved.
pub fn track_segment(before: &SteppableGrid, after: &SteppableGrid, point: Vec2, height_tol: f64) -> Option<Vec2> {
    let old_segs = before.segments();
    let (ix, iy) = before.cell_of(point[0], point[1])?;
    let idx = before.index(ix, iy);
    let old = old_segs.iter().find(|s| s.cells.binary_search(&idx).is_ok())?;
    let near = |a: Vec2, b: Vec2, r: f64| (a[0] - b[0]).hypot(a[1] - b[1]) <= r;
    let similar =
        |h: f64, area: f64| (h - old.height).abs() <= height_tol && area >= 0.5 * old.area && area <= 2.0 * old.area;
    let match_radius = 2.0 * before.resolution().max(after.resolution()) + 0.01;

    let new_segs = after.segments();
    if new_segs
        .iter()
        .any(|s| similar(s.height, s.area) && near(s.centroid, old.centroid, match_radius))
    {
        return None;
    }
    new_segs
        .iter()
        .filter(|s| similar(s.height, s.area))
        .filter(|s| {
            !old_segs
                .iter()
                .any(|o| (o.height - s.height).abs() <= height_tol && near(o.centroid, s.centroid, match_radius))
        })
        .map(|s| [s.centroid[0] - old.centroid[0], s.centroid[1] - old.centroid[1]])
        .min_by(|a, b| a[0].hypot(a[1]).total_cmp(&b[0].hypot(b[1])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Aabb;

    fn grid_with(stones: &[(f64, f64)]) -> SteppableGrid {
        let mut g = SteppableGrid::new(0.01, [0.0, -0.5], 200, 100);
        for (i, &(x, y)) in stones.iter().enumerate() {
            g.fill_rect(&Aabb::from_center_size([x, y], [0.32, 0.24]), 0.0, i as u32);
        }
        g
    }

    #[test]
    fn seeds_differ_per_stream_and_index() {
        let a = stream_seed(7, Stream::Cloud, 0);
        assert_ne!(a, stream_seed(7, Stream::Cloud, 1));
        assert_ne!(a, stream_seed(7, Stream::Planner, 0));
        assert_ne!(a, stream_seed(8, Stream::Cloud, 0));
        assert_eq!(a, stream_seed(7, Stream::Cloud, 0));
    }

    #[test]
    fn tracks_moved_stone() {
        let before = grid_with(&[(0.4, -0.13), (0.9, 0.13), (1.4, -0.13)]);
        let after = grid_with(&[(0.4, -0.13), (0.98, 0.13), (1.4, -0.13)]);
        let d = track_segment(&before, &after, [0.88, 0.12], 0.02).unwrap();
        assert!((d[0] - 0.08).abs() < 1e-9 && d[1].abs() < 1e-9, "{d:?}");
    }

    #[test]
    fn unmoved_stone_gives_none() {
        let g = grid_with(&[(0.4, -0.13), (0.9, 0.13)]);
        assert_eq!(track_segment(&g, &g, [0.9, 0.13], 0.02), None);
        assert_eq!(track_segment(&g, &g, [0.65, 0.0], 0.02), None);
    }

    #[test]
    fn perceived_grid_matches_truth_inside() {
        let world = World::new(vec![crate::terrain::TerrainBox {
            id: 0,
            center: [1.0, 0.0],
            size: [2.6, 1.4],
            top: 0.0,
        }]);
        let mut sc: Scenario = Scenario::from_json(include_str!("../../../../scenarios/stones_static.json")).unwrap();
        sc.terrain = world.boxes.clone();
        let g = perceive(&world, &sc, [0.3, 0.0], 0).unwrap();
        // everything but the eroded border ring is steppable
        let expect = (g.nx() - 2) * (g.ny() - 2);
        let got = g.steppable_count();
        assert!(got as f64 >= 0.99 * expect as f64, "{got} of {expect}");
    }
}
