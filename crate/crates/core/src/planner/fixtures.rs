//! Hand-built grids for tests and benchmarks.

use super::{Budget, Footstep, PlannerConfig};
use crate::geometry::{Aabb, Side, Vec2};
use crate::terrain::SteppableGrid;

pub fn flat_grid(resolution: f64, origin: Vec2, nx: usize, ny: usize, height: f64) -> SteppableGrid {
    let mut g = SteppableGrid::new(resolution, origin, nx, ny);
    let b = g.bounds();
    g.fill_rect(&b, height, 0);
    g
}

/// 1 x 2 m grid at 1 cm (100 x 200 cells) with a start platform and two
/// staggered rows of 0.32 x 0.24 m stones 0.5 m apart, tops at 0, 3 or 6 cm.
/// The start feet are at (0.1, +-0.13).
pub fn stepping_stone_grid() -> SteppableGrid {
    let mut g = SteppableGrid::new(0.01, [-0.1, -0.5], 200, 100);
    g.fill_rect(
        &Aabb {
            min: [-0.1, -0.3],
            max: [0.23, 0.3],
        },
        0.0,
        0,
    );
    let mut id = 1;
    for k in 0..4 {
        let h = 0.03 * ((k % 3) as f64);
        for (x, y) in [(0.40 + 0.5 * k as f64, -0.13), (0.65 + 0.5 * k as f64, 0.13)] {
            g.fill_rect(&Aabb::from_center_size([x, y], [0.32, 0.24]), h, id);
            id += 1;
        }
    }
    g
}

/// Left foot on a start pad and two stones 1.5x the footprint size placed at
/// the nominal stride: one for the right foot, then one for the left.
#[derive(Debug, Clone)]
pub struct TwoStoneFixture {
    pub grid: SteppableGrid,
    pub q_init: Footstep,
    pub stones: [Aabb; 2],
    pub config: PlannerConfig,
}

pub fn two_stone_fixture() -> TwoStoneFixture {
    let mut grid = SteppableGrid::new(0.01, [-0.3, -0.5], 150, 100);
    let size = [0.36, 0.195];
    let stones = [
        Aabb::from_center_size([0.28, -0.12], size),
        Aabb::from_center_size([0.56, 0.12], size),
    ];
    grid.fill_rect(
        &Aabb {
            min: [-0.2, 0.04],
            max: [0.15, 0.22],
        },
        0.0,
        0,
    );
    grid.fill_rect(&stones[0], 0.02, 1);
    grid.fill_rect(&stones[1], 0.04, 2);
    TwoStoneFixture {
        grid,
        q_init: Footstep::new(Side::Left, 0.0, 0.12, 0.0, 0.0),
        stones,
        config: PlannerConfig {
            budget: Budget::Iterations(3000),
            max_steps: 2,
            min_steps: 2,
            ..PlannerConfig::default()
        },
    }
}
