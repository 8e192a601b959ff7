use serde::{Deserialize, Serialize};

use super::Footstep;
use crate::geometry::{band_x_range, to_world, Footprint, Vec2};
use crate::terrain::SteppableGrid;

/// Boundary contacts thinner than this do not count as overlap.
const TOUCH_EPS: f64 = 1e-9;

/// Visit every grid cell whose square overlaps the footprint with positive
/// area. Returns false as soon as `f` does, or if the footprint leaves the
/// grid.
fn for_each_overlapped(step: &Footstep, grid: &SteppableGrid, mut f: impl FnMut(usize, usize) -> bool) -> bool {
    let poly = step.corners();
    let res = grid.resolution();
    let [ox, oy] = grid.origin();
    let (ymin, ymax) = poly.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p[1]), hi.max(p[1]))
    });
    let row0 = ((ymin + TOUCH_EPS - oy) / res).floor();
    let row1 = ((ymax - TOUCH_EPS - oy) / res).ceil();
    if row0 < 0.0 || row1 > grid.ny() as f64 {
        return false;
    }
    for iy in row0 as usize..row1 as usize {
        let y0 = oy + iy as f64 * res;
        let Some((lo, hi)) = band_x_range(&poly, y0 + TOUCH_EPS, y0 + res - TOUCH_EPS) else {
            continue;
        };
        let col0 = ((lo + TOUCH_EPS - ox) / res).floor();
        let col1 = ((hi - TOUCH_EPS - ox) / res).ceil();
        if col0 < 0.0 || col1 > grid.nx() as f64 {
            return false;
        }
        for ix in col0 as usize..(col1 as usize).max(col0 as usize + 1) {
            if !f(ix, iy) {
                return false;
            }
        }
    }
    true
}

/// Cells under the footprint, or `None` if it extends past the grid.
pub fn overlapped_cells(step: &Footstep, grid: &SteppableGrid) -> Option<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for_each_overlapped(step, grid, |ix, iy| {
        out.push((ix, iy));
        true
    })
    .then_some(out)
}

/// A footstep is valid when every cell under its footprint is steppable and
/// all of them belong to the same plane. Returns the contact height (the
/// plane height under the footstep center) for valid steps.
pub fn validity_test(step: &Footstep, grid: &SteppableGrid) -> Option<f64> {
    let mut plane = None;
    let ok = for_each_overlapped(step, grid, |ix, iy| {
        let c = grid.get(ix, iy);
        if !c.steppable {
            return false;
        }
        match plane {
            None => {
                plane = c.plane_id;
                true
            }
            Some(p) => c.plane_id == Some(p),
        }
    });
    if !ok || plane.is_none() {
        return None;
    }
    grid.at(step.x, step.y).map(|c| c.height)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScorerConfig {
    /// Include the six points on a ring outside the footprint.
    pub ring: bool,
    /// Distance of the ring outside the footprint boundary.
    pub ring_margin: f64,
    /// RBF width; half the footprint diagonal when unset.
    pub sigma: Option<f64>,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            ring: true,
            ring_margin: 0.02,
            sigma: None,
        }
    }
}

/// Test points in the foot frame with RBF weights
/// `w_k = exp(-|x_k|^2 / (2 sigma^2))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyScorer {
    points: Vec<Vec2>,
    weights: Vec<f64>,
    sigma: f64,
}

impl SafetyScorer {
    /// 3x3 lattice over the footprint (corners, edge midpoints, center) plus,
    /// if enabled, front/back points and four side points on a ring
    /// `ring_margin` outside the boundary.
    pub fn new(footprint: Footprint, cfg: &ScorerConfig) -> Self {
        let hl = 0.5 * footprint.length;
        let hw = 0.5 * footprint.width;
        let mut points = Vec::with_capacity(15);
        for x in [-hl, 0.0, hl] {
            for y in [-hw, 0.0, hw] {
                points.push([x, y]);
            }
        }
        if cfg.ring {
            let m = cfg.ring_margin;
            points.push([hl + m, 0.0]);
            points.push([-(hl + m), 0.0]);
            for x in [-0.5 * hl, 0.5 * hl] {
                points.push([x, hw + m]);
                points.push([x, -(hw + m)]);
            }
        }
        Self::from_points(points, cfg.sigma.unwrap_or(0.5 * footprint.diagonal()))
    }

    pub fn from_points(points: Vec<Vec2>, sigma: f64) -> Self {
        assert!(!points.is_empty() && sigma > 0.0, "scorer needs points and sigma > 0");
        let weights = points
            .iter()
            .map(|p| (-(p[0] * p[0] + p[1] * p[1]) / (2.0 * sigma * sigma)).exp())
            .collect();
        Self { points, weights, sigma }
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Score of one footstep with every test point on steppable ground.
    pub fn max_per_step(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn footstep_score(&self, step: &Footstep, grid: &SteppableGrid) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .filter(|(p, _)| {
                let w = to_world(step.position(), step.yaw, **p);
                grid.steppable_at(w[0], w[1])
            })
            .map(|(_, w)| w)
            .sum()
    }
}

/// Sum of per-footstep scores along a path.
pub fn safety_score(steps: &[Footstep], grid: &SteppableGrid, scorer: &SafetyScorer) -> f64 {
    steps.iter().map(|s| scorer.footstep_score(s, grid)).sum()
}
