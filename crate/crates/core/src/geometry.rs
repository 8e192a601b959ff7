//! Planar geometry shared by the planner and the simulator: oriented foot
//! rectangles, convex clipping and support polygons.

use serde::{Deserialize, Serialize};

pub type Vec2 = [f64; 2];

/// Which foot a footstep belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn opposite(self) -> Self {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    /// +1 for left, -1 for right: the sign of the lateral offset of this foot
    /// relative to the other one.
    pub fn lateral_sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }
}

/// Foot sole rectangle, centered on the footstep position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Footprint {
    pub length: f64,
    pub width: f64,
}

impl Default for Footprint {
    fn default() -> Self {
        Self {
            length: 0.24,
            width: 0.13,
        }
    }
}

impl Footprint {
    pub fn diagonal(&self) -> f64 {
        self.length.hypot(self.width)
    }

    pub fn area(&self) -> f64 {
        self.length * self.width
    }
}

#[inline]
pub fn rotate(v: Vec2, yaw: f64) -> Vec2 {
    let (s, c) = yaw.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Local (foot frame) point to world.
#[inline]
pub fn to_world(origin: Vec2, yaw: f64, local: Vec2) -> Vec2 {
    let r = rotate(local, yaw);
    [origin[0] + r[0], origin[1] + r[1]]
}

/// World point to the local frame of a pose.
#[inline]
pub fn to_local(origin: Vec2, yaw: f64, world: Vec2) -> Vec2 {
    rotate([world[0] - origin[0], world[1] - origin[1]], -yaw)
}

/// Corners of an oriented rectangle, counter-clockwise.
pub fn rect_corners(center: Vec2, yaw: f64, length: f64, width: f64) -> [Vec2; 4] {
    let hl = 0.5 * length;
    let hw = 0.5 * width;
    [
        to_world(center, yaw, [hl, hw]),
        to_world(center, yaw, [-hl, hw]),
        to_world(center, yaw, [-hl, -hw]),
        to_world(center, yaw, [hl, -hw]),
    ]
}

/// Axis-aligned box in the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec2,
    pub max: Vec2,
}

impl Aabb {
    pub fn from_center_size(center: Vec2, size: Vec2) -> Self {
        Self {
            min: [center[0] - 0.5 * size[0], center[1] - 0.5 * size[1]],
            max: [center[0] + 0.5 * size[0], center[1] + 0.5 * size[1]],
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]).max(0.0) * (self.max[1] - self.min[1]).max(0.0)
    }

    pub fn overlaps(&self, other: &Aabb) -> bool {
        self.min[0] < other.max[0]
            && other.min[0] < self.max[0]
            && self.min[1] < other.max[1]
            && other.min[1] < self.max[1]
    }
}

/// Shoelace area; positive for counter-clockwise polygons.
pub fn polygon_area(poly: &[Vec2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * acc
}

/// Sutherland-Hodgman clip of a convex polygon against an axis-aligned box.
pub fn clip_to_aabb(poly: &[Vec2], aabb: &Aabb) -> Vec<Vec2> {
    // (axis, bound, keep_greater)
    let planes = [
        (0, aabb.min[0], true),
        (0, aabb.max[0], false),
        (1, aabb.min[1], true),
        (1, aabb.max[1], false),
    ];
    let mut out: Vec<Vec2> = poly.to_vec();
    for &(axis, bound, keep_greater) in &planes {
        if out.is_empty() {
            break;
        }
        let inside = |p: &Vec2| {
            if keep_greater {
                p[axis] >= bound
            } else {
                p[axis] <= bound
            }
        };
        let input = std::mem::take(&mut out);
        for i in 0..input.len() {
            let cur = input[i];
            let prev = input[(i + input.len() - 1) % input.len()];
            let (cin, pin) = (inside(&cur), inside(&prev));
            if cin != pin {
                let t = (bound - prev[axis]) / (cur[axis] - prev[axis]);
                let mut p = [prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])];
                p[axis] = bound;
                out.push(p);
            }
            if cin {
                out.push(cur);
            }
        }
    }
    out
}

/// Andrew's monotone chain; returns the hull counter-clockwise.
pub fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: Vec2, a: Vec2, b: Vec2| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut lower: Vec<Vec2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Vec2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Distance by which `p` lies outside a counter-clockwise convex polygon
/// (0 when inside or on the boundary).
pub fn distance_outside_convex(poly: &[Vec2], p: Vec2) -> f64 {
    let n = poly.len();
    if n == 0 {
        return f64::INFINITY;
    }
    let mut inside = n >= 3;
    let mut best = f64::INFINITY;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let e = [b[0] - a[0], b[1] - a[1]];
        let w = [p[0] - a[0], p[1] - a[1]];
        if e[0] * w[1] - e[1] * w[0] < 0.0 {
            inside = false;
        }
        let len2 = e[0] * e[0] + e[1] * e[1];
        let t = if len2 > 0.0 {
            ((w[0] * e[0] + w[1] * e[1]) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let d = (w[0] - t * e[0]).hypot(w[1] - t * e[1]);
        best = best.min(d);
    }
    if inside {
        0.0
    } else {
        best
    }
}

/// Horizontal extent of a convex polygon inside the band `y0 <= y <= y1`,
/// or `None` when the polygon misses the band.
pub fn band_x_range(poly: &[Vec2], y0: f64, y1: f64) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if a[1] >= y0 && a[1] <= y1 {
            lo = lo.min(a[0]);
            hi = hi.max(a[0]);
        }
        for yb in [y0, y1] {
            if (a[1] - yb) * (b[1] - yb) < 0.0 {
                let t = (yb - a[1]) / (b[1] - a[1]);
                let x = a[0] + t * (b[0] - a[0]);
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
    }
    (lo <= hi).then_some((lo, hi))
}

/// Angle wrapped to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}
