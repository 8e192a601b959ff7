use serde::{Deserialize, Serialize};

use super::{MappingConfig, Plane, PointCloud, TerrainError};
use crate::geometry::{Aabb, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub steppable: bool,
    pub height: f64,
    pub plane_id: Option<u32>,
}

impl Cell {
    pub const BLOCKED: Cell = Cell {
        steppable: false,
        height: 0.0,
        plane_id: None,
    };

    pub fn steppable(height: f64, plane_id: u32) -> Self {
        Self {
            steppable: true,
            height,
            plane_id: Some(plane_id),
        }
    }
}

/// Axis-aligned 2.5D grid in the base frame. Cell `(ix, iy)` covers
/// `[origin + i * resolution, origin + (i + 1) * resolution)` on each axis;
/// storage is row-major in y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "GridDoc", try_from = "GridDoc")]
pub struct SteppableGrid {
    resolution: f64,
    origin: Vec2,
    nx: usize,
    ny: usize,
    cells: Vec<Cell>,
}

/// Connected set of steppable cells sharing one plane.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSegment {
    pub plane_id: u32,
    pub cells: Vec<usize>,
    pub centroid: Vec2,
    pub area: f64,
    pub height: f64,
}

impl SteppableGrid {
    pub fn new(resolution: f64, origin: Vec2, nx: usize, ny: usize) -> Self {
        assert!(resolution > 0.0, "grid resolution must be positive");
        Self {
            resolution,
            origin,
            nx,
            ny,
            cells: vec![Cell::BLOCKED; nx * ny],
        }
    }

    /// Empty grid covering the region of interest of `cfg`.
    pub fn for_config(cfg: &MappingConfig) -> Self {
        let fp = cfg.roi.footprint();
        let nx = (cfg.roi.length / cfg.resolution).round() as usize;
        let ny = (cfg.roi.width / cfg.resolution).round() as usize;
        Self::new(cfg.resolution, fp.min, nx, ny)
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn bounds(&self) -> Aabb {
        Aabb {
            min: self.origin,
            max: [
                self.origin[0] + self.nx as f64 * self.resolution,
                self.origin[1] + self.ny as f64 * self.resolution,
            ],
        }
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    #[inline]
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = ((x - self.origin[0]) / self.resolution).floor();
        let fy = ((y - self.origin[1]) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.nx as f64 || fy >= self.ny as f64 {
            return None;
        }
        Some((fx as usize, fy as usize))
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Vec2 {
        [
            self.origin[0] + (ix as f64 + 0.5) * self.resolution,
            self.origin[1] + (iy as f64 + 0.5) * self.resolution,
        ]
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize) -> &Cell {
        &self.cells[self.index(ix, iy)]
    }

    pub fn set(&mut self, ix: usize, iy: usize, cell: Cell) {
        let i = self.index(ix, iy);
        self.cells[i] = cell;
    }

    pub fn at(&self, x: f64, y: f64) -> Option<&Cell> {
        self.cell_of(x, y).map(|(ix, iy)| self.get(ix, iy))
    }

    #[inline]
    pub fn steppable_at(&self, x: f64, y: f64) -> bool {
        self.at(x, y).is_some_and(|c| c.steppable)
    }

    pub fn steppable_count(&self) -> usize {
        self.cells.iter().filter(|c| c.steppable).count()
    }

    /// Mark every cell whose center lies in `area` as steppable.
    pub fn fill_rect(&mut self, area: &Aabb, height: f64, plane_id: u32) {
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                if area.contains(self.cell_center(ix, iy)) {
                    self.set(ix, iy, Cell::steppable(height, plane_id));
                }
            }
        }
    }

    /// Copy with `n` rings of border cells removed from every steppable
    /// region: a cell survives one pass only if its 4 neighbours exist, are
    /// steppable and share its plane.
    pub fn eroded(&self, n: usize) -> Self {
        let mut cur = self.clone();
        for _ in 0..n {
            let prev = cur.cells.clone();
            for iy in 0..self.ny {
                for ix in 0..self.nx {
                    let i = iy * self.nx + ix;
                    let c = prev[i];
                    if !c.steppable {
                        continue;
                    }
                    let inner = ix > 0
                        && iy > 0
                        && ix + 1 < self.nx
                        && iy + 1 < self.ny
                        && [i - 1, i + 1, i - self.nx, i + self.nx]
                            .iter()
                            .all(|&j| prev[j].steppable && prev[j].plane_id == c.plane_id);
                    if !inner {
                        cur.cells[i] = Cell::BLOCKED;
                    }
                }
            }
        }
        cur
    }

    /// 4-connected components of steppable cells with equal plane ids.
    pub fn segments(&self) -> Vec<GridSegment> {
        let mut seen = vec![false; self.cells.len()];
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for start in 0..self.cells.len() {
            let Some(pid) = self.cells[start].plane_id.filter(|_| self.cells[start].steppable) else {
                continue;
            };
            if seen[start] {
                continue;
            }
            seen[start] = true;
            stack.push(start);
            let mut members = Vec::new();
            while let Some(i) = stack.pop() {
                members.push(i);
                let (ix, iy) = (i % self.nx, i / self.nx);
                let mut visit = |j: usize| {
                    let c = &self.cells[j];
                    if !seen[j] && c.steppable && c.plane_id == Some(pid) {
                        seen[j] = true;
                        stack.push(j);
                    }
                };
                if ix > 0 {
                    visit(i - 1);
                }
                if ix + 1 < self.nx {
                    visit(i + 1);
                }
                if iy > 0 {
                    visit(i - self.nx);
                }
                if iy + 1 < self.ny {
                    visit(i + self.nx);
                }
            }
            members.sort_unstable();
            let k = members.len() as f64;
            let (mut cx, mut cy, mut h) = (0.0, 0.0, 0.0);
            for &i in &members {
                let c = self.cell_center(i % self.nx, i / self.nx);
                cx += c[0];
                cy += c[1];
                h += self.cells[i].height;
            }
            out.push(GridSegment {
                plane_id: pid,
                centroid: [cx / k, cy / k],
                area: k * self.resolution * self.resolution,
                height: h / k,
                cells: members,
            });
        }
        out
    }
}

/// Rasterize accepted planes: a cell is steppable iff exactly one plane has
/// at least `cfg.min_points_per_cell` inliers projecting into it. Its height
/// is that plane evaluated at the cell center.
pub fn build_steppable_grid(planes: &[Plane], cloud: &PointCloud, cfg: &MappingConfig) -> SteppableGrid {
    let mut grid = SteppableGrid::for_config(cfg);
    if planes.is_empty() || grid.cells.is_empty() {
        return grid;
    }
    let np = planes.len();
    let mut counts = vec![0u16; grid.cells.len() * np];
    for (k, plane) in planes.iter().enumerate() {
        for &i in &plane.inliers {
            let p = &cloud.points[i];
            if let Some((ix, iy)) = grid.cell_of(p.x, p.y) {
                let slot = grid.index(ix, iy) * np + k;
                counts[slot] = counts[slot].saturating_add(1);
            }
        }
    }
    let min = cfg.min_points_per_cell.min(u16::MAX as usize) as u16;
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let base = grid.index(ix, iy) * np;
            let mut winner = None;
            let mut qualifying = 0;
            for k in 0..np {
                if counts[base + k] >= min {
                    qualifying += 1;
                    winner = Some(k);
                }
            }
            if qualifying == 1 {
                let k = winner.expect("one qualifying plane");
                let c = grid.cell_center(ix, iy);
                grid.set(ix, iy, Cell::steppable(planes[k].height_at(c[0], c[1]), k as u32));
            }
        }
    }
    grid
}

// JSON form: run-length encoded cells, heights in integer millimetres.

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridDoc {
    resolution: f64,
    origin: Vec2,
    nx: usize,
    ny: usize,
    cells: Vec<CellRun>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellRun {
    n: usize,
    steppable: bool,
    height_mm: i64,
    plane_id: i64,
}

impl CellRun {
    fn of(cell: &Cell) -> Self {
        if cell.steppable {
            Self {
                n: 1,
                steppable: true,
                height_mm: (cell.height * 1000.0).round() as i64,
                plane_id: cell.plane_id.map_or(-1, i64::from),
            }
        } else {
            Self {
                n: 1,
                steppable: false,
                height_mm: 0,
                plane_id: -1,
            }
        }
    }

    fn same_value(&self, other: &Self) -> bool {
        self.steppable == other.steppable && self.height_mm == other.height_mm && self.plane_id == other.plane_id
    }
}

impl From<SteppableGrid> for GridDoc {
    fn from(g: SteppableGrid) -> Self {
        let mut runs: Vec<CellRun> = Vec::new();
        for cell in &g.cells {
            let r = CellRun::of(cell);
            match runs.last_mut() {
                Some(last) if last.same_value(&r) => last.n += 1,
                _ => runs.push(r),
            }
        }
        GridDoc {
            resolution: g.resolution,
            origin: g.origin,
            nx: g.nx,
            ny: g.ny,
            cells: runs,
        }
    }
}

impl TryFrom<GridDoc> for SteppableGrid {
    type Error = TerrainError;

    fn try_from(doc: GridDoc) -> Result<Self, Self::Error> {
        if !(doc.resolution.is_finite() && doc.resolution > 0.0) {
            return Err(TerrainError::Serialization("resolution must be > 0".into()));
        }
        let total = doc.nx * doc.ny;
        let mut cells = Vec::with_capacity(total);
        for run in &doc.cells {
            let cell = if run.steppable {
                let pid = u32::try_from(run.plane_id)
                    .map_err(|_| TerrainError::Serialization("steppable cell without plane_id".into()))?;
                Cell::steppable(run.height_mm as f64 / 1000.0, pid)
            } else {
                Cell::BLOCKED
            };
            cells.extend(std::iter::repeat_n(cell, run.n));
        }
        if cells.len() != total {
            return Err(TerrainError::Serialization(format!(
                "cell runs cover {} cells, grid has {}",
                cells.len(),
                total
            )));
        }
        Ok(Self {
            resolution: doc.resolution,
            origin: doc.origin,
            nx: doc.nx,
            ny: doc.ny,
            cells,
        })
    }
}
