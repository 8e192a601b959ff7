//! Sampling-based footstep planning over a steppable grid.
//!
//! A tree of footsteps is grown from the current support foot: pick a random
//! node, sample a reachable footstep for the other foot, keep it if it lands
//! flat on one steppable plane. When the budget runs out every root-to-leaf
//! chain is a candidate path; the longest one wins, ties broken by the safety
//! score (weighted count of test points around each foot that lie over
//! steppable cells).

mod fixtures;
mod io;
mod sampling;
mod score;
mod tree;

pub use fixtures::{flat_grid, stepping_stone_grid, two_stone_fixture, TwoStoneFixture};
pub use io::{PlanRequest, PlanResponse, StepRecord};
pub use sampling::{random_footstep, random_support_footstep, ForwardBias};
pub use score::{overlapped_cells, safety_score, validity_test, SafetyScorer, ScorerConfig};
pub use tree::{best_footstep_path, footstep_path_candidates, FootstepNode, FootstepPath, FootstepTree};

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{to_local, wrap_angle, Footprint, Side, Vec2};
use crate::terrain::SteppableGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("no feasible footstep path found")]
    NoFeasiblePath,
    #[error("best path has {} steps, fewer than the required {required}", path.steps.len())]
    ShortPath { path: FootstepPath, required: usize },
    #[error("invalid planner configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Footstep {
    pub side: Side,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub z: f64,
    #[serde(default)]
    pub yaw: f64,
    #[serde(default, skip_serializing_if = "is_default_footprint")]
    pub footprint: Footprint,
}

fn is_default_footprint(f: &Footprint) -> bool {
    *f == Footprint::default()
}

impl Footstep {
    pub fn new(side: Side, x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self {
            side,
            x,
            y,
            z,
            yaw,
            footprint: Footprint::default(),
        }
    }

    pub fn position(&self) -> Vec2 {
        [self.x, self.y]
    }

    pub fn corners(&self) -> [Vec2; 4] {
        crate::geometry::rect_corners(self.position(), self.yaw, self.footprint.length, self.footprint.width)
    }
}

/// Kinematic step region, expressed in the support foot frame. `lateral` is
/// measured toward the swing side, so it is positive for both feet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReachabilityModel {
    pub forward: [f64; 2],
    pub lateral: [f64; 2],
    pub yaw: [f64; 2],
    pub max_height_delta: f64,
}

impl Default for ReachabilityModel {
    fn default() -> Self {
        let yaw = 20f64.to_radians();
        Self {
            forward: [-0.05, 0.35],
            lateral: [0.15, 0.30],
            yaw: [-yaw, yaw],
            max_height_delta: 0.15,
        }
    }
}

impl ReachabilityModel {
    pub fn validate(&self) -> Result<(), PlanError> {
        for (name, r) in [("forward", self.forward), ("lateral", self.lateral), ("yaw", self.yaw)] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                return Err(PlanError::InvalidConfig(format!("reach.{name}: min must be <= max")));
            }
        }
        if self.lateral[0] <= 0.0 {
            return Err(PlanError::InvalidConfig("reach.lateral min must be > 0".into()));
        }
        if !(self.max_height_delta >= 0.0) {
            return Err(PlanError::InvalidConfig("reach.max_height_delta must be >= 0".into()));
        }
        Ok(())
    }

    /// Whether `step` lies in the region reachable from `support`
    /// (small tolerance for round-off).
    pub fn contains(&self, support: &Footstep, step: &Footstep) -> bool {
        const EPS: f64 = 1e-9;
        if step.side == support.side {
            return false;
        }
        let local = to_local(support.position(), support.yaw, step.position());
        let lat = local[1] * step.side.lateral_sign();
        let dyaw = wrap_angle(step.yaw - support.yaw);
        let inside = |v: f64, r: [f64; 2]| v >= r[0] - EPS && v <= r[1] + EPS;
        inside(local[0], self.forward)
            && inside(lat, self.lateral)
            && inside(dyaw, self.yaw)
            && (step.z - support.z).abs() <= self.max_height_delta + EPS
    }
}

/// When the sampling loop stops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Budget {
    /// Wall-clock limit in seconds.
    Time(f64),
    /// Fixed number of sampling iterations; makes `plan` reproducible.
    Iterations(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub budget: Budget,
    pub max_steps: usize,
    pub min_steps: usize,
    pub forward_bias: ForwardBias,
    pub seed: u64,
    /// Stop sampling as soon as one path reaches `max_steps`.
    pub early_exit: bool,
    pub reach: ReachabilityModel,
    pub scorer: ScorerConfig,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            budget: Budget::Time(0.005),
            max_steps: 4,
            min_steps: 2,
            forward_bias: ForwardBias::default(),
            seed: 0,
            early_exit: false,
            reach: ReachabilityModel::default(),
            scorer: ScorerConfig::default(),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        self.reach.validate()?;
        if self.max_steps == 0 || self.min_steps > self.max_steps {
            return Err(PlanError::InvalidConfig(
                "need 0 < max_steps and min_steps <= max_steps".into(),
            ));
        }
        match self.budget {
            Budget::Time(s) if !(s > 0.0 && s.is_finite()) => {
                Err(PlanError::InvalidConfig("time budget must be > 0".into()))
            }
            Budget::Iterations(0) => Err(PlanError::InvalidConfig("iteration budget must be > 0".into())),
            _ => Ok(()),
        }
    }
}

/// Result of a planner call together with run statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub path: FootstepPath,
    pub iterations: usize,
    pub validity_tests: usize,
    pub tree_size: usize,
    pub elapsed: Duration,
}

/// Plan from `q_init` using the reach model, scorer settings and budget in
/// `cfg`.
pub fn plan(grid: &SteppableGrid, q_init: &Footstep, cfg: &PlannerConfig) -> Result<PlanOutcome, PlanError> {
    let scorer = SafetyScorer::new(q_init.footprint, &cfg.scorer);
    plan_with(grid, q_init, &cfg.reach, &scorer, cfg)
}

pub fn plan_with(
    grid: &SteppableGrid,
    q_init: &Footstep,
    reach: &ReachabilityModel,
    scorer: &SafetyScorer,
    cfg: &PlannerConfig,
) -> Result<PlanOutcome, PlanError> {
    cfg.validate()?;
    reach.validate()?;
    let start = Instant::now();
    if grid.steppable_count() == 0 {
        return Err(PlanError::NoFeasiblePath);
    }
    let deadline = match cfg.budget {
        Budget::Time(s) => Some(start + Duration::from_secs_f64(s)),
        Budget::Iterations(_) => None,
    };
    let max_iter = match cfg.budget {
        Budget::Iterations(n) => n,
        Budget::Time(_) => usize::MAX,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tree = FootstepTree::new(*q_init, cfg.max_steps);
    let mut iterations = 0;
    let mut validity_tests = 0;

    while iterations < max_iter {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        iterations += 1;
        let Some(sup) = random_support_footstep(&tree, &mut rng) else {
            break;
        };
        let support = tree.nodes()[sup].footstep;
        let mut cand = random_footstep(&support, reach, &cfg.forward_bias, &mut rng);
        validity_tests += 1;
        let Some(z) = validity_test(&cand, grid) else {
            continue;
        };
        if (z - support.z).abs() > reach.max_height_delta {
            continue;
        }
        cand.z = z;
        let idx = tree.insert(cand, sup);
        if cfg.early_exit && tree.nodes()[idx].depth == cfg.max_steps {
            break;
        }
    }

    let candidates = footstep_path_candidates(&tree);
    let path = best_footstep_path(candidates, grid, scorer)?;
    let outcome = PlanOutcome {
        iterations,
        validity_tests,
        tree_size: tree.len(),
        elapsed: start.elapsed(),
        path,
    };
    if outcome.path.steps.len() < cfg.min_steps {
        return Err(PlanError::ShortPath {
            path: outcome.path,
            required: cfg.min_steps,
        });
    }
    Ok(outcome)
}

/// Wall-clock distribution of repeated plan calls, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchStats {
    pub calls: usize,
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
    pub mean: f64,
    /// Mean validity tests per call.
    pub validity_tests: f64,
}

/// Time `calls` plan invocations; seed `i` is `cfg.seed + i`. Failed plans
/// are timed like successful ones.
pub fn bench(grid: &SteppableGrid, q_init: &Footstep, cfg: &PlannerConfig, calls: usize) -> BenchStats {
    let mut times = Vec::with_capacity(calls);
    let mut tests = 0usize;
    let mut c = cfg.clone();
    for i in 0..calls {
        c.seed = cfg.seed.wrapping_add(i as u64);
        let t0 = Instant::now();
        let r = plan(grid, q_init, &c);
        times.push(t0.elapsed().as_secs_f64());
        if let Ok(o) = &r {
            tests += o.validity_tests;
        }
    }
    times.sort_by(f64::total_cmp);
    let pct = |p: f64| {
        if times.is_empty() {
            return 0.0;
        }
        let i = ((p * times.len() as f64).ceil() as usize).clamp(1, times.len()) - 1;
        times[i]
    };
    BenchStats {
        calls,
        p50: pct(0.5),
        p95: pct(0.95),
        max: times.last().copied().unwrap_or(0.0),
        mean: times.iter().sum::<f64>() / calls.max(1) as f64,
        validity_tests: tests as f64 / calls.max(1) as f64,
    }
}
