use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::perception::{perceive, stream_seed, track_segment, Stream};
use super::telemetry::TelemetryRow;
use super::world::{apply_disturbance, check_touchdown, DisturbanceEvent, World};
use super::{Scenario, SimError, Trigger};
use crate::geometry::{convex_hull, distance_outside_convex, Side, Vec2};
use crate::pattern::{GaitConfig, GaitGenerator, PatternError, SupportPhase, TickOutput};
use crate::planner::{plan, validity_test, Footstep, PlannerConfig};
use crate::stabilization::{
    compliant_step, czmp, foot_weight_distribution, CapturePointFeedback, CompliantLipm, DampingController,
    VelocityFilter,
};
use crate::terrain::SteppableGrid;

const COVERAGE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureReason {
    FootOffTerrain,
    ZmpOutsideSupport,
    NoFeasiblePath,
    ReplanOutOfRange,
    Timeout,
}

impl std::fmt::Display for FailureReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TouchdownRecord {
    pub t: f64,
    pub index: usize,
    pub side: Side,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplanKind {
    /// New path planned from the support foot.
    Replan,
    /// The old landing target shifted with its tracked stone.
    StoneTracker,
}

/// A change of the active landing target caused by a perceived terrain
/// change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplanEvent {
    /// Latest disturbance at or before the capture (the capture itself if
    /// none).
    pub trigger_t: f64,
    pub capture_t: f64,
    pub sdb_update_t: f64,
    /// Sum of the pipeline stage latencies the update went through.
    pub latency: f64,
    pub kind: ReplanKind,
    /// Move of the active landing target (m, 3D).
    pub displacement: f64,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    /// First steps of a walk from standing.
    Start,
    /// Steps after the active landing target.
    Pending,
    /// A new active landing target and the steps after it.
    Retarget,
}

/// One planner result handed to the step buffer. The grid it was computed
/// from was captured at `capture_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub capture_t: f64,
    pub plan_t: f64,
    pub apply_t: f64,
    pub kind: PlanKind,
    pub applied: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiredDisturbance {
    pub t: f64,
    pub stone: u32,
    pub displacement: [f64; 2],
}

/// Peak deviation of the compliant-model ZMP from the commanded ZMP while
/// walking, without and with damping feedback.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VibrationSummary {
    pub open_loop_peak: f64,
    pub damped_peak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub replan_enabled: bool,
    pub success: bool,
    pub failure_reason: Option<FailureReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_detail: Option<String>,
    pub sim_time: f64,
    pub walk_start: Option<f64>,
    pub walk_end: Option<f64>,
    /// Forward progress of the mid-feet point, updated at each touchdown.
    pub distance: f64,
    /// Distance over walk time; set once the walk has ended.
    pub mean_speed: f64,
    pub speed_target: f64,
    pub touchdowns: Vec<TouchdownRecord>,
    pub min_coverage: f64,
    pub replan_events: Vec<ReplanEvent>,
    pub disturbances: Vec<FiredDisturbance>,
    pub frames_processed: usize,
    pub plans: Vec<PlanRecord>,
    pub plans_applied: usize,
    /// Plans computed against a buffer revision that changed meanwhile.
    pub plans_stale: usize,
    /// Plans the buffer refused for other reasons (e.g. too late to retarget).
    pub plans_rejected: usize,
    pub planner_failures: usize,
    pub starvation_stops: usize,
    pub serial_latency: f64,
    pub vibration: VibrationSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub telemetry: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub telemetry: Vec<TelemetryRow>,
}

#[derive(Debug, Clone)]
enum Decision {
    /// Start walking from standing.
    Start(Vec<Footstep>),
    /// Replace the pending steps; `step` is the active buffer index.
    Pending { steps: Vec<Footstep>, step: usize },
    Retarget {
        steps: Vec<Footstep>,
        kind: ReplanKind,
        displacement: f64,
    },
}

#[derive(Debug)]
enum JobState {
    Mapped(SteppableGrid),
    /// Planned against buffer revision `.1`.
    Planned(Decision, u64),
    Idle,
}

#[derive(Debug)]
struct Job {
    capture_t: f64,
    plan_t: f64,
    apply_t: f64,
    state: JobState,
}

/// Per-axis compliant models fed with the cZMP.
struct VibrationProbe {
    open: [CompliantLipm; 2],
    damped: [CompliantLipm; 2],
    ctrl: DampingController,
    summary: VibrationSummary,
}

impl VibrationProbe {
    fn tick(&mut self, cmd: Vec2, dt: f64, record: bool) {
        for k in 0..2 {
            let (s, zo) = compliant_step(&self.open[k], cmd[k], dt);
            self.open[k].state = s;
            let u = self.ctrl.command(cmd[k], self.damped[k].state);
            let (s, zd) = compliant_step(&self.damped[k], u, dt);
            self.damped[k].state = s;
            if record {
                self.summary.open_loop_peak = self.summary.open_loop_peak.max((zo - cmd[k]).abs());
                self.summary.damped_peak = self.summary.damped_peak.max((zd - cmd[k]).abs());
            }
        }
    }
}

/// Closed-loop run of a scenario. Falls and missed footholds are reported in
/// the result; errors are configuration problems only.
pub fn run(scenario: &Scenario) -> Result<RunOutput, SimError> {
    scenario.validate()?;
    Sim::new(scenario)?.run()
}

struct Sim<'a> {
    sc: &'a Scenario,
    world: World,
    gait: GaitGenerator,
    planner: PlannerConfig,
    fb: CapturePointFeedback,
    vel_filter: Option<VelocityFilter>,
    probe: VibrationProbe,
    jobs: VecDeque<Job>,
    fired: Vec<bool>,
    next_frame: u64,
    plan_calls: u64,
    planned_step: Option<usize>,
    last_good_grid: Option<SteppableGrid>,
    last_plan_failed: bool,
    goal_reached: bool,
    settle_since: Option<f64>,
    zmp_violation: f64,
    start_mid_x: f64,
    report: RunReport,
    rows: Vec<TelemetryRow>,
}

impl<'a> Sim<'a> {
    fn new(sc: &'a Scenario) -> Result<Self, SimError> {
        let world = World::new(sc.terrain.clone());
        let mut gait_cfg: GaitConfig = sc.gait;
        gait_cfg.timing.step_duration = sc.walk.step_time;
        gait_cfg.timing.dsp_fraction = sc.walk.dsp_fraction;
        let foot = |side: Side, p: Vec2| {
            let z = world.height_at(p[0], p[1]).unwrap_or(0.0);
            Footstep::new(side, p[0], p[1], z, 0.0)
        };
        let left = foot(Side::Left, sc.start.left);
        let right = foot(Side::Right, sc.start.right);
        let gait = GaitGenerator::new(gait_cfg, left, right, sc.start.first_swing)?;

        let mut planner = sc.planner.clone();
        if planner.forward_bias.mean.is_none() {
            planner.forward_bias.mean = Some(sc.walk.stride);
        }
        let lipm = gait_cfg.lipm;
        let fb = CapturePointFeedback::new(sc.stabilizer.k_cp, lipm.com_height, lipm.gravity)?;
        let vel_filter = sc
            .stabilizer
            .velocity_cutoff_hz
            .map(|hz| VelocityFilter::new(hz, lipm.dt));
        let model = sc.stabilizer.compliance.model(lipm.com_height)?;
        let ctrl = sc.stabilizer.compliance.controller(&model)?;
        let mid = [0.5 * (left.x + right.x), 0.5 * (left.y + right.y)];
        let at = |v: f64| CompliantLipm {
            state: [v, 0.0],
            ..model
        };
        let probe = VibrationProbe {
            open: [at(mid[0]), at(mid[1])],
            damped: [at(mid[0]), at(mid[1])],
            ctrl,
            summary: VibrationSummary {
                open_loop_peak: 0.0,
                damped_peak: 0.0,
            },
        };
        let report = RunReport {
            scenario: sc.name.clone(),
            seed: sc.seed,
            replan_enabled: sc.replan_enabled,
            success: false,
            failure_reason: None,
            failure_detail: None,
            sim_time: 0.0,
            walk_start: None,
            walk_end: None,
            distance: 0.0,
            mean_speed: 0.0,
            speed_target: sc.walk.speed_target,
            touchdowns: Vec::new(),
            min_coverage: 1.0,
            replan_events: Vec::new(),
            disturbances: Vec::new(),
            frames_processed: 0,
            plans: Vec::new(),
            plans_applied: 0,
            plans_stale: 0,
            plans_rejected: 0,
            planner_failures: 0,
            starvation_stops: 0,
            serial_latency: sc.latency.serial_total(),
            vibration: probe.summary,
            telemetry: None,
        };
        Ok(Self {
            sc,
            world,
            gait,
            planner,
            fb,
            vel_filter,
            probe,
            jobs: VecDeque::new(),
            fired: vec![false; sc.disturbances.len()],
            next_frame: 0,
            plan_calls: 0,
            planned_step: None,
            last_good_grid: None,
            last_plan_failed: false,
            goal_reached: false,
            settle_since: None,
            zmp_violation: 0.0,
            start_mid_x: mid[0],
            report,
            rows: Vec::new(),
        })
    }

    fn run(mut self) -> Result<RunOutput, SimError> {
        let dt = self.gait.config().lipm.dt;
        let outcome = loop {
            let t = self.gait.now();
            if t > self.sc.sim.max_time {
                let reason = if self.last_plan_failed && self.gait.sdb().is_standing() {
                    FailureReason::NoFeasiblePath
                } else {
                    FailureReason::Timeout
                };
                break Err((reason, format!("no completed walk after {:.1} s", self.sc.sim.max_time)));
            }
            self.fire_disturbances(t)?;
            self.capture(t)?;
            self.plan_jobs(t);
            if let Err(e) = self.apply_jobs(t) {
                break Err(e);
            }
            let out = match self.gait.step() {
                Ok(o) => o,
                Err(PatternError::InsufficientSteps { .. }) => {
                    self.report.starvation_stops += 1;
                    self.gait.stop(usize::MAX)?;
                    self.gait.step()?
                }
                Err(e) => return Err(e.into()),
            };
            if let Err(e) = self.after_tick(&out, dt) {
                break Err(e);
            }
            if let Some(since) = self.settle_since {
                if t - since >= self.sc.sim.settle_time {
                    break Ok(());
                }
            }
        };
        self.report.sim_time = self.gait.now();
        self.report.vibration = self.probe.summary;
        match outcome {
            Ok(()) => self.report.success = true,
            Err((reason, detail)) => {
                self.report.failure_reason = Some(reason);
                self.report.failure_detail = Some(detail);
            }
        }
        Ok(RunOutput {
            report: self.report,
            telemetry: self.rows,
        })
    }

    fn fire_disturbances(&mut self, t: f64) -> Result<(), SimError> {
        for (i, d) in self.sc.disturbances.iter().enumerate() {
            if self.fired[i] {
                continue;
            }
            let due = match d.trigger {
                Trigger::Time(at) => t + 1e-9 >= at,
                Trigger::SwingPhase { phase, target_stone } => self.gait.sdb().active().is_some_and(|a| {
                    let swing = a.swing_duration();
                    let p = if swing > 0.0 { (t - a.dsp_end()) / swing } else { 0.0 };
                    let on_stone = self
                        .world
                        .stone(target_stone)
                        .is_some_and(|s| s.aabb().contains([a.target.x, a.target.y]));
                    p + 1e-9 >= phase && on_stone
                }),
            };
            if due {
                self.fired[i] = true;
                let ev = DisturbanceEvent {
                    stone: d.stone,
                    displacement: d.displacement,
                };
                self.world = apply_disturbance(&self.world, &ev)?;
                self.report.disturbances.push(FiredDisturbance {
                    t,
                    stone: d.stone,
                    displacement: d.displacement,
                });
            }
        }
        Ok(())
    }

    /// Frames arrive at the perception rate; only those captured in single
    /// support or while standing without a scheduled walk are mapped.
    fn capture(&mut self, t: f64) -> Result<(), SimError> {
        let period = 1.0 / self.sc.sim.perception_rate_hz;
        if t + 1e-9 < self.next_frame as f64 * period {
            return Ok(());
        }
        let frame = self.next_frame;
        self.next_frame += 1;
        let sdb = self.gait.sdb();
        let anchor = match self.gait.phase_at(t) {
            SupportPhase::Single(side) => sdb.planted(side).position(),
            SupportPhase::Standing if !self.goal_reached && sdb.is_standing() => {
                let (a, b) = sdb.last_two();
                [0.5 * (a.x + b.x), 0.5 * (a.y + b.y)]
            }
            _ => return Ok(()),
        };
        let grid = perceive(&self.world, self.sc, anchor, frame)?;
        self.report.frames_processed += 1;
        let lat = &self.sc.latency;
        self.jobs.push_back(Job {
            capture_t: t,
            plan_t: t + lat.until_planning(),
            apply_t: t + lat.serial_total(),
            state: JobState::Mapped(grid),
        });
        Ok(())
    }

    fn plan_jobs(&mut self, t: f64) {
        for i in 0..self.jobs.len() {
            if self.jobs[i].plan_t > t + 1e-9 || !matches!(self.jobs[i].state, JobState::Mapped(_)) {
                continue;
            }
            let JobState::Mapped(grid) = std::mem::replace(&mut self.jobs[i].state, JobState::Idle) else {
                unreachable!()
            };
            if let Some(d) = self.decide(&grid) {
                self.jobs[i].state = JobState::Planned(d, self.gait.sdb().revision());
            }
        }
    }

    fn run_planner(&mut self, grid: &SteppableGrid, root: &Footstep) -> Option<Vec<Footstep>> {
        let mut cfg = self.planner.clone();
        cfg.seed = stream_seed(self.sc.seed, Stream::Planner, self.plan_calls);
        self.plan_calls += 1;
        match plan(grid, root, &cfg) {
            Ok(o) => {
                self.last_plan_failed = false;
                Some(o.path.steps)
            }
            Err(_) => {
                self.last_plan_failed = true;
                self.report.planner_failures += 1;
                None
            }
        }
    }

    fn decide(&mut self, grid: &SteppableGrid) -> Option<Decision> {
        if self.goal_reached {
            return None;
        }
        let sdb = self.gait.sdb().clone();
        let Some(active) = sdb.active().copied() else {
            if !sdb.is_standing() {
                return None;
            }
            let (last, _) = sdb.last_two();
            let root = *last;
            return self.run_planner(grid, &root).map(Decision::Start);
        };
        let cursor = sdb.cursor();
        let target = active.target;
        let support = *sdb.planted(target.side.opposite());

        let active_ok = !fully_inside(&target, grid) || validity_test(&target, grid).is_some();
        if active_ok {
            self.last_good_grid = Some(grid.clone());
        } else if self.sc.replan_enabled {
            if let Some(steps) = self.run_planner(grid, &support) {
                let displacement = distance3(&steps[0], &target);
                return Some(Decision::Retarget {
                    steps,
                    kind: ReplanKind::Replan,
                    displacement,
                });
            }
            let d = self.last_good_grid.as_ref().and_then(|before| {
                track_segment(before, grid, target.position(), self.sc.mapping.ransac_dist_threshold)
            })?;
            let mut moved = target;
            moved.x += d[0];
            moved.y += d[1];
            if let Some(c) = grid.at(moved.x, moved.y).filter(|c| c.steppable) {
                moved.z = c.height;
            }
            let mut steps = vec![moved];
            steps.extend(sdb.pending().iter().map(|e| e.target));
            let displacement = distance3(&moved, &target);
            return Some(Decision::Retarget {
                steps,
                kind: ReplanKind::StoneTracker,
                displacement,
            });
        }

        let pending = sdb.pending();
        let pending_ok = !pending.is_empty()
            && pending
                .iter()
                .all(|e| !fully_inside(&e.target, grid) || validity_test(&e.target, grid).is_some());
        if self.planned_step == Some(cursor) && pending_ok {
            return None;
        }
        self.run_planner(grid, &target)
            .map(|steps| Decision::Pending { steps, step: cursor })
    }

    fn apply_jobs(&mut self, t: f64) -> Result<(), (FailureReason, String)> {
        while self.jobs.front().is_some_and(|j| j.apply_t <= t + 1e-9) {
            let job = self.jobs.pop_front().expect("front checked");
            let JobState::Planned(decision, rev) = job.state else {
                continue;
            };
            let (steps, kind) = match &decision {
                Decision::Start(s) => (s, PlanKind::Start),
                Decision::Pending { steps, .. } => (steps, PlanKind::Pending),
                Decision::Retarget { steps, .. } => (steps, PlanKind::Retarget),
            };
            let result = self.gait.submit(steps, rev);
            self.report.plans.push(PlanRecord {
                capture_t: job.capture_t,
                plan_t: job.plan_t,
                apply_t: t,
                kind,
                applied: result.is_ok(),
            });
            if let Decision::Retarget { kind, displacement, .. } = &decision {
                let trigger_t = self
                    .report
                    .disturbances
                    .iter()
                    .rev()
                    .find(|d| d.t <= job.capture_t + 1e-9)
                    .map_or(job.capture_t, |d| d.t);
                self.report.replan_events.push(ReplanEvent {
                    trigger_t,
                    capture_t: job.capture_t,
                    sdb_update_t: t,
                    latency: self.sc.latency.serial_total(),
                    kind: *kind,
                    displacement: *displacement,
                    accepted: result.is_ok(),
                    error: result.as_ref().err().map(|e| e.to_string()),
                });
            }
            match result {
                Ok(()) => {
                    self.report.plans_applied += 1;
                    match decision {
                        Decision::Pending { step, .. } => self.planned_step = Some(step),
                        Decision::Retarget { .. } => self.planned_step = Some(self.gait.sdb().cursor()),
                        Decision::Start(_) => {}
                    }
                }
                Err(PatternError::RevisionConflict { .. }) => self.report.plans_stale += 1,
                Err(e @ PatternError::ReplanOutOfRange { .. }) => {
                    return Err((FailureReason::ReplanOutOfRange, e.to_string()));
                }
                Err(_) => self.report.plans_rejected += 1,
            }
        }
        Ok(())
    }

    fn after_tick(&mut self, out: &TickOutput, dt: f64) -> Result<(), (FailureReason, String)> {
        let t = out.t;
        let sdb = self.gait.sdb();
        if self.report.walk_start.is_none() {
            if let Some(a) = sdb.active() {
                self.report.walk_start = Some(a.start_time);
            }
        }
        if let Some(i) = out.touchdown {
            let step = sdb.entries()[i].target;
            let coverage = check_touchdown(&step, &self.world.boxes, self.sc.sim.touchdown_height_tol);
            self.report.touchdowns.push(TouchdownRecord {
                t,
                index: i,
                side: step.side,
                x: step.x,
                y: step.y,
                z: step.z,
                yaw: step.yaw,
                coverage,
            });
            self.report.min_coverage = self.report.min_coverage.min(coverage);
            if coverage < 1.0 - COVERAGE_EPS {
                return Err((
                    FailureReason::FootOffTerrain,
                    format!(
                        "touchdown {i} at ({:.3}, {:.3}) covers {:.1} % of the sole",
                        step.x,
                        step.y,
                        100.0 * coverage
                    ),
                ));
            }
            let other = self.gait.sdb().planted(step.side.opposite()).x;
            self.report.distance = self.report.distance.max(0.5 * (step.x + other) - self.start_mid_x);
            if !self.goal_reached && step.x >= self.sc.goal_x {
                self.goal_reached = true;
                self.jobs.clear();
                self.gait.stop(0).map_err(|e| (FailureReason::Timeout, e.to_string()))?;
            }
            let sdb = self.gait.sdb();
            if self.goal_reached && sdb.is_standing() {
                let (a, b) = sdb.last_two();
                self.report.walk_end = Some(t);
                self.report.distance = 0.5 * (a.x + b.x) - self.start_mid_x;
                if let Some(ws) = self.report.walk_start {
                    self.report.mean_speed = self.report.distance / (t - ws).max(1e-9);
                }
                self.settle_since = Some(t);
            }
        }

        let lipm = self.gait.config().lipm;
        let com = out.com;
        let cp_ref = self.fb.capture_point(com.pos, com.vel);
        let vel = self.vel_filter.as_mut().map_or(com.vel, |f| f.filter(com.vel));
        let cp_meas = self.fb.capture_point(com.pos, vel);
        let cz = czmp(cp_ref, cp_meas, out.zmp_ref, &self.fb);

        let sdb = self.gait.sdb();
        let (left, right) = (*sdb.planted(Side::Left), *sdb.planted(Side::Right));
        let (w_left, w_right, support): (f64, f64, Vec<Vec2>) = match out.phase {
            SupportPhase::Single(Side::Left) => (1.0, 0.0, left.corners().to_vec()),
            SupportPhase::Single(Side::Right) => (0.0, 1.0, right.corners().to_vec()),
            _ => {
                let (wl, wr) = foot_weight_distribution(cz, left.position(), right.position());
                let mut pts = left.corners().to_vec();
                pts.extend(right.corners());
                (wl, wr, pts)
            }
        };
        let outside = distance_outside_convex(&convex_hull(&support), cz);
        if outside > self.sc.sim.zmp_margin {
            self.zmp_violation += dt;
            if self.zmp_violation > self.sc.sim.zmp_violation_time + 1e-9 {
                return Err((
                    FailureReason::ZmpOutsideSupport,
                    format!(
                        "commanded ZMP {:.3} m outside the support polygon at t = {t:.3}",
                        outside
                    ),
                ));
            }
        } else {
            self.zmp_violation = 0.0;
        }
        self.probe
            .tick(cz, dt, self.report.walk_start.is_some_and(|ws| t >= ws));

        let zmp = com.zmp(&lipm);
        self.rows.push(TelemetryRow {
            t,
            com_x: com.pos[0],
            com_y: com.pos[1],
            com_vx: com.vel[0],
            com_vy: com.vel[1],
            zmp_ref_x: out.zmp_ref[0],
            zmp_ref_y: out.zmp_ref[1],
            zmp_meas_x: zmp[0],
            zmp_meas_y: zmp[1],
            swing_x: out.swing.pos[0],
            swing_y: out.swing.pos[1],
            swing_z: out.swing.pos[2],
            sdb_revision: out.revision,
            support_phase: out.phase.label().to_string(),
            czmp_x: cz[0],
            czmp_y: cz[1],
            w_left,
            w_right,
        });
        Ok(())
    }
}

fn distance3(a: &Footstep, b: &Footstep) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt()
}

/// Whether the whole sole lies inside the mapped area; steps beyond it are
/// not judged by that map.
fn fully_inside(step: &Footstep, grid: &SteppableGrid) -> bool {
    let b = grid.bounds();
    step.corners().iter().all(|&c| b.contains(c))
}
