use serde::{Deserialize, Serialize};

use super::sdb::TIME_EPS;
use super::{
    preview_gains, retarget_swing, swing_trajectory, tick_com, update_sdb, ComState, LipmParams, PatternError,
    PreviewGains, PreviewWeights, StepDataBuffer, StepTiming, SwingState, SwingTrajectory, ZmpKeyframes,
};
use crate::geometry::Side;
use crate::planner::Footstep;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaitConfig {
    pub lipm: LipmParams,
    pub weights: PreviewWeights,
    pub timing: StepTiming,
    pub swing_apex: f64,
    /// Minimum swing time left for a landing-target change.
    pub retarget_window: f64,
}

impl Default for GaitConfig {
    fn default() -> Self {
        Self {
            lipm: LipmParams::default(),
            weights: PreviewWeights::default(),
            timing: StepTiming::default(),
            swing_apex: 0.05,
            retarget_window: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportPhase {
    Standing,
    Double,
    Single(Side),
}

impl SupportPhase {
    pub fn label(&self) -> &'static str {
        match self {
            SupportPhase::Standing => "standing",
            SupportPhase::Double => "dsp",
            SupportPhase::Single(Side::Left) => "ssp_left",
            SupportPhase::Single(Side::Right) => "ssp_right",
        }
    }
}

/// State at the start of one control tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickOutput {
    pub t: f64,
    pub com: ComState,
    pub zmp_ref: [f64; 2],
    pub phase: SupportPhase,
    /// Moving foot in single support; otherwise the foot that moves next
    /// (or moved last), at rest.
    pub swing: SwingState,
    pub swing_side: Side,
    pub revision: u64,
    /// Buffer index of a step that touched down at this tick.
    pub touchdown: Option<usize>,
}

/// Owns the CoM state and the SDB; call [`GaitGenerator::step`] once per
/// control tick.
#[derive(Debug, Clone)]
pub struct GaitGenerator {
    cfg: GaitConfig,
    gains: PreviewGains,
    sdb: StepDataBuffer,
    com: ComState,
    tick: u64,
    swing: Option<(usize, SwingTrajectory)>,
    keys: Option<(u64, ZmpKeyframes)>,
    ref_x: Vec<f64>,
    ref_y: Vec<f64>,
}

impl GaitGenerator {
    /// Standing on `left` / `right` with the CoM at rest above their
    /// midpoint; `first_swing` steps first.
    pub fn new(cfg: GaitConfig, left: Footstep, right: Footstep, first_swing: Side) -> Result<Self, PatternError> {
        cfg.timing.validate()?;
        let gains = preview_gains(&cfg.lipm, &cfg.weights)?;
        let sdb = StepDataBuffer::standing(left, right, first_swing, cfg.timing);
        let com = ComState::at_rest(0.5 * (left.x + right.x), 0.5 * (left.y + right.y));
        Ok(Self {
            cfg,
            gains,
            sdb,
            com,
            tick: 0,
            swing: None,
            keys: None,
            ref_x: Vec::new(),
            ref_y: Vec::new(),
        })
    }

    pub fn config(&self) -> &GaitConfig {
        &self.cfg
    }

    pub fn gains(&self) -> &PreviewGains {
        &self.gains
    }

    pub fn sdb(&self) -> &StepDataBuffer {
        &self.sdb
    }

    pub fn com(&self) -> &ComState {
        &self.com
    }

    /// Time of the next tick.
    pub fn now(&self) -> f64 {
        self.tick as f64 * self.cfg.lipm.dt
    }

    pub fn phase_at(&self, t: f64) -> SupportPhase {
        match self.sdb.active() {
            None => SupportPhase::Standing,
            Some(a) if t + TIME_EPS < a.dsp_end() => SupportPhase::Double,
            Some(a) => SupportPhase::Single(a.target.side.opposite()),
        }
    }

    /// Feet on the ground now.
    pub fn support_feet(&self) -> Vec<Footstep> {
        match self.phase_at(self.now()) {
            SupportPhase::Single(side) => vec![*self.sdb.planted(side)],
            _ => vec![*self.sdb.planted(Side::Left), *self.sdb.planted(Side::Right)],
        }
    }

    /// Replace the unexecuted steps (see [`update_sdb`]). A change of the
    /// active landing target retargets the swing in flight.
    pub fn submit(&mut self, steps: &[Footstep], at_revision: u64) -> Result<(), PatternError> {
        let now = self.now();
        if let Some(a) = self.sdb.active() {
            let retarget = steps.first().is_some_and(|s| s.side == a.target.side && *s != a.target);
            let remaining = a.end_time() - now;
            if retarget && now + TIME_EPS >= a.dsp_end() && remaining < self.cfg.retarget_window {
                return Err(PatternError::RetargetTooLate { remaining });
            }
        }
        let next = update_sdb(&self.sdb, steps, at_revision, now)?;
        if let (Some((i, traj)), Some(a)) = (&self.swing, next.active()) {
            if *i == next.cursor() && traj.target != a.target {
                let t = retarget_swing(traj, now, &a.target, self.cfg.retarget_window)?;
                self.swing = Some((*i, t));
            }
        }
        self.sdb = next;
        Ok(())
    }

    /// Begin a controlled stop keeping at most `keep` pending steps.
    pub fn stop(&mut self, keep: usize) -> Result<(), PatternError> {
        self.sdb = self.sdb.stop(keep, self.sdb.revision())?;
        Ok(())
    }

    /// Advance one control tick. On error (too few future steps) nothing but
    /// the buffer cursor moves; stop or submit steps and call again.
    pub fn step(&mut self) -> Result<TickOutput, PatternError> {
        let t = self.now();
        let before = self.sdb.cursor();
        self.sdb.advance(t);
        let touchdown = (self.sdb.cursor() > before).then(|| self.sdb.cursor() - 1);

        let rev = self.sdb.revision();
        if self.keys.as_ref().is_none_or(|(r, _)| *r != rev) {
            self.keys = Some((rev, ZmpKeyframes::from_sdb(&self.sdb)?));
        }
        let keys = &self.keys.as_ref().expect("keyframes cached").1;
        let n = self.cfg.lipm.preview_steps() + 1;
        keys.sample_into(t, self.cfg.lipm.dt, n, &mut self.ref_x, &mut self.ref_y);

        let phase = self.phase_at(t);
        let (swing, swing_side) = self.swing_state(t, phase)?;
        let out = TickOutput {
            t,
            com: self.com,
            zmp_ref: [self.ref_x[0], self.ref_y[0]],
            phase,
            swing,
            swing_side,
            revision: rev,
            touchdown,
        };
        self.com = tick_com(&self.com, &self.ref_x, &self.ref_y, &self.gains);
        self.tick += 1;
        Ok(out)
    }

    fn swing_state(&mut self, t: f64, phase: SupportPhase) -> Result<(SwingState, Side), PatternError> {
        let rest = |f: &Footstep| SwingState {
            pos: [f.x, f.y, f.z],
            vel: [0.0; 3],
            yaw: f.yaw,
        };
        let cursor = self.sdb.cursor();
        let Some(active) = self.sdb.active().copied() else {
            self.swing = None;
            let (last, _) = self.sdb.last_two();
            return Ok((rest(last), last.side));
        };
        let origin = *self.sdb.swing_origin(cursor);
        if !matches!(phase, SupportPhase::Single(_)) {
            return Ok((rest(&origin), active.target.side));
        }
        let stale = self.swing.as_ref().is_none_or(|(i, _)| *i != cursor);
        if stale {
            let traj = swing_trajectory(
                &origin,
                &active.target,
                active.dsp_end(),
                active.swing_duration(),
                self.cfg.swing_apex,
            )?;
            self.swing = Some((cursor, traj));
        }
        let (_, traj) = self.swing.as_ref().expect("swing set above");
        Ok((traj.eval(t), active.target.side))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fs(side: Side, x: f64) -> Footstep {
        let y = if side == Side::Left { 0.1 } else { -0.1 };
        Footstep::new(side, x, y, 0.0, 0.0)
    }

    fn walk(n: usize) -> Vec<Footstep> {
        (0..n)
            .map(|i| {
                let side = if i % 2 == 0 { Side::Right } else { Side::Left };
                fs(side, 0.15 * (i + 1) as f64)
            })
            .collect()
    }

    #[test]
    fn standing_still_is_exact() {
        let mut g = GaitGenerator::new(
            GaitConfig::default(),
            fs(Side::Left, 0.0),
            fs(Side::Right, 0.0),
            Side::Right,
        )
        .unwrap();
        for _ in 0..500 {
            let o = g.step().unwrap();
            assert_eq!(o.com.pos, [0.0, 0.0]);
            assert_eq!(o.phase, SupportPhase::Standing);
        }
    }

    #[test]
    fn walks_and_stops() {
        let mut g = GaitGenerator::new(
            GaitConfig::default(),
            fs(Side::Left, 0.0),
            fs(Side::Right, 0.0),
            Side::Right,
        )
        .unwrap();
        g.submit(&walk(6), 0).unwrap();
        g.stop(6).unwrap();
        let mut touchdowns = 0;
        let mut max_err: f64 = 0.0;
        for _ in 0..3500 {
            let o = g.step().unwrap();
            touchdowns += usize::from(o.touchdown.is_some());
            let zmp = o.com.zmp(&g.config().lipm);
            max_err = max_err
                .max((zmp[0] - o.zmp_ref[0]).abs())
                .max((zmp[1] - o.zmp_ref[1]).abs());
        }
        assert_eq!(touchdowns, 6);
        assert!(g.sdb().is_standing());
        assert!((g.com().pos[0] - 0.825).abs() < 1e-3, "{:?}", g.com());
        assert!(max_err < 0.03, "zmp tracking error {max_err}");
    }

    #[test]
    fn swing_follows_retarget_continuously() {
        let mut g = GaitGenerator::new(
            GaitConfig::default(),
            fs(Side::Left, 0.0),
            fs(Side::Right, 0.0),
            Side::Right,
        )
        .unwrap();
        g.submit(&walk(4), 0).unwrap();
        // into the first swing (1.65 .. 2.1)
        let mut last = None;
        while g.now() < 1.8 - 1e-9 {
            last = Some(g.step().unwrap());
        }
        let mut moved = walk(4);
        for s in &mut moved {
            s.x += 0.08;
        }
        let before = *g.com();
        g.submit(&moved, g.sdb().revision()).unwrap();
        assert_eq!(*g.com(), before);
        let prev = last.unwrap();
        let o = g.step().unwrap();
        let dt = 0.002;
        for k in 0..3 {
            let fd = (o.swing.pos[k] - prev.swing.pos[k]) / dt;
            assert!((fd - o.swing.vel[k]).abs() < 0.05, "axis {k}");
        }
        while g.sdb().cursor() < 3 {
            g.step().unwrap();
        }
        assert_eq!(g.sdb().entries()[2].target.x, 0.15 + 0.08);
    }

    #[test]
    fn late_retarget_is_refused() {
        let mut g = GaitGenerator::new(
            GaitConfig::default(),
            fs(Side::Left, 0.0),
            fs(Side::Right, 0.0),
            Side::Right,
        )
        .unwrap();
        g.submit(&walk(4), 0).unwrap();
        while g.now() < 2.05 {
            g.step().unwrap();
        }
        let mut moved = walk(4);
        moved[0].x += 0.05;
        assert!(matches!(
            g.submit(&moved, g.sdb().revision()),
            Err(PatternError::RetargetTooLate { .. })
        ));
    }
}
