use serde::{Deserialize, Serialize};

use super::PatternError;
use crate::planner::Footstep;

/// Timing of the steps appended to a buffer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepTiming {
    pub step_duration: f64,
    pub dsp_fraction: f64,
    /// Pause between a walk request from standing and the first step, so
    /// the CoM can shift over the first support foot.
    pub start_delay: f64,
    /// Largest accepted move of the active landing target.
    pub replan_limit: f64,
}

impl Default for StepTiming {
    fn default() -> Self {
        Self {
            step_duration: 0.5,
            dsp_fraction: 0.1,
            start_delay: 1.6,
            replan_limit: 0.5,
        }
    }
}

impl StepTiming {
    pub fn validate(&self) -> Result<(), PatternError> {
        if !(self.step_duration > 0.0 && self.step_duration.is_finite()) {
            return Err(PatternError::InvalidParams("step_duration must be > 0".into()));
        }
        if !(0.0..0.5).contains(&self.dsp_fraction) {
            return Err(PatternError::InvalidParams("dsp_fraction must lie in [0, 0.5)".into()));
        }
        if !(self.start_delay >= 0.0 && self.replan_limit >= 0.0) {
            return Err(PatternError::InvalidParams(
                "start_delay and replan_limit must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepState {
    Pending,
    Active,
    Completed,
}

/// One timed footstep. The step starts with a double-support phase of
/// `dsp_fraction * step_duration`; the swing fills the rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepData {
    pub target: Footstep,
    pub start_time: f64,
    pub step_duration: f64,
    pub dsp_fraction: f64,
    pub state: StepState,
}

impl StepData {
    pub fn dsp_end(&self) -> f64 {
        self.start_time + self.dsp_fraction * self.step_duration
    }

    pub fn end_time(&self) -> f64 {
        self.start_time + self.step_duration
    }

    pub fn swing_duration(&self) -> f64 {
        (1.0 - self.dsp_fraction) * self.step_duration
    }
}

/// Slack for comparing tick times against step boundaries.
pub(crate) const TIME_EPS: f64 = 1e-9;

/// Ordered footstep commands. The first two entries are the initial stance
/// feet (already completed); `cursor` points at the step in progress or, if
/// none, one past the last completed entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDataBuffer {
    entries: Vec<StepData>,
    cursor: usize,
    revision: u64,
    /// First entry of the current walk; its weight shift starts from the
    /// mid-feet point instead of the previous support foot.
    walk_start: usize,
    stopping: bool,
    timing: StepTiming,
}

impl StepDataBuffer {
    /// Standing buffer. `first_swing` is the side that will step first.
    pub fn standing(left: Footstep, right: Footstep, first_swing: crate::geometry::Side, timing: StepTiming) -> Self {
        use crate::geometry::Side;
        let (a, b) = match first_swing {
            Side::Left => (left, right),
            Side::Right => (right, left),
        };
        let stance = |f: Footstep| StepData {
            target: f,
            start_time: 0.0,
            step_duration: 0.0,
            dsp_fraction: 0.0,
            state: StepState::Completed,
        };
        Self {
            entries: vec![stance(a), stance(b)],
            cursor: 2,
            revision: 0,
            walk_start: 2,
            stopping: false,
            timing,
        }
    }

    pub fn entries(&self) -> &[StepData] {
        &self.entries
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn walk_start(&self) -> usize {
        self.walk_start
    }

    pub fn is_stopping(&self) -> bool {
        self.stopping
    }

    pub fn timing(&self) -> &StepTiming {
        &self.timing
    }

    /// The step at the cursor if it has started.
    pub fn active(&self) -> Option<&StepData> {
        self.entries.get(self.cursor).filter(|s| s.state == StepState::Active)
    }

    pub fn pending(&self) -> &[StepData] {
        let from = if self.active().is_some() {
            self.cursor + 1
        } else {
            self.cursor
        };
        &self.entries[from.min(self.entries.len())..]
    }

    /// Active plus pending steps.
    pub fn future_count(&self) -> usize {
        self.entries.len() - self.cursor.min(self.entries.len())
    }

    pub fn is_standing(&self) -> bool {
        self.future_count() == 0
    }

    /// Current landing spot (or resting place) of each foot:
    /// `(last entry, the one before)`.
    pub fn last_two(&self) -> (&Footstep, &Footstep) {
        let n = self.entries.len();
        (&self.entries[n - 1].target, &self.entries[n - 2].target)
    }

    /// Where `side` is planted at time of the cursor: the latest completed
    /// entry of that side.
    pub fn planted(&self, side: crate::geometry::Side) -> &Footstep {
        self.entries[..self.cursor.min(self.entries.len())]
            .iter()
            .rev()
            .find(|e| e.target.side == side)
            .map(|e| &e.target)
            .expect("stance entries cover both sides")
    }

    /// Previous entry of the same side as entry `i` (the swing start).
    pub fn swing_origin(&self, i: usize) -> &Footstep {
        let side = self.entries[i].target.side;
        self.entries[..i]
            .iter()
            .rev()
            .find(|e| e.target.side == side)
            .map(|e| &e.target)
            .expect("stance entries cover both sides")
    }

    /// Move the cursor to match `now`: finished steps complete, a started
    /// step becomes active. Every state change bumps the revision. Returns
    /// true if anything changed.
    pub fn advance(&mut self, now: f64) -> bool {
        let mut changed = false;
        while let Some(e) = self.entries.get_mut(self.cursor) {
            match e.state {
                StepState::Active if now + TIME_EPS >= e.end_time() => {
                    e.state = StepState::Completed;
                    self.cursor += 1;
                }
                StepState::Pending if now + TIME_EPS >= e.start_time => e.state = StepState::Active,
                _ => break,
            }
            changed = true;
            self.revision += 1;
        }
        changed
    }

    /// Begin a controlled stop: keep at most `keep` steps after the active
    /// one and accept fewer than two future steps from now on.
    pub fn stop(&self, keep: usize, at_revision: u64) -> Result<Self, PatternError> {
        self.check_revision(at_revision)?;
        let mut next = self.clone();
        let from = if next.active().is_some() {
            next.cursor + 1
        } else {
            next.cursor
        };
        next.entries.truncate((from + keep).min(next.entries.len()));
        next.stopping = true;
        next.revision += 1;
        Ok(next)
    }

    fn check_revision(&self, at_revision: u64) -> Result<(), PatternError> {
        if at_revision != self.revision {
            return Err(PatternError::RevisionConflict {
                expected: self.revision,
                found: at_revision,
            });
        }
        Ok(())
    }
}

/// Replace the not-yet-executed part of the buffer.
///
/// If `new_steps[0]` has the side of the active step it becomes that step's
/// new landing target (timing unchanged) and the rest replace the pending
/// steps; otherwise all of `new_steps` replace the pending steps. From
/// standing, the first new step starts after the buffer's start delay.
/// Returns a new buffer with the revision incremented.
pub fn update_sdb(
    sdb: &StepDataBuffer,
    new_steps: &[Footstep],
    at_revision: u64,
    now: f64,
) -> Result<StepDataBuffer, PatternError> {
    sdb.check_revision(at_revision)?;
    if new_steps.len() < 2 && !sdb.stopping {
        return Err(PatternError::InsufficientSteps {
            available: new_steps.len(),
        });
    }
    let mut next = sdb.clone();
    let mut rest = new_steps;
    let active_idx = next.active().map(|_| next.cursor);

    if let Some(i) = active_idx {
        next.entries.truncate(i + 1);
        if let Some(first) = rest.first().filter(|s| s.side == next.entries[i].target.side) {
            let old = next.entries[i].target;
            let d = ((first.x - old.x).powi(2) + (first.y - old.y).powi(2) + (first.z - old.z).powi(2)).sqrt();
            if d > next.timing.replan_limit {
                return Err(PatternError::ReplanOutOfRange {
                    displacement: d,
                    limit: next.timing.replan_limit,
                });
            }
            next.entries[i].target = *first;
            rest = &rest[1..];
        }
    }
    // a walk that is scheduled but not started keeps its start time
    let scheduled = next
        .entries
        .get(next.cursor)
        .filter(|_| active_idx.is_none())
        .map(|e| e.start_time);
    if active_idx.is_none() {
        next.entries.truncate(next.cursor);
        next.walk_start = next.cursor;
        next.stopping = false;
    }
    let mut t = match (active_idx, scheduled) {
        (Some(i), _) => next.entries[i].end_time(),
        (None, Some(t0)) => t0,
        (None, None) => now + next.timing.start_delay,
    };
    let mut side = next.entries.last().map(|e| e.target.side.opposite());
    for s in rest {
        if side.is_some_and(|expected| expected != s.side) {
            return Err(PatternError::SideMismatch);
        }
        next.entries.push(StepData {
            target: *s,
            start_time: t,
            step_duration: next.timing.step_duration,
            dsp_fraction: next.timing.dsp_fraction,
            state: StepState::Pending,
        });
        t += next.timing.step_duration;
        side = Some(s.side.opposite());
    }
    next.revision += 1;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Side;

    fn fs(side: Side, x: f64) -> Footstep {
        let y = if side == Side::Left { 0.1 } else { -0.1 };
        Footstep::new(side, x, y, 0.0, 0.0)
    }

    fn standing() -> StepDataBuffer {
        StepDataBuffer::standing(
            fs(Side::Left, 0.0),
            fs(Side::Right, 0.0),
            Side::Right,
            StepTiming {
                start_delay: 0.8,
                ..Default::default()
            },
        )
    }

    fn walking() -> StepDataBuffer {
        let s = standing();
        let steps = [fs(Side::Right, 0.2), fs(Side::Left, 0.4), fs(Side::Right, 0.6)];
        update_sdb(&s, &steps, 0, 0.0).unwrap()
    }

    #[test]
    fn start_from_standing() {
        let s = walking();
        assert_eq!(s.revision(), 1);
        assert_eq!(s.entries().len(), 5);
        assert_eq!(s.entries()[2].start_time, 0.8);
        assert_eq!(s.entries()[3].start_time, 1.3);
        assert!(s.active().is_none());
        assert_eq!(s.future_count(), 3);
    }

    #[test]
    fn advance_moves_cursor_and_bumps_revision() {
        let mut s = walking();
        assert!(!s.advance(0.5));
        assert!(s.advance(0.8));
        assert_eq!(s.active().unwrap().target.x, 0.2);
        let r = s.revision();
        s.advance(1.3);
        assert_eq!(s.cursor(), 3);
        assert!(s.revision() > r);
        s.advance(10.0);
        assert!(s.is_standing());
    }

    #[test]
    fn identical_replacement_only_bumps_revision() {
        let mut s = walking();
        s.advance(0.9);
        let same: Vec<Footstep> = s.entries()[2..].iter().map(|e| e.target).collect();
        let u = update_sdb(&s, &same, s.revision(), 0.9).unwrap();
        assert_eq!(u.revision(), s.revision() + 1);
        assert_eq!(u.entries(), s.entries());
    }

    #[test]
    fn active_retarget_within_limit() {
        let mut s = walking();
        s.advance(0.9);
        let new = [fs(Side::Right, 0.28), fs(Side::Left, 0.5), fs(Side::Right, 0.7)];
        let u = update_sdb(&s, &new, s.revision(), 0.9).unwrap();
        let a = u.active().unwrap();
        assert_eq!(a.target.x, 0.28);
        assert_eq!(a.start_time, 0.8);
        assert_eq!(u.entries()[3].start_time, 1.3);
    }

    #[test]
    fn far_retarget_is_rejected() {
        let mut s = walking();
        s.advance(0.9);
        let new = [fs(Side::Right, 0.8), fs(Side::Left, 1.0)];
        assert!(matches!(
            update_sdb(&s, &new, s.revision(), 0.9),
            Err(PatternError::ReplanOutOfRange { .. })
        ));
    }

    #[test]
    fn pending_only_replacement() {
        let mut s = walking();
        s.advance(0.9);
        let new = [fs(Side::Left, 0.45), fs(Side::Right, 0.65)];
        let u = update_sdb(&s, &new, s.revision(), 0.9).unwrap();
        assert_eq!(u.active().unwrap().target.x, 0.2);
        assert_eq!(u.entries()[3].target.x, 0.45);
        assert_eq!(u.entries().len(), 5);
    }

    #[test]
    fn errors() {
        let s = walking();
        assert!(matches!(
            update_sdb(&s, &[fs(Side::Left, 0.4), fs(Side::Right, 0.6)], 0, 0.0),
            Err(PatternError::RevisionConflict { .. })
        ));
        assert!(matches!(
            update_sdb(&s, &[fs(Side::Right, 0.2)], 1, 0.0),
            Err(PatternError::InsufficientSteps { .. })
        ));
        assert_eq!(
            update_sdb(&s, &[fs(Side::Left, 0.2), fs(Side::Left, 0.4)], 1, 0.0),
            Err(PatternError::SideMismatch)
        );
    }

    #[test]
    fn stop_truncates() {
        let mut s = walking();
        s.advance(0.9);
        let st = s.stop(1, s.revision()).unwrap();
        assert!(st.is_stopping());
        assert_eq!(st.future_count(), 2);
        assert!(st.revision() > s.revision());
    }
}
