use super::{LipmParams, PatternError, StepDataBuffer};
use crate::geometry::Vec2;
use crate::planner::Footstep;

/// Piecewise-linear ZMP reference built from an SDB snapshot: hold the
/// support foot during single support, ramp between feet during double
/// support. Before the first keyframe and after the last the end values are
/// held.
#[derive(Debug, Clone, PartialEq)]
pub struct ZmpKeyframes {
    keys: Vec<(f64, Vec2)>,
}

fn xy(f: &Footstep) -> Vec2 {
    [f.x, f.y]
}

fn mid(a: &Footstep, b: &Footstep) -> Vec2 {
    [0.5 * (a.x + b.x), 0.5 * (a.y + b.y)]
}

impl ZmpKeyframes {
    /// Keyframes for the buffer; steps that finished before the active one
    /// are skipped. Requires two future steps unless the buffer is standing
    /// or stopping.
    pub fn from_sdb(sdb: &StepDataBuffer) -> Result<Self, PatternError> {
        if !sdb.is_standing() && !sdb.is_stopping() && sdb.future_count() < 2 {
            return Err(PatternError::InsufficientSteps {
                available: sdb.future_count(),
            });
        }
        let e = sdb.entries();
        let n = e.len();
        let ws = sdb.walk_start();
        if n <= ws {
            let (a, b) = sdb.last_two();
            return Ok(Self {
                keys: vec![(0.0, mid(a, b))],
            });
        }
        let start_mid = mid(&e[ws - 2].target, &e[ws - 1].target);
        let from = ws.max(sdb.cursor().saturating_sub(1));
        let mut keys = Vec::with_capacity(3 * (n - from) + 2);
        for i in from..n {
            let s = &e[i];
            let prev = if i == ws { start_mid } else { xy(&e[i - 2].target) };
            let support = xy(&e[i - 1].target);
            keys.push((s.start_time, prev));
            keys.push((s.dsp_end(), support));
            keys.push((s.end_time(), support));
        }
        // settle between the last two feet
        let last = &e[n - 1];
        let ramp = (last.dsp_fraction * last.step_duration).max(1e-3);
        keys.push((last.end_time() + ramp, mid(&e[n - 2].target, &last.target)));
        Ok(Self { keys })
    }

    pub fn keys(&self) -> &[(f64, Vec2)] {
        &self.keys
    }

    pub fn eval(&self, t: f64) -> Vec2 {
        let k = &self.keys;
        let i = k.partition_point(|(tk, _)| *tk <= t);
        if i == 0 {
            return k[0].1;
        }
        if i == k.len() {
            return k[k.len() - 1].1;
        }
        lerp(k[i - 1], k[i], t)
    }

    /// `n` samples at `t0 + j * dt`, written into `out_x` / `out_y`.
    pub fn sample_into(&self, t0: f64, dt: f64, n: usize, out_x: &mut Vec<f64>, out_y: &mut Vec<f64>) {
        out_x.clear();
        out_y.clear();
        let k = &self.keys;
        let mut i = k.partition_point(|(tk, _)| *tk <= t0);
        for j in 0..n {
            let t = t0 + j as f64 * dt;
            while i < k.len() && k[i].0 <= t {
                i += 1;
            }
            let p = if i == 0 {
                k[0].1
            } else if i == k.len() {
                k[k.len() - 1].1
            } else {
                lerp(k[i - 1], k[i], t)
            };
            out_x.push(p[0]);
            out_y.push(p[1]);
        }
    }
}

fn lerp(a: (f64, Vec2), b: (f64, Vec2), t: f64) -> Vec2 {
    let span = b.0 - a.0;
    if span <= 0.0 {
        return b.1;
    }
    let s = ((t - a.0) / span).clamp(0.0, 1.0);
    [a.1[0] + s * (b.1[0] - a.1[0]), a.1[1] + s * (b.1[1] - a.1[1])]
}

/// Reference samples over `[t, t + preview_horizon]` at the control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct ZmpWindow {
    pub t0: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

pub fn zmp_reference(sdb: &StepDataBuffer, t: f64, params: &LipmParams) -> Result<ZmpWindow, PatternError> {
    let keys = ZmpKeyframes::from_sdb(sdb)?;
    let n = params.preview_steps() + 1;
    let (mut x, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n));
    keys.sample_into(t, params.dt, n, &mut x, &mut y);
    Ok(ZmpWindow { t0: t, x, y })
}
