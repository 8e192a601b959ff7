use super::PatternError;
use crate::geometry::wrap_angle;
use crate::planner::Footstep;

/// Quintic polynomial on `[t0, t1]` in local time `tau = t - t0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quintic {
    pub t0: f64,
    pub t1: f64,
    c: [f64; 6],
}

impl Quintic {
    /// Unique quintic matching position, velocity and acceleration at both
    /// ends.
    pub fn new(t0: f64, t1: f64, start: [f64; 3], end: [f64; 3]) -> Self {
        let t = t1 - t0;
        let [p0, v0, a0] = start;
        let [p1, v1, a1] = end;
        let (c0, c1, c2) = (p0, v0, 0.5 * a0);
        let h = p1 - (c0 + c1 * t + c2 * t * t);
        let dv = v1 - (c1 + 2.0 * c2 * t);
        let da = a1 - 2.0 * c2;
        let t2 = t * t;
        let c3 = (20.0 * h - 8.0 * dv * t + da * t2) / (2.0 * t2 * t);
        let c4 = (-30.0 * h + 14.0 * dv * t - 2.0 * da * t2) / (2.0 * t2 * t2);
        let c5 = (12.0 * h - 6.0 * dv * t + da * t2) / (2.0 * t2 * t2 * t);
        Self {
            t0,
            t1,
            c: [c0, c1, c2, c3, c4, c5],
        }
    }

    pub fn constant(t0: f64, t1: f64, p: f64) -> Self {
        Self {
            t0,
            t1,
            c: [p, 0.0, 0.0, 0.0, 0.0, 0.0],
        }
    }

    /// Position, velocity, acceleration; time is clamped to the interval.
    pub fn eval(&self, t: f64) -> [f64; 3] {
        let s = (t.clamp(self.t0, self.t1)) - self.t0;
        let c = &self.c;
        let p = c[0] + s * (c[1] + s * (c[2] + s * (c[3] + s * (c[4] + s * c[5]))));
        let v = c[1] + s * (2.0 * c[2] + s * (3.0 * c[3] + s * (4.0 * c[4] + s * 5.0 * c[5])));
        let a = 2.0 * c[2] + s * (6.0 * c[3] + s * (12.0 * c[4] + s * 20.0 * c[5]));
        [p, v, a]
    }
}

/// Consecutive quintic pieces of one axis.
#[derive(Debug, Clone, PartialEq)]
struct Piecewise(Vec<Quintic>);

impl Piecewise {
    fn eval(&self, t: f64) -> [f64; 3] {
        let i = self.0.partition_point(|q| q.t0 <= t).saturating_sub(1);
        self.0[i].eval(t)
    }

    /// Drop pieces starting at or after `t` and end the last kept piece at
    /// `t`.
    fn cut_at(&mut self, t: f64) {
        self.0.retain(|q| q.t0 < t);
        if let Some(last) = self.0.last_mut() {
            last.t1 = last.t1.min(t);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingState {
    pub pos: [f64; 3],
    pub vel: [f64; 3],
    pub yaw: f64,
}

/// Swing-foot path: x, y and yaw are single quintics with zero boundary
/// velocity and acceleration; z rises to `max(z0, z1) + apex_height` at
/// mid-swing and descends, each half a quintic. Retargeting appends new
/// pieces from the retarget instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SwingTrajectory {
    pub start: Footstep,
    pub target: Footstep,
    pub apex_height: f64,
    pub t0: f64,
    pub duration: f64,
    x: Piecewise,
    y: Piecewise,
    z: Piecewise,
    yaw: Piecewise,
}

impl SwingTrajectory {
    pub fn t_end(&self) -> f64 {
        self.t0 + self.duration
    }

    pub fn eval(&self, t: f64) -> SwingState {
        let (x, y, z, yaw) = (self.x.eval(t), self.y.eval(t), self.z.eval(t), self.yaw.eval(t));
        SwingState {
            pos: [x[0], y[0], z[0]],
            vel: [x[1], y[1], z[1]],
            yaw: yaw[0],
        }
    }

    /// Full (position, velocity, acceleration) of each axis, used to match
    /// state at a retarget seam.
    fn axes_at(&self, t: f64) -> [[f64; 3]; 4] {
        [self.x.eval(t), self.y.eval(t), self.z.eval(t), self.yaw.eval(t)]
    }
}

pub fn swing_trajectory(
    start: &Footstep,
    target: &Footstep,
    t0: f64,
    duration: f64,
    apex_height: f64,
) -> Result<SwingTrajectory, PatternError> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(PatternError::InvalidParams("swing duration must be > 0".into()));
    }
    let t1 = t0 + duration;
    let tm = t0 + 0.5 * duration;
    let rest = |p: f64| [p, 0.0, 0.0];
    let yaw1 = start.yaw + wrap_angle(target.yaw - start.yaw);
    let apex = start.z.max(target.z) + apex_height;
    Ok(SwingTrajectory {
        start: *start,
        target: *target,
        apex_height,
        t0,
        duration,
        x: Piecewise(vec![Quintic::new(t0, t1, rest(start.x), rest(target.x))]),
        y: Piecewise(vec![Quintic::new(t0, t1, rest(start.y), rest(target.y))]),
        z: Piecewise(vec![
            Quintic::new(t0, tm, rest(start.z), rest(apex)),
            Quintic::new(tm, t1, rest(apex), rest(target.z)),
        ]),
        yaw: Piecewise(vec![Quintic::new(t0, t1, rest(start.yaw), rest(yaw1))]),
    })
}

/// Redirect a swing in flight to `new_target` without changing the
/// touchdown time. The new pieces start from the old trajectory's position,
/// velocity and acceleration at `now`.
pub fn retarget_swing(
    current: &SwingTrajectory,
    now: f64,
    new_target: &Footstep,
    min_window: f64,
) -> Result<SwingTrajectory, PatternError> {
    let t1 = current.t_end();
    if now <= current.t0 {
        return swing_trajectory(
            &current.start,
            new_target,
            current.t0,
            current.duration,
            current.apex_height,
        );
    }
    let remaining = t1 - now;
    if remaining < min_window {
        return Err(PatternError::RetargetTooLate { remaining });
    }
    let [sx, sy, sz, syaw] = current.axes_at(now);
    let rest = |p: f64| [p, 0.0, 0.0];
    let mut next = current.clone();
    next.target = *new_target;
    for axis in [&mut next.x, &mut next.y, &mut next.z, &mut next.yaw] {
        axis.cut_at(now);
    }
    next.x.0.push(Quintic::new(now, t1, sx, rest(new_target.x)));
    next.y.0.push(Quintic::new(now, t1, sy, rest(new_target.y)));
    let yaw1 = syaw[0] + wrap_angle(new_target.yaw - syaw[0]);
    next.yaw.0.push(Quintic::new(now, t1, syaw, rest(yaw1)));
    let tm = current.t0 + 0.5 * current.duration;
    if now < tm {
        let apex = current.start.z.max(new_target.z) + current.apex_height;
        next.z.0.push(Quintic::new(now, tm, sz, rest(apex)));
        next.z.0.push(Quintic::new(tm, t1, rest(apex), rest(new_target.z)));
    } else {
        next.z.0.push(Quintic::new(now, t1, sz, rest(new_target.z)));
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Side;

    fn pose(x: f64, y: f64, z: f64) -> Footstep {
        Footstep::new(Side::Right, x, y, z, 0.0)
    }

    #[test]
    fn quintic_boundary_conditions() {
        let q = Quintic::new(1.0, 1.45, [0.1, 0.3, -2.0], [0.5, -0.2, 1.0]);
        let a = q.eval(1.0);
        let b = q.eval(1.45);
        for (got, want) in a.iter().zip([0.1, 0.3, -2.0]).chain(b.iter().zip([0.5, -0.2, 1.0])) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn same_start_and_target_is_constant() {
        let p = pose(0.3, -0.1, 0.0);
        let s = swing_trajectory(&p, &p, 0.0, 0.45, 0.0).unwrap();
        for i in 0..=45 {
            let st = s.eval(i as f64 * 0.01);
            assert_eq!([st.pos[0], st.pos[1], st.pos[2]], [0.3, -0.1, 0.0]);
        }
    }

    #[test]
    fn endpoints_rest_and_apex() {
        let s = swing_trajectory(&pose(0.0, -0.1, 0.0), &pose(0.3, -0.12, 0.03), 2.0, 0.45, 0.05).unwrap();
        for t in [2.0, 2.45] {
            let st = s.eval(t);
            assert!(st.vel.iter().all(|v| v.abs() < 1e-9));
        }
        let mid = s.eval(2.225);
        assert!((mid.pos[2] - 0.08).abs() < 1e-12);
        let end = s.eval(2.45);
        assert!((end.pos[0] - 0.3).abs() < 1e-12 && (end.pos[2] - 0.03).abs() < 1e-12);
        // the apex is the maximum height
        let zmax = (0..=450)
            .map(|i| s.eval(2.0 + i as f64 * 0.001).pos[2])
            .fold(f64::MIN, f64::max);
        assert!(zmax <= 0.08 + 1e-12);
    }

    #[test]
    fn unchanged_retarget_is_identity() {
        let target = pose(0.3, -0.1, 0.0);
        let s = swing_trajectory(&pose(0.0, -0.1, 0.0), &target, 0.0, 0.45, 0.05).unwrap();
        let r = retarget_swing(&s, 0.225, &target, 0.1).unwrap();
        for i in 0..=450 {
            let t = i as f64 * 0.001;
            let (a, b) = (s.eval(t), r.eval(t));
            for k in 0..3 {
                assert!((a.pos[k] - b.pos[k]).abs() < 1e-9, "t={t}");
            }
        }
    }

    #[test]
    fn retarget_seam_is_smooth() {
        let s = swing_trajectory(&pose(0.0, -0.1, 0.0), &pose(0.3, -0.1, 0.0), 0.0, 0.45, 0.05).unwrap();
        let now = 0.2;
        let r = retarget_swing(&s, now, &pose(0.38, -0.1, 0.0), 0.1).unwrap();
        let h = 1e-7;
        for k in 0..3 {
            let before = r.eval(now - h).pos[k];
            let at = r.eval(now).pos[k];
            let after = r.eval(now + h).pos[k];
            assert!((at - before).abs() < 1e-6 && (after - at).abs() < 1e-6);
            let v_left = (at - before) / h;
            let v_right = (after - at) / h;
            assert!((v_left - v_right).abs() < 1e-4, "axis {k}: {v_left} {v_right}");
        }
        let end = r.eval(0.45);
        assert!((end.pos[0] - 0.38).abs() < 1e-12);
        assert!(end.vel[2].abs() < 1e-9);
    }

    #[test]
    fn late_retarget_is_refused() {
        let s = swing_trajectory(&pose(0.0, -0.1, 0.0), &pose(0.3, -0.1, 0.0), 0.05, 0.45, 0.05).unwrap();
        // 95 % into a 0.5 s step (swing from 0.05 to 0.5)
        assert!(matches!(
            retarget_swing(&s, 0.475, &pose(0.35, -0.1, 0.0), 0.1),
            Err(PatternError::RetargetTooLate { .. })
        ));
    }
}
