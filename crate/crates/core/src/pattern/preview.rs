use nalgebra::{Matrix3, Matrix4, RowVector3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::PatternError;

/// Cart-table (linear inverted pendulum) parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LipmParams {
    pub com_height: f64,
    pub gravity: f64,
    pub dt: f64,
    pub preview_horizon: f64,
}

impl Default for LipmParams {
    fn default() -> Self {
        Self {
            com_height: 0.7,
            gravity: 9.81,
            dt: 0.002,
            preview_horizon: 1.6,
        }
    }
}

impl LipmParams {
    pub fn validate(&self) -> Result<(), PatternError> {
        if !(self.com_height > 0.0 && self.gravity > 0.0 && self.dt > 0.0) {
            return Err(PatternError::InvalidParams(
                "com_height, gravity and dt must be > 0".into(),
            ));
        }
        if !(self.preview_horizon >= 1.0) {
            return Err(PatternError::InvalidParams("preview_horizon must be >= 1 s".into()));
        }
        Ok(())
    }

    pub fn preview_steps(&self) -> usize {
        (self.preview_horizon / self.dt).round() as usize
    }

    /// sqrt(g / z_c)
    pub fn omega(&self) -> f64 {
        (self.gravity / self.com_height).sqrt()
    }

    /// Discrete cart-table model with jerk input: state (position,
    /// velocity, acceleration), output ZMP.
    pub fn model(&self) -> (Matrix3<f64>, Vector3<f64>, RowVector3<f64>) {
        let dt = self.dt;
        let a = Matrix3::new(1.0, dt, dt * dt / 2.0, 0.0, 1.0, dt, 0.0, 0.0, 1.0);
        let b = Vector3::new(dt * dt * dt / 6.0, dt * dt / 2.0, dt);
        let c = RowVector3::new(1.0, 0.0, -self.com_height / self.gravity);
        (a, b, c)
    }
}

/// Weights of the tracking cost
/// `sum Q_e (sum e)^2 + x' Q_x x + R u^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreviewWeights {
    pub q_e: f64,
    pub q_x: f64,
    pub r: f64,
}

impl Default for PreviewWeights {
    fn default() -> Self {
        Self {
            q_e: 1.0,
            q_x: 0.0,
            r: 1e-6,
        }
    }
}

/// Control law
/// `u(k) = -G_I sum_i e(i) - G_x x(k) - sum_{j=1..N} G_p(j) p_ref(k + j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreviewGains {
    pub gi: f64,
    pub gx: RowVector3<f64>,
    /// `gp[j - 1]` multiplies `p_ref(k + j)`.
    pub gp: Vec<f64>,
    /// Closed-loop matrix of the augmented (integral + state) system.
    pub closed_loop: Matrix4<f64>,
    pub params: LipmParams,
}

impl PreviewGains {
    pub fn spectral_radius(&self) -> f64 {
        self.closed_loop
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

type Aug = (Matrix4<f64>, Vector4<f64>);

fn augmented(params: &LipmParams) -> Aug {
    let (a, b, c) = params.model();
    let ca = c * a;
    let cb = (c * b)[0];
    let mut at = Matrix4::zeros();
    at[(0, 0)] = 1.0;
    for j in 0..3 {
        at[(0, j + 1)] = ca[j];
        for i in 0..3 {
            at[(i + 1, j + 1)] = a[(i, j)];
        }
    }
    let bt = Vector4::new(cb, b[0], b[1], b[2]);
    (at, bt)
}

fn riccati_map(p: &Matrix4<f64>, a: &Matrix4<f64>, b: &Vector4<f64>, q: &Matrix4<f64>, r: f64) -> Matrix4<f64> {
    let pb = p * b;
    let s = r + (b.transpose() * pb)[0];
    let pa = p * a;
    let btpa = b.transpose() * pa;
    a.transpose() * pa - (btpa.transpose() * btpa) / s + q
}

/// Stabilizing solution of the discrete algebraic Riccati equation by the
/// structure-preserving doubling algorithm, with plain fixed-point iteration
/// as a fallback. The result is checked against the equation residual.
pub fn solve_dare(a: &Matrix4<f64>, b: &Vector4<f64>, q: &Matrix4<f64>, r: f64) -> Result<Matrix4<f64>, PatternError> {
    let residual = |p: &Matrix4<f64>| (riccati_map(p, a, b, q, r) - p).norm() / p.norm().max(1e-300);
    let id = Matrix4::identity();
    let mut ak = *a;
    let mut gk = b * b.transpose() / r;
    let mut hk = *q;
    for _ in 0..64 {
        let Some(winv) = (id + gk * hk).try_inverse() else {
            break;
        };
        let a_next = ak * winv * ak;
        let g_next = gk + ak * winv * gk * ak.transpose();
        let h_next = hk + ak.transpose() * hk * winv * ak;
        let delta = (h_next - hk).norm() / h_next.norm().max(1e-300);
        ak = a_next;
        gk = 0.5 * (g_next + g_next.transpose());
        hk = 0.5 * (h_next + h_next.transpose());
        if !hk.iter().all(|v| v.is_finite()) {
            break;
        }
        if delta < 1e-14 {
            break;
        }
    }
    if hk.iter().all(|v| v.is_finite()) && residual(&hk) < 1e-8 {
        return Ok(hk);
    }
    let mut p = *q;
    for _ in 0..200_000 {
        let next = riccati_map(&p, a, b, q, r);
        let next = 0.5 * (next + next.transpose());
        let done = (next - p).norm() <= 1e-13 * next.norm().max(1e-300);
        p = next;
        if done {
            break;
        }
    }
    if p.iter().all(|v| v.is_finite()) && residual(&p) < 1e-8 {
        Ok(p)
    } else {
        Err(PatternError::NumericalFailure(
            "Riccati iteration did not converge".into(),
        ))
    }
}

pub fn preview_gains(params: &LipmParams, weights: &PreviewWeights) -> Result<PreviewGains, PatternError> {
    params.validate()?;
    if !(weights.r > 0.0 && weights.q_e >= 0.0 && weights.q_x >= 0.0) {
        return Err(PatternError::InvalidParams("need R > 0 and non-negative Q".into()));
    }
    let (at, bt) = augmented(params);
    let mut q = Matrix4::zeros();
    q[(0, 0)] = weights.q_e;
    for i in 1..4 {
        q[(i, i)] = weights.q_x;
    }
    let p = solve_dare(&at, &bt, &q, weights.r)?;
    let s = weights.r + (bt.transpose() * p * bt)[0];
    let k = (bt.transpose() * p * at) / s;
    let gi = k[0];
    let gx = RowVector3::new(k[1], k[2], k[3]);
    let ac = at - bt * k;

    let n = params.preview_steps();
    let mut gp = Vec::with_capacity(n);
    let ie = Vector4::new(1.0, 0.0, 0.0, 0.0);
    gp.push(-gi);
    let mut x = -(ac.transpose() * p * ie);
    for _ in 1..n {
        gp.push((bt.transpose() * x)[0] / s);
        x = ac.transpose() * x;
    }
    let gains = PreviewGains {
        gi,
        gx,
        gp,
        closed_loop: ac,
        params: *params,
    };
    if !(gains.spectral_radius() < 1.0) {
        return Err(PatternError::NumericalFailure("closed loop is not stable".into()));
    }
    Ok(gains)
}

/// Per-axis cart state and accumulated ZMP tracking error.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComState {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub acc: [f64; 2],
    pub err_sum: [f64; 2],
}

impl ComState {
    pub fn at_rest(x: f64, y: f64) -> Self {
        Self {
            pos: [x, y],
            ..Self::default()
        }
    }

    /// Cart-table ZMP `c - (z_c / g) c''`, always derived from the state.
    pub fn zmp(&self, params: &LipmParams) -> [f64; 2] {
        let k = params.com_height / params.gravity;
        [self.pos[0] - k * self.acc[0], self.pos[1] - k * self.acc[1]]
    }

    /// Capture point `c + c' / omega`.
    pub fn capture_point(&self, params: &LipmParams) -> [f64; 2] {
        let w = params.omega();
        [self.pos[0] + self.vel[0] / w, self.pos[1] + self.vel[1] / w]
    }
}

/// One control tick on both axes. `ref_x[j]` / `ref_y[j]` is the reference
/// `j` ticks ahead (index 0 = now); at least `N + 1` samples are needed.
pub fn tick_com(state: &ComState, ref_x: &[f64], ref_y: &[f64], gains: &PreviewGains) -> ComState {
    let (a, b, c) = gains.params.model();
    let mut next = *state;
    for (axis, r) in [(0, ref_x), (1, ref_y)] {
        let x = Vector3::new(state.pos[axis], state.vel[axis], state.acc[axis]);
        let n = gains.gp.len().min(r.len().saturating_sub(1));
        let mut preview = 0.0;
        for j in 1..=n {
            preview += gains.gp[j - 1] * r[j];
        }
        let u = -gains.gi * state.err_sum[axis] - (gains.gx * x)[0] - preview;
        let xn = a * x + b * u;
        next.pos[axis] = xn[0];
        next.vel[axis] = xn[1];
        next.acc[axis] = xn[2];
        let p_next = r.get(1).copied().unwrap_or(r[0]);
        next.err_sum[axis] = state.err_sum[axis] + (c * xn)[0] - p_next;
    }
    next
}
