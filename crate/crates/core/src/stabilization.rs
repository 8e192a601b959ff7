//! Balance stabilization: a compliant cart model of structural vibration
//! with full-state damping feedback, capture-point feedback producing the
//! commanded ZMP (cZMP), and the split of that ZMP into foot weights.

use nalgebra::{Complex, Matrix2, Matrix3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilizationError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("infeasible damping target: {0}")]
    InfeasibleTarget(String),
}

/// Mass on a spring-damper whose base is driven by the input `y_u`:
/// `m x'' = k (y_u - x) + c (y_u' - x')`, with ZMP output
/// `y_zmp = x - (z_c / g) x''`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompliantLipm {
    pub mass: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub com_height: f64,
    pub gravity: f64,
    /// `[x, x']`
    pub state: [f64; 2],
}

impl CompliantLipm {
    pub fn new(mass: f64, stiffness: f64, damping: f64, com_height: f64) -> Result<Self, StabilizationError> {
        if !(mass > 0.0 && stiffness > 0.0 && damping >= 0.0 && com_height > 0.0) {
            return Err(StabilizationError::InvalidParams(
                "need m, k, z_c > 0 and c >= 0".into(),
            ));
        }
        Ok(Self {
            mass,
            stiffness,
            damping,
            com_height,
            gravity: 9.81,
            state: [0.0; 2],
        })
    }

    /// Model with natural frequency `freq_hz` and damping ratio `zeta`.
    pub fn from_modal(mass: f64, freq_hz: f64, zeta: f64, com_height: f64) -> Result<Self, StabilizationError> {
        let wn = 2.0 * std::f64::consts::PI * freq_hz;
        Self::new(mass, mass * wn * wn, 2.0 * zeta * wn * mass, com_height)
    }

    pub fn natural_frequency(&self) -> f64 {
        (self.stiffness / self.mass).sqrt()
    }

    pub fn damping_ratio(&self) -> f64 {
        self.damping / (2.0 * (self.stiffness * self.mass).sqrt())
    }

    /// `A` of `s' = A s + B y_u`.
    pub fn system_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(0.0, 1.0, -self.stiffness / self.mass, -self.damping / self.mass)
    }

    /// Mechanical energy relative to the spring rest position `y_u`.
    pub fn energy(&self, y_u: f64) -> f64 {
        let [x, v] = self.state;
        0.5 * self.mass * v * v + 0.5 * self.stiffness * (x - y_u).powi(2)
    }

    fn accel(&self, state: [f64; 2], y_u: f64) -> f64 {
        (self.stiffness * (y_u - state[0]) - self.damping * state[1]) / self.mass
    }
}

/// Advance the model by `dt` with `u` held constant over the interval (so
/// `y_u' = 0` inside it), using the exact discretization. Returns the new
/// state and the ZMP output at the end of the interval.
pub fn compliant_step(model: &CompliantLipm, u: f64, dt: f64) -> ([f64; 2], f64) {
    let (k, c, m) = (model.stiffness, model.damping, model.mass);
    let aug = Matrix3::new(0.0, 1.0, 0.0, -k / m, -c / m, k / m, 0.0, 0.0, 0.0) * dt;
    let e = aug.exp();
    let [x, v] = model.state;
    let next = [
        e[(0, 0)] * x + e[(0, 1)] * v + e[(0, 2)] * u,
        e[(1, 0)] * x + e[(1, 1)] * v + e[(1, 2)] * u,
    ];
    let zmp = next[0] - model.com_height / model.gravity * model.accel(next, u);
    (next, zmp)
}

/// Full-state feedback `y_u = r - k1 (x - r) - k2 x'` placing the closed-loop
/// poles at natural frequency `omega_d` and damping ratio `zeta_d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingController {
    pub k1: f64,
    pub k2: f64,
    pub omega_d: f64,
    pub zeta_d: f64,
}

pub fn damping_feedback(
    model: &CompliantLipm,
    omega_d: f64,
    zeta_d: f64,
) -> Result<DampingController, StabilizationError> {
    if !(zeta_d > 0.0 && zeta_d <= 1.2) {
        return Err(StabilizationError::InfeasibleTarget(format!(
            "zeta_d = {zeta_d} outside (0, 1.2]"
        )));
    }
    if !(omega_d > 0.0 && omega_d.is_finite()) {
        return Err(StabilizationError::InfeasibleTarget(format!(
            "omega_d = {omega_d} must be > 0"
        )));
    }
    let (k, c, m) = (model.stiffness, model.damping, model.mass);
    Ok(DampingController {
        k1: (omega_d * omega_d - k / m) * m / k,
        k2: (2.0 * zeta_d * omega_d - c / m) * m / k,
        omega_d,
        zeta_d,
    })
}

impl DampingController {
    pub fn command(&self, reference: f64, state: [f64; 2]) -> f64 {
        reference - self.k1 * (state[0] - reference) - self.k2 * state[1]
    }

    pub fn closed_loop_matrix(&self, model: &CompliantLipm) -> Matrix2<f64> {
        let b = model.stiffness / model.mass;
        let mut a = model.system_matrix();
        a[(1, 0)] -= b * self.k1;
        a[(1, 1)] -= b * self.k2;
        a
    }

    pub fn closed_loop_poles(&self, model: &CompliantLipm) -> Vec<Complex<f64>> {
        self.closed_loop_matrix(model)
            .complex_eigenvalues()
            .iter()
            .copied()
            .collect()
    }
}

/// Response of the model (at rest, input reference 0) to a velocity impulse,
/// sampled every `dt` for `duration`.
pub fn impulse_response(
    model: &CompliantLipm,
    controller: Option<&DampingController>,
    impulse_velocity: f64,
    dt: f64,
    duration: f64,
) -> Vec<f64> {
    let mut m = *model;
    m.state = [0.0, impulse_velocity];
    let n = (duration / dt).round() as usize;
    let mut xs = Vec::with_capacity(n + 1);
    xs.push(m.state[0]);
    for _ in 0..n {
        let u = controller.map_or(0.0, |c| c.command(0.0, m.state));
        m.state = compliant_step(&m, u, dt).0;
        xs.push(m.state[0]);
    }
    xs
}

/// Time after which `|x|` stays within `band` times its peak.
pub fn settling_time(xs: &[f64], dt: f64, band: f64) -> f64 {
    let peak = xs.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let limit = band * peak;
    xs.iter()
        .rposition(|x| x.abs() > limit)
        .map_or(0.0, |i| (i + 1) as f64 * dt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapturePointFeedback {
    pub k_cp: f64,
    pub omega: f64,
}

impl CapturePointFeedback {
    pub fn new(k_cp: f64, com_height: f64, gravity: f64) -> Result<Self, StabilizationError> {
        if !(k_cp > 0.0 && com_height > 0.0 && gravity > 0.0) {
            return Err(StabilizationError::InvalidParams("k_cp, z_c and g must be > 0".into()));
        }
        Ok(Self {
            k_cp,
            omega: (gravity / com_height).sqrt(),
        })
    }

    pub fn capture_point(&self, pos: [f64; 2], vel: [f64; 2]) -> [f64; 2] {
        [pos[0] + vel[0] / self.omega, pos[1] + vel[1] / self.omega]
    }
}

/// `cZMP = ref_zmp + k_cp (meas_cp - ref_cp)`, per axis.
pub fn czmp(ref_cp: [f64; 2], meas_cp: [f64; 2], ref_zmp: [f64; 2], fb: &CapturePointFeedback) -> [f64; 2] {
    [
        ref_zmp[0] + fb.k_cp * (meas_cp[0] - ref_cp[0]),
        ref_zmp[1] + fb.k_cp * (meas_cp[1] - ref_cp[1]),
    ]
}

/// Share of the load on each foot from the cZMP projected onto the segment
/// between the feet. Coincident feet share equally.
pub fn foot_weight_distribution(czmp: [f64; 2], left: [f64; 2], right: [f64; 2]) -> (f64, f64) {
    let d = [right[0] - left[0], right[1] - left[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    if len2 <= f64::EPSILON {
        return (0.5, 0.5);
    }
    let s = ((czmp[0] - left[0]) * d[0] + (czmp[1] - left[1]) * d[1]) / len2;
    let w_right = s.clamp(0.0, 1.0);
    (1.0 - w_right, w_right)
}

/// First-order low-pass on a measured 2D velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityFilter {
    alpha: f64,
    value: Option<[f64; 2]>,
}

impl VelocityFilter {
    pub fn new(cutoff_hz: f64, dt: f64) -> Self {
        let tau = 1.0 / (2.0 * std::f64::consts::PI * cutoff_hz);
        Self {
            alpha: dt / (tau + dt),
            value: None,
        }
    }

    pub fn filter(&mut self, v: [f64; 2]) -> [f64; 2] {
        let out = match self.value {
            None => v,
            Some(p) => [p[0] + self.alpha * (v[0] - p[0]), p[1] + self.alpha * (v[1] - p[1])],
        };
        self.value = Some(out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilizerConfig {
    pub k_cp: f64,
    /// Low-pass cutoff for the measured CoM velocity; `None` disables it.
    pub velocity_cutoff_hz: Option<f64>,
    pub compliance: ComplianceConfig,
}

impl Default for StabilizerConfig {
    fn default() -> Self {
        Self {
            k_cp: 3.0,
            velocity_cutoff_hz: None,
            compliance: ComplianceConfig::default(),
        }
    }
}

/// Open-loop compliant model and damping targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComplianceConfig {
    pub mass: f64,
    pub freq_hz: f64,
    pub zeta: f64,
    pub target_freq_hz: f64,
    pub target_zeta: f64,
}

impl Default for ComplianceConfig {
    fn default() -> Self {
        Self {
            mass: 32.0,
            freq_hz: 4.0,
            zeta: 0.05,
            target_freq_hz: 4.0,
            target_zeta: 0.7,
        }
    }
}

impl ComplianceConfig {
    pub fn model(&self, com_height: f64) -> Result<CompliantLipm, StabilizationError> {
        CompliantLipm::from_modal(self.mass, self.freq_hz, self.zeta, com_height)
    }

    pub fn controller(&self, model: &CompliantLipm) -> Result<DampingController, StabilizationError> {
        damping_feedback(
            model,
            2.0 * std::f64::consts::PI * self.target_freq_hz,
            self.target_zeta,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model() -> CompliantLipm {
        ComplianceConfig::default().model(0.7).unwrap()
    }

    #[test]
    fn equilibrium_is_fixed() {
        let mut m = model();
        m.state = [0.03, 0.0];
        let (s, zmp) = compliant_step(&m, 0.03, 0.002);
        assert!((s[0] - 0.03).abs() < 1e-15 && s[1].abs() < 1e-15);
        assert!((zmp - 0.03).abs() < 1e-15);
    }

    #[test]
    fn undamped_oscillation_frequency() {
        let mut m = CompliantLipm::new(30.0, 12_000.0, 0.0, 0.7).unwrap();
        let wn = m.natural_frequency();
        let period = 2.0 * std::f64::consts::PI / wn;
        let dt = 1e-4;
        m.state = [0.0, 0.1];
        // upward zero crossings over 10 periods
        let n = (10.5 * period / dt) as usize;
        let mut crossings = Vec::new();
        for i in 0..n {
            let prev = m.state[0];
            m.state = compliant_step(&m, 0.0, dt).0;
            if prev < 0.0 && m.state[0] >= 0.0 {
                // linear interpolation of the crossing instant
                let frac = -prev / (m.state[0] - prev);
                crossings.push((i as f64 + frac) * dt);
            }
        }
        assert_eq!(crossings.len(), 10);
        let measured = (crossings[9] - crossings[0]) / 9.0;
        assert!((measured - period).abs() / period < 0.01, "{measured} vs {period}");
    }

    #[test]
    fn energy_decays_with_damping() {
        let mut m = model();
        m.state = [0.02, -0.3];
        let mut e = m.energy(0.01);
        for _ in 0..5000 {
            m.state = compliant_step(&m, 0.01, 0.002).0;
            let next = m.energy(0.01);
            assert!(next <= e + 1e-15);
            e = next;
        }
    }

    #[test]
    fn open_loop_targets_give_zero_gains() {
        let m = model();
        let c = damping_feedback(&m, m.natural_frequency(), m.damping_ratio()).unwrap();
        assert!(c.k1.abs() < 1e-12 && c.k2.abs() < 1e-12);
    }

    #[test]
    fn poles_match_targets() {
        let m = model();
        let (wd, zd) = (30.0, 0.7);
        let c = damping_feedback(&m, wd, zd).unwrap();
        let want_re = -zd * wd;
        let want_im = wd * (1.0 - zd * zd).sqrt();
        for p in c.closed_loop_poles(&m) {
            assert!((p.re - want_re).abs() < 1e-6);
            assert!((p.im.abs() - want_im).abs() < 1e-6);
        }
    }

    #[test]
    fn damping_shortens_settling() {
        let m = model();
        let c = ComplianceConfig::default().controller(&m).unwrap();
        let open = settling_time(&impulse_response(&m, None, 0.1, 0.002, 10.0), 0.002, 0.02);
        let closed = settling_time(&impulse_response(&m, Some(&c), 0.1, 0.002, 10.0), 0.002, 0.02);
        assert!(open >= 5.0 * closed, "open {open} closed {closed}");
    }

    #[test]
    fn infeasible_targets_rejected() {
        let m = model();
        assert!(damping_feedback(&m, 25.0, 0.0).is_err());
        assert!(damping_feedback(&m, 25.0, 1.3).is_err());
    }

    #[test]
    fn czmp_law() {
        let fb = CapturePointFeedback::new(3.0, 0.7, 9.81).unwrap();
        assert_eq!(czmp([0.1, 0.2], [0.1, 0.2], [0.05, -0.1], &fb), [0.05, -0.1]);
        let z = czmp([0.0, 0.0], [0.02, 0.0], [0.05, 0.0], &fb);
        assert!((z[0] - 0.11).abs() < 1e-15);
    }

    #[test]
    fn capture_point_error_converges() {
        // plant LIPM driven by the cZMP (held over each tick, exact
        // integration), reference standing at the origin
        let fb = CapturePointFeedback::new(3.0, 0.7, 9.81).unwrap();
        let w = fb.omega;
        let dt = 0.002;
        let (mut x, mut v) = (0.05, 0.0);
        let e0 = fb.capture_point([x, 0.0], [v, 0.0])[0];
        for _ in 0..1000 {
            let p = czmp([0.0; 2], fb.capture_point([x, 0.0], [v, 0.0]), [0.0; 2], &fb)[0];
            let (c, s) = ((w * dt).cosh(), (w * dt).sinh());
            (x, v) = (p + (x - p) * c + v / w * s, (x - p) * w * s + v * c);
        }
        let e = fb.capture_point([x, 0.0], [v, 0.0])[0];
        // the capture point obeys e' = k + (1 - k) exp(omega dt) per tick
        let rate = fb.k_cp + (1.0 - fb.k_cp) * (w * dt).exp();
        let expected = e0 * rate.powi(1000);
        assert!(rate.abs() < 1.0);
        assert!((e / expected - 1.0).abs() < 1e-6, "{e} vs {expected}");
        assert!(e.abs() < 1e-6 * e0);
    }

    #[test]
    fn weight_distribution_cases() {
        let (l, r) = ([0.0, 0.1], [0.0, -0.1]);
        assert_eq!(foot_weight_distribution(l, l, r), (1.0, 0.0));
        assert_eq!(foot_weight_distribution([0.0, 0.0], l, r), (0.5, 0.5));
        assert_eq!(foot_weight_distribution([0.0, -0.3], l, r), (0.0, 1.0));
    }

    #[test]
    fn velocity_filter_converges() {
        let mut f = VelocityFilter::new(20.0, 0.002);
        assert_eq!(f.filter([1.0, 0.0]), [1.0, 0.0]);
        let mut out = [0.0; 2];
        for _ in 0..200 {
            out = f.filter([0.0, 2.0]);
        }
        assert!(out[0].abs() < 1e-6 && (out[1] - 2.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn weights_on_simplex(cx in -1.0f64..1.0, cy in -1.0f64..1.0, lx in -1.0f64..1.0, ly in -1.0f64..1.0, rx in -1.0f64..1.0, ry in -1.0f64..1.0) {
            let (wl, wr) = foot_weight_distribution([cx, cy], [lx, ly], [rx, ry]);
            prop_assert!((0.0..=1.0).contains(&wl) && (0.0..=1.0).contains(&wr));
            prop_assert!((wl + wr - 1.0).abs() < 1e-12);
        }

        #[test]
        fn passive_for_any_damping(c in 0.1f64..500.0, x0 in -0.1f64..0.1, v0 in -1.0f64..1.0, u in -0.1f64..0.1) {
            let mut m = CompliantLipm::new(30.0, 15_000.0, c, 0.7).unwrap();
            m.state = [x0, v0];
            let mut e = m.energy(u);
            for _ in 0..300 {
                m.state = compliant_step(&m, u, 0.002).0;
                let next = m.energy(u);
                prop_assert!(next <= e * (1.0 + 1e-12) + 1e-15);
                e = next;
            }
        }
    }
}
