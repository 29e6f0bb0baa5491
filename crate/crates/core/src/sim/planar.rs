//! Planar (x–z) reduced model used by the feedforward flip optimizer.
//!
//! With roll and yaw fixed to zero the motion stays in the x–z plane and the
//! equations of motion reduce to
//!
//! ```text
//! m·ẍ    = −(T₁+T₂+T₃+T₄)·sin θ
//! m·z̈    = −(T₁+T₂+T₃+T₄)·cos θ + m·g
//! J_yy·θ̈ = l·(T₁+T₄−T₂−T₃)
//! ```
//!
//! θ is kept cumulative (not wrapped) so a full flip sweeps −2π.

use crate::vehicle::VehicleParams;

/// Planar state `[x, z, θ, ẋ, ż, θ̇]`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PlanarState {
    pub x: f64,
    pub z: f64,
    pub theta: f64,
    pub vx: f64,
    pub vz: f64,
    pub theta_dot: f64,
}

impl PlanarState {
    pub fn origin() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PlanarDerivative {
    pub dx: f64,
    pub dz: f64,
    pub dtheta: f64,
    pub dvx: f64,
    pub dvz: f64,
    pub dtheta_dot: f64,
}

/// Planar equations of motion under the four rotor thrusts.
pub fn planar_deriv(
    s: &PlanarState,
    thrusts: &[f64; 4],
    params: &VehicleParams,
    gravity: f64,
) -> PlanarDerivative {
    let total = thrusts.iter().sum::<f64>();
    let differential = thrusts[0] + thrusts[3] - thrusts[1] - thrusts[2];
    PlanarDerivative {
        dx: s.vx,
        dz: s.vz,
        dtheta: s.theta_dot,
        dvx: -total * s.theta.sin() / params.mass,
        dvz: -total * s.theta.cos() / params.mass + gravity,
        dtheta_dot: params.arm_projected * differential / params.inertia.y,
    }
}

fn advance(s: &PlanarState, d: &PlanarDerivative, h: f64) -> PlanarState {
    PlanarState {
        x: s.x + h * d.dx,
        z: s.z + h * d.dz,
        theta: s.theta + h * d.dtheta,
        vx: s.vx + h * d.dvx,
        vz: s.vz + h * d.dvz,
        theta_dot: s.theta_dot + h * d.dtheta_dot,
    }
}

/// One RK4 step with thrusts held constant.
pub fn planar_rk4_step(
    s: &PlanarState,
    thrusts: &[f64; 4],
    params: &VehicleParams,
    gravity: f64,
    h: f64,
) -> PlanarState {
    let k1 = planar_deriv(s, thrusts, params, gravity);
    let k2 = planar_deriv(&advance(s, &k1, 0.5 * h), thrusts, params, gravity);
    let k3 = planar_deriv(&advance(s, &k2, 0.5 * h), thrusts, params, gravity);
    let k4 = planar_deriv(&advance(s, &k3, h), thrusts, params, gravity);
    let sixth = h / 6.0;
    PlanarState {
        x: s.x + sixth * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx),
        z: s.z + sixth * (k1.dz + 2.0 * k2.dz + 2.0 * k3.dz + k4.dz),
        theta: s.theta + sixth * (k1.dtheta + 2.0 * k2.dtheta + 2.0 * k3.dtheta + k4.dtheta),
        vx: s.vx + sixth * (k1.dvx + 2.0 * k2.dvx + 2.0 * k3.dvx + k4.dvx),
        vz: s.vz + sixth * (k1.dvz + 2.0 * k2.dvz + 2.0 * k3.dvz + k4.dvz),
        theta_dot: s.theta_dot
            + sixth * (k1.dtheta_dot + 2.0 * k2.dtheta_dot + 2.0 * k3.dtheta_dot + k4.dtheta_dot),
    }
}

/// Planar rollout record; the grid is uniform within each thrust segment with
/// exact switch times.
#[derive(Debug, Clone, Default)]
pub struct PlanarLog {
    pub time: Vec<f64>,
    pub states: Vec<PlanarState>,
    pub thrusts: Vec<[f64; 4]>,
}

impl PlanarLog {
    pub fn final_state(&self) -> &PlanarState {
        self.states.last().expect("log is never empty")
    }
}

/// Integrates a sequence of `(duration, rotor thrusts)` segments from `s0`,
/// splitting each segment into uniform sub-steps no longer than `max_step`.
pub fn rollout_thrust_segments(
    s0: &PlanarState,
    segments: &[(f64, [f64; 4])],
    params: &VehicleParams,
    gravity: f64,
    max_step: f64,
) -> PlanarLog {
    let mut log = PlanarLog::default();
    let mut s = *s0;
    let mut t = 0.0;
    log.time.push(t);
    log.states.push(s);
    log.thrusts.push(segments.first().map(|seg| seg.1).unwrap_or([0.0; 4]));
    for &(duration, thrusts) in segments {
        if duration <= 0.0 {
            continue;
        }
        let n = (duration / max_step).ceil().max(1.0) as usize;
        let h = duration / n as f64;
        for _ in 0..n {
            s = planar_rk4_step(&s, &thrusts, params, gravity, h);
            t += h;
            log.time.push(t);
            log.states.push(s);
            log.thrusts.push(thrusts);
        }
    }
    log
}
