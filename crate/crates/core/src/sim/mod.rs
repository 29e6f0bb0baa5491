//! Continuous-time quadcopter dynamics with fixed-step RK4 integration.
//!
//! The translational/rotational model is
//!
//! ```text
//! m·r̈ = m·g·e₃ − F·R·e₃ + Δ_r(x)
//! Ṙ   = R·ω̂
//! J·ω̇ = τ − ω × Jω + Δ_R(x)
//! ```
//!
//! in NED coordinates. After every step the rotation matrix is projected back
//! onto SO(3) (polar projection) and the quaternion mirror is renormalized
//! with sign continuity.

pub mod planar;

use crate::so3;
use crate::state::RigidState;
use crate::vehicle::{ControlInput, VehicleParams};
use nalgebra::Vector3;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("state became non-finite at step {step} (t = {t:.4} s)")]
    NonFinite { step: usize, t: f64 },
    #[error("position left the escape radius {radius} m at step {step} (t = {t:.4} s)")]
    Escaped { step: usize, t: f64, radius: f64 },
    #[error("io error writing log: {0}")]
    Io(#[from] std::io::Error),
}

/// State-dependent force/torque disturbance `x ↦ (Δ_r [N], Δ_R [N·m])`.
pub trait Disturbance: Send + Sync {
    fn eval(&self, x: &RigidState) -> (Vector3<f64>, Vector3<f64>);
}

/// The zero disturbance.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoDisturbance;

impl Disturbance for NoDisturbance {
    fn eval(&self, _x: &RigidState) -> (Vector3<f64>, Vector3<f64>) {
        (Vector3::zeros(), Vector3::zeros())
    }
}

/// Torque disturbance `Δ_R = amplitude · sin(φ/2 + θ/2)` with φ, θ the roll
/// and pitch Euler angles; the translational channel is zero.
#[derive(Debug, Clone, Copy)]
pub struct PitchRollSine {
    pub amplitude: Vector3<f64>,
}

impl PitchRollSine {
    /// The disturbance used by the robust-control study:
    /// amplitude `[-0.007, -0.007, 0]` N·m.
    pub fn study_default() -> Self {
        Self { amplitude: Vector3::new(-0.007, -0.007, 0.0) }
    }
}

impl Disturbance for PitchRollSine {
    fn eval(&self, x: &RigidState) -> (Vector3<f64>, Vector3<f64>) {
        let (roll, pitch, _) = so3::euler_from_quat(&x.quaternion);
        (Vector3::zeros(), self.amplitude * (0.5 * roll + 0.5 * pitch).sin())
    }
}

/// Feedback law queried by [`rollout`]; evaluations must be pure so that
/// rollouts can run concurrently.
pub trait Controller: Send + Sync {
    fn control(&self, t: f64, x: &RigidState) -> ControlInput;

    /// Tracking diagnostics logged alongside the state, if the controller
    /// follows a reference.
    fn diagnostics(&self, _t: f64, _x: &RigidState) -> Option<Diagnostics> {
        None
    }
}

impl<F> Controller for F
where
    F: Fn(f64, &RigidState) -> ControlInput + Send + Sync,
{
    fn control(&self, t: f64, x: &RigidState) -> ControlInput {
        self(t, x)
    }
}

/// Per-step tracking diagnostics (filled by the geometric controller).
#[derive(Debug, Clone, Copy, Default)]
pub struct Diagnostics {
    /// Attitude error function Ψ ∈ [0, 2].
    pub psi: f64,
    /// Position error [m].
    pub e_r: Vector3<f64>,
    /// Attitude error vector.
    pub e_big_r: Vector3<f64>,
    /// Translational Lyapunov candidate V₁.
    pub v1: f64,
    /// Rotational Lyapunov candidate V₂.
    pub v2: f64,
    /// Quadratic form z₂ᵀW₂z₂ from the V̇₂ bound.
    pub w2_form: f64,
    /// Set when the commanded input had to be saturated.
    pub saturated: bool,
}

/// Integration options.
#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// Physics step [s], in (0, 0.01].
    pub step: f64,
    /// Controller update rate [Hz] (zero-order hold in between).
    pub controller_rate: f64,
    /// Gravity [m/s²]; zero turns gravity off for conservation tests.
    pub gravity: f64,
    /// Abort radius on ‖position‖ [m].
    pub escape_radius: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { step: 1e-3, controller_rate: 500.0, gravity: crate::GRAVITY, escape_radius: 100.0 }
    }
}

/// Time derivative of a [`RigidState`] (the rotation slot holds Ṙ).
#[derive(Debug, Clone, Copy)]
pub struct StateDerivative {
    pub d_position: Vector3<f64>,
    pub d_velocity: Vector3<f64>,
    pub d_rotation: nalgebra::Matrix3<f64>,
    pub d_angular_rate: Vector3<f64>,
}

/// Evaluates the equations of motion at `x` under input `u`.
pub fn deriv(
    x: &RigidState,
    u: &ControlInput,
    disturbance: Option<&dyn Disturbance>,
    params: &VehicleParams,
    gravity: f64,
) -> StateDerivative {
    let (delta_r, delta_rot) = match disturbance {
        Some(d) => d.eval(x),
        None => (Vector3::zeros(), Vector3::zeros()),
    };
    let e3 = Vector3::new(0.0, 0.0, 1.0);
    let j = &params.inertia;
    let j_omega = Vector3::new(
        j.x * x.angular_rate.x,
        j.y * x.angular_rate.y,
        j.z * x.angular_rate.z,
    );
    let torque = u.torque - x.angular_rate.cross(&j_omega) + delta_rot;
    StateDerivative {
        d_position: x.velocity,
        d_velocity: gravity * e3 - (u.thrust / params.mass) * (x.rotation * e3)
            + delta_r / params.mass,
        d_rotation: x.rotation * so3::hat(&x.angular_rate),
        d_angular_rate: Vector3::new(torque.x / j.x, torque.y / j.y, torque.z / j.z),
    }
}

fn advance(x: &RigidState, d: &StateDerivative, h: f64) -> RigidState {
    RigidState {
        position: x.position + h * d.d_position,
        velocity: x.velocity + h * d.d_velocity,
        rotation: x.rotation + h * d.d_rotation,
        quaternion: x.quaternion,
        angular_rate: x.angular_rate + h * d.d_angular_rate,
    }
}

/// One classical RK4 step with the input held constant, followed by SO(3)
/// re-projection and quaternion refresh.
pub fn rk4_step(
    x: &RigidState,
    u: &ControlInput,
    disturbance: Option<&dyn Disturbance>,
    params: &VehicleParams,
    gravity: f64,
    h: f64,
) -> RigidState {
    let k1 = deriv(x, u, disturbance, params, gravity);
    let k2 = deriv(&advance(x, &k1, 0.5 * h), u, disturbance, params, gravity);
    let k3 = deriv(&advance(x, &k2, 0.5 * h), u, disturbance, params, gravity);
    let k4 = deriv(&advance(x, &k3, h), u, disturbance, params, gravity);
    let sixth = h / 6.0;
    let mut next = RigidState {
        position: x.position
            + sixth * (k1.d_position + 2.0 * k2.d_position + 2.0 * k3.d_position + k4.d_position),
        velocity: x.velocity
            + sixth * (k1.d_velocity + 2.0 * k2.d_velocity + 2.0 * k3.d_velocity + k4.d_velocity),
        rotation: x.rotation
            + sixth * (k1.d_rotation + 2.0 * k2.d_rotation + 2.0 * k3.d_rotation + k4.d_rotation),
        quaternion: x.quaternion,
        angular_rate: x.angular_rate
            + sixth
                * (k1.d_angular_rate
                    + 2.0 * k2.d_angular_rate
                    + 2.0 * k3.d_angular_rate
                    + k4.d_angular_rate),
    };
    next.rotation = so3::project_so3(&next.rotation);
    next.refresh_quaternion();
    next
}

/// Time-sampled record of a rollout.
#[derive(Debug, Clone, Default)]
pub struct SimLog {
    pub time: Vec<f64>,
    pub states: Vec<RigidState>,
    pub inputs: Vec<ControlInput>,
    pub diagnostics: Option<Vec<Diagnostics>>,
}

impl SimLog {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn final_state(&self) -> &RigidState {
        self.states.last().expect("log is never empty")
    }

    /// Largest Ψ seen by the tracker, if diagnostics were recorded.
    pub fn max_psi(&self) -> Option<f64> {
        self.diagnostics.as_ref().map(|d| d.iter().map(|d| d.psi).fold(0.0, f64::max))
    }

    /// Largest ‖e_r‖ seen by the tracker.
    pub fn max_position_error(&self) -> Option<f64> {
        self.diagnostics.as_ref().map(|d| d.iter().map(|d| d.e_r.norm()).fold(0.0, f64::max))
    }

    /// Number of steps on which the input had to be saturated.
    pub fn saturation_count(&self) -> usize {
        self.diagnostics
            .as_ref()
            .map(|d| d.iter().filter(|d| d.saturated).count())
            .unwrap_or(0)
    }

    /// Cumulative (unwrapped) pitch angle at every sample, from the `R₁₃`,
    /// `R₃₃` entries of the rotation matrix.
    pub fn unwrapped_pitch(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.states.len());
        let mut prev_wrapped = 0.0f64;
        let mut acc = 0.0f64;
        for (i, s) in self.states.iter().enumerate() {
            let wrapped = s.rotation[(0, 2)].atan2(s.rotation[(2, 2)]);
            if i == 0 {
                acc = wrapped;
            } else {
                let mut d = wrapped - prev_wrapped;
                if d > std::f64::consts::PI {
                    d -= 2.0 * std::f64::consts::PI;
                } else if d < -std::f64::consts::PI {
                    d += 2.0 * std::f64::consts::PI;
                }
                acc += d;
            }
            prev_wrapped = wrapped;
            out.push(acc);
        }
        out
    }

    /// Writes the log as CSV. With `z_up` the z position/velocity columns are
    /// negated for display parity with up-pointing plots.
    pub fn write_csv(&self, path: impl AsRef<Path>, z_up: bool) -> Result<(), SimError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let zs = if z_up { -1.0 } else { 1.0 };
        write!(f, "t,x,y,z,vx,vy,vz,q0,q1,q2,q3,wx,wy,wz,F,taux,tauy,tauz")?;
        if self.diagnostics.is_some() {
            write!(f, ",psi,v1,v2,er_x,er_y,er_z,eR_x,eR_y,eR_z")?;
        }
        writeln!(f)?;
        for i in 0..self.len() {
            let s = &self.states[i];
            let u = &self.inputs[i];
            write!(
                f,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                self.time[i],
                s.position.x,
                s.position.y,
                zs * s.position.z,
                s.velocity.x,
                s.velocity.y,
                zs * s.velocity.z,
                s.quaternion[0],
                s.quaternion[1],
                s.quaternion[2],
                s.quaternion[3],
                s.angular_rate.x,
                s.angular_rate.y,
                s.angular_rate.z,
                u.thrust,
                u.torque.x,
                u.torque.y,
                u.torque.z,
            )?;
            if let Some(diag) = &self.diagnostics {
                let d = &diag[i];
                write!(
                    f,
                    ",{},{},{},{},{},{},{},{},{}",
                    d.psi,
                    d.v1,
                    d.v2,
                    d.e_r.x,
                    d.e_r.y,
                    d.e_r.z,
                    d.e_big_r.x,
                    d.e_big_r.y,
                    d.e_big_r.z
                )?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn check_state(x: &RigidState, step: usize, t: f64, opts: &SimOptions) -> Result<(), SimError> {
    if !x.is_finite() {
        return Err(SimError::NonFinite { step, t });
    }
    if x.position.norm() > opts.escape_radius {
        return Err(SimError::Escaped { step, t, radius: opts.escape_radius });
    }
    Ok(())
}

/// Simulates `duration` seconds under the given controller on a uniform grid,
/// holding the control input between controller updates (zero-order hold).
///
/// Deterministic given `(x0, controller, disturbance, opts)`; every physics
/// step is logged.
pub fn rollout(
    x0: &RigidState,
    controller: &dyn Controller,
    disturbance: Option<&dyn Disturbance>,
    duration: f64,
    params: &VehicleParams,
    opts: &SimOptions,
) -> Result<SimLog, SimError> {
    assert!(opts.step > 0.0 && opts.step <= 0.01, "step must be in (0, 0.01]");
    let n_steps = (duration / opts.step).round() as usize;
    let control_period = (1.0 / (opts.controller_rate * opts.step)).round().max(1.0) as usize;

    let mut log = SimLog {
        time: Vec::with_capacity(n_steps + 1),
        states: Vec::with_capacity(n_steps + 1),
        inputs: Vec::with_capacity(n_steps + 1),
        diagnostics: None,
    };
    let mut diag_rows: Option<Vec<Diagnostics>> = None;

    let mut x = *x0;
    let mut u = ControlInput::zero();
    for step in 0..=n_steps {
        let t = step as f64 * opts.step;
        check_state(&x, step, t, opts)?;
        if step % control_period == 0 {
            u = controller.control(t, &x);
        }
        let diag = controller.diagnostics(t, &x);
        log.time.push(t);
        log.states.push(x);
        log.inputs.push(u);
        if let Some(d) = diag {
            diag_rows.get_or_insert_with(Vec::new).push(d);
        }
        if step < n_steps {
            x = rk4_step(&x, &u, disturbance, params, opts.gravity, opts.step);
        }
    }
    log.diagnostics = diag_rows;
    Ok(log)
}

/// Simulates a piecewise-constant input sequence with exact segment
/// boundaries: each segment of `(duration, input)` is integrated with a
/// uniform sub-step `≤ opts.step` chosen so the switch times land exactly.
pub fn rollout_piecewise(
    x0: &RigidState,
    segments: &[(f64, ControlInput)],
    disturbance: Option<&dyn Disturbance>,
    params: &VehicleParams,
    opts: &SimOptions,
) -> Result<SimLog, SimError> {
    let mut log = SimLog::default();
    let mut x = *x0;
    let mut t = 0.0;
    let mut step = 0usize;
    log.time.push(t);
    log.states.push(x);
    log.inputs.push(segments.first().map(|s| s.1).unwrap_or_else(ControlInput::zero));
    for &(duration, u) in segments {
        if duration <= 0.0 {
            continue;
        }
        let n = (duration / opts.step).ceil().max(1.0) as usize;
        let h = duration / n as f64;
        for _ in 0..n {
            x = rk4_step(&x, &u, disturbance, params, opts.gravity, h);
            t += h;
            step += 1;
            check_state(&x, step, t, opts)?;
            log.time.push(t);
            log.states.push(x);
            log.inputs.push(u);
        }
    }
    Ok(log)
}

/// Kinetic energy `½m‖v‖² + ½ωᵀJω` (conserved in free tumbling).
pub fn kinetic_energy(x: &RigidState, params: &VehicleParams) -> f64 {
    let j = &params.inertia;
    0.5 * params.mass * x.velocity.norm_squared()
        + 0.5
            * (j.x * x.angular_rate.x.powi(2)
                + j.y * x.angular_rate.y.powi(2)
                + j.z * x.angular_rate.z.powi(2))
}
