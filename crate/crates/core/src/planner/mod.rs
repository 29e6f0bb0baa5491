//! Flip trajectory planning: sigmoid attitude reference, ZOH-discretized LTV
//! translational model, convex QP for the thrust profile, and cubic-spline
//! smoothing of the resulting position knots.

mod ltv;
mod qp;
mod sigmoid;
mod spline;

pub use ltv::{build_ltv, LtvModel};
pub use qp::{kkt_residual, solve_qp, DenseQp, QpError, QpOptions, QpSolution};
pub use sigmoid::{attitude_reference, pitch_from_q0, AttitudeSample, SigmoidAttitudeParams};
pub use spline::CubicSpline;

use crate::control::{ReferencePoint, ReferenceSource};
use crate::vehicle::VehicleParams;
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("sigmoid parameters must be positive, got nu_m = {nu_m}, t_m = {t_m}")]
    BadSigmoidParams { nu_m: f64, t_m: f64 },
    #[error("time {t} outside the maneuver window [0, {t_m}]")]
    TimeOutOfRange { t: f64, t_m: f64 },
    #[error("horizon does not match the maneuver duration (ts = {ts}, n = {n})")]
    BadHorizon { ts: f64, n: usize },
    #[error("cubic spline needs at least 3 knots, got {0}")]
    TooFewKnots(usize),
    #[error("spline knots must be strictly increasing at t = {t}")]
    NonIncreasingKnots { t: f64 },
    #[error("torque reserve exceeds the thrust envelope at step {step} (needs {reserve:.3} N of {f_max:.3} N)")]
    TorqueReserve { step: usize, reserve: f64, f_max: f64 },
    #[error("qp solver: {0}")]
    Qp(#[from] QpError),
    #[error("planned QP solution violates the KKT contract: residual {0:.3e}")]
    KktContract(f64),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Planner configuration. The position box is given in the z-up display
/// convention used by the study (`z ∈ [0, 0.3]` means "up to 30 cm above the
/// start"); internally the model runs in NED.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub attitude: SigmoidAttitudeParams,
    /// Allowed x range [m].
    pub x_bounds: (f64, f64),
    /// Allowed altitude range above the start [m], z-up convention.
    pub z_up_bounds: (f64, f64),
    /// Collective thrust limit [N].
    pub f_max: f64,
    /// Sampling time [s].
    pub ts: f64,
    /// Hover padding before/after the maneuver [s].
    pub pad_before: f64,
    pub pad_after: f64,
}

impl PlannerConfig {
    /// The study setup: `ν_m = 35`, `t_m = 0.7 s`, `x ∈ [−0.15, 0]`,
    /// `z ∈ [0, 0.3]` (z-up), `F ∈ [0, 0.64] N`, `T_s = 2 ms`.
    pub fn study_defaults() -> Self {
        Self {
            attitude: SigmoidAttitudeParams::study_defaults(),
            x_bounds: (-0.15, 0.0),
            z_up_bounds: (0.0, 0.3),
            f_max: 0.64,
            ts: 2e-3,
            pad_before: 0.5,
            pad_after: 2.0,
        }
    }
}

/// Solver statistics attached to a plan.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PlanStats {
    pub kkt_residual: f64,
    pub qp_iterations: usize,
    pub polished: bool,
    pub objective: f64,
    /// Terminal planar position error `‖[x_N, z̃_N − z̃_d]‖` [m].
    pub terminal_error: f64,
    pub solve_seconds: f64,
}

/// The planned flip reference: analytic sigmoid attitude plus spline-smoothed
/// position, padded with hover before and after the maneuver window.
///
/// Sampling uses the global timeline `[0, pad_before + t_m + pad_after]`; the
/// maneuver itself starts at `t = pad_before`.
#[derive(Debug)]
pub struct FlipReference {
    pub config: PlannerConfig,
    pub stats: PlanStats,
    /// Collective thrust profile u₀..u_{N−1} from the QP [N].
    pub thrust_profile: Vec<f64>,
    /// Planned planar states ζ₁..ζ_N (x, ẋ, z̃, ż̃).
    pub zeta: Vec<nalgebra::Vector4<f64>>,
    spline_x: CubicSpline,
    spline_z: CubicSpline,
    end_position: Vector3<f64>,
}

impl FlipReference {
    pub fn maneuver_start(&self) -> f64 {
        self.config.pad_before
    }

    pub fn maneuver_end(&self) -> f64 {
        self.config.pad_before + self.config.attitude.t_m
    }

    pub fn total_duration(&self) -> f64 {
        self.maneuver_end() + self.config.pad_after
    }

    fn sample_local(&self, tau: f64) -> ReferencePoint {
        let att = attitude_reference(tau, &self.config.attitude).expect("tau inside window");
        let (x, vx, ax) = self.spline_x.eval(tau);
        let (z, vz, az) = self.spline_z.eval(tau);
        ReferencePoint {
            position: Vector3::new(x, 0.0, z),
            velocity: Vector3::new(vx, 0.0, vz),
            acceleration: Vector3::new(ax, 0.0, az),
            rotation: att.rotation(),
            angular_rate: att.angular_rate,
            angular_accel: att.angular_accel,
            attitude_from_force: false,
        }
    }

    /// CSV export over the global timeline at the planner sampling step:
    /// `t, q0..q3, wx..wz, dwx..dwz, x, y, z, vx..vz, ax..az`.
    pub fn write_csv(&self, path: impl AsRef<Path>, z_up: bool) -> Result<(), PlanError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "t,q0,q1,q2,q3,wx,wy,wz,dwx,dwy,dwz,x,y,z,vx,vy,vz,ax,ay,az")?;
        let zs = if z_up { -1.0 } else { 1.0 };
        let n = (self.total_duration() / self.config.ts).round() as usize;
        for i in 0..=n {
            let t = i as f64 * self.config.ts;
            let r = self.sample(t);
            let q = crate::so3::quat_from_rotm(&r.rotation).expect("reference rotation in SO(3)");
            writeln!(
                f,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                t,
                q[0],
                q[1],
                q[2],
                q[3],
                r.angular_rate.x,
                r.angular_rate.y,
                r.angular_rate.z,
                r.angular_accel.x,
                r.angular_accel.y,
                r.angular_accel.z,
                r.position.x,
                r.position.y,
                zs * r.position.z,
                r.velocity.x,
                r.velocity.y,
                zs * r.velocity.z,
                r.acceleration.x,
                r.acceleration.y,
                zs * r.acceleration.z,
            )?;
        }
        Ok(())
    }

    /// JSON metadata: parameters, terminal error, QP statistics.
    pub fn write_meta_json(&self, path: impl AsRef<Path>) -> Result<(), PlanError> {
        #[derive(Serialize)]
        struct Meta<'a> {
            config: &'a PlannerConfig,
            stats: &'a PlanStats,
        }
        let text = serde_json::to_string_pretty(&Meta { config: &self.config, stats: &self.stats })?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

impl ReferenceSource for FlipReference {
    fn sample(&self, t: f64) -> ReferencePoint {
        let start = self.maneuver_start();
        let end = self.maneuver_end();
        if t < start {
            ReferencePoint::hover_at(Vector3::zeros())
        } else if t <= end {
            self.sample_local(t - start)
        } else {
            let mut point = ReferencePoint::hover_at(self.end_position);
            // the terminal attitude is a full turn: represent it as identity
            point.rotation = Matrix3::identity();
            point
        }
    }
}

/// Feedforward torque along the attitude reference with zero tracking error:
/// `τ = ω_d × J ω_d + J ω̇_d`.
pub fn feedforward_torque(att: &AttitudeSample, params: &VehicleParams) -> Vector3<f64> {
    let j = params.inertia_matrix();
    let w = att.angular_rate;
    w.cross(&(j * w)) + j * att.angular_accel
}

/// Plans the flip: builds the per-step thrust bounds from the torque reserve,
/// solves the condensed QP for the thrust profile, reconstructs the position
/// trajectory and fits cubic splines through the knots.
pub fn plan_flip(config: &PlannerConfig, params: &VehicleParams) -> Result<FlipReference, PlanError> {
    let t0 = std::time::Instant::now();
    let att = config.attitude;
    let n = (att.t_m / config.ts).round() as usize;
    let model = build_ltv(&att, config.ts, n, params.mass)?;

    // per-step input bounds: thrust must leave room for the commanded torque
    let mut lb = Vec::with_capacity(n);
    let mut ub = Vec::with_capacity(n);
    for k in 0..n {
        let t = (k as f64 * config.ts).min(att.t_m);
        let sample = attitude_reference(t, &att)?;
        let reserve = feedforward_torque(&sample, params).norm() / params.arm_projected;
        let (lo, hi) = (reserve, config.f_max - reserve);
        if lo > hi {
            return Err(PlanError::TorqueReserve {
                step: k,
                reserve,
                f_max: config.f_max,
            });
        }
        lb.push(lo);
        ub.push(hi);
    }

    // condensed prediction: ζ_k = S_k u, S_k = A S_{k−1} with B_{k−1} in
    // column k−1. Only the x and z̃ rows are needed for cost and constraints.
    let mut s = nalgebra::OMatrix::<f64, nalgebra::U4, nalgebra::Dyn>::zeros(n);
    let mut rows_x = DMatrix::<f64>::zeros(n, n);
    let mut rows_z = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        s = &model.a_d * s;
        for r in 0..4 {
            s[(r, k)] += model.b_d[k][r];
        }
        rows_x.row_mut(k).copy_from(&s.row(0));
        rows_z.row_mut(k).copy_from(&s.row(2));
    }
    let g_x_n = rows_x.row(n - 1).transpose();
    let g_z_n = rows_z.row(n - 1).transpose();

    // terminal target: back to the start in physical coordinates
    let z_tilde_target = -0.5 * crate::GRAVITY * att.t_m * att.t_m;
    let p_mat = 2.0 * (&g_x_n * g_x_n.transpose() + &g_z_n * g_z_n.transpose());
    let q_vec = -2.0 * (g_z_n * z_tilde_target);

    // stacked constraints: x rows, z̃ rows, input identity
    let m_rows = 3 * n;
    let mut a = DMatrix::zeros(m_rows, n);
    a.view_mut((0, 0), (n, n)).copy_from(&rows_x);
    a.view_mut((n, 0), (n, n)).copy_from(&rows_z);
    for k in 0..n {
        a[(2 * n + k, k)] = 1.0;
    }
    let mut l = DVector::zeros(m_rows);
    let mut u = DVector::zeros(m_rows);
    let (z_ned_lo, z_ned_hi) = (-config.z_up_bounds.1, -config.z_up_bounds.0);
    for k in 0..n {
        let t = (k + 1) as f64 * config.ts;
        let gravity_shift = 0.5 * crate::GRAVITY * t * t;
        l[k] = config.x_bounds.0;
        u[k] = config.x_bounds.1;
        l[n + k] = z_ned_lo - gravity_shift;
        u[n + k] = z_ned_hi - gravity_shift;
        l[2 * n + k] = lb[k];
        u[2 * n + k] = ub[k];
    }

    let qp = DenseQp { p: p_mat, q: q_vec, a, l, u };
    let solution = solve_qp(&qp, &QpOptions::default())?;
    if solution.kkt_residual >= 1e-6 {
        return Err(PlanError::KktContract(solution.kkt_residual));
    }
    let thrust_profile: Vec<f64> = solution.x.iter().copied().collect();
    let zeta = model.propagate(&thrust_profile);

    // physical knots (NED): z = z̃ + ½gt²
    let mut knots_x = Vec::with_capacity(n + 1);
    let mut knots_z = Vec::with_capacity(n + 1);
    knots_x.push((0.0, 0.0));
    knots_z.push((0.0, 0.0));
    for (k, state) in zeta.iter().enumerate() {
        let t = (k + 1) as f64 * config.ts;
        knots_x.push((t, state[0]));
        knots_z.push((t, state[2] + 0.5 * crate::GRAVITY * t * t));
    }
    let spline_x = CubicSpline::fit(&knots_x)?;
    let spline_z = CubicSpline::fit(&knots_z)?;

    let terminal = zeta[n - 1];
    let terminal_error =
        (terminal[0].powi(2) + (terminal[2] - z_tilde_target).powi(2)).sqrt();
    let end_position = Vector3::new(knots_x[n].1, 0.0, knots_z[n].1);

    Ok(FlipReference {
        config: *config,
        stats: PlanStats {
            kkt_residual: solution.kkt_residual,
            qp_iterations: solution.iterations,
            polished: solution.polished,
            objective: solution.objective,
            terminal_error,
            solve_seconds: t0.elapsed().as_secs_f64(),
        },
        thrust_profile,
        zeta,
        spline_x,
        spline_z,
        end_position,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn vehicle() -> VehicleParams {
        VehicleParams::crazyflie()
    }

    #[test]
    fn study_plan_meets_box_and_terminal_contracts() {
        let config = PlannerConfig::study_defaults();
        let p = vehicle();
        let plan = plan_flip(&config, &p).unwrap();
        assert!(plan.stats.kkt_residual < 1e-6);
        assert!(
            plan.stats.terminal_error < 0.02,
            "terminal error {}",
            plan.stats.terminal_error
        );
        // state box in physical coordinates
        for (k, zeta) in plan.zeta.iter().enumerate() {
            let t = (k + 1) as f64 * config.ts;
            let z_up = -(zeta[2] + 0.5 * crate::GRAVITY * t * t);
            assert!(zeta[0] >= config.x_bounds.0 - 1e-8 && zeta[0] <= config.x_bounds.1 + 1e-8);
            assert!(z_up >= config.z_up_bounds.0 - 1e-8 && z_up <= config.z_up_bounds.1 + 1e-8);
        }
        // torque-reserved input bounds
        for (k, &f) in plan.thrust_profile.iter().enumerate() {
            let t = (k as f64 * config.ts).min(config.attitude.t_m);
            let sample = attitude_reference(t, &config.attitude).unwrap();
            let reserve = feedforward_torque(&sample, &p).norm() / p.arm_projected;
            assert!(f >= reserve - 1e-8 && f <= config.f_max - reserve + 1e-8);
        }
    }

    #[test]
    fn ltv_propagation_is_self_consistent() {
        let config = PlannerConfig::study_defaults();
        let p = vehicle();
        let plan = plan_flip(&config, &p).unwrap();
        let n = plan.thrust_profile.len();
        let model = build_ltv(&config.attitude, config.ts, n, p.mass).unwrap();
        let again = model.propagate(&plan.thrust_profile);
        for (a, b) in plan.zeta.iter().zip(again.iter()) {
            assert!((a - b).abs().max() < 1e-9);
        }
    }

    #[test]
    fn unconstrained_variant_nulls_the_terminal_error() {
        let mut config = PlannerConfig::study_defaults();
        config.f_max = 1e3;
        config.x_bounds = (-1e3, 1e3);
        config.z_up_bounds = (-1e3, 1e3);
        let plan = plan_flip(&config, &vehicle()).unwrap();
        assert!(
            plan.stats.terminal_error < 1e-6,
            "unconstrained terminal error {}",
            plan.stats.terminal_error
        );
    }

    #[test]
    fn hover_attitude_reference_degenerates_bounds() {
        // with a negligible rotation rate the torque reserve collapses and
        // the input bounds reduce to [0, F_max]
        let p = vehicle();
        let att = SigmoidAttitudeParams { nu_m: 1e-9, t_m: 0.7 };
        let sample = attitude_reference(0.3, &att).unwrap();
        let reserve = feedforward_torque(&sample, &p).norm() / p.arm_projected;
        assert!(reserve < 1e-9);
    }

    #[test]
    fn reference_padding_and_window() {
        let config = PlannerConfig::study_defaults();
        let plan = plan_flip(&config, &vehicle()).unwrap();
        let before = plan.sample(0.1);
        assert_relative_eq!(before.position.norm(), 0.0, epsilon = 1e-12);
        assert!((before.rotation - Matrix3::identity()).abs().max() < 1e-12);
        let mid = plan.sample(config.pad_before + 0.35);
        assert!(mid.angular_rate.y > 30.0, "mid-flip pitch rate {}", mid.angular_rate.y);
        let after = plan.sample(plan.total_duration() - 0.1);
        assert!(after.velocity.norm() < 1e-12);
        // the spline interpolates the QP knots
        let k = 100;
        let t_local = (k + 1) as f64 * config.ts;
        let r = plan.sample(config.pad_before + t_local);
        assert_relative_eq!(r.position.x, plan.zeta[k][0], epsilon = 1e-9);
    }

    #[test]
    fn infeasible_torque_reserve_reported() {
        let mut config = PlannerConfig::study_defaults();
        config.f_max = 0.05; // cannot host the flip torque
        match plan_flip(&config, &vehicle()) {
            Err(PlanError::TorqueReserve { .. }) => {}
            other => panic!("expected torque-reserve error, got {other:?}"),
        }
    }

    #[test]
    fn csv_and_meta_exports() {
        let config = PlannerConfig::study_defaults();
        let plan = plan_flip(&config, &vehicle()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("ref.csv");
        let meta = dir.path().join("ref.json");
        plan.write_csv(&csv, true).unwrap();
        plan.write_meta_json(&meta).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        assert!(text.starts_with("t,q0,q1,q2,q3,wx,wy,wz,dwx,dwy,dwz,x,y,z,vx,vy,vz,ax,ay,az"));
        let meta_text = std::fs::read_to_string(&meta).unwrap();
        assert!(meta_text.contains("terminal_error"));
    }
}
