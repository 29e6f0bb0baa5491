//! Sigmoid pitch-flip attitude reference.
//!
//! The scalar quaternion component runs smoothly from +1 to −1 over the
//! maneuver window:
//!
//! ```text
//! q_d0(t) = −tanh(ν_m (t − t_m/2) / 2)
//! q_d2(t) = +√(1 − q_d0²) = sech(ν_m (t − t_m/2) / 2)
//! ```
//!
//! (the logistic form `2/(1+e^{∓ν(t−t_m/2)}) − 1` written as a tanh; the sign
//! is chosen so q_d0 starts at +1). Roll and yaw stay zero, so the angular
//! rate follows analytically from the pure-y-rotation kinematics
//! `q̇ = ½ q ⊗ [0, ω]`:
//!
//! ```text
//! ω_y(t)  = −2 q̇_d0 / √(1 − q_d0²) = ν_m · q_d2(t)
//! ω̇_y(t)  = (ν_m²/2) · q_d0(t) · q_d2(t)
//! ```
//!
//! which removes the endpoint singularity of the quotient form: both rates
//! decay to zero with sech.

use super::PlanError;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

/// Sigmoid scaling `ν_m` [1/s] and maneuver duration `t_m` [s].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidAttitudeParams {
    pub nu_m: f64,
    pub t_m: f64,
}

impl SigmoidAttitudeParams {
    pub fn new(nu_m: f64, t_m: f64) -> Result<Self, PlanError> {
        if !(nu_m > 0.0 && t_m > 0.0 && nu_m.is_finite() && t_m.is_finite()) {
            return Err(PlanError::BadSigmoidParams { nu_m, t_m });
        }
        Ok(Self { nu_m, t_m })
    }

    /// The study parameters: `ν_m = 35 1/s`, `t_m = 0.7 s`.
    pub fn study_defaults() -> Self {
        Self { nu_m: 35.0, t_m: 0.7 }
    }
}

/// One attitude reference sample: quaternion, body rate, body acceleration.
#[derive(Debug, Clone, Copy)]
pub struct AttitudeSample {
    pub quaternion: [f64; 4],
    pub angular_rate: Vector3<f64>,
    pub angular_accel: Vector3<f64>,
}

impl AttitudeSample {
    pub fn rotation(&self) -> Matrix3<f64> {
        crate::so3::rotm_from_quat(&self.quaternion)
    }
}

/// Evaluates the attitude reference at `t ∈ [0, t_m]`.
pub fn attitude_reference(t: f64, p: &SigmoidAttitudeParams) -> Result<AttitudeSample, PlanError> {
    if !(0.0..=p.t_m).contains(&t) {
        return Err(PlanError::TimeOutOfRange { t, t_m: p.t_m });
    }
    let s = 0.5 * p.nu_m * (t - 0.5 * p.t_m);
    let q0 = -s.tanh();
    let q2 = 1.0 / s.cosh();
    let omega_y = p.nu_m * q2;
    let omega_dot_y = 0.5 * p.nu_m * p.nu_m * q0 * q2;
    Ok(AttitudeSample {
        quaternion: [q0, 0.0, q2, 0.0],
        angular_rate: Vector3::new(0.0, omega_y, 0.0),
        angular_accel: Vector3::new(0.0, omega_dot_y, 0.0),
    })
}

/// Pitch angle reconstructed from the scalar quaternion part by the
/// 2·arccos map, wrapped to (−π, π].
pub fn pitch_from_q0(q0: f64) -> f64 {
    let angle = 2.0 * q0.clamp(-1.0, 1.0).acos();
    if angle > std::f64::consts::PI {
        angle - 2.0 * std::f64::consts::PI
    } else {
        angle
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn midpoint_is_half_turn_with_peak_rate() {
        let p = SigmoidAttitudeParams::study_defaults();
        let s = attitude_reference(0.5 * p.t_m, &p).unwrap();
        assert_relative_eq!(s.quaternion[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(s.quaternion[2], 1.0, epsilon = 1e-12);
        assert_relative_eq!(s.angular_rate.y, p.nu_m, epsilon = 1e-12);
        assert_relative_eq!(s.angular_accel.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn start_value_matches_logistic_form() {
        // |q0(0)| = |2/(1 + e^{ν t_m/2}) − 1| ≈ 1 − 9.6e-6 for ν=35, t_m=0.7
        let p = SigmoidAttitudeParams::study_defaults();
        let s = attitude_reference(0.0, &p).unwrap();
        let logistic = 2.0 / (1.0 + (12.25f64).exp()) - 1.0;
        assert_relative_eq!(s.quaternion[0], -logistic, epsilon = 1e-12);
        assert!((s.quaternion[0] - (1.0 - 9.6e-6)).abs() < 1e-7);
    }

    #[test]
    fn quaternion_stays_unit() {
        let p = SigmoidAttitudeParams::study_defaults();
        for i in 0..=1000 {
            let t = p.t_m * i as f64 / 1000.0;
            let s = attitude_reference(t, &p).unwrap();
            let n = crate::so3::quat_norm(&s.quaternion);
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rates_match_finite_differences_of_quaternion() {
        // independent check of the analytic ω, ω̇ against the kinematic
        // quotient evaluated by central differences on q_d0(t)
        let p = SigmoidAttitudeParams::study_defaults();
        let h = 1e-6;
        for &t in &[0.1, 0.21, 0.35, 0.5, 0.62] {
            let s = attitude_reference(t, &p).unwrap();
            let before = attitude_reference(t - h, &p).unwrap();
            let after = attitude_reference(t + h, &p).unwrap();
            let q0_dot = (after.quaternion[0] - before.quaternion[0]) / (2.0 * h);
            let omega_fd = -2.0 * q0_dot / (1.0 - s.quaternion[0].powi(2)).sqrt();
            assert_relative_eq!(s.angular_rate.y, omega_fd, epsilon = 1e-5);
            let omega_dot_fd = (after.angular_rate.y - before.angular_rate.y) / (2.0 * h);
            assert_relative_eq!(s.angular_accel.y, omega_dot_fd, epsilon = 1e-4);
        }
    }

    #[test]
    fn pitch_sweeps_through_the_branch_jump() {
        // 0 → π, jump to −π, back to 0; continuous except the single jump
        let p = SigmoidAttitudeParams::study_defaults();
        let n = 2000;
        let mut jumps = 0;
        let mut prev = pitch_from_q0(attitude_reference(0.0, &p).unwrap().quaternion[0]);
        for i in 1..=n {
            let t = p.t_m * i as f64 / n as f64;
            let pitch = pitch_from_q0(attitude_reference(t, &p).unwrap().quaternion[0]);
            let step = (pitch - prev).abs();
            if step > 1.0 {
                jumps += 1;
                assert!((step - 2.0 * std::f64::consts::PI).abs() < 0.1);
            }
            prev = pitch;
        }
        assert_eq!(jumps, 1);
        assert!(prev.abs() < 0.01);
    }

    #[test]
    fn out_of_window_rejected() {
        let p = SigmoidAttitudeParams::study_defaults();
        assert!(attitude_reference(-0.01, &p).is_err());
        assert!(attitude_reference(0.71, &p).is_err());
    }
}
