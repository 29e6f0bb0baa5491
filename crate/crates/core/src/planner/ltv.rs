//! Zero-order-hold discretized linear time-varying translational model.
//!
//! With the attitude pinned to the reference, the planar translational
//! dynamics in NED are `ẍ = −(F/m)·R_d,1,3` and `z̈ = −(F/m)·R_d,3,3 + g`.
//! Absorbing gravity into the modified coordinate `z̃ = z − ½gt²` leaves a
//! double integrator per axis driven by the collective thrust, with exact
//! ZOH discretization
//!
//! ```text
//! A_d = [1 T 0 0; 0 1 0 0; 0 0 1 T; 0 0 0 1]
//! B_d,k = −(T/m)·[T/2·R₁₃(k), R₁₃(k), T/2·R₃₃(k), R₃₃(k)]ᵀ
//! ```
//!
//! over the state `ζ = [x, ẋ, z̃, ż̃]`.

use super::sigmoid::{attitude_reference, SigmoidAttitudeParams};
use super::PlanError;
use nalgebra::{Matrix4, Vector4};

#[derive(Debug, Clone)]
pub struct LtvModel {
    /// Sampling time [s].
    pub step: f64,
    /// Horizon length N (states ζ₁..ζ_N, inputs u₀..u_{N−1}).
    pub horizon: usize,
    pub a_d: Matrix4<f64>,
    /// Input columns per step, built from the reference rotation entries.
    pub b_d: Vec<Vector4<f64>>,
}

impl LtvModel {
    pub fn a_matrix(step: f64) -> Matrix4<f64> {
        Matrix4::new(
            1.0, step, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, step, //
            0.0, 0.0, 0.0, 1.0,
        )
    }

    /// Propagates `ζ_{k+1} = A_d ζ_k + B_{d,k} u_k` from `ζ₀ = 0`,
    /// returning ζ₁..ζ_N.
    pub fn propagate(&self, inputs: &[f64]) -> Vec<Vector4<f64>> {
        assert_eq!(inputs.len(), self.horizon);
        let mut states = Vec::with_capacity(self.horizon);
        let mut zeta = Vector4::zeros();
        for (k, &u) in inputs.iter().enumerate() {
            zeta = self.a_d * zeta + self.b_d[k] * u;
            states.push(zeta);
        }
        states
    }
}

/// Builds the LTV model for the sigmoid attitude reference; `n·ts` must match
/// the maneuver duration to within one step.
pub fn build_ltv(
    attitude: &SigmoidAttitudeParams,
    ts: f64,
    n: usize,
    mass: f64,
) -> Result<LtvModel, PlanError> {
    if !(ts > 0.0) || n == 0 {
        return Err(PlanError::BadHorizon { ts, n });
    }
    if (n as f64 * ts - attitude.t_m).abs() > ts {
        return Err(PlanError::BadHorizon { ts, n });
    }
    let mut b_d = Vec::with_capacity(n);
    for k in 0..n {
        let t = (k as f64 * ts).min(attitude.t_m);
        let r = attitude_reference(t, attitude)?.rotation();
        let (r13, r33) = (r[(0, 2)], r[(2, 2)]);
        b_d.push(-(ts / mass) * Vector4::new(0.5 * ts * r13, r13, 0.5 * ts * r33, r33));
    }
    Ok(LtvModel { step: ts, horizon: n, a_d: LtvModel::a_matrix(ts), b_d })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_attitude_input_column() {
        // near the start R ≈ I and the thrust drives only the z̃ rows, with
        // the NED minus sign: B ≈ −(T/m)[0, 0, T/2, 1]
        let p = SigmoidAttitudeParams::study_defaults();
        let mass = 0.028;
        let ts = 2e-3;
        let model = build_ltv(&p, ts, 350, mass).unwrap();
        let b0 = &model.b_d[0];
        assert_relative_eq!(b0[1], 0.0, epsilon = 1e-3);
        assert_relative_eq!(b0[3], -ts / mass, epsilon = 1e-4);
        assert_relative_eq!(b0[2], -0.5 * ts * ts / mass, epsilon = 1e-6);
        // mid-maneuver the attitude is half-turned: R₃₃ ≈ −1 flips the sign
        let mid = &model.b_d[175];
        assert!(mid[3] > 0.0, "inverted attitude must flip the z̃ drive sign");
    }

    #[test]
    fn study_horizon_is_350_steps() {
        let p = SigmoidAttitudeParams::study_defaults();
        let n = (p.t_m / 2e-3).round() as usize;
        assert_eq!(n, 350);
        assert!(build_ltv(&p, 2e-3, n, 0.028).is_ok());
        assert!(build_ltv(&p, 2e-3, 500, 0.028).is_err());
    }

    #[test]
    fn hover_thrust_in_modified_coordinates_reproduces_hover() {
        // hand-built identity-attitude columns: in z̃ coordinates gravity is
        // gone, so the weight-canceling thrust keeps z = z̃ + ½gt² at zero
        let ts = 2e-3;
        let n = 350;
        let mass = 0.028;
        let b = -(ts / mass) * Vector4::new(0.0, 0.0, 0.5 * ts, 1.0);
        let model =
            LtvModel { step: ts, horizon: n, a_d: LtvModel::a_matrix(ts), b_d: vec![b; n] };
        let hover = vec![mass * crate::GRAVITY; n];
        let states = model.propagate(&hover);
        for (k, zeta) in states.iter().enumerate() {
            let t = (k + 1) as f64 * ts;
            let z = zeta[2] + 0.5 * crate::GRAVITY * t * t;
            assert!(z.abs() < 1e-9, "hover drift {z:.2e} at step {k}");
            assert!(zeta[0].abs() < 1e-9);
        }
    }
}
