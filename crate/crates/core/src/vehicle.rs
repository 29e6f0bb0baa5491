//! Vehicle constants and the '×'-configuration motor mixing map.

use nalgebra::{Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VehicleError {
    #[error("vehicle parameter `{name}` must be strictly positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("missing key `{0}` in vehicle config")]
    MissingKey(String),
    #[error("could not parse value for `{key}`: {value:?}")]
    BadValue { key: String, value: String },
    #[error("io error reading vehicle config: {0}")]
    Io(#[from] std::io::Error),
}

/// Physical parameters of the quadcopter.
///
/// `arm_projected` is the per-axis moment arm of the '×' configuration: with
/// prop-to-prop distance `arm_full`, each rotor sits at `arm_full/2` on the
/// diagonal, i.e. `arm_full / (2·√2)` along each body axis. The mixing map and
/// the planner's thrust-reserve constraint both consume `arm_projected`;
/// `arm_full` is kept only as the catalogue figure it is derived from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Mass [kg].
    pub mass: f64,
    /// Prop-to-prop length [m].
    pub arm_full: f64,
    /// Moment arm projected on a body axis [m].
    pub arm_projected: f64,
    /// Diagonal inertia [kg·m²].
    pub inertia: Vector3<f64>,
    /// Thrust coefficient [N·s²].
    pub thrust_coeff: f64,
    /// Drag coefficient [N·m·s²].
    pub drag_coeff: f64,
    /// Per-rotor thrust limit [N].
    pub t_max: f64,
    /// Collective thrust limit, always `4 · t_max` [N].
    pub f_max: f64,
}

impl VehicleParams {
    /// Crazyflie 2.1 catalogue values.
    pub fn crazyflie() -> Self {
        Self::new(0.028, 0.092, 1.4e-5, 1.4e-5, 2.17e-5, 2.88e-8, 7.24e-10, 0.16)
            .expect("catalogue values are valid")
    }

    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mass: f64,
        arm_full: f64,
        jxx: f64,
        jyy: f64,
        jzz: f64,
        thrust_coeff: f64,
        drag_coeff: f64,
        t_max: f64,
    ) -> Result<Self, VehicleError> {
        let check = |name: &'static str, value: f64| {
            if value > 0.0 && value.is_finite() {
                Ok(value)
            } else {
                Err(VehicleError::NonPositive { name, value })
            }
        };
        Ok(Self {
            mass: check("mass", mass)?,
            arm_full: check("arm_length", arm_full)?,
            arm_projected: arm_full / (2.0 * 2.0f64.sqrt()),
            inertia: Vector3::new(check("jxx", jxx)?, check("jyy", jyy)?, check("jzz", jzz)?),
            thrust_coeff: check("thrust_coeff", thrust_coeff)?,
            drag_coeff: check("drag_coeff", drag_coeff)?,
            t_max: check("t_max", t_max)?,
            f_max: 4.0 * t_max,
        })
    }

    /// Override the projected moment arm (useful to pin a rounded figure).
    pub fn with_arm_projected(mut self, arm: f64) -> Self {
        self.arm_projected = arm;
        self
    }

    /// Inertia as a diagonal matrix.
    pub fn inertia_matrix(&self) -> nalgebra::Matrix3<f64> {
        nalgebra::Matrix3::from_diagonal(&self.inertia)
    }

    /// Hover thrust `m·g` [N].
    pub fn hover_thrust(&self) -> f64 {
        self.mass * crate::GRAVITY
    }

    /// Loads parameters from a flat `key = value` file.
    ///
    /// Keys: `mass`, `arm_length` (prop-to-prop), `jxx`, `jyy`, `jzz`,
    /// `thrust_coeff`, `drag_coeff`, `t_max`. Lines starting with `#` or `;`
    /// are comments.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, VehicleError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, VehicleError> {
        let get = |wanted: &str| -> Result<f64, VehicleError> {
            for line in text.lines() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                    continue;
                }
                if let Some((key, value)) = line.split_once('=') {
                    if key.trim() == wanted {
                        return value.trim().parse().map_err(|_| VehicleError::BadValue {
                            key: wanted.to_string(),
                            value: value.trim().to_string(),
                        });
                    }
                }
            }
            Err(VehicleError::MissingKey(wanted.to_string()))
        };
        Self::new(
            get("mass")?,
            get("arm_length")?,
            get("jxx")?,
            get("jyy")?,
            get("jzz")?,
            get("thrust_coeff")?,
            get("drag_coeff")?,
            get("t_max")?,
        )
    }
}

/// Collective thrust and body torques commanded to the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    /// Collective thrust [N], non-negative.
    pub thrust: f64,
    /// Body torques [N·m].
    pub torque: Vector3<f64>,
}

impl ControlInput {
    pub fn new(thrust: f64, torque: Vector3<f64>) -> Self {
        Self { thrust, torque }
    }

    pub fn zero() -> Self {
        Self::new(0.0, Vector3::zeros())
    }

    /// Hover input for the given vehicle.
    pub fn hover(params: &VehicleParams) -> Self {
        Self::new(params.hover_thrust(), Vector3::zeros())
    }
}

/// Linear map between per-rotor thrusts and `[F, τx, τy, τz]` for the '×'
/// rotor layout, rows `[1,1,1,1]`, `[-l,-l,l,l]`, `[l,-l,-l,l]`,
/// `[b/c,-b/c,b/c,-b/c]`.
#[derive(Debug, Clone)]
pub struct MixingMap {
    matrix: Matrix4<f64>,
    inverse: Matrix4<f64>,
    t_max: f64,
}

impl MixingMap {
    pub fn new(params: &VehicleParams) -> Self {
        let l = params.arm_projected;
        let k = params.drag_coeff / params.thrust_coeff;
        #[rustfmt::skip]
        let matrix = Matrix4::new(
            1.0, 1.0, 1.0, 1.0,
             -l,  -l,   l,   l,
              l,  -l,  -l,   l,
              k,  -k,   k,  -k,
        );
        let inverse = matrix.try_inverse().expect("mixing matrix invertible for l, b, c > 0");
        Self { matrix, inverse, t_max: params.t_max }
    }

    /// Collective thrust and torques produced by the four rotor thrusts.
    pub fn mix(&self, rotor_thrusts: &[f64; 4]) -> ControlInput {
        let u = self.matrix * Vector4::from_column_slice(rotor_thrusts);
        ControlInput::new(u[0], Vector3::new(u[1], u[2], u[3]))
    }

    /// Rotor thrusts realizing `u`; the exact solution of the linear system.
    pub fn unmix(&self, u: &ControlInput) -> [f64; 4] {
        let rhs = Vector4::new(u.thrust, u.torque.x, u.torque.y, u.torque.z);
        let t = self.inverse * rhs;
        [t[0], t[1], t[2], t[3]]
    }

    /// Whether every rotor thrust lies in `[0, t_max]` (within `tol`).
    pub fn is_feasible(&self, rotor_thrusts: &[f64; 4], tol: f64) -> bool {
        rotor_thrusts.iter().all(|&t| t >= -tol && t <= self.t_max + tol)
    }

    /// [`unmix`](Self::unmix) plus the feasibility verdict for the result.
    pub fn unmix_checked(&self, u: &ControlInput, tol: f64) -> ([f64; 4], bool) {
        let t = self.unmix(u);
        let feasible = self.is_feasible(&t, tol);
        (t, feasible)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn symmetric_hover_mix() {
        let params = VehicleParams::crazyflie();
        let map = MixingMap::new(&params);
        let t = params.mass * crate::GRAVITY / 4.0;
        let u = map.mix(&[t, t, t, t]);
        assert_relative_eq!(u.thrust, 0.2747, epsilon = 1e-4);
        assert_relative_eq!(u.torque.norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn uniform_split() {
        let params = VehicleParams::crazyflie();
        let map = MixingMap::new(&params);
        let t = map.unmix(&ControlInput::new(0.3, Vector3::zeros()));
        for ti in t {
            assert_relative_eq!(ti, 0.075, epsilon = 1e-12);
        }
    }

    #[test]
    fn infeasible_thrust_flagged() {
        let params = VehicleParams::crazyflie();
        let map = MixingMap::new(&params);
        // a pitch torque too large for the collective leaves one pair negative
        let (_, feasible) =
            map.unmix_checked(&ControlInput::new(0.05, Vector3::new(0.0, 0.01, 0.0)), 1e-9);
        assert!(!feasible);
        let (_, feasible) = map.unmix_checked(&ControlInput::hover(&params), 1e-9);
        assert!(feasible);
    }

    #[test]
    fn projected_arm_matches_catalogue() {
        let params = VehicleParams::crazyflie();
        assert_relative_eq!(params.arm_projected, 0.0325, epsilon = 1e-4);
        assert_relative_eq!(params.f_max, 0.64, epsilon = 1e-12);
    }

    #[test]
    fn parse_flat_config() {
        let text = "# crazyflie\nmass = 0.028\narm_length = 0.092\njxx = 1.4e-5\njyy = 1.4e-5\n\
                    jzz = 2.17e-5\nthrust_coeff = 2.88e-8\ndrag_coeff = 7.24e-10\nt_max = 0.16\n";
        let params = VehicleParams::parse(text).unwrap();
        assert_relative_eq!(params.mass, 0.028);
        assert_relative_eq!(params.inertia.z, 2.17e-5);
    }

    #[test]
    fn parse_rejects_missing_key() {
        assert!(matches!(
            VehicleParams::parse("mass = 0.028"),
            Err(VehicleError::MissingKey(_))
        ));
    }

    #[test]
    fn parse_rejects_negative() {
        let text = "mass = -1\narm_length = 0.092\njxx = 1.4e-5\njyy = 1.4e-5\njzz = 2.17e-5\n\
                    thrust_coeff = 2.88e-8\ndrag_coeff = 7.24e-10\nt_max = 0.16\n";
        assert!(matches!(
            VehicleParams::parse(text),
            Err(VehicleError::NonPositive { name: "mass", .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn mix_unmix_round_trip(t1 in 0.0..0.16f64, t2 in 0.0..0.16f64,
                                t3 in 0.0..0.16f64, t4 in 0.0..0.16f64) {
            let params = VehicleParams::crazyflie();
            let map = MixingMap::new(&params);
            let thrusts = [t1, t2, t3, t4];
            let back = map.unmix(&map.mix(&thrusts));
            for (a, b) in thrusts.iter().zip(back.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
