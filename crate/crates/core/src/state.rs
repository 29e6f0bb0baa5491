//! Full rigid-body vehicle state.

use crate::so3;
use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StateError {
    #[error("rotation matrix drifted from SO(3): {0}")]
    Rotation(#[from] so3::So3Error),
    #[error("quaternion norm {0} deviates from 1 beyond 1e-12")]
    QuaternionNorm(f64),
    #[error("quaternion and rotation matrix disagree (round-trip error {0:.3e})")]
    Mirror(f64),
    #[error("state contains non-finite values")]
    NonFinite,
}

/// Vehicle state: position/velocity in the inertial NED frame, attitude as a
/// rotation matrix (body→vehicle) with a unit-quaternion mirror, and the body
/// angular rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidState {
    /// Position [m], NED.
    pub position: Vector3<f64>,
    /// Velocity [m/s].
    pub velocity: Vector3<f64>,
    /// Rotation matrix body→vehicle.
    pub rotation: Matrix3<f64>,
    /// Scalar-first unit quaternion mirroring `rotation`.
    pub quaternion: [f64; 4],
    /// Body angular rate [rad/s].
    pub angular_rate: Vector3<f64>,
}

impl RigidState {
    /// Hover at the origin with identity attitude.
    pub fn hover_origin() -> Self {
        Self {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            rotation: Matrix3::identity(),
            quaternion: [1.0, 0.0, 0.0, 0.0],
            angular_rate: Vector3::zeros(),
        }
    }

    /// Builds a state from a rotation matrix, deriving the quaternion mirror.
    pub fn from_rotation(
        position: Vector3<f64>,
        velocity: Vector3<f64>,
        rotation: Matrix3<f64>,
        angular_rate: Vector3<f64>,
    ) -> Result<Self, StateError> {
        let quaternion = so3::quat_from_rotm(&rotation)?;
        Ok(Self { position, velocity, rotation, quaternion, angular_rate })
    }

    /// Re-derives the quaternion from `rotation`, keeping sign continuity.
    pub fn refresh_quaternion(&mut self) {
        self.quaternion = so3::quat_from_rotm_continuous(&self.rotation, &self.quaternion)
            .unwrap_or_else(|_| so3::quat_from_rotm_unchecked(&self.rotation));
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.rotation.iter().all(|v| v.is_finite())
            && self.quaternion.iter().all(|v| v.is_finite())
            && self.angular_rate.iter().all(|v| v.is_finite())
    }

    /// Checks the structural invariants: `R ∈ SO(3)`, unit quaternion, and
    /// agreement between the two attitude representations.
    pub fn validate(&self) -> Result<(), StateError> {
        if !self.is_finite() {
            return Err(StateError::NonFinite);
        }
        let dev = so3::orthonormality_error(&self.rotation);
        let det = self.rotation.determinant();
        if dev >= 1e-9 || det <= 0.0 {
            return Err(StateError::Rotation(so3::So3Error::NotOrthonormal {
                deviation: dev,
                det,
            }));
        }
        let n = so3::quat_norm(&self.quaternion);
        if (n - 1.0).abs() >= 1e-12 {
            return Err(StateError::QuaternionNorm(n));
        }
        let mirror = (so3::rotm_from_quat(&self.quaternion) - self.rotation).abs().max();
        if mirror >= 1e-9 {
            return Err(StateError::Mirror(mirror));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::rotation_from_axis_angle;

    #[test]
    fn hover_state_is_valid() {
        RigidState::hover_origin().validate().unwrap();
    }

    #[test]
    fn mirror_violation_detected() {
        let mut s = RigidState::hover_origin();
        s.rotation = rotation_from_axis_angle(&Vector3::y(), 0.5);
        assert!(matches!(s.validate(), Err(StateError::Mirror(_))));
        s.refresh_quaternion();
        s.validate().unwrap();
    }

    #[test]
    fn non_finite_detected() {
        let mut s = RigidState::hover_origin();
        s.velocity.x = f64::NAN;
        assert!(matches!(s.validate(), Err(StateError::NonFinite)));
    }
}
