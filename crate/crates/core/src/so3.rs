//! SO(3) and quaternion utilities shared by the simulator, controller and
//! planner.
//!
//! Quaternions are scalar-first arrays `[q0, q1, q2, q3]` with the convention
//! that `q` and `-q` encode the same rotation. Conversions pick `q0 >= 0`
//! unless a continuity reference is supplied.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// Tolerance on `‖M + Mᵀ‖∞` below which a matrix is accepted as skew.
const SKEW_TOL: f64 = 1e-9;
/// Tolerance on `‖RᵀR − I‖∞` below which a matrix is accepted as a rotation.
const ORTHO_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum So3Error {
    #[error("matrix is not skew-symmetric (‖M + Mᵀ‖∞ = {deviation:.3e})")]
    NotSkew { deviation: f64 },
    #[error("matrix is not orthonormal (‖RᵀR − I‖∞ = {deviation:.3e}, det = {det:.6})")]
    NotOrthonormal { deviation: f64, det: f64 },
}

/// Skew-symmetric matrix of `v`, satisfying `hat(v) * w == v × w`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`]. Fails if the input is not skew-symmetric.
pub fn vee(m: &Matrix3<f64>) -> Result<Vector3<f64>, So3Error> {
    let dev = (m + m.transpose()).abs().max();
    if dev >= SKEW_TOL {
        return Err(So3Error::NotSkew { deviation: dev });
    }
    Ok(vee_unchecked(m))
}

/// [`vee`] without the skew check, for matrices skew by construction.
/// Averages the off-diagonal pairs so that floating-point asymmetry cancels.
pub fn vee_unchecked(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Max-norm deviation of `R` from orthonormality.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

/// Rotation matrix about an axis by `angle` (Rodrigues formula).
pub fn rotation_from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let a = axis.normalize();
    let k = hat(&a);
    Matrix3::identity() + angle.sin() * k + (1.0 - angle.cos()) * (k * k)
}

/// Unit quaternion (scalar-first) from a rotation matrix, with `q0 >= 0`.
///
/// Fails if `R` is not orthonormal with positive determinant.
pub fn quat_from_rotm(r: &Matrix3<f64>) -> Result<[f64; 4], So3Error> {
    let dev = orthonormality_error(r);
    let det = r.determinant();
    if dev >= ORTHO_TOL || det <= 0.0 {
        return Err(So3Error::NotOrthonormal { deviation: dev, det });
    }
    let mut q = quat_from_rotm_unchecked(r);
    if q[0] < 0.0 {
        for c in &mut q {
            *c = -*c;
        }
    }
    Ok(q)
}

/// Like [`quat_from_rotm`] but the sign ambiguity is resolved towards
/// `prev`, so a trajectory of conversions stays continuous across `q0 = 0`.
pub fn quat_from_rotm_continuous(r: &Matrix3<f64>, prev: &[f64; 4]) -> Result<[f64; 4], So3Error> {
    let dev = orthonormality_error(r);
    let det = r.determinant();
    if dev >= ORTHO_TOL || det <= 0.0 {
        return Err(So3Error::NotOrthonormal { deviation: dev, det });
    }
    let mut q = quat_from_rotm_unchecked(r);
    if quat_dot(&q, prev) < 0.0 {
        for c in &mut q {
            *c = -*c;
        }
    }
    Ok(q)
}

/// Shepperd's method: branch on the largest of the four squared components.
pub(crate) fn quat_from_rotm_unchecked(r: &Matrix3<f64>) -> [f64; 4] {
    let tr = r.trace();
    let (r00, r11, r22) = (r[(0, 0)], r[(1, 1)], r[(2, 2)]);
    let mut q = [0.0; 4];
    if tr >= r00.max(r11).max(r22) {
        let s = (1.0 + tr).sqrt() * 2.0; // 4 q0
        q[0] = 0.25 * s;
        q[1] = (r[(2, 1)] - r[(1, 2)]) / s;
        q[2] = (r[(0, 2)] - r[(2, 0)]) / s;
        q[3] = (r[(1, 0)] - r[(0, 1)]) / s;
    } else if r00 >= r11 && r00 >= r22 {
        let s = (1.0 + r00 - r11 - r22).sqrt() * 2.0; // 4 q1
        q[0] = (r[(2, 1)] - r[(1, 2)]) / s;
        q[1] = 0.25 * s;
        q[2] = (r[(0, 1)] + r[(1, 0)]) / s;
        q[3] = (r[(0, 2)] + r[(2, 0)]) / s;
    } else if r11 >= r22 {
        let s = (1.0 + r11 - r00 - r22).sqrt() * 2.0; // 4 q2
        q[0] = (r[(0, 2)] - r[(2, 0)]) / s;
        q[1] = (r[(0, 1)] + r[(1, 0)]) / s;
        q[2] = 0.25 * s;
        q[3] = (r[(1, 2)] + r[(2, 1)]) / s;
    } else {
        let s = (1.0 + r22 - r00 - r11).sqrt() * 2.0; // 4 q3
        q[0] = (r[(1, 0)] - r[(0, 1)]) / s;
        q[1] = (r[(0, 2)] + r[(2, 0)]) / s;
        q[2] = (r[(1, 2)] + r[(2, 1)]) / s;
        q[3] = 0.25 * s;
    }
    q
}

/// Rotation matrix from a unit quaternion (scalar-first).
pub fn rotm_from_quat(q: &[f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = *q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

pub fn quat_norm(q: &[f64; 4]) -> f64 {
    quat_dot(q, q).sqrt()
}

pub fn quat_dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

pub fn quat_normalize(q: &mut [f64; 4]) {
    let n = quat_norm(q);
    for c in q.iter_mut() {
        *c /= n;
    }
}

/// Hamilton product `a ⊗ b`.
pub fn quat_mul(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

/// Rotate `v` by the quaternion sandwich `q ⊗ [0, v] ⊗ q⁻¹`.
pub fn quat_rotate(q: &[f64; 4], v: &Vector3<f64>) -> Vector3<f64> {
    let p = [0.0, v.x, v.y, v.z];
    let qc = [q[0], -q[1], -q[2], -q[3]];
    let r = quat_mul(&quat_mul(q, &p), &qc);
    Vector3::new(r[1], r[2], r[3])
}

/// Projects `R` onto SO(3) (nearest orthonormal matrix, polar factor).
///
/// Near-orthonormal inputs converge in one or two Newton–Schulz sweeps; badly
/// degraded inputs fall back to an SVD projection with determinant fix-up.
pub fn project_so3(r: &Matrix3<f64>) -> Matrix3<f64> {
    let mut m = *r;
    if orthonormality_error(&m) < 0.1 {
        for _ in 0..4 {
            m = 1.5 * m - 0.5 * (m * (m.transpose() * m));
            if orthonormality_error(&m) < 1e-15 {
                return m;
            }
        }
        return m;
    }
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd with u");
    let vt = svd.v_t.expect("svd with v_t");
    let mut p = u * vt;
    if p.determinant() < 0.0 {
        // flip the weakest singular direction to stay in SO(3)
        let mut u = u;
        u.column_mut(2).neg_mut();
        p = u * vt;
    }
    p
}

/// ZYX Euler angles (roll φ, pitch θ, yaw ψ) of a body→vehicle quaternion.
pub fn euler_from_quat(q: &[f64; 4]) -> (f64, f64, f64) {
    let [w, x, y, z] = *q;
    let roll = (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y));
    let pitch = (2.0 * (w * y - z * x)).clamp(-1.0, 1.0).asin();
    let yaw = (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z));
    (roll, pitch, yaw)
}
