//! Geometric tracking control on SO(3) with optional GP-table adaptive terms
//! and robust saturation terms, plus the Lyapunov diagnostics used as runtime
//! monitors.

use crate::gp::{GpError, LookupTable, TablePack};
use crate::sim::{Controller, Diagnostics};
use crate::so3::{hat, vee_unchecked};
use crate::state::RigidState;
use crate::vehicle::{ControlInput, MixingMap, VehicleParams};
use nalgebra::{Matrix3, Vector3};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("gain `{name}` must be strictly positive, got {value}")]
    NonPositiveGain { name: &'static str, value: f64 },
    #[error("robust exponent must satisfy tau > 2, got {0}")]
    BadRobustExponent(f64),
    #[error("adaptive table pack must contain `{0}`")]
    MissingTable(&'static str),
    #[error("adaptive tables must share the same grid")]
    GridMismatch,
    #[error("table error: {0}")]
    Table(#[from] GpError),
}

/// Controller gains and robust constants.
#[derive(Debug, Clone, Copy)]
pub struct GeomGains {
    pub k_r: f64,
    pub k_v: f64,
    pub k_big_r: f64,
    pub k_omega: f64,
    pub c1: f64,
    pub c2: f64,
    pub eps_r: f64,
    pub eps_big_r: f64,
    /// Robust-term exponent, must exceed 2.
    pub tau_exp: f64,
}

impl GeomGains {
    /// The study gains: `k_r = 4.5, k_v = 0.3, k_R = 0.2, k_ω = 0.002`
    /// with `τ = 3, c₁ = 1, c₂ = 0.1, ε_r = ε_R = 4·10⁻⁴`.
    pub fn study_defaults() -> Self {
        Self {
            k_r: 4.5,
            k_v: 0.3,
            k_big_r: 0.2,
            k_omega: 0.002,
            c1: 1.0,
            c2: 0.1,
            eps_r: 4e-4,
            eps_big_r: 4e-4,
            tau_exp: 3.0,
        }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        for (name, value) in [
            ("k_r", self.k_r),
            ("k_v", self.k_v),
            ("k_R", self.k_big_r),
            ("k_omega", self.k_omega),
            ("c1", self.c1),
            ("c2", self.c2),
            ("eps_r", self.eps_r),
            ("eps_R", self.eps_big_r),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ControlError::NonPositiveGain { name, value });
            }
        }
        if !(self.tau_exp > 2.0) {
            return Err(ControlError::BadRobustExponent(self.tau_exp));
        }
        Ok(())
    }
}

/// Tilt limit [rad] of the force-derived hover attitude reference.
pub const MAX_FORCE_TILT: f64 = 0.35;

/// One sample of the reference trajectory.
///
/// With `attitude_from_force` set, the attitude entries are placeholders and
/// the controller derives the reference attitude from the direction of the
/// commanded force (position-tracking mode). This is how hover segments
/// recover lateral offsets, which a fixed attitude reference cannot correct.
/// During the flip window the planner supplies the attitude explicitly.
#[derive(Debug, Clone, Copy)]
pub struct ReferencePoint {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub rotation: Matrix3<f64>,
    pub angular_rate: Vector3<f64>,
    pub angular_accel: Vector3<f64>,
    pub attitude_from_force: bool,
}

impl ReferencePoint {
    pub fn hover_at(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            acceleration: Vector3::zeros(),
            rotation: Matrix3::identity(),
            angular_rate: Vector3::zeros(),
            angular_accel: Vector3::zeros(),
            attitude_from_force: true,
        }
    }

    /// Explicit-attitude sample (the flip window).
    pub fn with_explicit_attitude(mut self) -> Self {
        self.attitude_from_force = false;
        self
    }

    /// Resolves the attitude reference actually tracked at state `x`: either
    /// the explicit one, or the frame whose third axis aligns with the
    /// nominal commanded force (zero yaw heading).
    ///
    /// The derived tilt is limited to [`MAX_FORCE_TILT`] so that the small
    /// torque envelope is never asked to chase an aggressive lateral-force
    /// demand; the thrust-priority saturation would otherwise starve the
    /// attitude loop.
    pub fn resolve(&self, x: &RigidState, gains: &GeomGains, params: &VehicleParams) -> Self {
        if !self.attitude_from_force {
            return *self;
        }
        let e3 = Vector3::new(0.0, 0.0, 1.0);
        let force = gains.k_r * (x.position - self.position)
            + gains.k_v * (x.velocity - self.velocity)
            + params.mass * crate::GRAVITY * e3
            - params.mass * self.acceleration;
        // tilt limit: clamp the horizontal force component against the
        // (floored) vertical one
        let f_z = force.z.max(0.5 * params.mass * crate::GRAVITY);
        let f_h = Vector3::new(force.x, force.y, 0.0);
        let h_max = MAX_FORCE_TILT.tan() * f_z;
        let f_h = if f_h.norm() > h_max { f_h * (h_max / f_h.norm()) } else { f_h };
        let force = Vector3::new(f_h.x, f_h.y, f_z);
        let b3 = if force.norm() > 1e-9 { force.normalize() } else { e3 };
        let x_heading = Vector3::x();
        let cross = b3.cross(&x_heading);
        let b2 = if cross.norm() > 1e-9 { cross.normalize() } else { Vector3::y() };
        let b1 = b2.cross(&b3);
        let mut resolved = *self;
        resolved.rotation = Matrix3::from_columns(&[b1, b2, b3]);
        resolved.angular_rate = Vector3::zeros();
        resolved.angular_accel = Vector3::zeros();
        resolved.attitude_from_force = false;
        resolved
    }
}

/// A continuous-time reference trajectory.
pub trait ReferenceSource: Send + Sync {
    fn sample(&self, t: f64) -> ReferencePoint;
}

/// Constant hover reference.
#[derive(Debug, Clone, Copy)]
pub struct HoverReference(pub Vector3<f64>);

impl ReferenceSource for HoverReference {
    fn sample(&self, _t: f64) -> ReferencePoint {
        ReferencePoint::hover_at(self.0)
    }
}

/// The four geometric tracking error terms.
#[derive(Debug, Clone, Copy)]
pub struct TrackingErrors {
    pub e_r: Vector3<f64>,
    pub e_v: Vector3<f64>,
    pub e_big_r: Vector3<f64>,
    pub e_omega: Vector3<f64>,
}

/// `e_r = r − r_d`, `e_v = ṙ − ṙ_d`,
/// `e_R = ½(R_dᵀR − RᵀR_d)∨`, `e_ω = ω − RᵀR_d·ω_d`.
pub fn tracking_errors(x: &RigidState, reference: &ReferencePoint) -> TrackingErrors {
    let rd_t_r = reference.rotation.transpose() * x.rotation;
    let e_big_r = vee_unchecked(&(rd_t_r - rd_t_r.transpose())) * 0.5;
    TrackingErrors {
        e_r: x.position - reference.position,
        e_v: x.velocity - reference.velocity,
        e_big_r,
        e_omega: x.angular_rate - rd_t_r.transpose() * reference.angular_rate,
    }
}

/// Attitude error function `Ψ = ½ tr(I − R_dᵀ R) ∈ [0, 2]`.
pub fn attitude_error_psi(r: &Matrix3<f64>, r_d: &Matrix3<f64>) -> f64 {
    0.5 * (Matrix3::identity() - r_d.transpose() * r).trace()
}

/// Saturation-shaped robust feedback `(μ_r, μ_R)`:
///
/// ```text
/// e_B = e_v + (c₁/m)·e_r,   μ_r = −δ_r^{τ+2}·e_B·‖e_B‖^τ / (δ_r^{τ+1}·‖e_B‖^{τ+1} + ε_r^{τ+1})
/// e_A = e_ω + c₂·J⁻¹·e_R,   μ_R = −δ_R²·e_A / (δ_R·‖e_A‖ + ε_R)
/// ```
///
/// Both vanish with their δ and are bounded by it in norm.
pub fn robust_terms(
    errors: &TrackingErrors,
    gains: &GeomGains,
    params: &VehicleParams,
    delta_r: f64,
    delta_big_r: f64,
) -> (Vector3<f64>, Vector3<f64>) {
    let tau = gains.tau_exp;
    let e_b = errors.e_v + (gains.c1 / params.mass) * errors.e_r;
    let nb = e_b.norm();
    let mu_r = -(delta_r.powf(tau + 2.0) * nb.powf(tau))
        / (delta_r.powf(tau + 1.0) * nb.powf(tau + 1.0) + gains.eps_r.powf(tau + 1.0))
        * e_b;

    let j_inv = Vector3::new(
        1.0 / params.inertia.x,
        1.0 / params.inertia.y,
        1.0 / params.inertia.z,
    );
    let e_a = errors.e_omega + gains.c2 * j_inv.component_mul(&errors.e_big_r);
    let na = e_a.norm();
    let mu_big_r = -(delta_big_r * delta_big_r) / (delta_big_r * na + gains.eps_big_r) * e_a;
    (mu_r, mu_big_r)
}

/// How the two per-output standard deviations are combined into one scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaAggregation {
    /// `σ = √(σ₁² + σ₂²)` (the conservative default).
    Euclidean,
    /// `σ = max(σ₁, σ₂)` (the spectral norm of the diagonal covariance).
    Max,
}

impl SigmaAggregation {
    fn combine(&self, s1: f64, s2: f64) -> f64 {
        match self {
            SigmaAggregation::Euclidean => (s1 * s1 + s2 * s2).sqrt(),
            SigmaAggregation::Max => s1.max(s2),
        }
    }
}

/// GP lookup tables for the roll/pitch torque residuals over the inputs
/// `(q₁, q₂, ω_x, ω_y)`, plus the global uncertainty bound
/// `δ_R = max over the grid of 2σ(x)`.
pub struct AdaptiveModel {
    roll: LookupTable,
    pitch: LookupTable,
    aggregation: SigmaAggregation,
    delta_big_r: f64,
    out_of_grid: AtomicU64,
}

impl AdaptiveModel {
    pub fn new(
        roll: LookupTable,
        pitch: LookupTable,
        aggregation: SigmaAggregation,
    ) -> Result<Self, ControlError> {
        if roll.axes != pitch.axes {
            return Err(ControlError::GridMismatch);
        }
        // global bound computed over the grid nodes at load time
        let delta_big_r = roll
            .sd
            .iter()
            .zip(pitch.sd.iter())
            .map(|(&a, &b)| 2.0 * aggregation.combine(a, b))
            .fold(0.0f64, f64::max);
        Ok(Self { roll, pitch, aggregation, delta_big_r, out_of_grid: AtomicU64::new(0) })
    }

    /// Loads the `delta_R_roll` / `delta_R_pitch` tables from a pack file.
    pub fn load(path: impl AsRef<Path>, aggregation: SigmaAggregation) -> Result<Self, ControlError> {
        let pack = TablePack::load(path)?;
        let roll = pack.get("delta_R_roll").ok_or(ControlError::MissingTable("delta_R_roll"))?;
        let pitch =
            pack.get("delta_R_pitch").ok_or(ControlError::MissingTable("delta_R_pitch"))?;
        Self::new(roll.clone(), pitch.clone(), aggregation)
    }

    /// Global ultimate-bound constant `δ_R`.
    pub fn delta_big_r(&self) -> f64 {
        self.delta_big_r
    }

    /// Queries clamped to the grid boundary so far.
    pub fn out_of_grid_count(&self) -> u64 {
        self.out_of_grid.load(Ordering::Relaxed)
    }

    /// Adaptive torque compensation `η_R` (third component zero) and the
    /// pointwise bound `δ̂_R(x) = 2σ(x)` at the current state.
    pub fn adaptive_terms(&self, x: &RigidState) -> (Vector3<f64>, f64) {
        let input = [x.quaternion[1], x.quaternion[2], x.angular_rate.x, x.angular_rate.y];
        let (m1, s1, c1) = self.roll.eval_tracking_clamp(&input);
        let (m2, s2, c2) = self.pitch.eval_tracking_clamp(&input);
        if c1 || c2 {
            self.out_of_grid.fetch_add(1, Ordering::Relaxed);
        }
        (Vector3::new(m1, m2, 0.0), 2.0 * self.aggregation.combine(s1, s2))
    }
}

/// Outputs of one control-law evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ControlLawOutput {
    pub input: ControlInput,
    pub saturated: bool,
    /// Adaptive compensation applied (zero without a model).
    pub eta_big_r: Vector3<f64>,
    /// Robust terms applied (zero when robust control is off).
    pub mu_r: Vector3<f64>,
    pub mu_big_r: Vector3<f64>,
}

/// Geometric tracking law with optional adaptive and robust augmentation.
///
/// ```text
/// F = (k_r·e_r + k_v·e_v + m·g·e₃ − m·r̈_d + η_r − μ_r)ᵀ·R·e₃
/// τ = −k_R·e_R − k_ω·e_ω + ω×Jω − J(ω̂·RᵀR_d·ω_d − RᵀR_d·ω̇_d) − η_R + μ_R
/// ```
///
/// The thrust is clamped to `[0, F_max]`; if the rotor thrusts recovered by
/// the mixing map are infeasible, the torque vector is scaled uniformly
/// towards feasibility (direction preserved).
#[allow(clippy::too_many_arguments)]
pub fn control_law(
    x: &RigidState,
    reference: &ReferencePoint,
    gains: &GeomGains,
    params: &VehicleParams,
    mixing: &MixingMap,
    adaptive: Option<&AdaptiveModel>,
    robust: bool,
    delta_r_bound: f64,
) -> ControlLawOutput {
    let reference = reference.resolve(x, gains, params);
    let errors = tracking_errors(x, &reference);
    let e3 = Vector3::new(0.0, 0.0, 1.0);
    let j = params.inertia_matrix();

    let (eta_big_r, delta_hat) = match adaptive {
        Some(model) => model.adaptive_terms(x),
        None => (Vector3::zeros(), 0.0),
    };
    let eta_r = Vector3::zeros(); // translational channel kept nominal

    let (mu_r, mu_big_r) = if robust {
        let delta_big_r = adaptive.map(|m| m.delta_big_r()).unwrap_or(delta_hat);
        robust_terms(&errors, gains, params, delta_r_bound, delta_big_r)
    } else {
        (Vector3::zeros(), Vector3::zeros())
    };

    let thrust_vector = gains.k_r * errors.e_r
        + gains.k_v * errors.e_v
        + params.mass * crate::GRAVITY * e3
        - params.mass * reference.acceleration
        + eta_r
        - mu_r;
    let thrust_raw = thrust_vector.dot(&(x.rotation * e3));

    let rd_t = x.rotation.transpose() * reference.rotation;
    let omega = x.angular_rate;
    let torque_raw = -gains.k_big_r * errors.e_big_r - gains.k_omega * errors.e_omega
        + omega.cross(&(j * omega))
        - j * (hat(&omega) * (rd_t * reference.angular_rate) - rd_t * reference.angular_accel)
        - eta_big_r
        + mu_big_r;

    // saturation: clamp F, then pull the torque back to rotor feasibility
    let thrust = thrust_raw.clamp(0.0, params.f_max);
    let mut saturated = thrust != thrust_raw;
    let torque_dirs = mixing.unmix(&ControlInput::new(0.0, torque_raw));
    let quarter = thrust / 4.0;
    let mut scale = 1.0f64;
    for &d in &torque_dirs {
        if d > 1e-15 {
            scale = scale.min((params.t_max - quarter) / d);
        } else if d < -1e-15 {
            scale = scale.min(quarter / -d);
        }
    }
    let scale = scale.clamp(0.0, 1.0);
    if scale < 1.0 {
        saturated = true;
    }
    ControlLawOutput {
        input: ControlInput::new(thrust, scale * torque_raw),
        saturated,
        eta_big_r,
        mu_r,
        mu_big_r,
    }
}

/// Lyapunov function candidates and the quadratic form of the `V̇₂` bound:
///
/// ```text
/// V₁ = ½k_r‖e_r‖² + ½m‖e_v‖² + c₁·e_rᵀe_v
/// V₂ = ½e_ωᵀJe_ω + k_R·Ψ + c₂·e_Rᵀe_ω
/// ```
pub fn lyapunov_diagnostics(
    x: &RigidState,
    reference: &ReferencePoint,
    gains: &GeomGains,
    params: &VehicleParams,
) -> Diagnostics {
    let reference = reference.resolve(x, gains, params);
    let errors = tracking_errors(x, &reference);
    let psi = attitude_error_psi(&x.rotation, &reference.rotation);
    let j = params.inertia_matrix();
    let v1 = 0.5 * gains.k_r * errors.e_r.norm_squared()
        + 0.5 * params.mass * errors.e_v.norm_squared()
        + gains.c1 * errors.e_r.dot(&errors.e_v);
    let v2 = 0.5 * errors.e_omega.dot(&(j * errors.e_omega))
        + gains.k_big_r * psi
        + gains.c2 * errors.e_big_r.dot(&errors.e_omega);

    // W₂ built from the gains and the extreme inertia eigenvalues
    let lambda_min = params.inertia.min();
    let lambda_max = params.inertia.max();
    let z = (errors.e_big_r.norm(), errors.e_omega.norm());
    let w11 = gains.c2 * gains.k_big_r / lambda_max;
    let w12 = -gains.c2 * gains.k_omega / (2.0 * lambda_min);
    let w22 = gains.k_omega - gains.c2;
    let w2_form = w11 * z.0 * z.0 + 2.0 * w12 * z.0 * z.1 + w22 * z.1 * z.1;

    Diagnostics {
        psi,
        e_r: errors.e_r,
        e_big_r: errors.e_big_r,
        v1,
        v2,
        w2_form,
        saturated: false,
    }
}

/// Ready-to-run tracking controller: immutable after construction, pure in
/// `(t, state)`, safe to share across concurrent rollouts.
pub struct GeometricController {
    params: VehicleParams,
    gains: GeomGains,
    mixing: MixingMap,
    reference: Arc<dyn ReferenceSource>,
    adaptive: Option<AdaptiveModel>,
    robust: bool,
    delta_r_bound: f64,
}

impl GeometricController {
    pub fn new(
        params: VehicleParams,
        gains: GeomGains,
        reference: Arc<dyn ReferenceSource>,
    ) -> Result<Self, ControlError> {
        gains.validate()?;
        let mixing = MixingMap::new(&params);
        Ok(Self {
            params,
            gains,
            mixing,
            reference,
            adaptive: None,
            robust: false,
            delta_r_bound: 0.0,
        })
    }

    /// Attaches the GP lookup tables (adaptive compensation).
    pub fn with_adaptive(mut self, model: AdaptiveModel) -> Self {
        self.adaptive = Some(model);
        self
    }

    /// Enables the robust terms. The rotational bound δ_R comes from the
    /// adaptive model's grid; the translational bound stays at
    /// `delta_r_bound` (0 keeps that channel nominal).
    pub fn with_robust(mut self, delta_r_bound: f64) -> Self {
        self.robust = true;
        self.delta_r_bound = delta_r_bound;
        self
    }

    pub fn adaptive_model(&self) -> Option<&AdaptiveModel> {
        self.adaptive.as_ref()
    }

    pub fn gains(&self) -> &GeomGains {
        &self.gains
    }

    pub fn evaluate(&self, t: f64, x: &RigidState) -> ControlLawOutput {
        let reference = self.reference.sample(t);
        control_law(
            x,
            &reference,
            &self.gains,
            &self.params,
            &self.mixing,
            self.adaptive.as_ref(),
            self.robust,
            self.delta_r_bound,
        )
    }
}

impl Controller for GeometricController {
    fn control(&self, t: f64, x: &RigidState) -> ControlInput {
        self.evaluate(t, x).input
    }

    fn diagnostics(&self, t: f64, x: &RigidState) -> Option<Diagnostics> {
        let reference = self.reference.sample(t);
        let mut diag = lyapunov_diagnostics(x, &reference, &self.gains, &self.params);
        diag.saturated = self.evaluate(t, x).saturated;
        Some(diag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{rollout, SimOptions};
    use crate::so3::rotation_from_axis_angle;
    use approx::assert_relative_eq;

    fn setup() -> (VehicleParams, GeomGains, MixingMap) {
        let p = VehicleParams::crazyflie();
        let m = MixingMap::new(&p);
        (p, GeomGains::study_defaults(), m)
    }

    #[test]
    fn gains_validation() {
        let mut g = GeomGains::study_defaults();
        g.validate().unwrap();
        g.tau_exp = 2.0;
        assert!(matches!(g.validate(), Err(ControlError::BadRobustExponent(_))));
        g = GeomGains::study_defaults();
        g.k_v = 0.0;
        assert!(matches!(g.validate(), Err(ControlError::NonPositiveGain { .. })));
    }

    #[test]
    fn zero_errors_for_exact_tracking() {
        let x = RigidState::hover_origin();
        let reference = ReferencePoint::hover_at(Vector3::zeros());
        let e = tracking_errors(&x, &reference);
        assert!(e.e_r.norm() < 1e-15);
        assert!(e.e_v.norm() < 1e-15);
        assert!(e.e_big_r.norm() < 1e-15);
        assert!(e.e_omega.norm() < 1e-15);
    }

    #[test]
    fn small_single_axis_attitude_error() {
        let alpha = 0.05f64;
        let mut x = RigidState::hover_origin();
        x.rotation = rotation_from_axis_angle(&Vector3::y(), alpha);
        x.refresh_quaternion();
        let reference = ReferencePoint::hover_at(Vector3::zeros());
        let e = tracking_errors(&x, &reference);
        assert_relative_eq!(e.e_big_r.y, alpha.sin(), epsilon = 1e-12);
        assert!(e.e_big_r.x.abs() < 1e-12 && e.e_big_r.z.abs() < 1e-12);
    }

    #[test]
    fn antipodal_attitude_error_vanishes() {
        let mut x = RigidState::hover_origin();
        let mut reference = ReferencePoint::hover_at(Vector3::zeros());
        reference.rotation = Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, -1.0));
        let e = tracking_errors(&x, &reference);
        assert!(e.e_big_r.norm() < 1e-15);
        assert_relative_eq!(
            attitude_error_psi(&x.rotation, &reference.rotation),
            2.0,
            epsilon = 1e-12
        );
        x.rotation = Matrix3::identity();
        assert_relative_eq!(attitude_error_psi(&x.rotation, &x.rotation), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn psi_bounds_hold_below_one() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let mut checked = 0;
        while checked < 1000 {
            let axis = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0f64),
            );
            if axis.norm() < 1e-3 {
                continue;
            }
            let r = rotation_from_axis_angle(&axis, rng.gen_range(-3.1..3.1));
            let rd = rotation_from_axis_angle(&Vector3::x(), rng.gen_range(-1.0..1.0));
            let psi = attitude_error_psi(&r, &rd);
            if psi >= 1.0 {
                continue;
            }
            let rd_t_r = rd.transpose() * r;
            let e_big_r = vee_unchecked(&(rd_t_r - rd_t_r.transpose())) * 0.5;
            let n2 = e_big_r.norm_squared();
            assert!(0.5 * n2 <= psi + 1e-12);
            assert!(psi <= n2 / (2.0 - psi) + 1e-12);
            checked += 1;
        }
    }

    #[test]
    fn hover_thrust_is_weight() {
        let (p, g, m) = setup();
        let x = RigidState::hover_origin();
        let reference = ReferencePoint::hover_at(Vector3::zeros());
        let out = control_law(&x, &reference, &g, &p, &m, None, false, 0.0);
        assert_relative_eq!(out.input.thrust, 0.2747, epsilon = 1e-4);
        assert!(out.input.torque.norm() < 1e-15);
        assert!(!out.saturated);
    }

    #[test]
    fn lateral_offset_keeps_hover_thrust() {
        // an x offset is orthogonal to R·e₃ at level attitude
        let (p, g, m) = setup();
        let mut x = RigidState::hover_origin();
        x.position = Vector3::new(0.1, 0.0, 0.0);
        let reference = ReferencePoint::hover_at(Vector3::zeros());
        let out = control_law(&x, &reference, &g, &p, &m, None, false, 0.0);
        assert_relative_eq!(out.input.thrust, p.hover_thrust(), epsilon = 1e-12);
    }

    #[test]
    fn robust_terms_vanish_at_zero_error() {
        let (p, g, _) = setup();
        let errors = TrackingErrors {
            e_r: Vector3::zeros(),
            e_v: Vector3::zeros(),
            e_big_r: Vector3::zeros(),
            e_omega: Vector3::zeros(),
        };
        let (mu_r, mu_big_r) = robust_terms(&errors, &g, &p, 0.5, 0.5);
        assert!(mu_r.norm() < 1e-15);
        assert!(mu_big_r.norm() < 1e-15);
    }

    #[test]
    fn robust_norm_bounded_by_delta() {
        use rand::{Rng, SeedableRng};
        let (p, g, _) = setup();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10_000 {
            let errors = TrackingErrors {
                e_r: Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0),
                e_v: Vector3::new(rng.gen_range(-2.0..2.0), 0.0, rng.gen_range(-2.0..2.0)),
                e_big_r: Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ),
                e_omega: Vector3::new(
                    rng.gen_range(-20.0..20.0),
                    rng.gen_range(-20.0..20.0),
                    rng.gen_range(-20.0..20.0),
                ),
            };
            let delta_r = rng.gen_range(0.0..2.0);
            let delta_big_r = rng.gen_range(0.0..2.0);
            let (mu_r, mu_big_r) = robust_terms(&errors, &g, &p, delta_r, delta_big_r);
            assert!(mu_r.norm() <= delta_r + 1e-12);
            assert!(mu_big_r.norm() <= delta_big_r + 1e-12);
        }
    }

    #[test]
    fn robust_leakage_inequality() {
        // e_Aᵀ(Δ_R − η_R + μ_R) ≤ ε_R whenever ‖Δ_R − η_R‖ ≤ δ_R
        use rand::{Rng, SeedableRng};
        let (p, g, _) = setup();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10_000 {
            let errors = TrackingErrors {
                e_r: Vector3::zeros(),
                e_v: Vector3::zeros(),
                e_big_r: Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0),
                e_omega: Vector3::new(
                    rng.gen_range(-10.0..10.0),
                    rng.gen_range(-10.0..10.0),
                    rng.gen_range(-10.0..10.0),
                ),
            };
            let delta_big_r = rng.gen_range(1e-6..1.0);
            let (_, mu_big_r) = robust_terms(&errors, &g, &p, 0.0, delta_big_r);
            let j_inv = Vector3::new(1.0 / p.inertia.x, 1.0 / p.inertia.y, 1.0 / p.inertia.z);
            let e_a = errors.e_omega + g.c2 * j_inv.component_mul(&errors.e_big_r);
            // worst-case residual aligned with e_A
            let residual = if e_a.norm() > 0.0 {
                delta_big_r * e_a / e_a.norm()
            } else {
                Vector3::zeros()
            };
            let lhs = e_a.dot(&(residual + mu_big_r));
            assert!(lhs <= g.eps_big_r + 1e-12, "leakage {lhs} > eps {}", g.eps_big_r);
        }
    }

    #[test]
    fn lyapunov_zero_at_equilibrium_and_decoupled_without_cross_terms() {
        let (p, mut g, _) = setup();
        let x = RigidState::hover_origin();
        let reference = ReferencePoint::hover_at(Vector3::zeros());
        let d = lyapunov_diagnostics(&x, &reference, &g, &p);
        assert_relative_eq!(d.v1, 0.0, epsilon = 1e-15);
        assert_relative_eq!(d.v2, 0.0, epsilon = 1e-15);

        // with c1 = c2 → 0 the candidates reduce to pure quadratic energies
        // (explicit identity attitude keeps Ψ out of V₂)
        let reference = ReferencePoint::hover_at(Vector3::zeros()).with_explicit_attitude();
        g.c1 = 1e-300;
        g.c2 = 1e-300;
        let mut x2 = RigidState::hover_origin();
        x2.position = Vector3::new(0.1, 0.0, 0.0);
        x2.velocity = Vector3::new(0.0, 0.2, 0.0);
        x2.angular_rate = Vector3::new(0.0, 1.0, 0.0);
        let d2 = lyapunov_diagnostics(&x2, &reference, &g, &p);
        let expect_v1 = 0.5 * g.k_r * 0.01 + 0.5 * p.mass * 0.04;
        let expect_v2 = 0.5 * p.inertia.y * 1.0;
        assert_relative_eq!(d2.v1, expect_v1, epsilon = 1e-12);
        assert_relative_eq!(d2.v2, expect_v2, epsilon = 1e-12);
    }

    #[test]
    fn saturation_scales_torque_to_feasibility() {
        let (p, g, m) = setup();
        let mut x = RigidState::hover_origin();
        // enormous attitude error drives the raw torque beyond the envelope
        x.rotation = rotation_from_axis_angle(&Vector3::x(), 1.5);
        x.refresh_quaternion();
        x.angular_rate = Vector3::new(50.0, 0.0, 0.0);
        let reference = ReferencePoint::hover_at(Vector3::zeros());
        let out = control_law(&x, &reference, &g, &p, &m, None, false, 0.0);
        assert!(out.saturated);
        let (thrusts, feasible) = m.unmix_checked(&out.input, 1e-9);
        assert!(feasible, "scaled torque still infeasible: {thrusts:?}");
    }

    #[test]
    fn hover_recovery_from_offset_converges() {
        let (p, g, _) = setup();
        let reference = Arc::new(HoverReference(Vector3::zeros()));
        let controller = GeometricController::new(p.clone(), g, reference).unwrap();
        let mut x0 = RigidState::hover_origin();
        x0.position = Vector3::new(0.1, 0.0, 0.0);
        x0.rotation = rotation_from_axis_angle(&Vector3::y(), 10.0f64.to_radians());
        x0.refresh_quaternion();
        let log = rollout(&x0, &controller, None, 5.0, &p, &SimOptions::default()).unwrap();
        let d = log.diagnostics.as_ref().unwrap();
        let last = d.last().unwrap();
        assert!(last.e_r.norm() < 1e-3, "position error {}", last.e_r.norm());
        assert!(last.psi < 1e-6, "attitude error {}", last.psi);
    }

    #[test]
    fn v2_decreases_while_quadratic_form_dominates() {
        // monitor from the stability argument: V₂ must decay whenever
        // z₂ᵀW₂z₂ exceeds the leakage constant
        let (p, g, _) = setup();
        let reference = Arc::new(HoverReference(Vector3::zeros()));
        let controller = GeometricController::new(p.clone(), g, reference).unwrap();
        let mut x0 = RigidState::hover_origin();
        x0.rotation = rotation_from_axis_angle(&Vector3::y(), 0.3);
        x0.refresh_quaternion();
        let log = rollout(&x0, &controller, None, 1.0, &p, &SimOptions::default()).unwrap();
        let d = log.diagnostics.as_ref().unwrap();
        let mut violations = 0;
        for w in d.windows(2) {
            if w[0].w2_form > 10.0 * g.eps_big_r && w[1].v2 > w[0].v2 + 1e-9 {
                violations += 1;
            }
        }
        assert_eq!(violations, 0, "V2 grew under a dominating quadratic form");
    }
}
