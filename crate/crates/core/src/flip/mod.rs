//! Five-phase bang-bang backflip primitive and its Bayesian optimization.
//!
//! The maneuver is parametrized by `η = [U₁, t₁, t₃, U₅, t₅]`:
//!
//! 1. **Accelerate** — collective `U₁` for `t₁`, tilting slowly into the
//!    negative pitch direction.
//! 2. **Start rotation** — maximal differential thrust (pair at `T_max`, pair
//!    at zero) for a duration `t₂` solved from the closure rule below.
//! 3. **Coast** — low uniform thrust for `t₃`, holding the angular rate.
//! 4. **Stop rotation** — mirrored differential thrust for `t₄`.
//! 5. **Recover** — collective `U₅` for `t₅`, levelling the tilt.
//!
//! Closure rule: with the tilt phases at ∓5% of the peak angular acceleration
//! `θ̈_max = 2·T_max·l/J_yy`, the durations `t₂` and `t₄` are the unique
//! solution of "net pitch angle −2π and terminal pitch rate zero", i.e.
//! `t₄ = t₂ + (β/θ̈_max)(t₁ − t₅)` with `t₂` the positive root of a quadratic.

use crate::bo::{self, BoError, BoOptions, SearchBox};
use crate::sim::planar::{rollout_thrust_segments, PlanarLog, PlanarState};
use crate::vehicle::{ControlInput, MixingMap, VehicleParams};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlipError {
    #[error("primitive parameter `{name}` out of bounds: {value}")]
    ParamOutOfBounds { name: &'static str, value: f64 },
    #[error("phase `{phase}` requires rotor thrust {thrust:.4} N outside [0, {t_max}] N")]
    InfeasiblePhase { phase: &'static str, thrust: f64, t_max: f64 },
    #[error("closure rule has no positive rotation duration for this η")]
    InfeasibleClosure,
    #[error("query time {t} outside the schedule duration {total}")]
    TimeOutOfRange { t: f64, total: f64 },
    #[error("optimizer error: {0}")]
    Bo(#[from] BoError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// The 5-vector `η = [U₁, t₁, t₃, U₅, t₅]` (collective accelerations in
/// m/s², durations in s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveParams {
    pub u1: f64,
    pub t1: f64,
    pub t3: f64,
    pub u5: f64,
    pub t5: f64,
}

impl PrimitiveParams {
    pub fn new(u1: f64, t1: f64, t3: f64, u5: f64, t5: f64) -> Self {
        Self { u1, t1, t3, u5, t5 }
    }

    /// The optimized parameter vector reported for this maneuver:
    /// `[17.8, 0.14, 0.2, 17.8, 0.12]`.
    pub fn reference_optimum() -> Self {
        Self::new(17.8, 0.14, 0.2, 17.8, 0.12)
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.u1, self.t1, self.t3, self.u5, self.t5]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4])
    }
}

/// Search bounds for η.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FlipBounds {
    /// Collective acceleration bounds [m/s²] for U₁ and U₅.
    pub u: (f64, f64),
    /// Duration bounds [s] for t₁, t₃, t₅.
    pub t: (f64, f64),
}

impl Default for FlipBounds {
    /// `U ∈ [g, 18] m/s²`, `t ∈ [0.05, 0.3] s`.
    fn default() -> Self {
        Self { u: (crate::GRAVITY, 18.0), t: (0.05, 0.3) }
    }
}

impl FlipBounds {
    /// Near-maximal envelope derived from the vehicle:
    /// `U_max = 0.95·4·T_max/m`.
    pub fn from_envelope(params: &VehicleParams) -> Self {
        Self { u: (crate::GRAVITY, 0.95 * params.f_max / params.mass), t: (0.05, 0.3) }
    }

    pub fn contains(&self, eta: &PrimitiveParams) -> bool {
        let (ulo, uhi) = self.u;
        let (tlo, thi) = self.t;
        eta.u1 >= ulo
            && eta.u1 <= uhi
            && eta.u5 >= ulo
            && eta.u5 <= uhi
            && [eta.t1, eta.t3, eta.t5].iter().all(|&t| t >= tlo && t <= thi)
    }

    fn search_box(&self) -> SearchBox {
        SearchBox::new(
            vec![self.u.0, self.t.0, self.t.0, self.u.0, self.t.0],
            vec![self.u.1, self.t.1, self.t.1, self.u.1, self.t.1],
        )
        .expect("flip bounds are a valid box")
    }
}

/// Control envelope of the bang-bang phases.
#[derive(Debug, Clone, Copy)]
pub struct FlipEnvelope {
    /// Peak pitch acceleration `2·T_max·l/J_yy` [rad/s²].
    pub theta_ddot_max: f64,
    /// Tilt acceleration of phases 1/5, 5% of the peak [rad/s²].
    pub beta: f64,
    /// Collective acceleration during phases 2/4, `2·T_max/m` [m/s²].
    pub u_rotation: f64,
    /// Coast collective acceleration [m/s²], small but positive so the
    /// rotors keep spinning.
    pub u_coast: f64,
}

impl FlipEnvelope {
    pub fn from_vehicle(params: &VehicleParams) -> Self {
        let theta_ddot_max =
            2.0 * params.t_max * params.arm_projected / params.inertia.y;
        Self {
            theta_ddot_max,
            beta: 0.05 * theta_ddot_max,
            u_rotation: 2.0 * params.t_max / params.mass,
            u_coast: 2.0,
        }
    }
}

/// One constant-command phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    pub name: &'static str,
    /// Duration [s].
    pub duration: f64,
    /// Collective acceleration [m/s²].
    pub u: f64,
    /// Pitch acceleration [rad/s²].
    pub theta_ddot: f64,
}

/// The five-phase command sequence realizing a full backflip.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSchedule {
    pub phases: [Phase; 5],
}

impl PhaseSchedule {
    pub fn total_duration(&self) -> f64 {
        self.phases.iter().map(|p| p.duration).sum()
    }

    /// The phase active at `t`, with the offset into it.
    pub fn phase_at(&self, t: f64) -> Result<&Phase, FlipError> {
        let total = self.total_duration();
        if t < 0.0 || t > total {
            return Err(FlipError::TimeOutOfRange { t, total });
        }
        let mut acc = 0.0;
        for p in &self.phases {
            acc += p.duration;
            if t <= acc {
                return Ok(p);
            }
        }
        Ok(&self.phases[4])
    }

    /// Per-phase `(duration, rotor thrusts)` segments.
    pub fn thrust_segments(&self, params: &VehicleParams) -> Result<Vec<(f64, [f64; 4])>, FlipError> {
        self.phases
            .iter()
            .map(|p| Ok((p.duration, phase_rotor_thrusts(p, params)?)))
            .collect()
    }

    /// Per-phase `(duration, ControlInput)` segments for the 3D simulator,
    /// reconstructed through the mixing map.
    pub fn input_segments(&self, params: &VehicleParams) -> Result<Vec<(f64, ControlInput)>, FlipError> {
        let map = MixingMap::new(params);
        self.thrust_segments(params)
            .map(|segs| segs.into_iter().map(|(d, t)| (d, map.mix(&t))).collect())
    }

    /// Samples the commanded rotor thrusts at equal steps and writes
    /// `t, T1..T4, F, tauy` rows.
    pub fn write_csv(&self, params: &VehicleParams, step: f64, path: impl AsRef<Path>) -> Result<(), FlipError> {
        let map = MixingMap::new(params);
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "t,T1,T2,T3,T4,F,tauy")?;
        let total = self.total_duration();
        let n = (total / step).ceil() as usize;
        for i in 0..=n {
            let t = (i as f64 * step).min(total);
            let thrusts = schedule_to_rotor_thrusts(self, params, t)?;
            let u = map.mix(&thrusts);
            writeln!(
                f,
                "{},{},{},{},{},{},{}",
                t, thrusts[0], thrusts[1], thrusts[2], thrusts[3], u.thrust, u.torque.y
            )?;
        }
        Ok(())
    }
}

/// Rotor thrusts realizing a phase's `(m·U, J_yy·θ̈)` through the planar pair
/// split `T₁ = T₄`, `T₂ = T₃`; errors name the phase if a thrust would leave
/// `[0, T_max]`.
fn phase_rotor_thrusts(phase: &Phase, params: &VehicleParams) -> Result<[f64; 4], FlipError> {
    let base = params.mass * phase.u / 4.0;
    let diff = params.inertia.y * phase.theta_ddot / (4.0 * params.arm_projected);
    let front = base + diff; // rotors 1 and 4
    let back = base - diff; // rotors 2 and 3
    let tol = 1e-9;
    for &t in &[front, back] {
        if t < -tol || t > params.t_max + tol {
            return Err(FlipError::InfeasiblePhase {
                phase: phase.name,
                thrust: t,
                t_max: params.t_max,
            });
        }
    }
    Ok([front.clamp(0.0, params.t_max), back.clamp(0.0, params.t_max), back.clamp(0.0, params.t_max), front.clamp(0.0, params.t_max)])
}

/// Expands η into the five-phase schedule, solving the closure rule for the
/// rotation durations.
pub fn expand_schedule(
    eta: &PrimitiveParams,
    params: &VehicleParams,
    envelope: &FlipEnvelope,
) -> Result<PhaseSchedule, FlipError> {
    for (name, value) in [
        ("u1", eta.u1),
        ("t1", eta.t1),
        ("t3", eta.t3),
        ("u5", eta.u5),
        ("t5", eta.t5),
    ] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(FlipError::ParamOutOfBounds { name, value });
        }
    }
    let a = envelope.theta_ddot_max;
    let beta = envelope.beta;
    let delta = beta * (eta.t1 - eta.t5) / a;
    // positive root of  a·τ² + b·τ + c = 0
    let b = 2.0 * beta * eta.t1 + a * eta.t3;
    let c = 0.5 * beta * (eta.t1 * eta.t1 + eta.t5 * eta.t5) + beta * eta.t1 * delta
        - 0.5 * a * delta * delta
        + beta * eta.t1 * eta.t3
        - 2.0 * std::f64::consts::PI;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Err(FlipError::InfeasibleClosure);
    }
    let t2 = (-b + disc.sqrt()) / (2.0 * a);
    let t4 = t2 + delta;
    if t2 <= 0.0 || t4 <= 0.0 {
        return Err(FlipError::InfeasibleClosure);
    }

    let schedule = PhaseSchedule {
        phases: [
            Phase { name: "accelerate", duration: eta.t1, u: eta.u1, theta_ddot: -beta },
            Phase { name: "start-rotation", duration: t2, u: envelope.u_rotation, theta_ddot: -a },
            Phase { name: "coast", duration: eta.t3, u: envelope.u_coast, theta_ddot: 0.0 },
            Phase { name: "stop-rotation", duration: t4, u: envelope.u_rotation, theta_ddot: a },
            Phase { name: "recover", duration: eta.t5, u: eta.u5, theta_ddot: beta },
        ],
    };
    // surface an infeasible (U, θ̈) pairing right away
    for p in &schedule.phases {
        phase_rotor_thrusts(p, params)?;
    }
    Ok(schedule)
}

/// Commanded rotor thrusts at time `t` into the schedule.
pub fn schedule_to_rotor_thrusts(
    schedule: &PhaseSchedule,
    params: &VehicleParams,
    t: f64,
) -> Result<[f64; 4], FlipError> {
    let phase = schedule.phase_at(t)?;
    phase_rotor_thrusts(phase, params)
}

/// Integration step for the planar open-loop rollouts [s].
pub const PLANAR_STEP: f64 = 1e-3;

/// Planar open-loop rollout of a schedule from rest at the origin.
pub fn simulate_schedule_planar(
    schedule: &PhaseSchedule,
    params: &VehicleParams,
) -> Result<PlanarLog, FlipError> {
    let segments = schedule.thrust_segments(params)?;
    Ok(rollout_thrust_segments(&PlanarState::origin(), &segments, params, crate::GRAVITY, PLANAR_STEP))
}

/// Final-state error of the planar open-loop maneuver:
/// `e = [x, z, ẋ, ż, θ + 2π]` at the end of the schedule, so a perfect flip
/// (which sweeps θ to −2π) scores zero.
pub fn final_state_error(
    eta: &PrimitiveParams,
    params: &VehicleParams,
    envelope: &FlipEnvelope,
) -> Result<([f64; 5], f64), FlipError> {
    let schedule = expand_schedule(eta, params, envelope)?;
    let log = simulate_schedule_planar(&schedule, params)?;
    let s = log.final_state();
    let e = [s.x, s.z, s.vx, s.vz, s.theta + 2.0 * std::f64::consts::PI];
    let cost = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok((e, cost))
}

/// Cost wrapper used as the optimization objective. Infeasible schedules are
/// scored with 10× the worst cost archived so far.
pub struct FlipObjective {
    params: VehicleParams,
    envelope: FlipEnvelope,
    worst_cost: Mutex<f64>,
}

impl FlipObjective {
    pub fn new(params: VehicleParams) -> Self {
        let envelope = FlipEnvelope::from_vehicle(&params);
        Self { params, envelope, worst_cost: Mutex::new(1.0) }
    }

    pub fn envelope(&self) -> &FlipEnvelope {
        &self.envelope
    }

    pub fn cost(&self, eta: &PrimitiveParams) -> f64 {
        match final_state_error(eta, &self.params, &self.envelope) {
            Ok((_, cost)) => {
                let mut worst = self.worst_cost.lock().unwrap();
                if cost > *worst {
                    *worst = cost;
                }
                cost
            }
            Err(_) => 10.0 * *self.worst_cost.lock().unwrap(),
        }
    }
}

/// Options for [`optimize_flip`]; the evaluation budget mirrors the reported
/// study (250 random initial evaluations, 1000 iterations).
#[derive(Debug, Clone)]
pub struct FlipOptimizeOptions {
    pub n_init: usize,
    pub n_iter: usize,
    pub seed: u64,
    /// Stop as soon as a cost at or below this value is archived.
    pub target_cost: Option<f64>,
    pub archive_path: Option<PathBuf>,
}

impl Default for FlipOptimizeOptions {
    fn default() -> Self {
        Self { n_init: 250, n_iter: 1000, seed: 0, target_cost: None, archive_path: None }
    }
}

/// Result of the flip parameter optimization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlipOptimum {
    pub eta: PrimitiveParams,
    pub cost: f64,
    pub error: [f64; 5],
    pub seed: u64,
    pub evaluations: usize,
    pub bounds: FlipBounds,
}

impl FlipOptimum {
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<(), FlipError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self, FlipError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Maximizes `f(η) = −‖e(η)‖₂` over the bounds with the GP/EI optimizer and
/// returns the best archived parameter vector.
pub fn optimize_flip(
    bounds: &FlipBounds,
    params: &VehicleParams,
    opts: &FlipOptimizeOptions,
) -> Result<FlipOptimum, FlipError> {
    let objective = FlipObjective::new(params.clone());
    let f = |x: &[f64]| -objective.cost(&PrimitiveParams::from_slice(x));
    let mut bo_opts = BoOptions::new(opts.n_init, opts.n_iter, opts.seed);
    bo_opts.target = opts.target_cost.map(|c| -c);
    bo_opts.archive_path = opts.archive_path.clone();
    let result = bo::optimize(&f, bounds.search_box(), &bo_opts)?;

    // report the best *observed* evaluation: the cost is deterministic, so
    // the archive value is exact
    let eta = PrimitiveParams::from_slice(&result.best_observed_input);
    let (error, cost) = final_state_error(&eta, params, &FlipEnvelope::from_vehicle(params))?;
    Ok(FlipOptimum {
        eta,
        cost,
        error,
        seed: opts.seed,
        evaluations: result.inputs.len(),
        bounds: *bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn crazyflie_325() -> VehicleParams {
        // the rounded 32.5 mm arm used in worked numbers
        VehicleParams::crazyflie().with_arm_projected(0.0325)
    }

    #[test]
    fn envelope_peak_pitch_acceleration() {
        let p = crazyflie_325();
        let env = FlipEnvelope::from_vehicle(&p);
        // 2 · 0.16 · 0.0325 / 1.4e-5
        assert_relative_eq!(env.theta_ddot_max, 742.857142857, epsilon = 1e-6);
    }

    #[test]
    fn reference_eta_expands_and_closes_rotation() {
        let p = crazyflie_325();
        let env = FlipEnvelope::from_vehicle(&p);
        let schedule = expand_schedule(&PrimitiveParams::reference_optimum(), &p, &env).unwrap();
        let total = schedule.total_duration();
        assert!(
            (0.4..1.0).contains(&total),
            "total duration {total:.3} s outside the plausible flip envelope"
        );
        // the closure rule must null the pitch error by construction
        let (e, _) = final_state_error(&PrimitiveParams::reference_optimum(), &p, &env).unwrap();
        assert!(e[4].abs() < 1e-6, "pitch closure error {:.3e}", e[4]);
    }

    #[test]
    fn zero_coast_needs_longer_rotation_phases() {
        let p = crazyflie_325();
        let env = FlipEnvelope::from_vehicle(&p);
        let mut eta = PrimitiveParams::reference_optimum();
        let with_coast = expand_schedule(&eta, &p, &env).unwrap();
        eta.t3 = 1e-9;
        let without_coast = expand_schedule(&eta, &p, &env).unwrap();
        assert!(without_coast.phases[1].duration > with_coast.phases[1].duration);
    }

    #[test]
    fn coast_thrusts_are_uniform() {
        let p = crazyflie_325();
        let env = FlipEnvelope::from_vehicle(&p);
        let schedule =
            expand_schedule(&PrimitiveParams::reference_optimum(), &p, &env).unwrap();
        let t_coast = schedule.phases[0].duration + schedule.phases[1].duration
            + 0.5 * schedule.phases[2].duration;
        let thrusts = schedule_to_rotor_thrusts(&schedule, &p, t_coast).unwrap();
        for t in thrusts {
            assert_relative_eq!(t, env.u_coast * p.mass / 4.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn start_rotation_is_bang_bang_extreme() {
        let p = crazyflie_325();
        let env = FlipEnvelope::from_vehicle(&p);
        let schedule =
            expand_schedule(&PrimitiveParams::reference_optimum(), &p, &env).unwrap();
        let t_rot = schedule.phases[0].duration + 0.5 * schedule.phases[1].duration;
        let thrusts = schedule_to_rotor_thrusts(&schedule, &p, t_rot).unwrap();
        // negative pitch torque: rotors 1/4 at the bottom, 2/3 at the top
        assert_relative_eq!(thrusts[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(thrusts[3], 0.0, epsilon = 1e-12);
        assert_relative_eq!(thrusts[1], p.t_max, epsilon = 1e-12);
        assert_relative_eq!(thrusts[2], p.t_max, epsilon = 1e-12);
    }

    #[test]
    fn mixing_reconstructs_commanded_pair() {
        use rand::{Rng, SeedableRng};
        let p = crazyflie_325();
        let env = FlipEnvelope::from_vehicle(&p);
        let schedule =
            expand_schedule(&PrimitiveParams::reference_optimum(), &p, &env).unwrap();
        let map = MixingMap::new(&p);
        let total = schedule.total_duration();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let t = rng.gen_range(0.0..total);
            let phase = schedule.phase_at(t).unwrap();
            let thrusts = schedule_to_rotor_thrusts(&schedule, &p, t).unwrap();
            let u = map.mix(&thrusts);
            assert!((u.thrust - p.mass * phase.u).abs() < 1e-10);
            assert!((u.torque.y - p.inertia.y * phase.theta_ddot).abs() < 1e-10);
            assert!(u.torque.x.abs() < 1e-12 && u.torque.z.abs() < 1e-12);
        }
    }

    #[test]
    fn all_emitted_thrusts_feasible() {
        let p = crazyflie_325();
        let env = FlipEnvelope::from_vehicle(&p);
        let schedule =
            expand_schedule(&PrimitiveParams::reference_optimum(), &p, &env).unwrap();
        let total = schedule.total_duration();
        let n = (total / 1e-3) as usize;
        for i in 0..=n {
            let t = (i as f64 * 1e-3).min(total);
            let thrusts = schedule_to_rotor_thrusts(&schedule, &p, t).unwrap();
            for th in thrusts {
                assert!((-1e-12..=p.t_max + 1e-12).contains(&th));
            }
        }
    }

    #[test]
    fn hover_like_schedule_stays_near_rest() {
        // equal thrust phases with no pitch command leave the planar state
        // at the origin up to integrator noise
        let p = crazyflie_325();
        let schedule = PhaseSchedule {
            phases: [
                Phase { name: "accelerate", duration: 0.2, u: crate::GRAVITY, theta_ddot: 0.0 },
                Phase { name: "start-rotation", duration: 0.1, u: crate::GRAVITY, theta_ddot: 0.0 },
                Phase { name: "coast", duration: 0.2, u: crate::GRAVITY, theta_ddot: 0.0 },
                Phase { name: "stop-rotation", duration: 0.1, u: crate::GRAVITY, theta_ddot: 0.0 },
                Phase { name: "recover", duration: 0.2, u: crate::GRAVITY, theta_ddot: 0.0 },
            ],
        };
        let log = simulate_schedule_planar(&schedule, &p).unwrap();
        let s = log.final_state();
        assert!(s.x.abs() < 1e-9 && s.z.abs() < 1e-9 && s.theta.abs() < 1e-9);
    }

    #[test]
    fn extending_coast_overrotates_monotonically() {
        // with the rotation durations frozen, stretching the coast phase
        // accumulates extra pitch angle monotonically
        let p = crazyflie_325();
        let env = FlipEnvelope::from_vehicle(&p);
        let schedule =
            expand_schedule(&PrimitiveParams::reference_optimum(), &p, &env).unwrap();
        let mut last = -1.0;
        for scale in [1.0, 1.25, 1.5, 2.0] {
            let mut stretched = schedule.clone();
            stretched.phases[2].duration *= scale;
            let log = simulate_schedule_planar(&stretched, &p).unwrap();
            let overshoot = (log.final_state().theta + 2.0 * std::f64::consts::PI).abs();
            assert!(overshoot > last, "overshoot not monotone at scale {scale}");
            last = overshoot;
        }
    }

    #[test]
    fn zero_duration_phase_insert_is_invisible() {
        let p = crazyflie_325();
        let env = FlipEnvelope::from_vehicle(&p);
        let schedule =
            expand_schedule(&PrimitiveParams::reference_optimum(), &p, &env).unwrap();
        let segments = schedule.thrust_segments(&p).unwrap();
        let mut split = segments.clone();
        // split the coast segment into a zero-duration piece plus the rest
        split.insert(2, (0.0, segments[2].1));
        let a = rollout_thrust_segments(&PlanarState::origin(), &segments, &p, crate::GRAVITY, PLANAR_STEP);
        let b = rollout_thrust_segments(&PlanarState::origin(), &split, &p, crate::GRAVITY, PLANAR_STEP);
        assert_eq!(a.final_state(), b.final_state());
    }

    #[test]
    fn infeasible_closure_reported() {
        let p = crazyflie_325();
        let env = FlipEnvelope::from_vehicle(&p);
        // long tilt phases alone over-rotate: no positive rotation duration
        let eta = PrimitiveParams::new(12.0, 1.2, 1.2, 12.0, 1.2);
        assert!(matches!(
            expand_schedule(&eta, &p, &env),
            Err(FlipError::InfeasibleClosure)
        ));
    }

    #[test]
    fn overdriven_collective_names_phase() {
        let p = crazyflie_325();
        let env = FlipEnvelope::from_vehicle(&p);
        let eta = PrimitiveParams::new(30.0, 0.14, 0.2, 17.8, 0.12);
        match expand_schedule(&eta, &p, &env) {
            Err(FlipError::InfeasiblePhase { phase, .. }) => assert_eq!(phase, "accelerate"),
            other => panic!("expected InfeasiblePhase, got {other:?}"),
        }
    }

    #[test]
    fn objective_penalizes_infeasible_with_archived_worst() {
        let p = crazyflie_325();
        let objective = FlipObjective::new(p);
        let good = objective.cost(&PrimitiveParams::reference_optimum());
        assert!(good.is_finite());
        let bad = objective.cost(&PrimitiveParams::new(12.0, 1.2, 1.2, 12.0, 1.2));
        assert!(bad >= 10.0 * good.max(1.0) - 1e-9);
    }

    #[test]
    fn optimum_json_round_trip() {
        let opt = FlipOptimum {
            eta: PrimitiveParams::reference_optimum(),
            cost: 0.1,
            error: [0.0, 0.01, 0.02, 0.03, 0.04],
            seed: 5,
            evaluations: 10,
            bounds: FlipBounds::default(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eta.json");
        opt.save_json(&path).unwrap();
        let loaded = FlipOptimum::load_json(&path).unwrap();
        assert_eq!(loaded.eta, opt.eta);
        assert_eq!(loaded.evaluations, 10);
    }
}
