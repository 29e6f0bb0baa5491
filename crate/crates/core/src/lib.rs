//! Maneuver synthesis toolkit for miniature quadcopter backflips.
//!
//! Two strategies for executing a 360° pitch flip are implemented end to end:
//!
//! 1. A five-phase bang-bang feedforward primitive whose free parameters are
//!    tuned by Bayesian optimization over a planar reduced model ([`flip`],
//!    [`bo`], [`gp`]).
//! 2. A quadratic-programming trajectory planner paired with a robust adaptive
//!    geometric tracking controller on SO(3), where Gaussian-process lookup
//!    tables compensate state-dependent torque disturbances ([`planner`],
//!    [`control`]).
//!
//! Both run against the same rigid-body simulator ([`sim`]) configured with
//! Crazyflie 2.1 physical parameters ([`vehicle`]).
//!
//! Conventions: inertial frame is North-East-Down, rotation matrices map body
//! to vehicle frame, quaternions are scalar-first `[q0, q1, q2, q3]`.

pub mod bo;
pub mod control;
pub mod flip;
pub mod gp;
pub mod planner;
pub mod sim;
pub mod so3;
pub mod state;
pub mod vehicle;

pub use control::{GeomGains, GeometricController, ReferencePoint};
pub use sim::{Disturbance, SimLog};
pub use state::RigidState;
pub use vehicle::{ControlInput, VehicleParams};

/// Standard gravity [m/s²], positive along the inertial z (down) axis.
pub const GRAVITY: f64 = 9.81;
