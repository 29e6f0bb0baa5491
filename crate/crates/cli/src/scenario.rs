//! Scenario files: one INI per reproducible run.

use crate::config::{ConfigError, Ini};
use backflip_core::control::GeomGains;
use backflip_core::flip::{FlipBounds, PrimitiveParams};
use backflip_core::planner::{PlannerConfig, SigmoidAttitudeParams};
use backflip_core::sim::SimOptions;
use backflip_core::vehicle::VehicleParams;
use nalgebra::Vector3;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("scenario.mode must be one of feedforward | geometric-nominal | geometric-adaptive | geometric-robust, got {0:?}")]
    BadMode(String),
    #[error("disturbance.kind must be none | pitch-roll-sine, got {0:?}")]
    BadDisturbance(String),
    #[error("mode `{mode}` requires section [{section}]")]
    MissingModeSection { mode: &'static str, section: &'static str },
    #[error("[feedforward] needs either `eta` (5 numbers) or `eta_file`")]
    MissingEta,
    #[error("`feedforward.eta` must have exactly 5 entries, got {0}")]
    BadEtaLength(usize),
    #[error("vehicle config: {0}")]
    Vehicle(#[from] backflip_core::vehicle::VehicleError),
    #[error("invalid controller gains: {0}")]
    Gains(#[from] backflip_core::control::ControlError),
    #[error("bad planner parameters: {0}")]
    Planner(#[from] backflip_core::planner::PlanError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Feedforward,
    GeometricNominal,
    GeometricAdaptive,
    GeometricRobust,
}

impl Mode {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        match text {
            "feedforward" => Ok(Mode::Feedforward),
            "geometric-nominal" => Ok(Mode::GeometricNominal),
            "geometric-adaptive" => Ok(Mode::GeometricAdaptive),
            "geometric-robust" => Ok(Mode::GeometricRobust),
            other => Err(ScenarioError::BadMode(other.to_string())),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Feedforward => "feedforward",
            Mode::GeometricNominal => "geometric-nominal",
            Mode::GeometricAdaptive => "geometric-adaptive",
            Mode::GeometricRobust => "geometric-robust",
        }
    }

    pub fn needs_tables(&self) -> bool {
        matches!(self, Mode::GeometricAdaptive | Mode::GeometricRobust)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum DisturbanceSpec {
    None,
    PitchRollSine { amplitude: Vector3<f64> },
}

/// Feedforward parameter source.
#[derive(Debug, Clone)]
pub enum EtaSource {
    Inline(PrimitiveParams),
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub mode: Mode,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub vehicle: VehicleParams,
    pub disturbance: DisturbanceSpec,
    pub gains: GeomGains,
    pub sim: SimOptions,
    /// Initial attitude tilt about (x, y) [rad].
    pub initial_tilt: (f64, f64),
    pub eta: Option<EtaSource>,
    pub planner: Option<PlannerConfig>,
    pub table_path: Option<PathBuf>,
    /// Export CSV z column with the z-up display convention.
    pub z_up_csv: bool,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let ini = Ini::load(path)?;
        Self::from_ini(&ini, path.parent().unwrap_or(Path::new(".")))
    }

    /// Relaxed loader for the `plan` subcommand: only the `[planner]` block
    /// matters; mode and feedforward blocks are not required.
    pub fn load_for_plan(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let mut ini = Ini::load(path)?;
        if ini.get("scenario", "mode").is_none() {
            ini.set("scenario", "mode", "geometric-nominal");
        }
        if ini.get("scenario", "name").is_none() {
            ini.set("scenario", "name", "plan");
        }
        if ini.get("scenario", "seed").is_none() {
            ini.set("scenario", "seed", "0");
        }
        if !ini.has_section("planner") {
            return Err(ScenarioError::MissingModeSection { mode: "plan", section: "planner" });
        }
        Self::from_ini(&ini, path.parent().unwrap_or(Path::new(".")))
    }

    /// Builds and validates a scenario; relative file references resolve
    /// against `base_dir`.
    pub fn from_ini(ini: &Ini, base_dir: &Path) -> Result<Self, ScenarioError> {
        let name = ini.require("scenario", "name")?.to_string();
        let mode = Mode::parse(ini.require("scenario", "mode")?)?;
        let seed = ini.require_u64("scenario", "seed")?;
        let output_dir = ini.get("scenario", "output_dir").map(PathBuf::from);

        let vehicle = match ini.get("vehicle", "file") {
            Some(file) => VehicleParams::load(resolve(base_dir, file))?,
            None => {
                if ini.has_section("vehicle") && ini.get("vehicle", "mass").is_some() {
                    VehicleParams::new(
                        ini.require_f64("vehicle", "mass")?,
                        ini.require_f64("vehicle", "arm_length")?,
                        ini.require_f64("vehicle", "jxx")?,
                        ini.require_f64("vehicle", "jyy")?,
                        ini.require_f64("vehicle", "jzz")?,
                        ini.require_f64("vehicle", "thrust_coeff")?,
                        ini.require_f64("vehicle", "drag_coeff")?,
                        ini.require_f64("vehicle", "t_max")?,
                    )?
                } else {
                    VehicleParams::crazyflie()
                }
            }
        };

        let disturbance = match ini.get("disturbance", "kind").unwrap_or("none") {
            "none" => DisturbanceSpec::None,
            "pitch-roll-sine" => DisturbanceSpec::PitchRollSine {
                amplitude: Vector3::new(
                    ini.get_f64("disturbance", "amp_x")?.unwrap_or(-0.007),
                    ini.get_f64("disturbance", "amp_y")?.unwrap_or(-0.007),
                    ini.get_f64("disturbance", "amp_z")?.unwrap_or(0.0),
                ),
            },
            other => return Err(ScenarioError::BadDisturbance(other.to_string())),
        };

        let defaults = GeomGains::study_defaults();
        let gains = GeomGains {
            k_r: ini.get_f64("controller", "kr")?.unwrap_or(defaults.k_r),
            k_v: ini.get_f64("controller", "kv")?.unwrap_or(defaults.k_v),
            k_big_r: ini.get_f64("controller", "kR")?.unwrap_or(defaults.k_big_r),
            k_omega: ini.get_f64("controller", "komega")?.unwrap_or(defaults.k_omega),
            c1: ini.get_f64("controller", "c1")?.unwrap_or(defaults.c1),
            c2: ini.get_f64("controller", "c2")?.unwrap_or(defaults.c2),
            eps_r: ini.get_f64("controller", "eps_r")?.unwrap_or(defaults.eps_r),
            eps_big_r: ini.get_f64("controller", "eps_R")?.unwrap_or(defaults.eps_big_r),
            tau_exp: ini.get_f64("controller", "tau")?.unwrap_or(defaults.tau_exp),
        };
        gains.validate()?;

        let sim_defaults = SimOptions::default();
        let sim = SimOptions {
            step: ini.get_f64("sim", "step")?.unwrap_or(sim_defaults.step),
            controller_rate: ini
                .get_f64("sim", "controller_rate")?
                .unwrap_or(sim_defaults.controller_rate),
            gravity: sim_defaults.gravity,
            escape_radius: ini
                .get_f64("sim", "escape_radius")?
                .unwrap_or(sim_defaults.escape_radius),
        };
        let initial_tilt = (
            ini.get_f64("sim", "init_tilt_x_deg")?.unwrap_or(0.0).to_radians(),
            ini.get_f64("sim", "init_tilt_y_deg")?.unwrap_or(0.0).to_radians(),
        );

        let eta = if ini.has_section("feedforward") {
            if let Some(values) = ini.get_f64_list("feedforward", "eta")? {
                if values.len() != 5 {
                    return Err(ScenarioError::BadEtaLength(values.len()));
                }
                Some(EtaSource::Inline(PrimitiveParams::from_slice(&values)))
            } else {
                ini.get("feedforward", "eta_file")
                    .map(|f| EtaSource::File(resolve(base_dir, f)))
            }
        } else {
            None
        };

        let planner = if ini.has_section("planner") {
            let study = PlannerConfig::study_defaults();
            Some(PlannerConfig {
                attitude: SigmoidAttitudeParams::new(
                    ini.get_f64("planner", "nu_m")?.unwrap_or(study.attitude.nu_m),
                    ini.get_f64("planner", "t_m")?.unwrap_or(study.attitude.t_m),
                )?,
                x_bounds: (
                    ini.get_f64("planner", "x_min")?.unwrap_or(study.x_bounds.0),
                    ini.get_f64("planner", "x_max")?.unwrap_or(study.x_bounds.1),
                ),
                z_up_bounds: (
                    ini.get_f64("planner", "z_min")?.unwrap_or(study.z_up_bounds.0),
                    ini.get_f64("planner", "z_max")?.unwrap_or(study.z_up_bounds.1),
                ),
                f_max: ini.get_f64("planner", "f_max")?.unwrap_or(study.f_max),
                ts: ini.get_f64("planner", "ts")?.unwrap_or(study.ts),
                pad_before: ini.get_f64("planner", "pad_before")?.unwrap_or(study.pad_before),
                pad_after: ini.get_f64("planner", "pad_after")?.unwrap_or(study.pad_after),
            })
        } else {
            None
        };

        let table_path = ini.get("controller", "table").map(|f| resolve(base_dir, f));

        // mode-specific block presence
        match mode {
            Mode::Feedforward => {
                if eta.is_none() {
                    return Err(ScenarioError::MissingEta);
                }
            }
            Mode::GeometricNominal | Mode::GeometricAdaptive | Mode::GeometricRobust => {
                if planner.is_none() {
                    return Err(ScenarioError::MissingModeSection {
                        mode: mode.as_str(),
                        section: "planner",
                    });
                }
                if mode.needs_tables() && table_path.is_none() {
                    return Err(ScenarioError::MissingModeSection {
                        mode: mode.as_str(),
                        section: "controller (key `table`)",
                    });
                }
            }
        }

        Ok(Self {
            name,
            mode,
            seed,
            output_dir,
            vehicle,
            disturbance,
            gains,
            sim,
            initial_tilt,
            eta,
            planner,
            table_path,
            z_up_csv: ini
                .get("scenario", "z_up_csv")
                .map(|v| v == "true" || v == "1")
                .unwrap_or(false),
        })
    }

    /// Output directory: explicit setting, else `<root>/<name>` where the
    /// root comes from `BACKFLIP_OUTPUT_ROOT` (default `runs/`).
    pub fn resolve_output_dir(&self, override_root: Option<&Path>) -> PathBuf {
        if let Some(dir) = &self.output_dir {
            return dir.clone();
        }
        let root = override_root
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os("BACKFLIP_OUTPUT_ROOT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"));
        root.join(&self.name)
    }

    /// Bounds for a flip-parameter optimization block.
    pub fn flip_bounds(ini: &Ini) -> Result<FlipBounds, ScenarioError> {
        let d = FlipBounds::default();
        Ok(FlipBounds {
            u: (
                ini.get_f64("optimize", "u_min")?.unwrap_or(d.u.0),
                ini.get_f64("optimize", "u_max")?.unwrap_or(d.u.1),
            ),
            t: (
                ini.get_f64("optimize", "t_min")?.unwrap_or(d.t.0),
                ini.get_f64("optimize", "t_max")?.unwrap_or(d.t.1),
            ),
        })
    }
}

fn resolve(base: &Path, file: &str) -> PathBuf {
    let p = Path::new(file);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
