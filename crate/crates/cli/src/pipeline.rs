//! End-to-end pipelines behind the CLI subcommands: scenario runs, flip
//! parameter optimization, GP training on simulated flight data, and
//! trajectory planning.

use crate::config::Ini;
use crate::scenario::{DisturbanceSpec, EtaSource, Mode, Scenario, ScenarioError};
use backflip_core::control::{
    AdaptiveModel, GeometricController, SigmaAggregation,
};
use backflip_core::flip::{
    expand_schedule, FlipEnvelope, FlipOptimizeOptions, FlipOptimum, PrimitiveParams,
};
use backflip_core::gp::{
    tune_hyperparameters, GpModel, GridAxis, HyperBounds, LookupTable, MeanFn, SeKernel,
    TablePack, TuneOptions,
};
use backflip_core::planner::{plan_flip, FlipReference, PlannerConfig};
use backflip_core::sim::{
    rollout, rollout_piecewise, Disturbance, NoDisturbance, PitchRollSine, SimLog, SimOptions,
};
use backflip_core::so3::rotation_from_axis_angle;
use backflip_core::state::RigidState;
use backflip_core::vehicle::VehicleParams;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("simulation failed: {0}")]
    Sim(#[from] backflip_core::sim::SimError),
    #[error("feedforward schedule: {0}")]
    Flip(#[from] backflip_core::flip::FlipError),
    #[error("planner: {0}")]
    Plan(#[from] backflip_core::planner::PlanError),
    #[error("controller: {0}")]
    Control(#[from] backflip_core::control::ControlError),
    #[error("gp: {0}")]
    Gp(#[from] backflip_core::gp::GpError),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("run directory {0} is missing traj.csv")]
    MissingRun(PathBuf),
    #[error("time grids differ between {a} and {b}")]
    GridMismatch { a: PathBuf, b: PathBuf },
    #[error("gp-train needs at least {needed} usable samples, got {got}")]
    NotEnoughSamples { needed: usize, got: usize },
}

impl PipelineError {
    /// Errors that are the operator's configuration mistake (exit code 2)
    /// rather than a runtime failure (exit code 1).
    pub fn is_schema(&self) -> bool {
        matches!(
            self,
            PipelineError::Scenario(_) | PipelineError::Config(_) | PipelineError::MissingRun(_)
        )
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

/// Fixed-schema run summary (`summary.json`).
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub scenario: String,
    pub mode: &'static str,
    pub seed: u64,
    pub runtime_seconds: f64,
    pub final_position: [f64; 3],
    pub final_velocity: [f64; 3],
    /// Unwrapped pitch angle at the end of the run [rad].
    pub final_pitch_sweep: f64,
    /// Distance of the sweep from the nearest full turn [rad].
    pub final_pitch_error: f64,
    pub max_psi: Option<f64>,
    pub max_position_error: Option<f64>,
    pub saturation_count: usize,
    pub out_of_grid_count: u64,
}

pub struct RunArtifacts {
    pub dir: PathBuf,
    pub summary: RunSummary,
    pub log: SimLog,
}

fn build_disturbance(spec: &DisturbanceSpec) -> Option<Box<dyn Disturbance>> {
    match spec {
        DisturbanceSpec::None => None,
        DisturbanceSpec::PitchRollSine { amplitude } => {
            Some(Box::new(PitchRollSine { amplitude: *amplitude }))
        }
    }
}

fn initial_state(tilt: (f64, f64)) -> RigidState {
    let mut x = RigidState::hover_origin();
    x.rotation = rotation_from_axis_angle(&Vector3::x(), tilt.0)
        * rotation_from_axis_angle(&Vector3::y(), tilt.1);
    x.refresh_quaternion();
    x
}

fn pitch_wrap_error(sweep: f64) -> f64 {
    sweep - 2.0 * std::f64::consts::PI * (sweep / (2.0 * std::f64::consts::PI)).round()
}

/// Executes a scenario and writes `traj.csv` + `summary.json`.
pub fn run_scenario(
    scenario: &Scenario,
    output_root: Option<&Path>,
) -> Result<RunArtifacts, PipelineError> {
    let t0 = std::time::Instant::now();
    let dir = scenario.resolve_output_dir(output_root);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let disturbance = build_disturbance(&scenario.disturbance);
    let disturbance_ref = disturbance.as_deref();

    let (log, out_of_grid) = match scenario.mode {
        Mode::Feedforward => {
            let eta = load_eta(scenario)?;
            let envelope = FlipEnvelope::from_vehicle(&scenario.vehicle);
            let schedule = expand_schedule(&eta, &scenario.vehicle, &envelope)?;
            let segments = schedule.input_segments(&scenario.vehicle)?;
            let log = rollout_piecewise(
                &initial_state(scenario.initial_tilt),
                &segments,
                disturbance_ref,
                &scenario.vehicle,
                &scenario.sim,
            )?;
            (log, 0)
        }
        _ => {
            let plan = plan_flip(scenario.planner.as_ref().expect("validated"), &scenario.vehicle)?;
            plan.write_csv(dir.join("reference.csv"), scenario.z_up_csv)?;
            plan.write_meta_json(dir.join("reference_meta.json"))?;
            let duration = plan.total_duration();
            let reference: Arc<FlipReference> = Arc::new(plan);
            let mut controller = GeometricController::new(
                scenario.vehicle.clone(),
                scenario.gains,
                reference,
            )?;
            if scenario.mode.needs_tables() {
                let table = scenario.table_path.as_ref().expect("validated");
                let model = AdaptiveModel::load(table, SigmaAggregation::Euclidean)?;
                controller = controller.with_adaptive(model);
            }
            if scenario.mode == Mode::GeometricRobust {
                controller = controller.with_robust(0.0);
            }
            let log = rollout(
                &initial_state(scenario.initial_tilt),
                &controller,
                disturbance_ref,
                duration,
                &scenario.vehicle,
                &scenario.sim,
            )?;
            let out_of_grid =
                controller.adaptive_model().map(|m| m.out_of_grid_count()).unwrap_or(0);
            (log, out_of_grid)
        }
    };

    let traj = dir.join("traj.csv");
    log.write_csv(&traj, scenario.z_up_csv)?;
    let sweep = *log.unwrapped_pitch().last().unwrap();
    let final_state = log.final_state();
    let summary = RunSummary {
        schema_version: 1,
        scenario: scenario.name.clone(),
        mode: scenario.mode.as_str(),
        seed: scenario.seed,
        runtime_seconds: t0.elapsed().as_secs_f64(),
        final_position: [final_state.position.x, final_state.position.y, final_state.position.z],
        final_velocity: [final_state.velocity.x, final_state.velocity.y, final_state.velocity.z],
        final_pitch_sweep: sweep,
        final_pitch_error: pitch_wrap_error(sweep),
        max_psi: log.max_psi(),
        max_position_error: log.max_position_error(),
        saturation_count: log.saturation_count(),
        out_of_grid_count: out_of_grid,
    };
    let summary_path = dir.join("summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)
        .map_err(io_err(&summary_path))?;
    Ok(RunArtifacts { dir, summary, log })
}

fn load_eta(scenario: &Scenario) -> Result<PrimitiveParams, PipelineError> {
    match scenario.eta.as_ref().expect("validated") {
        EtaSource::Inline(eta) => Ok(*eta),
        EtaSource::File(path) => Ok(FlipOptimum::load_json(path)?.eta),
    }
}

/// `optimize flip-params`: Bayesian optimization of the primitive parameters,
/// persisting `eta.json` and the evaluation archive.
pub fn optimize_flip_params(ini: &Ini, base_dir: &Path) -> Result<PathBuf, PipelineError> {
    let scenario_name =
        ini.get("scenario", "name").unwrap_or("flip-params").to_string();
    let seed = ini.require_u64("optimize", "seed")?;
    let vehicle = match ini.get("vehicle", "file") {
        Some(f) => VehicleParams::load(base_dir.join(f)).map_err(ScenarioError::Vehicle)?,
        None => VehicleParams::crazyflie(),
    };
    let bounds = Scenario::flip_bounds(ini)?;
    let out_dir = ini
        .get("optimize", "output_dir")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs").join(&scenario_name));
    std::fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
    let opts = FlipOptimizeOptions {
        n_init: ini.get_u64("optimize", "n_init")?.unwrap_or(250) as usize,
        n_iter: ini.get_u64("optimize", "n_iter")?.unwrap_or(1000) as usize,
        seed,
        target_cost: ini.get_f64("optimize", "target_cost")?,
        archive_path: Some(out_dir.join("archive.csv")),
    };
    let optimum = backflip_core::flip::optimize_flip(&bounds, &vehicle, &opts)?;
    let eta_path = out_dir.join("eta.json");
    optimum.save_json(&eta_path)?;
    Ok(eta_path)
}

/// `plan`: trajectory planning only; writes `reference.csv` and metadata.
pub fn plan_only(scenario: &Scenario, output_root: Option<&Path>) -> Result<PathBuf, PipelineError> {
    let config: &PlannerConfig = scenario.planner.as_ref().ok_or(
        ScenarioError::MissingModeSection { mode: "plan", section: "planner" },
    )?;
    let dir = scenario.resolve_output_dir(output_root);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let plan = plan_flip(config, &scenario.vehicle)?;
    plan.write_csv(dir.join("reference.csv"), scenario.z_up_csv)?;
    plan.write_meta_json(dir.join("reference_meta.json"))?;
    Ok(dir)
}

/// One training sample extracted from a rollout log.
#[derive(Debug, Clone, Copy)]
pub struct ResidualSample {
    /// GP input `(q₁, q₂, ω_x, ω_y)`.
    pub input: [f64; 4],
    /// Torque residual `Δ_R = J ω̇ − (τ − ω × Jω)`, roll and pitch [N·m].
    pub residual: [f64; 2],
}

/// Extracts torque residuals from a uniformly sampled log with a 5-point
/// central difference for ω̇ (the two samples at each end are dropped).
pub fn extract_residuals(log: &SimLog, params: &VehicleParams) -> Vec<ResidualSample> {
    let n = log.len();
    if n < 5 {
        return Vec::new();
    }
    let h = log.time[1] - log.time[0];
    let j = &params.inertia;
    let mut out = Vec::with_capacity(n - 4);
    for i in 2..n - 2 {
        let w = |k: usize| log.states[k].angular_rate;
        let wdot = (-w(i + 2) + 8.0 * w(i + 1) - 8.0 * w(i - 1) + w(i - 2)) / (12.0 * h);
        let s = &log.states[i];
        let j_omega = Vector3::new(
            j.x * s.angular_rate.x,
            j.y * s.angular_rate.y,
            j.z * s.angular_rate.z,
        );
        let applied = log.inputs[i].torque - s.angular_rate.cross(&j_omega);
        let residual = Vector3::new(j.x * wdot.x, j.y * wdot.y, j.z * wdot.z) - applied;
        out.push(ResidualSample {
            input: [s.quaternion[1], s.quaternion[2], s.angular_rate.x, s.angular_rate.y],
            residual: [residual.x, residual.y],
        });
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub schema_version: u32,
    pub seed: u64,
    pub rollouts: usize,
    pub pool_size: usize,
    pub training_points: usize,
    pub grid_nodes: usize,
    /// Held-out RMSE of the tabulated mean per output channel [N·m].
    pub rmse: [f64; 2],
    /// Fraction of held-out samples whose residual lies inside the 2σ band.
    pub coverage_2sigma: f64,
    /// Global uncertainty bound `δ_R` from the grid [N·m].
    pub delta_big_r: f64,
    pub table_file: String,
}

pub struct TrainArtifacts {
    pub dir: PathBuf,
    pub summary: TrainSummary,
    pub pack_path: PathBuf,
    /// Held-out samples (not used for training), for external validation.
    pub held_out: Vec<ResidualSample>,
}

/// `optimize gp-train`: collects disturbed closed-loop rollouts with the
/// nominal controller, fits the two torque-residual GPs on a seeded subsample
/// of the pooled data, and exports the grid lookup tables.
pub fn train_gp(ini: &Ini, base_dir: &Path) -> Result<TrainArtifacts, PipelineError> {
    let scenario = Scenario::from_ini(ini, base_dir)?;
    let seed = ini.get_u64("gp-train", "seed")?.unwrap_or(scenario.seed);
    let n_rollouts = ini.get_u64("gp-train", "rollouts")?.unwrap_or(5) as usize;
    let n_train = ini.get_u64("gp-train", "samples")?.unwrap_or(125) as usize;
    let grid_sizes = [
        ini.get_u64("gp-train", "grid_q1")?.unwrap_or(5) as usize,
        ini.get_u64("gp-train", "grid_q2")?.unwrap_or(9) as usize,
        ini.get_u64("gp-train", "grid_wx")?.unwrap_or(5) as usize,
        ini.get_u64("gp-train", "grid_wy")?.unwrap_or(9) as usize,
    ];
    let dir = scenario.resolve_output_dir(None);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;

    // training flights: the planned flip tracked by the nominal controller
    // under the configured disturbance, with perturbed starts for coverage
    let config = scenario.planner.clone().unwrap_or_else(PlannerConfig::study_defaults);
    let plan = Arc::new(plan_flip(&config, &scenario.vehicle)?);
    let disturbance = build_disturbance(&scenario.disturbance);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<ResidualSample> = Vec::new();
    for _ in 0..n_rollouts {
        let tilt = (rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05));
        let controller = GeometricController::new(
            scenario.vehicle.clone(),
            scenario.gains,
            plan.clone(),
        )?;
        let log = rollout(
            &initial_state(tilt),
            &controller,
            disturbance.as_deref(),
            plan.total_duration(),
            &scenario.vehicle,
            &scenario.sim,
        )?;
        pool.extend(extract_residuals(&log, &scenario.vehicle));
    }
    if pool.len() < n_train {
        return Err(PipelineError::NotEnoughSamples { needed: n_train, got: pool.len() });
    }

    // seeded subsample for training; the rest is held out
    let mut indices: Vec<usize> = (0..pool.len()).collect();
    for i in 0..pool.len() {
        let j = rng.gen_range(i..pool.len());
        indices.swap(i, j);
    }
    let train_idx = &indices[..n_train];
    let held_out: Vec<ResidualSample> =
        indices[n_train..].iter().map(|&i| pool[i]).collect();

    let inputs: Vec<Vec<f64>> = train_idx.iter().map(|&i| pool[i].input.to_vec()).collect();
    let mut models = Vec::with_capacity(2);
    for channel in 0..2 {
        let outputs: Vec<f64> = train_idx.iter().map(|&i| pool[i].residual[channel]).collect();
        models.push(fit_residual_gp(&inputs, &outputs, seed.wrapping_add(channel as u64))?);
    }

    // grid covering the pooled operating envelope with 5% margin
    let mut axes = Vec::with_capacity(4);
    for dim in 0..4 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &pool {
            lo = lo.min(s.input[dim]);
            hi = hi.max(s.input[dim]);
        }
        let margin = 0.05 * (hi - lo).max(1e-6);
        axes.push(GridAxis::span(lo - margin, hi + margin, grid_sizes[dim])?);
    }
    let roll_table = LookupTable::export_from_gp(&models[0], axes.clone())?;
    let pitch_table = LookupTable::export_from_gp(&models[1], axes)?;
    let delta_big_r = {
        let model = AdaptiveModel::new(
            roll_table.clone(),
            pitch_table.clone(),
            SigmaAggregation::Euclidean,
        )?;
        model.delta_big_r()
    };
    let pack = TablePack {
        entries: vec![
            ("delta_R_roll".to_string(), roll_table.clone()),
            ("delta_R_pitch".to_string(), pitch_table.clone()),
        ],
    };
    let pack_path = dir.join(
        ini.get("gp-train", "table_file").unwrap_or("tables.bin"),
    );
    pack.save(&pack_path)?;
    roll_table.write_csv(dir.join("table_roll.csv"))?;
    pitch_table.write_csv(dir.join("table_pitch.csv"))?;
    models[0].save_json(dir.join("gp_roll.json"))?;
    models[1].save_json(dir.join("gp_pitch.json"))?;

    // held-out validation of the tabulated model
    let mut sq_err = [0.0f64; 2];
    let mut covered = 0usize;
    for s in &held_out {
        let (m1, s1) = roll_table.eval(&s.input);
        let (m2, s2) = pitch_table.eval(&s.input);
        sq_err[0] += (m1 - s.residual[0]).powi(2);
        sq_err[1] += (m2 - s.residual[1]).powi(2);
        let err = ((m1 - s.residual[0]).powi(2) + (m2 - s.residual[1]).powi(2)).sqrt();
        if err <= 2.0 * (s1 * s1 + s2 * s2).sqrt() {
            covered += 1;
        }
    }
    let held_n = held_out.len().max(1) as f64;
    let summary = TrainSummary {
        schema_version: 1,
        seed,
        rollouts: n_rollouts,
        pool_size: pool.len(),
        training_points: n_train,
        grid_nodes: roll_table.len(),
        rmse: [(sq_err[0] / held_n).sqrt(), (sq_err[1] / held_n).sqrt()],
        coverage_2sigma: covered as f64 / held_n,
        delta_big_r,
        table_file: pack_path.display().to_string(),
    };
    let summary_path = dir.join("train_summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)
        .map_err(io_err(&summary_path))?;
    Ok(TrainArtifacts { dir, summary, pack_path, held_out })
}

fn fit_residual_gp(
    inputs: &[Vec<f64>],
    outputs: &[f64],
    seed: u64,
) -> Result<GpModel, PipelineError> {
    let dim = inputs[0].len();
    // scale-aware bounds: lengthscales relative to the data spread per axis
    let mut ranges = vec![0.0f64; dim];
    for d in 0..dim {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for x in inputs {
            lo = lo.min(x[d]);
            hi = hi.max(x[d]);
        }
        ranges[d] = (hi - lo).max(1e-6);
    }
    let y_std = {
        let mean = outputs.iter().sum::<f64>() / outputs.len() as f64;
        (outputs.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / outputs.len() as f64)
            .sqrt()
            .max(1e-9)
    };
    let init_kernel =
        SeKernel::new(y_std, ranges.iter().map(|r| 0.5 * r).collect()).map_err(PipelineError::Gp)?;
    let bounds = HyperBounds {
        sigma_f: (0.05 * y_std, 20.0 * y_std),
        lengthscales: ranges.iter().map(|r| (0.02 * r, 10.0 * r)).collect(),
        noise_std: (1e-8, y_std),
    };
    let tuned = tune_hyperparameters(
        inputs,
        outputs,
        (init_kernel, 1e-3 * y_std),
        &bounds,
        &TuneOptions { restarts: 6, max_iters: 120, seed, max_points: usize::MAX },
    )?;
    Ok(GpModel::fit(inputs, outputs, tuned.kernel, tuned.noise_std, MeanFn::Zero)?)
}

/// Per-channel statistics of one run for `compare`.
#[derive(Debug, Clone, Serialize)]
pub struct ChannelStats {
    pub channel: String,
    pub max_abs: f64,
    pub rms: f64,
    /// Max |difference| against the first (baseline) run.
    pub max_delta_vs_first: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunComparison {
    pub dir: String,
    pub channels: Vec<ChannelStats>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub runs: Vec<RunComparison>,
}

fn read_traj(dir: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), PipelineError> {
    let path = dir.join("traj.csv");
    if !path.exists() {
        return Err(PipelineError::MissingRun(dir.to_path_buf()));
    }
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut lines = text.lines();
    let header: Vec<String> =
        lines.next().unwrap_or("").split(',').map(|s| s.to_string()).collect();
    let mut columns = vec![Vec::new(); header.len()];
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        for (i, field) in line.split(',').enumerate() {
            if i < columns.len() {
                columns[i].push(field.parse::<f64>().unwrap_or(f64::NAN));
            }
        }
    }
    Ok((header, columns))
}

/// Compares run directories channel by channel; all logs must share the time
/// grid of the first run.
pub fn compare_runs(dirs: &[PathBuf]) -> Result<ComparisonReport, PipelineError> {
    assert!(!dirs.is_empty());
    let mut parsed = Vec::with_capacity(dirs.len());
    for dir in dirs {
        parsed.push((dir.clone(), read_traj(dir)?));
    }
    let (base_dir, (base_header, base_cols)) = &parsed[0];
    for (dir, (_, cols)) in parsed.iter().skip(1) {
        if cols[0].len() != base_cols[0].len()
            || cols[0].iter().zip(&base_cols[0]).any(|(a, b)| (a - b).abs() > 1e-12)
        {
            return Err(PipelineError::GridMismatch { a: base_dir.clone(), b: dir.clone() });
        }
    }
    let mut runs = Vec::with_capacity(parsed.len());
    for (dir, (header, cols)) in &parsed {
        let mut channels = Vec::new();
        for (c, name) in header.iter().enumerate().skip(1) {
            let series = &cols[c];
            let max_abs = series.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let rms =
                (series.iter().map(|v| v * v).sum::<f64>() / series.len().max(1) as f64).sqrt();
            let max_delta_vs_first = base_header
                .iter()
                .position(|h| h == name)
                .map(|bc| {
                    series
                        .iter()
                        .zip(&base_cols[bc])
                        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
                })
                .unwrap_or(f64::NAN);
            channels.push(ChannelStats {
                channel: name.clone(),
                max_abs,
                rms,
                max_delta_vs_first,
            });
        }
        runs.push(RunComparison { dir: dir.display().to_string(), channels });
    }
    Ok(ComparisonReport { schema_version: 1, runs })
}

/// Writes the comparison as JSON and CSV next to each other.
pub fn write_comparison(
    report: &ComparisonReport,
    out: &Path,
) -> Result<(), PipelineError> {
    std::fs::write(out, serde_json::to_string_pretty(report)?).map_err(io_err(out))?;
    let csv_path = out.with_extension("csv");
    let mut text = String::from("run,channel,max_abs,rms,max_delta_vs_first\n");
    for run in &report.runs {
        for ch in &run.channels {
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                run.dir, ch.channel, ch.max_abs, ch.rms, ch.max_delta_vs_first
            ));
        }
    }
    std::fs::write(&csv_path, text).map_err(io_err(&csv_path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residual_extraction_recovers_known_disturbance() {
        // free-tumbling body under the sine disturbance: the stencil must
        // recover Δ_R from the logged states and inputs
        let params = VehicleParams::crazyflie();
        let d = PitchRollSine::study_default();
        let mut x0 = RigidState::hover_origin();
        x0.angular_rate = Vector3::new(1.0, 3.0, 0.0);
        let hover = backflip_core::vehicle::ControlInput::hover(&params);
        let ctrl = move |_t: f64, _x: &RigidState| hover;
        let log = rollout(&x0, &ctrl, Some(&d), 0.5, &params, &SimOptions::default()).unwrap();
        let samples = extract_residuals(&log, &params);
        assert!(samples.len() > 400);
        for (i, s) in samples.iter().enumerate().step_by(50) {
            let state = &log.states[i + 2];
            let (_, truth) = d.eval(state);
            assert!(
                (s.residual[0] - truth.x).abs() < 2e-4,
                "roll residual off at {i}: {} vs {}",
                s.residual[0],
                truth.x
            );
            assert!((s.residual[1] - truth.y).abs() < 2e-4);
        }
    }

    #[test]
    fn pitch_wrap_error_zeroes_full_turns() {
        let two_pi = 2.0 * std::f64::consts::PI;
        assert!(pitch_wrap_error(-two_pi).abs() < 1e-12);
        assert!((pitch_wrap_error(-two_pi + 0.3) - 0.3).abs() < 1e-12);
        assert!(pitch_wrap_error(0.2) - 0.2 < 1e-12);
    }
}
