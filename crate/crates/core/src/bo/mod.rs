//! Bayesian optimization of expensive black-box objectives with a GP
//! surrogate and expected-improvement acquisition.
//!
//! The loop mirrors the textbook scheme: evaluate an initial space-filling
//! design, fit a GP surrogate, then repeatedly propose the
//! expected-improvement maximizer, evaluate it and refit. Inputs are
//! normalized to the unit box and outputs standardized before fitting, so the
//! kernel lengthscales are scale-free.

use crate::gp::{
    tune_hyperparameters, GpError, GpModel, HyperBounds, MeanFn, SeKernel, TuneOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BoError {
    #[error("search box must satisfy lower < upper elementwise")]
    DegenerateBox,
    #[error("initial design needs n_init >= 2, got {0}")]
    TooFewInitPoints(usize),
    #[error("surrogate error: {0}")]
    Gp(#[from] GpError),
    #[error("archive io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed archive line {line}: {reason}")]
    BadArchive { line: usize, reason: String },
}

/// Axis-aligned search domain in objective-native units.
#[derive(Debug, Clone)]
pub struct SearchBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SearchBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, BoError> {
        if lower.is_empty()
            || lower.len() != upper.len()
            || lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite())
        {
            return Err(BoError::DegenerateBox);
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Maps a native point into the unit box.
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&l, &u))| (v - l) / (u - l))
            .collect()
    }

    /// Maps a unit-box point back to native units.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&t, (&l, &up))| l + t * (up - l))
            .collect()
    }

    pub fn clamp_unit(u: &mut [f64]) {
        for v in u.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
    }
}

/// Closed-form expected improvement of a Gaussian `(μ, σ)` over `f_best`,
/// for maximization:
/// `EI = (μ − f*)·Φ(z) + σ·φ(z)` with `z = (μ − f*)/σ`, and the
/// deterministic limit `max(μ − f*, 0)` at `σ = 0`.
pub fn expected_improvement(mu: f64, sigma: f64, f_best: f64) -> f64 {
    debug_assert!(sigma >= 0.0);
    let diff = mu - f_best;
    if sigma <= 0.0 {
        return diff.max(0.0);
    }
    let z = diff / sigma;
    (diff * normal_cdf(z) + sigma * normal_pdf(z)).max(0.0)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

/// Randomized Halton sequence: `frac(h_b(i) + shift)` per dimension, with
/// prime bases. Low-discrepancy and deterministic given the shift.
pub(crate) fn halton_points(count: usize, dim: usize, shifts: &[f64]) -> Vec<Vec<f64>> {
    const PRIMES: [u64; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];
    assert!(dim <= PRIMES.len());
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut p = Vec::with_capacity(dim);
        for (k, shift) in shifts.iter().enumerate().take(dim) {
            let mut value = 0.0;
            let base = PRIMES[k];
            let mut f = 1.0 / base as f64;
            let mut n = (i + 1) as u64;
            while n > 0 {
                value += (n % base) as f64 * f;
                n /= base;
                f /= base as f64;
            }
            p.push((value + shift).fract());
        }
        out.push(p);
    }
    out
}

/// Latin-hypercube style stratified design on the unit box.
fn latin_hypercube(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for _ in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            strata.swap(i, j);
        }
        columns.push(
            strata.iter().map(|&s| (s as f64 + rng.gen_range(0.0..1.0)) / n as f64).collect(),
        );
    }
    (0..n).map(|i| (0..dim).map(|k| columns[k][i]).collect()).collect()
}

/// Number of quasi-random screening candidates per proposal.
const SCREEN_CANDIDATES: usize = 4096;
/// Screening survivors refined by coordinate search.
const REFINE_TOP: usize = 8;

/// Options for [`optimize`].
#[derive(Debug, Clone)]
pub struct BoOptions {
    pub n_init: usize,
    pub n_iter: usize,
    pub seed: u64,
    /// Retune surrogate hyperparameters every this many iterations.
    pub retune_every: usize,
    /// Subsample cap for likelihood evaluations during retuning.
    pub tune_max_points: usize,
    /// Stop early once the best observed objective reaches this value.
    pub target: Option<f64>,
    /// Stream the archive as CSV to this path while optimizing.
    pub archive_path: Option<PathBuf>,
}

impl BoOptions {
    pub fn new(n_init: usize, n_iter: usize, seed: u64) -> Self {
        Self {
            n_init,
            n_iter,
            seed,
            retune_every: 25,
            tune_max_points: 300,
            target: None,
            archive_path: None,
        }
    }
}

/// Archive and surrogate state of a running optimization.
pub struct BoState {
    box_: SearchBox,
    /// Evaluated inputs, native units.
    pub inputs: Vec<Vec<f64>>,
    /// Observed objective values (maximization), native units.
    pub outputs: Vec<f64>,
    /// Raw objective values before the non-finite penalty was applied.
    pub raw_outputs: Vec<f64>,
    surrogate: Option<GpModel>,
    kernel: SeKernel,
    noise_std: f64,
    y_shift: f64,
    y_scale: f64,
    rng: ChaCha8Rng,
    pub iteration: usize,
    /// Set when a degenerate surrogate forced a uniform random proposal.
    pub degenerate_proposals: usize,
}

impl BoState {
    pub fn new(box_: SearchBox, seed: u64) -> Self {
        let dim = box_.dim();
        Self {
            box_,
            inputs: Vec::new(),
            outputs: Vec::new(),
            raw_outputs: Vec::new(),
            surrogate: None,
            kernel: SeKernel::isotropic(1.0, 0.3, dim).expect("valid default kernel"),
            noise_std: 1e-4,
            y_shift: 0.0,
            y_scale: 1.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            iteration: 0,
            degenerate_proposals: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn search_box(&self) -> &SearchBox {
        &self.box_
    }

    pub fn surrogate(&self) -> Option<&GpModel> {
        self.surrogate.as_ref()
    }

    /// Best observed objective value so far (monotone in the archive size).
    pub fn best_observed(&self) -> Option<(usize, f64)> {
        self.outputs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(i, &y)| (i, y))
    }

    /// Incumbent per the surrogate: the archived input with the largest
    /// posterior mean, and that mean in native units. This is the reference
    /// value the expected-improvement acquisition compares against.
    pub fn incumbent(&self) -> Option<(usize, f64)> {
        let surrogate = self.surrogate.as_ref()?;
        let means = surrogate.train_means();
        means
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(i, &m)| (i, self.unstandardize(m)))
    }

    fn standardize_all(&self) -> (f64, f64, Vec<f64>) {
        let n = self.outputs.len() as f64;
        let mean = self.outputs.iter().sum::<f64>() / n;
        let var = self.outputs.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        let scale = var.sqrt().max(1e-12);
        (mean, scale, self.outputs.iter().map(|y| (y - mean) / scale).collect())
    }

    fn unstandardize(&self, y_std: f64) -> f64 {
        y_std * self.y_scale + self.y_shift
    }

    /// Records an evaluation; non-finite objective values are replaced by a
    /// large penalty scaled to the observed output range so the surrogate
    /// stays well conditioned.
    pub fn record(&mut self, x: Vec<f64>, y: f64) {
        let y_clean = if y.is_finite() { y } else { self.penalty_value() };
        self.inputs.push(x);
        self.raw_outputs.push(y);
        self.outputs.push(y_clean);
    }

    fn penalty_value(&self) -> f64 {
        let finite: Vec<f64> = self.outputs.iter().copied().filter(|v| v.is_finite()).collect();
        if finite.is_empty() {
            return -1e6;
        }
        let lo = finite.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        lo - 10.0 * (hi - lo).max(1.0)
    }

    /// Rebuilds the surrogate from scratch on the whole archive.
    pub fn refit(&mut self) -> Result<(), BoError> {
        let (shift, scale, y_std) = self.standardize_all();
        self.y_shift = shift;
        self.y_scale = scale;
        let x_unit: Vec<Vec<f64>> = self.inputs.iter().map(|x| self.box_.to_unit(x)).collect();
        let model =
            GpModel::fit(&x_unit, &y_std, self.kernel.clone(), self.noise_std, MeanFn::Zero)?;
        self.surrogate = Some(model);
        Ok(())
    }

    /// Appends the newest archive entry to the surrogate (O(n²)) and refreshes
    /// the output standardization.
    fn extend_surrogate(&mut self) -> Result<(), BoError> {
        let (shift, scale, y_std) = self.standardize_all();
        self.y_shift = shift;
        self.y_scale = scale;
        let x_unit = self.box_.to_unit(self.inputs.last().expect("archive not empty"));
        match self.surrogate.as_mut() {
            Some(m) => {
                m.append_point(&x_unit, *y_std.last().unwrap())?;
                m.set_outputs(&y_std)?;
                Ok(())
            }
            None => self.refit(),
        }
    }

    /// Re-tunes the kernel hyperparameters by marginal likelihood on the
    /// (possibly subsampled) archive, then refits.
    pub fn retune(&mut self, restarts: usize, max_points: usize) -> Result<(), BoError> {
        let (_, _, y_std) = self.standardize_all();
        let x_unit: Vec<Vec<f64>> = self.inputs.iter().map(|x| self.box_.to_unit(x)).collect();
        let dim = self.box_.dim();
        let bounds = HyperBounds::uniform((0.05, 20.0), (0.02, 5.0), (1e-8, 0.5), dim);
        let opts = TuneOptions {
            restarts,
            max_iters: 100,
            seed: self.rng.gen(),
            max_points,
        };
        let result = tune_hyperparameters(
            &x_unit,
            &y_std,
            (self.kernel.clone(), self.noise_std),
            &bounds,
            &opts,
        )?;
        self.kernel = result.kernel;
        self.noise_std = result.noise_std;
        self.refit()
    }

    /// Proposes the next evaluation point: the approximate global maximizer
    /// of expected improvement over the box.
    ///
    /// 4096 randomized-Halton candidates are screened in batch and the best
    /// 8 are polished by coordinate descent down to a step of 1e-6 of the box
    /// width. Deterministic given the archive and RNG state.
    pub fn propose_next(&mut self) -> Result<Vec<f64>, BoError> {
        let dim = self.box_.dim();
        let surrogate = match self.surrogate.as_ref() {
            Some(s) => s,
            None => return Err(BoError::TooFewInitPoints(self.len())),
        };
        let f_best_std = {
            let means = surrogate.train_means();
            means.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        };

        let shifts: Vec<f64> = (0..dim).map(|_| self.rng.gen_range(0.0..1.0)).collect();
        let candidates = halton_points(SCREEN_CANDIDATES, dim, &shifts);
        let predictions = surrogate.predict_batch(&candidates)?;
        let mut scored: Vec<(f64, usize)> = predictions
            .iter()
            .enumerate()
            .map(|(i, &(mu, var))| (expected_improvement(mu, var.sqrt(), f_best_std), i))
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));

        let all_flat = scored[0].0 <= 0.0;
        if all_flat {
            // degenerate surrogate (no predicted improvement anywhere):
            // fall back to a uniform random point
            self.degenerate_proposals += 1;
            let u: Vec<f64> = (0..dim).map(|_| self.rng.gen_range(0.0..1.0)).collect();
            return Ok(self.box_.from_unit(&u));
        }

        let ei_of = |u: &[f64]| -> f64 {
            let (mu, var) = surrogate.predict(u).expect("dimension checked");
            expected_improvement(mu, var.sqrt(), f_best_std)
        };

        let mut best_u = candidates[scored[0].1].clone();
        let mut best_ei = scored[0].0;
        for &(ei0, idx) in scored.iter().take(REFINE_TOP) {
            let mut u = candidates[idx].clone();
            let mut value = ei0;
            let mut step = 1.0 / 16.0;
            while step > 1e-6 {
                let mut moved = false;
                for k in 0..dim {
                    for dir in [-1.0, 1.0] {
                        let mut probe = u.clone();
                        probe[k] = (probe[k] + dir * step).clamp(0.0, 1.0);
                        let v = ei_of(&probe);
                        if v > value {
                            value = v;
                            u = probe;
                            moved = true;
                        }
                    }
                }
                if !moved {
                    step *= 0.5;
                }
            }
            if value > best_ei {
                best_ei = value;
                best_u = u;
            }
        }
        Ok(self.box_.from_unit(&best_u))
    }
}

/// Result of [`optimize`].
#[derive(Debug, Clone)]
pub struct BoResult {
    /// Archive-restricted argmax of the final posterior mean.
    pub best_input: Vec<f64>,
    /// Posterior mean at `best_input` (native units).
    pub best_posterior_mean: f64,
    /// Best raw observation and its input.
    pub best_observed: f64,
    pub best_observed_input: Vec<f64>,
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
    pub iterations_run: usize,
}

/// Runs the full loop: `n_init` Latin-hypercube evaluations, then
/// propose → evaluate → refit for `n_iter` iterations.
///
/// Returns the archive-restricted argmax of the final surrogate posterior
/// mean. Deterministic given the seed.
pub fn optimize(
    objective: &(dyn Fn(&[f64]) -> f64 + Sync),
    box_: SearchBox,
    opts: &BoOptions,
) -> Result<BoResult, BoError> {
    if opts.n_init < 2 {
        return Err(BoError::TooFewInitPoints(opts.n_init));
    }
    let mut state = BoState::new(box_, opts.seed);
    let mut writer = ArchiveWriter::create(opts.archive_path.as_deref())?;

    let design = latin_hypercube(opts.n_init, state.box_.dim(), &mut state.rng);
    for u in design {
        let x = state.box_.from_unit(&u);
        let y = objective(&x);
        state.record(x, y);
        writer.append(&state)?;
    }
    state.refit()?;
    state.retune(8, opts.tune_max_points)?;

    let mut iterations_run = 0;
    for iter in 0..opts.n_iter {
        if let (Some(target), Some((_, best))) = (opts.target, state.best_observed()) {
            if best >= target {
                break;
            }
        }
        let x = state.propose_next()?;
        let y = objective(&x);
        state.record(x, y);
        state.extend_surrogate()?;
        state.iteration += 1;
        iterations_run = iter + 1;
        writer.append(&state)?;
        if opts.retune_every > 0 && (iter + 1) % opts.retune_every == 0 && iter + 1 < opts.n_iter {
            state.retune(2, opts.tune_max_points)?;
        }
    }

    let (best_idx, best_posterior_mean) = state
        .incumbent()
        .or_else(|| state.best_observed())
        .expect("archive is non-empty");
    let (obs_idx, best_observed) = state.best_observed().expect("archive is non-empty");
    Ok(BoResult {
        best_input: state.inputs[best_idx].clone(),
        best_posterior_mean,
        best_observed,
        best_observed_input: state.inputs[obs_idx].clone(),
        inputs: state.inputs,
        outputs: state.raw_outputs,
        iterations_run,
    })
}

/// Resumes an optimization from a previously streamed archive CSV: the stored
/// evaluations seed the surrogate and the loop continues for `opts.n_iter`
/// more iterations (no new initial design).
pub fn optimize_resume(
    objective: &(dyn Fn(&[f64]) -> f64 + Sync),
    box_: SearchBox,
    archive: &Path,
    opts: &BoOptions,
) -> Result<BoResult, BoError> {
    let dim = box_.dim();
    let (inputs, outputs) = read_archive(archive, dim)?;
    if inputs.len() < 2 {
        return Err(BoError::TooFewInitPoints(inputs.len()));
    }
    let mut state = BoState::new(box_, opts.seed.wrapping_add(inputs.len() as u64));
    for (x, y) in inputs.into_iter().zip(outputs) {
        state.record(x, y);
    }
    let mut writer = ArchiveWriter::create(opts.archive_path.as_deref())?;
    writer.rewrite_all(&state)?;
    state.refit()?;
    state.retune(8, opts.tune_max_points)?;

    let mut iterations_run = 0;
    for iter in 0..opts.n_iter {
        if let (Some(target), Some((_, best))) = (opts.target, state.best_observed()) {
            if best >= target {
                break;
            }
        }
        let x = state.propose_next()?;
        let y = objective(&x);
        state.record(x, y);
        state.extend_surrogate()?;
        state.iteration += 1;
        iterations_run = iter + 1;
        writer.append(&state)?;
        if opts.retune_every > 0 && (iter + 1) % opts.retune_every == 0 && iter + 1 < opts.n_iter {
            state.retune(2, opts.tune_max_points)?;
        }
    }
    let (best_idx, best_posterior_mean) =
        state.incumbent().or_else(|| state.best_observed()).expect("archive is non-empty");
    let (obs_idx, best_observed) = state.best_observed().expect("archive is non-empty");
    Ok(BoResult {
        best_input: state.inputs[best_idx].clone(),
        best_posterior_mean,
        best_observed,
        best_observed_input: state.inputs[obs_idx].clone(),
        inputs: state.inputs,
        outputs: state.raw_outputs,
        iterations_run,
    })
}

struct ArchiveWriter {
    file: Option<std::io::BufWriter<std::fs::File>>,
    rows_written: usize,
}

impl ArchiveWriter {
    fn create(path: Option<&Path>) -> Result<Self, BoError> {
        let file = match path {
            Some(p) => {
                if let Some(parent) = p.parent() {
                    if !parent.as_os_str().is_empty() {
                        std::fs::create_dir_all(parent)?;
                    }
                }
                Some(std::io::BufWriter::new(std::fs::File::create(p)?))
            }
            None => None,
        };
        Ok(Self { file, rows_written: 0 })
    }

    fn append(&mut self, state: &BoState) -> Result<(), BoError> {
        let Some(f) = self.file.as_mut() else { return Ok(()) };
        if self.rows_written == 0 {
            write!(f, "iteration")?;
            for k in 0..state.box_.dim() {
                write!(f, ",x{k}")?;
            }
            writeln!(f, ",y,incumbent")?;
        }
        let i = state.len() - 1;
        let incumbent = state.best_observed().map(|(_, v)| v).unwrap_or(f64::NAN);
        write!(f, "{}", i)?;
        for v in &state.inputs[i] {
            write!(f, ",{v}")?;
        }
        writeln!(f, ",{},{}", state.outputs[i], incumbent)?;
        f.flush()?;
        self.rows_written += 1;
        Ok(())
    }

    fn rewrite_all(&mut self, state: &BoState) -> Result<(), BoError> {
        if self.file.is_none() {
            return Ok(());
        }
        for i in 0..state.len() {
            let f = self.file.as_mut().unwrap();
            if self.rows_written == 0 {
                write!(f, "iteration")?;
                for k in 0..state.box_.dim() {
                    write!(f, ",x{k}")?;
                }
                writeln!(f, ",y,incumbent")?;
            }
            let incumbent = state.outputs[..=i]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            write!(f, "{}", i)?;
            for v in &state.inputs[i] {
                write!(f, ",{v}")?;
            }
            writeln!(f, ",{},{}", state.outputs[i], incumbent)?;
            self.rows_written += 1;
        }
        self.file.as_mut().unwrap().flush()?;
        Ok(())
    }
}

fn read_archive(path: &Path, dim: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>), BoError> {
    let text = std::fs::read_to_string(path)?;
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < dim + 2 {
            return Err(BoError::BadArchive {
                line: lineno + 1,
                reason: format!("expected at least {} fields, got {}", dim + 2, fields.len()),
            });
        }
        let parse = |s: &str| -> Result<f64, BoError> {
            s.parse().map_err(|_| BoError::BadArchive {
                line: lineno + 1,
                reason: format!("bad float {s:?}"),
            })
        };
        let x: Result<Vec<f64>, _> = fields[1..=dim].iter().map(|s| parse(s)).collect();
        inputs.push(x?);
        outputs.push(parse(fields[dim + 1])?);
    }
    Ok((inputs, outputs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ei_deterministic_improvement() {
        assert_eq!(expected_improvement(1.0, 0.0, 0.0), 1.0);
        assert_eq!(expected_improvement(-1.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn ei_at_zero_mean_difference() {
        // EI(μ = f*, σ = 1) = φ(0)
        assert_relative_eq!(expected_improvement(0.0, 1.0, 0.0), 0.3989422804014327, epsilon = 1e-9);
    }

    #[test]
    fn ei_nonnegative_everywhere() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let mu = rng.gen_range(-5.0..5.0);
            let sigma = rng.gen_range(0.0..3.0);
            let f_best = rng.gen_range(-5.0..5.0);
            assert!(expected_improvement(mu, sigma, f_best) >= 0.0);
        }
    }

    #[test]
    fn ei_matches_small_monte_carlo() {
        use rand::{Rng, SeedableRng};
        use rand_distr::{Distribution, Normal};
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..5 {
            let mu = rng.gen_range(-1.0..1.0);
            let sigma = rng.gen_range(0.1..2.0);
            let f_best = rng.gen_range(-1.0..1.0);
            let normal = Normal::new(mu, sigma).unwrap();
            let n = 200_000;
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..n {
                let draw: f64 = normal.sample(&mut rng);
                let v = (draw - f_best).max(0.0);
                sum += v;
                sumsq += v * v;
            }
            let mc = sum / n as f64;
            let se = ((sumsq / n as f64 - mc * mc) / n as f64).sqrt();
            let ei = expected_improvement(mu, sigma, f_best);
            assert!(
                (ei - mc).abs() <= 4.0 * se + 1e-9,
                "EI {ei} vs MC {mc} ± {se}"
            );
        }
    }

    #[test]
    fn halton_covers_unit_box() {
        let pts = halton_points(128, 3, &[0.0, 0.0, 0.0]);
        for p in &pts {
            assert!(p.iter().all(|&v| (0.0..1.0).contains(&v)));
        }
        let mean_x: f64 = pts.iter().map(|p| p[0]).sum::<f64>() / 128.0;
        assert!((mean_x - 0.5).abs() < 0.05);
    }

    #[test]
    fn degenerate_box_rejected() {
        assert!(SearchBox::new(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(SearchBox::new(vec![], vec![]).is_err());
    }

    fn quick_opts(n_init: usize, n_iter: usize, seed: u64) -> BoOptions {
        BoOptions::new(n_init, n_iter, seed)
    }

    #[test]
    fn single_archived_point_explores_elsewhere() {
        let box_ = SearchBox::new(vec![0.0], vec![1.0]).unwrap();
        let mut state = BoState::new(box_, 4);
        state.record(vec![0.5], 1.0);
        state.record(vec![0.5000001], 1.0);
        state.refit().unwrap();
        let next = state.propose_next().unwrap();
        assert!((next[0] - 0.5).abs() > 1e-3, "proposal should leave the archived point");
    }

    #[test]
    fn one_dimensional_quadratic_converges() {
        let objective = |x: &[f64]| -(x[0] - 0.5).powi(2);
        let box_ = SearchBox::new(vec![0.0], vec![1.0]).unwrap();
        let result = optimize(&objective, box_, &quick_opts(4, 30, 7)).unwrap();
        assert!(
            (result.best_observed_input[0] - 0.5).abs() < 0.02,
            "best at {:?}",
            result.best_observed_input
        );
    }

    #[test]
    fn zero_iterations_returns_best_of_design() {
        let objective = |x: &[f64]| -(x[0] - 0.5).powi(2);
        let box_ = SearchBox::new(vec![0.0], vec![1.0]).unwrap();
        let full = optimize(&objective, box_.clone(), &quick_opts(12, 10, 3)).unwrap();
        let short = optimize(&objective, box_, &quick_opts(12, 0, 3)).unwrap();
        assert_eq!(short.inputs.len(), 12);
        assert!(short.best_observed <= full.best_observed + 1e-15);
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        let objective = |x: &[f64]| (x[0] * 3.1).sin() + x[1];
        let box_ = SearchBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let a = optimize(&objective, box_.clone(), &quick_opts(6, 8, 99)).unwrap();
        let b = optimize(&objective, box_, &quick_opts(6, 8, 99)).unwrap();
        assert_eq!(a.inputs, b.inputs);
        assert_eq!(a.outputs, b.outputs);
    }

    #[test]
    fn incumbent_sequence_is_monotone() {
        let objective = |x: &[f64]| -(x[0] - 0.3).powi(2);
        let box_ = SearchBox::new(vec![0.0], vec![1.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("archive.csv");
        let mut opts = quick_opts(5, 10, 11);
        opts.archive_path = Some(path.clone());
        optimize(&objective, box_, &opts).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let incumbents: Vec<f64> = text
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
            .collect();
        assert_eq!(incumbents.len(), 15);
        for w in incumbents.windows(2) {
            assert!(w[1] >= w[0] - 1e-15, "incumbent decreased: {:?}", w);
        }
    }

    #[test]
    fn non_finite_objective_is_penalized_and_continues() {
        let objective =
            |x: &[f64]| if x[0] > 0.8 { f64::NAN } else { -(x[0] - 0.5).powi(2) };
        let box_ = SearchBox::new(vec![0.0], vec![1.0]).unwrap();
        let result = optimize(&objective, box_, &quick_opts(8, 10, 5)).unwrap();
        assert!(result.best_observed.is_finite());
        assert!((result.best_observed_input[0] - 0.5).abs() < 0.1);
    }

    #[test]
    fn ei_is_zero_at_noise_free_archive_points() {
        let objective = |x: &[f64]| (x[0] * 2.0).cos();
        let box_ = SearchBox::new(vec![0.0], vec![1.0]).unwrap();
        let mut state = BoState::new(box_, 6);
        state.noise_std = crate::gp::NOISE_FLOOR; // noise-free archive
        for i in 0..8 {
            let x = vec![i as f64 / 7.0];
            let y = objective(&x);
            state.record(x, y);
        }
        state.refit().unwrap();
        let surrogate = state.surrogate().unwrap();
        let means = surrogate.train_means();
        let f_best = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for i in 0..8 {
            let u = state.box_.to_unit(&state.inputs[i]);
            let (mu, var) = surrogate.predict(&u).unwrap();
            let ei = expected_improvement(mu, var.sqrt(), f_best);
            assert!(ei < 1e-5, "EI at archived point {i} was {ei}");
        }
    }

    #[test]
    fn resume_continues_from_archive() {
        let objective = |x: &[f64]| -(x[0] - 0.6).powi(2);
        let box_ = SearchBox::new(vec![0.0], vec![1.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("archive.csv");
        let mut opts = quick_opts(5, 3, 21);
        opts.archive_path = Some(path.clone());
        let first = optimize(&objective, box_.clone(), &opts).unwrap();
        let resumed = optimize_resume(&objective, box_, &path, &quick_opts(2, 4, 22)).unwrap();
        assert_eq!(resumed.inputs.len(), first.inputs.len() + 4);
        assert!(resumed.best_observed >= first.best_observed - 1e-12);
    }
}
