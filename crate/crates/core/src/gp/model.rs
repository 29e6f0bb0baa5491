//! Exact Gaussian-process regression: fit, posterior prediction, marginal
//! likelihood and derivative-free hyperparameter tuning.

use super::chol::{PackedLower, LANES};
use super::{GpError, SeKernel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Floor applied to the observation noise standard deviation.
pub const NOISE_FLOOR: f64 = 1e-8;
/// First jitter tried when the Gram factorization fails, escalated ×10 per
/// retry up to [`JITTER_MAX`].
pub const JITTER_MIN: f64 = 1e-8;
pub const JITTER_MAX: f64 = 1e-4;

/// Prior mean function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MeanFn {
    Zero,
    Constant(f64),
}

impl MeanFn {
    pub fn eval(&self) -> f64 {
        match self {
            MeanFn::Zero => 0.0,
            MeanFn::Constant(c) => *c,
        }
    }
}

/// A fitted GP with cached Cholesky factor of `K + (σ_ε² + jitter)·I` and
/// cached `α = (K + σ_ε²I)⁻¹ (Y − m)`.
///
/// Immutable after [`fit`](Self::fit) apart from the explicit incremental
/// update methods used by the Bayesian optimizer; concurrent `predict` calls
/// are safe.
#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: SeKernel,
    noise_std: f64,
    jitter: f64,
    mean: MeanFn,
    dim: usize,
    /// Training inputs, flattened row-major (n × dim).
    x: Vec<f64>,
    y: Vec<f64>,
    /// Packed lower rows of the noise-free Gram matrix K.
    gram: Vec<f64>,
    chol: PackedLower,
    alpha: Vec<f64>,
}

impl GpModel {
    /// Fits a GP to `(inputs, outputs)`.
    ///
    /// `noise_std` is floored at [`NOISE_FLOOR`]; if the factorization fails,
    /// jitter is added to the diagonal with ×10 escalation before giving up.
    pub fn fit(
        inputs: &[Vec<f64>],
        outputs: &[f64],
        kernel: SeKernel,
        noise_std: f64,
        mean: MeanFn,
    ) -> Result<Self, GpError> {
        if inputs.is_empty() {
            return Err(GpError::EmptyTrainingSet);
        }
        if inputs.len() != outputs.len() {
            return Err(GpError::DimensionMismatch { expected: inputs.len(), got: outputs.len() });
        }
        let dim = kernel.dim();
        for row in inputs {
            if row.len() != dim {
                return Err(GpError::DimensionMismatch { expected: dim, got: row.len() });
            }
        }
        let n = inputs.len();
        let mut x = Vec::with_capacity(n * dim);
        for row in inputs {
            x.extend_from_slice(row);
        }
        let mut gram = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in 0..=i {
                gram.push(kernel.eval_raw(&x[i * dim..(i + 1) * dim], &x[j * dim..(j + 1) * dim]));
            }
        }
        let noise_std = noise_std.max(NOISE_FLOOR);
        let (chol, jitter) = factor_with_jitter(&gram, n, noise_std)?;
        let mut model = Self {
            kernel,
            noise_std,
            jitter,
            mean,
            dim,
            x,
            y: outputs.to_vec(),
            gram,
            chol,
            alpha: Vec::new(),
        };
        model.recompute_alpha();
        Ok(model)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kernel(&self) -> &SeKernel {
        &self.kernel
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    /// Jitter that had to be added to factorize, 0 if none.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn outputs(&self) -> &[f64] {
        &self.y
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    fn recompute_alpha(&mut self) {
        let m = self.mean.eval();
        self.alpha = self.y.iter().map(|&v| v - m).collect();
        self.chol.solve_full(&mut self.alpha);
    }

    /// Replaces the outputs without refactorizing (the Gram matrix does not
    /// depend on Y). Used when the optimizer re-standardizes its archive.
    pub fn set_outputs(&mut self, outputs: &[f64]) -> Result<(), GpError> {
        if outputs.len() != self.len() {
            return Err(GpError::DimensionMismatch { expected: self.len(), got: outputs.len() });
        }
        self.y = outputs.to_vec();
        self.recompute_alpha();
        Ok(())
    }

    /// Appends one observation with an O(n²) factor update.
    pub fn append_point(&mut self, input: &[f64], output: f64) -> Result<(), GpError> {
        if input.len() != self.dim {
            return Err(GpError::DimensionMismatch { expected: self.dim, got: input.len() });
        }
        let n = self.len();
        let mut row = Vec::with_capacity(n);
        for j in 0..n {
            row.push(self.kernel.eval_raw(input, self.input(j)));
        }
        let diag = self.kernel.variance();
        let noisy_diag = diag + self.noise_std * self.noise_std + self.jitter;
        if self.chol.append_row(&row, noisy_diag).is_err() {
            // fall back to a full refit with escalated jitter
            self.gram.extend_from_slice(&row);
            self.gram.push(diag);
            self.x.extend_from_slice(input);
            self.y.push(output);
            let (chol, jitter) =
                factor_with_jitter(&self.gram, n + 1, self.noise_std).map_err(|_| {
                    GpError::IllConditioned { jitter: JITTER_MAX }
                })?;
            self.chol = chol;
            self.jitter = jitter;
            self.recompute_alpha();
            return Ok(());
        }
        self.gram.extend_from_slice(&row);
        self.gram.push(diag);
        self.x.extend_from_slice(input);
        self.y.push(output);
        self.recompute_alpha();
        Ok(())
    }

    /// Posterior mean and variance at `x*`.
    pub fn predict(&self, at: &[f64]) -> Result<(f64, f64), GpError> {
        if at.len() != self.dim {
            return Err(GpError::DimensionMismatch { expected: self.dim, got: at.len() });
        }
        let n = self.len();
        let mut k_star = Vec::with_capacity(n);
        let mut mu = self.mean.eval();
        for j in 0..n {
            let k = self.kernel.eval_raw(at, self.input(j));
            mu += k * self.alpha[j];
            k_star.push(k);
        }
        self.chol.solve_vec(&mut k_star);
        let var = self.kernel.variance() - k_star.iter().map(|v| v * v).sum::<f64>();
        Ok((mu, var.max(0.0)))
    }

    /// Batched posterior evaluation; identical to [`predict`](Self::predict)
    /// per point but runs the triangular solves [`LANES`] candidates at a
    /// time.
    pub fn predict_batch(&self, points: &[Vec<f64>]) -> Result<Vec<(f64, f64)>, GpError> {
        let n = self.len();
        let m = points.len();
        let mut out = vec![(0.0, 0.0); m];
        let mut buf = vec![0.0f64; n * LANES];
        let prior_var = self.kernel.variance();
        let prior_mean = self.mean.eval();
        for (chunk_idx, chunk) in points.chunks(LANES).enumerate() {
            for p in chunk {
                if p.len() != self.dim {
                    return Err(GpError::DimensionMismatch { expected: self.dim, got: p.len() });
                }
            }
            buf.iter_mut().for_each(|v| *v = 0.0);
            let base = chunk_idx * LANES;
            for j in 0..n {
                let xj = self.input(j);
                let aj = self.alpha[j];
                let row = &mut buf[j * LANES..(j + 1) * LANES];
                for (c, p) in chunk.iter().enumerate() {
                    let k = self.kernel.eval_raw(p, xj);
                    out[base + c].0 += k * aj;
                    row[c] = k;
                }
            }
            self.chol.solve_chunk(&mut buf);
            for c in 0..chunk.len() {
                let mut sq = 0.0;
                for j in 0..n {
                    let v = buf[j * LANES + c];
                    sq += v * v;
                }
                out[base + c].0 += prior_mean;
                out[base + c].1 = (prior_var - sq).max(0.0);
            }
        }
        Ok(out)
    }

    /// Posterior means at every training input (`K·α + m`), cheap via the
    /// stored packed Gram matrix.
    pub fn train_means(&self) -> Vec<f64> {
        let n = self.len();
        let m = self.mean.eval();
        let mut mu = vec![m; n];
        let mut idx = 0;
        for i in 0..n {
            for j in 0..=i {
                let k = self.gram[idx];
                idx += 1;
                mu[i] += k * self.alpha[j];
                if i != j {
                    mu[j] += k * self.alpha[i];
                }
            }
        }
        mu
    }

    /// Log marginal likelihood
    /// `−½ ((Y−m)ᵀ A⁻¹ (Y−m) + log det A + N log 2π)` with
    /// `A = K + σ_ε² I`.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let m = self.mean.eval();
        let data_term: f64 = self.y.iter().zip(&self.alpha).map(|(&y, &a)| (y - m) * a).sum();
        let n = self.len() as f64;
        -0.5 * (data_term + self.chol.log_det() + n * (2.0 * std::f64::consts::PI).ln())
    }

    /// Analytic derivative of the log marginal likelihood with respect to
    /// `log σ_f`: `αᵀKα − tr(A⁻¹K)`. O(n³); used to validate the likelihood
    /// surface against finite differences.
    pub fn lml_grad_log_sigma_f(&self) -> f64 {
        let n = self.len();
        let mut alpha_k_alpha = 0.0;
        let mut idx = 0;
        for i in 0..n {
            for j in 0..=i {
                let k = self.gram[idx];
                idx += 1;
                let w = if i == j { 1.0 } else { 2.0 };
                alpha_k_alpha += w * self.alpha[i] * k * self.alpha[j];
            }
        }
        // tr(A⁻¹K) column by column
        let mut trace = 0.0;
        let mut col = vec![0.0; n];
        for j in 0..n {
            for (i, slot) in col.iter_mut().enumerate() {
                let (lo, hi) = if i >= j { (j, i) } else { (i, j) };
                *slot = self.gram[hi * (hi + 1) / 2 + lo];
            }
            self.chol.solve_full(&mut col);
            trace += col[j];
        }
        alpha_k_alpha - trace
    }

    /// Serializes hyperparameters and training data as JSON.
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<(), GpError> {
        let n = self.len();
        let file = GpModelFile {
            sigma_f: self.kernel.sigma_f(),
            lengthscales: self.kernel.lengthscales().to_vec(),
            noise_std: self.noise_std,
            mean: self.mean,
            inputs: (0..n).map(|i| self.input(i).to_vec()).collect(),
            outputs: self.y.clone(),
        };
        let text = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Loads a model saved by [`save_json`](Self::save_json) and refits.
    pub fn load_json(path: impl AsRef<Path>) -> Result<Self, GpError> {
        let text = std::fs::read_to_string(path)?;
        let file: GpModelFile = serde_json::from_str(&text)?;
        let kernel = SeKernel::new(file.sigma_f, file.lengthscales)?;
        Self::fit(&file.inputs, &file.outputs, kernel, file.noise_std, file.mean)
    }
}

#[derive(Serialize, Deserialize)]
struct GpModelFile {
    sigma_f: f64,
    lengthscales: Vec<f64>,
    noise_std: f64,
    mean: MeanFn,
    inputs: Vec<Vec<f64>>,
    outputs: Vec<f64>,
}

fn factor_with_jitter(
    gram: &[f64],
    n: usize,
    noise_std: f64,
) -> Result<(PackedLower, f64), GpError> {
    let noise_var = noise_std * noise_std;
    let mut jitter = 0.0;
    loop {
        let mut a = gram.to_vec();
        for i in 0..n {
            a[i * (i + 1) / 2 + i] += noise_var + jitter;
        }
        match PackedLower::factor(&a, n) {
            Ok(chol) => return Ok((chol, jitter)),
            Err(_) => {
                if jitter == 0.0 {
                    jitter = JITTER_MIN;
                } else if jitter < JITTER_MAX {
                    jitter *= 10.0;
                } else {
                    return Err(GpError::IllConditioned { jitter });
                }
            }
        }
    }
}

/// Box bounds for the tunable hyperparameters, in natural units.
#[derive(Debug, Clone)]
pub struct HyperBounds {
    pub sigma_f: (f64, f64),
    pub lengthscales: Vec<(f64, f64)>,
    pub noise_std: (f64, f64),
}

impl HyperBounds {
    /// The same lengthscale bounds in every dimension.
    pub fn uniform(sigma_f: (f64, f64), lengthscale: (f64, f64), noise_std: (f64, f64), dim: usize) -> Self {
        Self { sigma_f, lengthscales: vec![lengthscale; dim], noise_std }
    }
}

#[derive(Debug, Clone)]
pub struct TuneOptions {
    /// Number of Nelder–Mead starts (the first one is the supplied init).
    pub restarts: usize,
    /// Iteration cap per start.
    pub max_iters: usize,
    pub seed: u64,
    /// Fit the likelihood on at most this many points (seeded subsample)
    /// to bound the cost of repeated refits on large archives.
    pub max_points: usize,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self { restarts: 8, max_iters: 120, seed: 0, max_points: usize::MAX }
    }
}

#[derive(Debug, Clone)]
pub struct TuneResult {
    pub kernel: SeKernel,
    pub noise_std: f64,
    pub best_lml: f64,
    /// False when no restart improved on the initial parameters.
    pub improved: bool,
}

/// Maximizes the log marginal likelihood over `(σ_f, ℓ, σ_ε)` by multi-start
/// Nelder–Mead in log-parameter space, clamped to `bounds`.
pub fn tune_hyperparameters(
    inputs: &[Vec<f64>],
    outputs: &[f64],
    init: (SeKernel, f64),
    bounds: &HyperBounds,
    opts: &TuneOptions,
) -> Result<TuneResult, GpError> {
    if inputs.is_empty() {
        return Err(GpError::EmptyTrainingSet);
    }
    let dim = init.0.dim();
    if bounds.lengthscales.len() != dim {
        return Err(GpError::DimensionMismatch { expected: dim, got: bounds.lengthscales.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    // subsample for the likelihood evaluations if the archive is large
    let (sub_x, sub_y): (Vec<Vec<f64>>, Vec<f64>) = if inputs.len() > opts.max_points {
        let mut idx: Vec<usize> = (0..inputs.len()).collect();
        for i in 0..opts.max_points {
            let j = rng.gen_range(i..idx.len());
            idx.swap(i, j);
        }
        idx.truncate(opts.max_points);
        (idx.iter().map(|&i| inputs[i].clone()).collect(), idx.iter().map(|&i| outputs[i]).collect())
    } else {
        (inputs.to_vec(), outputs.to_vec())
    };

    let p = dim + 2;
    let lo: Vec<f64> = std::iter::once(bounds.sigma_f.0)
        .chain(bounds.lengthscales.iter().map(|b| b.0))
        .chain(std::iter::once(bounds.noise_std.0))
        .map(f64::ln)
        .collect();
    let hi: Vec<f64> = std::iter::once(bounds.sigma_f.1)
        .chain(bounds.lengthscales.iter().map(|b| b.1))
        .chain(std::iter::once(bounds.noise_std.1))
        .map(f64::ln)
        .collect();

    let neg_lml = |log_params: &[f64]| -> f64 {
        let sigma_f = log_params[0].exp();
        let ls: Vec<f64> = log_params[1..=dim].iter().map(|v| v.exp()).collect();
        let noise = log_params[dim + 1].exp();
        let kernel = match SeKernel::new(sigma_f, ls) {
            Ok(k) => k,
            Err(_) => return f64::INFINITY,
        };
        match GpModel::fit(&sub_x, &sub_y, kernel, noise, MeanFn::Zero) {
            Ok(m) => -m.log_marginal_likelihood(),
            Err(_) => f64::INFINITY,
        }
    };

    let clamp = |v: &mut Vec<f64>| {
        for k in 0..p {
            v[k] = v[k].clamp(lo[k], hi[k]);
        }
    };

    let mut init_point: Vec<f64> = std::iter::once(init.0.sigma_f())
        .chain(init.0.lengthscales().iter().copied())
        .chain(std::iter::once(init.1.max(NOISE_FLOOR)))
        .map(f64::ln)
        .collect();
    clamp(&mut init_point);
    let init_value = neg_lml(&init_point);

    let mut best_point = init_point.clone();
    let mut best_value = init_value;
    for restart in 0..opts.restarts.max(1) {
        let start = if restart == 0 {
            init_point.clone()
        } else {
            (0..p).map(|k| rng.gen_range(lo[k]..=hi[k])).collect()
        };
        let (point, value) = nelder_mead(&neg_lml, &start, &lo, &hi, opts.max_iters);
        if value < best_value {
            best_value = value;
            best_point = point;
        }
    }

    let improved = best_value < init_value - 1e-12;
    let kernel = SeKernel::new(
        best_point[0].exp(),
        best_point[1..=dim].iter().map(|v| v.exp()).collect(),
    )?;
    Ok(TuneResult { kernel, noise_std: best_point[dim + 1].exp(), best_lml: -best_value, improved })
}

/// Plain Nelder–Mead with box projection; returns the best vertex.
fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    start: &[f64],
    lo: &[f64],
    hi: &[f64],
    max_iters: usize,
) -> (Vec<f64>, f64) {
    let p = start.len();
    let clamp = |v: &mut Vec<f64>| {
        for k in 0..p {
            v[k] = v[k].clamp(lo[k], hi[k]);
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(p + 1);
    simplex.push((start.to_vec(), f(start)));
    for k in 0..p {
        let mut v = start.to_vec();
        v[k] += 0.25;
        clamp(&mut v);
        let fv = f(&v);
        simplex.push((v, fv));
    }
    for _ in 0..max_iters {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let spread = simplex[p].1 - simplex[0].1;
        if spread.abs() < 1e-9 * (1.0 + simplex[0].1.abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..p)
            .map(|k| simplex[..p].iter().map(|(v, _)| v[k]).sum::<f64>() / p as f64)
            .collect();
        let worst = simplex[p].clone();
        let mut reflect: Vec<f64> =
            (0..p).map(|k| centroid[k] + (centroid[k] - worst.0[k])).collect();
        clamp(&mut reflect);
        let fr = f(&reflect);
        if fr < simplex[0].1 {
            let mut expand: Vec<f64> =
                (0..p).map(|k| centroid[k] + 2.0 * (centroid[k] - worst.0[k])).collect();
            clamp(&mut expand);
            let fe = f(&expand);
            simplex[p] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[p - 1].1 {
            simplex[p] = (reflect, fr);
        } else {
            let mut contract: Vec<f64> =
                (0..p).map(|k| centroid[k] + 0.5 * (worst.0[k] - centroid[k])).collect();
            clamp(&mut contract);
            let fc = f(&contract);
            if fc < worst.1 {
                simplex[p] = (contract, fc);
            } else {
                // shrink towards the best vertex
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    for k in 0..p {
                        item.0[k] = best[k] + 0.5 * (item.0[k] - best[k]);
                    }
                    item.1 = f(&item.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    simplex.swap_remove(0)
}
