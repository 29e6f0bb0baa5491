//! Grid lookup tables for fast controller-side evaluation of a trained GP.
//!
//! The onboard-style consumer cannot afford exact GP evaluation at 500 Hz, so
//! posterior mean and standard deviation are tabulated on a uniform grid and
//! queried with multilinear interpolation. Out-of-range queries clamp to the
//! boundary.

use super::{GpError, GpModel};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const PACK_MAGIC: &[u8; 8] = b"GPLUT01\n";
/// Safety factor applied to the interpolation error measured at export time.
const ERROR_MARGIN: f64 = 1.5;

/// One uniform grid axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl GridAxis {
    /// `count` evenly spaced nodes spanning `[lo, hi]`.
    pub fn span(lo: f64, hi: f64, count: usize) -> Result<Self, GpError> {
        if count < 2 || !(hi > lo) {
            return Err(GpError::EmptyGridAxis);
        }
        Ok(Self { start: lo, step: (hi - lo) / (count - 1) as f64, count })
    }

    pub fn node(&self, i: usize) -> f64 {
        self.start + self.step * i as f64
    }

    pub fn end(&self) -> f64 {
        self.node(self.count - 1)
    }

    /// Cell index and interpolation weight for `x`, clamped to the grid.
    /// The boolean reports whether clamping occurred.
    fn locate(&self, x: f64) -> (usize, f64, bool) {
        let t = (x - self.start) / self.step;
        if t <= 0.0 {
            (0, 0.0, t < 0.0)
        } else if t >= (self.count - 1) as f64 {
            (self.count - 2, 1.0, t > (self.count - 1) as f64)
        } else {
            let i = t.floor() as usize;
            (i.min(self.count - 2), t - i as f64, false)
        }
    }
}

/// Tabulated posterior mean and standard deviation of one scalar GP.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LookupTable {
    pub axes: Vec<GridAxis>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Interpolation error bound (mean and sd channels) measured against the
    /// exact GP at export time, with a ×1.5 margin.
    pub max_interp_error: f64,
}

impl LookupTable {
    /// Evaluates the trained GP on the grid product and tabulates it.
    ///
    /// The stored error bound is the largest |table − exact| observed over
    /// all cell midpoints, scaled by the safety margin.
    pub fn export_from_gp(model: &GpModel, axes: Vec<GridAxis>) -> Result<Self, GpError> {
        if axes.is_empty() || axes.iter().any(|a| a.count == 0) {
            return Err(GpError::EmptyGridAxis);
        }
        if axes.len() != model.dim() {
            return Err(GpError::DimensionMismatch { expected: model.dim(), got: axes.len() });
        }
        let total: usize = axes.iter().map(|a| a.count).product();
        if total > 1_000_000 {
            return Err(GpError::TooManyNodes { nodes: total });
        }
        let nodes = grid_product(&axes, |a, i| a.node(i));
        let predictions = model.predict_batch(&nodes)?;
        let mean: Vec<f64> = predictions.iter().map(|p| p.0).collect();
        let sd: Vec<f64> = predictions.iter().map(|p| p.1.sqrt()).collect();
        let mut table = Self { axes, mean, sd, max_interp_error: 0.0 };

        // probe every cell midpoint, where multilinear error peaks
        let midpoints = grid_product(&table.axes, |a, i| a.node(i) + 0.5 * a.step);
        let midpoints: Vec<Vec<f64>> = midpoints
            .into_iter()
            .filter(|p| p.iter().zip(&table.axes).all(|(&x, a)| x <= a.end()))
            .collect();
        let exact = model.predict_batch(&midpoints)?;
        let mut worst = 0.0f64;
        for (p, &(mu, var)) in midpoints.iter().zip(exact.iter()) {
            let (tm, ts) = table.eval(p);
            worst = worst.max((tm - mu).abs()).max((ts - var.sqrt()).abs());
        }
        table.max_interp_error = worst * ERROR_MARGIN;
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Multilinear interpolation of `(mean, sd)` at `x`; out-of-range
    /// coordinates clamp to the boundary.
    pub fn eval(&self, x: &[f64]) -> (f64, f64) {
        let (m, s, _) = self.eval_tracking_clamp(x);
        (m, s)
    }

    /// Like [`eval`](Self::eval), also reporting whether any coordinate was
    /// clamped.
    pub fn eval_tracking_clamp(&self, x: &[f64]) -> (f64, f64, bool) {
        debug_assert_eq!(x.len(), self.dim());
        let d = self.dim();
        let mut base = [0usize; 8];
        let mut frac = [0.0f64; 8];
        let mut clamped = false;
        for k in 0..d {
            let (i, t, c) = self.axes[k].locate(x[k]);
            base[k] = i;
            frac[k] = t;
            clamped |= c;
        }
        // strides, last axis fastest
        let mut stride = [0usize; 8];
        let mut acc = 1;
        for k in (0..d).rev() {
            stride[k] = acc;
            acc *= self.axes[k].count;
        }
        let mut mean = 0.0;
        let mut sd = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = 0;
            for k in 0..d {
                if corner & (1 << k) != 0 {
                    w *= frac[k];
                    idx += (base[k] + 1) * stride[k];
                } else {
                    w *= 1.0 - frac[k];
                    idx += base[k] * stride[k];
                }
            }
            if w != 0.0 {
                mean += w * self.mean[idx];
                sd += w * self.sd[idx];
            }
        }
        (mean, sd, clamped)
    }

    /// Largest tabulated `2·sd` over the grid (the global uncertainty bound).
    pub fn max_two_sigma(&self) -> f64 {
        self.sd.iter().fold(0.0f64, |m, &s| m.max(2.0 * s))
    }

    /// Flat CSV dump (one row per node) for inspection.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), GpError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for k in 0..self.dim() {
            write!(f, "x{k},")?;
        }
        writeln!(f, "mean,sd")?;
        let nodes = grid_product(&self.axes, |a, i| a.node(i));
        for (node, (m, s)) in nodes.iter().zip(self.mean.iter().zip(self.sd.iter())) {
            for v in node {
                write!(f, "{v},")?;
            }
            writeln!(f, "{m},{s}")?;
        }
        Ok(())
    }
}

/// All grid nodes (row-major, last axis fastest) mapped through `f`.
fn grid_product(axes: &[GridAxis], f: impl Fn(&GridAxis, usize) -> f64) -> Vec<Vec<f64>> {
    let total: usize = axes.iter().map(|a| a.count).product();
    let mut out = Vec::with_capacity(total);
    let d = axes.len();
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        out.push((0..d).map(|k| f(&axes[k], idx[k])).collect());
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < axes[k].count {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}

/// Named collection of lookup tables stored in one binary file: a JSON header
/// followed by raw little-endian f64 data (mean then sd per table).
#[derive(Debug, Clone, Default)]
pub struct TablePack {
    pub entries: Vec<(String, LookupTable)>,
}

#[derive(Serialize, Deserialize)]
struct PackHeader {
    tables: Vec<PackTableHeader>,
}

#[derive(Serialize, Deserialize)]
struct PackTableHeader {
    name: String,
    axes: Vec<GridAxis>,
    max_interp_error: f64,
}

impl TablePack {
    pub fn get(&self, name: &str) -> Option<&LookupTable> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GpError> {
        let header = PackHeader {
            tables: self
                .entries
                .iter()
                .map(|(name, t)| PackTableHeader {
                    name: name.clone(),
                    axes: t.axes.clone(),
                    max_interp_error: t.max_interp_error,
                })
                .collect(),
        };
        let header_bytes = serde_json::to_vec(&header)?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(PACK_MAGIC)?;
        f.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
        f.write_all(&header_bytes)?;
        for (_, t) in &self.entries {
            for &v in t.mean.iter().chain(t.sd.iter()) {
                f.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GpError> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        f.read_exact(&mut magic)?;
        if &magic != PACK_MAGIC {
            return Err(GpError::BadTableFile("bad magic".into()));
        }
        let mut len_bytes = [0u8; 4];
        f.read_exact(&mut len_bytes)?;
        let header_len = u32::from_le_bytes(len_bytes) as usize;
        let mut header_bytes = vec![0u8; header_len];
        f.read_exact(&mut header_bytes)?;
        let header: PackHeader = serde_json::from_slice(&header_bytes)?;
        let mut entries = Vec::with_capacity(header.tables.len());
        for th in header.tables {
            let n: usize = th.axes.iter().map(|a| a.count).product();
            let mut read_block = |count: usize| -> Result<Vec<f64>, GpError> {
                let mut bytes = vec![0u8; count * 8];
                f.read_exact(&mut bytes)?;
                Ok(bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect())
            };
            let mean = read_block(n)?;
            let sd = read_block(n)?;
            entries.push((
                th.name,
                LookupTable { axes: th.axes, mean, sd, max_interp_error: th.max_interp_error },
            ));
        }
        Ok(Self { entries })
    }
}
