//! Packed row-major lower-triangular Cholesky factor with incremental row
//! appends and lane-batched triangular solves.
//!
//! The Bayesian optimizer refits its surrogate once per evaluation and screens
//! thousands of acquisition candidates per iteration, so the factor supports
//! an O(n²) append and a cache-blocked multi-RHS forward substitution instead
//! of rebuilding dense matrices.

/// Number of right-hand-side lanes processed together by
/// [`PackedLower::solve_chunk`]. Chosen so a lane block of a ~1000-row factor
/// stays L2-resident.
pub const LANES: usize = 16;

/// Lower-triangular factor stored packed by rows: row `i` occupies
/// `data[i(i+1)/2 .. i(i+1)/2 + i + 1]`.
#[derive(Debug, Clone)]
pub struct PackedLower {
    n: usize,
    data: Vec<f64>,
}

#[inline]
fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

impl PackedLower {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Cholesky factorization of a packed symmetric matrix (lower rows).
    /// Returns the pivot index at which the factorization lost positive
    /// definiteness, if it did.
    pub fn factor(a: &[f64], n: usize) -> Result<Self, usize> {
        debug_assert_eq!(a.len(), row_start(n));
        let mut l = a.to_vec();
        for i in 0..n {
            let ir = row_start(i);
            for j in 0..i {
                let jr = row_start(j);
                let mut s = l[ir + j];
                for k in 0..j {
                    s -= l[ir + k] * l[jr + k];
                }
                l[ir + j] = s / l[jr + j];
            }
            let mut s = l[ir + i];
            for k in 0..i {
                s -= l[ir + k] * l[ir + k];
            }
            if s <= 0.0 || !s.is_finite() {
                return Err(i);
            }
            l[ir + i] = s.sqrt();
        }
        Ok(Self { n, data: l })
    }

    /// Appends one row/column of the underlying matrix: `row` holds the new
    /// off-diagonal entries (length `n`) and `diag` the new diagonal entry.
    pub fn append_row(&mut self, row: &[f64], diag: f64) -> Result<(), ()> {
        debug_assert_eq!(row.len(), self.n);
        let mut w = row.to_vec();
        self.solve_vec(&mut w);
        let d2 = diag - w.iter().map(|v| v * v).sum::<f64>();
        if d2 <= 0.0 || !d2.is_finite() {
            return Err(());
        }
        self.data.extend_from_slice(&w);
        self.data.push(d2.sqrt());
        self.n += 1;
        Ok(())
    }

    /// Forward substitution `L x = b`, in place.
    pub fn solve_vec(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            let ir = row_start(i);
            let mut s = b[i];
            for k in 0..i {
                s -= self.data[ir + k] * b[k];
            }
            b[i] = s / self.data[ir + i];
        }
    }

    /// Backward substitution `Lᵀ x = b`, in place.
    pub fn solve_transpose_vec(&self, b: &mut [f64]) {
        for i in (0..self.n).rev() {
            let ir = row_start(i);
            let mut s = b[i];
            for k in (i + 1)..self.n {
                s -= self.data[row_start(k) + i] * b[k];
            }
            b[i] = s / self.data[ir + i];
        }
    }

    /// Solves `A x = b` for the full matrix `A = L Lᵀ`, in place.
    pub fn solve_full(&self, b: &mut [f64]) {
        self.solve_vec(b);
        self.solve_transpose_vec(b);
    }

    /// Forward substitution for [`LANES`] right-hand sides at once.
    ///
    /// `buf` is lane-major: `buf[i * LANES + c]` holds `B[i][c]` on entry and
    /// `X[i][c]` on return. Unused lanes can carry zeros.
    pub fn solve_chunk(&self, buf: &mut [f64]) {
        debug_assert_eq!(buf.len(), self.n * LANES);
        for i in 0..self.n {
            let ir = row_start(i);
            let (done, rest) = buf.split_at_mut(i * LANES);
            let acc: &mut [f64; LANES] = (&mut rest[..LANES]).try_into().unwrap();
            for (j, &lij) in self.data[ir..ir + i].iter().enumerate() {
                let xj: &[f64; LANES] = (&done[j * LANES..(j + 1) * LANES]).try_into().unwrap();
                for c in 0..LANES {
                    acc[c] -= lij * xj[c];
                }
            }
            let inv = 1.0 / self.data[ir + i];
            for v in acc.iter_mut() {
                *v *= inv;
            }
        }
    }

    /// `log det (L Lᵀ) = 2 Σ log L_ii`.
    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|i| self.data[row_start(i) + i].ln()).sum::<f64>() * 2.0
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.data[row_start(i) + i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pack(rows: &[&[f64]]) -> Vec<f64> {
        rows.iter().flat_map(|r| r.iter().copied()).collect()
    }

    #[test]
    fn factors_known_matrix() {
        // A = [[4,12,-16],[12,37,-43],[-16,-43,98]] has L = [[2],[6,1],[-8,5,3]]
        let a = pack(&[&[4.0], &[12.0, 37.0], &[-16.0, -43.0, 98.0]]);
        let l = PackedLower::factor(&a, 3).unwrap();
        assert_eq!(l.data, vec![2.0, 6.0, 1.0, -8.0, 5.0, 3.0]);
        assert!((l.log_det() - (36.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn detects_indefinite() {
        let a = pack(&[&[1.0], &[2.0, 1.0]]);
        assert_eq!(PackedLower::factor(&a, 2).err(), Some(1));
    }

    #[test]
    fn append_matches_full_factorization() {
        let a3 = pack(&[&[4.0], &[12.0, 37.0], &[-16.0, -43.0, 98.0]]);
        let a2 = pack(&[&[4.0], &[12.0, 37.0]]);
        let mut l = PackedLower::factor(&a2, 2).unwrap();
        l.append_row(&[-16.0, -43.0], 98.0).unwrap();
        let full = PackedLower::factor(&a3, 3).unwrap();
        for (a, b) in l.data.iter().zip(full.data.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn solves_agree_with_direct_inverse() {
        let a = pack(&[&[4.0], &[12.0, 37.0], &[-16.0, -43.0, 98.0]]);
        let l = PackedLower::factor(&a, 3).unwrap();
        let mut b = vec![1.0, 2.0, 3.0];
        l.solve_full(&mut b);
        // residual check A x = b
        let full = nalgebra::Matrix3::new(
            4.0, 12.0, -16.0, 12.0, 37.0, -43.0, -16.0, -43.0, 98.0,
        );
        let x = nalgebra::Vector3::new(b[0], b[1], b[2]);
        let r = full * x - nalgebra::Vector3::new(1.0, 2.0, 3.0);
        assert!(r.norm() < 1e-10);
    }

    #[test]
    fn chunk_solve_matches_vector_solve() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 23;
        // random SPD matrix via B Bᵀ + n I
        let b: Vec<Vec<f64>> =
            (0..n).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let mut packed = Vec::new();
        for i in 0..n {
            for j in 0..=i {
                let mut s = if i == j { n as f64 } else { 0.0 };
                for k in 0..n {
                    s += b[i][k] * b[j][k];
                }
                packed.push(s);
            }
        }
        let l = PackedLower::factor(&packed, n).unwrap();
        let rhs: Vec<Vec<f64>> =
            (0..LANES).map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let mut buf = vec![0.0; n * LANES];
        for (c, col) in rhs.iter().enumerate() {
            for i in 0..n {
                buf[i * LANES + c] = col[i];
            }
        }
        l.solve_chunk(&mut buf);
        for (c, col) in rhs.iter().enumerate() {
            let mut single = col.clone();
            l.solve_vec(&mut single);
            for i in 0..n {
                assert!((buf[i * LANES + c] - single[i]).abs() < 1e-11);
            }
        }
    }
}
