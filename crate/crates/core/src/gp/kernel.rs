//! Squared-exponential (RBF) kernel with per-dimension lengthscales.

use super::GpError;
use serde::{Deserialize, Serialize};

/// `κ(x, x̃) = σ_f² · exp(−½ Σ_k ((x_k − x̃_k)/ℓ_k)²)`.
///
/// The diagonal lengthscale matrix Λ of the usual formulation holds `ℓ_k²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeKernel {
    sigma_f: f64,
    lengthscales: Vec<f64>,
}

impl SeKernel {
    pub fn new(sigma_f: f64, lengthscales: Vec<f64>) -> Result<Self, GpError> {
        if !(sigma_f > 0.0 && sigma_f.is_finite()) {
            return Err(GpError::NonPositive { name: "sigma_f", value: sigma_f });
        }
        if lengthscales.is_empty() {
            return Err(GpError::NonPositive { name: "lengthscales", value: 0.0 });
        }
        for &l in &lengthscales {
            if !(l > 0.0 && l.is_finite()) {
                return Err(GpError::NonPositive { name: "lengthscale", value: l });
            }
        }
        Ok(Self { sigma_f, lengthscales })
    }

    /// Isotropic kernel: the same lengthscale in every input dimension.
    pub fn isotropic(sigma_f: f64, lengthscale: f64, dim: usize) -> Result<Self, GpError> {
        Self::new(sigma_f, vec![lengthscale; dim])
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn sigma_f(&self) -> f64 {
        self.sigma_f
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    /// Prior variance `κ(x, x) = σ_f²`.
    pub fn variance(&self) -> f64 {
        self.sigma_f * self.sigma_f
    }

    /// Kernel value with dimension checking.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64, GpError> {
        if a.len() != self.dim() || b.len() != self.dim() {
            return Err(GpError::DimensionMismatch {
                expected: self.dim(),
                got: a.len().max(b.len()),
            });
        }
        Ok(self.eval_raw(a, b))
    }

    #[inline]
    pub(crate) fn eval_raw(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut q = 0.0;
        for k in 0..self.lengthscales.len() {
            let d = (a[k] - b[k]) / self.lengthscales[k];
            q += d * d;
        }
        self.variance() * (-0.5 * q).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_distance_gives_variance() {
        let k = SeKernel::isotropic(2.0, 0.5, 3).unwrap();
        let x = [0.3, -1.0, 2.0];
        assert_relative_eq!(k.eval(&x, &x).unwrap(), 4.0, epsilon = 1e-15);
    }

    #[test]
    fn unit_case_matches_exponential() {
        // σ_f = 1, Λ = I, ‖x−x̃‖² = 2 → e⁻¹
        let k = SeKernel::isotropic(1.0, 1.0, 2).unwrap();
        let v = k.eval(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_relative_eq!(v, (-1.0f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(v, 0.367879, epsilon = 1e-6);
    }

    #[test]
    fn symmetric_and_bounded() {
        let k = SeKernel::new(1.5, vec![0.7, 2.0]).unwrap();
        let a = [0.1, -0.4];
        let b = [1.3, 0.9];
        assert_relative_eq!(k.eval(&a, &b).unwrap(), k.eval(&b, &a).unwrap(), epsilon = 1e-15);
        assert!(k.eval(&a, &b).unwrap() <= k.variance());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let k = SeKernel::isotropic(1.0, 1.0, 2).unwrap();
        assert!(matches!(
            k.eval(&[0.0], &[1.0, 2.0]),
            Err(GpError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn random_gram_matrix_is_psd() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let k = SeKernel::new(1.3, vec![0.8, 1.7, 0.4]).unwrap();
        let pts: Vec<[f64; 3]> = (0..20)
            .map(|_| {
                [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]
            })
            .collect();
        let gram = nalgebra::DMatrix::from_fn(20, 20, |i, j| k.eval_raw(&pts[i], &pts[j]));
        let eig = gram.symmetric_eigen();
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min > -1e-10, "minimum eigenvalue {min:.3e}");
    }
}
