//! Natural cubic spline interpolation (C² inside the knot range).

use super::PlanError;

/// Natural cubic spline through `(t_i, y_i)` knots; second derivatives vanish
/// at the end knots.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    t: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn fit(knots: &[(f64, f64)]) -> Result<Self, PlanError> {
        if knots.len() < 3 {
            return Err(PlanError::TooFewKnots(knots.len()));
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(PlanError::NonIncreasingKnots { t: w[1].0 });
            }
        }
        let n = knots.len();
        let t: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let y: Vec<f64> = knots.iter().map(|k| k.1).collect();
        let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();

        // tridiagonal system for the interior second derivatives (Thomas)
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 1..n - 1 {
            diag[i] = 2.0 * (h[i - 1] + h[i]);
            upper[i] = h[i];
            rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            let mut c_prime = vec![0.0; n];
            let mut d_prime = vec![0.0; n];
            c_prime[1] = upper[1] / diag[1];
            d_prime[1] = rhs[1] / diag[1];
            for i in 2..n - 1 {
                let lower = h[i - 1];
                let denom = diag[i] - lower * c_prime[i - 1];
                c_prime[i] = upper[i] / denom;
                d_prime[i] = (rhs[i] - lower * d_prime[i - 1]) / denom;
            }
            for i in (1..n - 1).rev() {
                m[i] = d_prime[i] - c_prime[i] * m[i + 1];
            }
        }
        Ok(Self { t, y, m })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.t[0], *self.t.last().unwrap())
    }

    fn segment(&self, t: f64) -> usize {
        match self.t.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(self.t.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.t.len() - 2),
        }
    }

    /// Value, clamped to the end segments outside the domain.
    pub fn value(&self, t: f64) -> f64 {
        self.eval(t).0
    }

    /// `(value, first derivative, second derivative)` at `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let i = self.segment(t);
        let h = self.t[i + 1] - self.t[i];
        let a = (self.t[i + 1] - t) / h;
        let b = (t - self.t[i]) / h;
        let value = a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0;
        let deriv = (self.y[i + 1] - self.y[i]) / h
            + h / 6.0 * ((3.0 * b * b - 1.0) * self.m[i + 1] - (3.0 * a * a - 1.0) * self.m[i]);
        let second = a * self.m[i] + b * self.m[i + 1];
        (value, deriv, second)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn linear_knots_reproduce_the_line() {
        let knots: Vec<(f64, f64)> = (0..7).map(|i| (i as f64, 2.0 * i as f64 - 1.0)).collect();
        let s = CubicSpline::fit(&knots).unwrap();
        for i in 0..=60 {
            let t = i as f64 * 0.1;
            let (v, d, dd) = s.eval(t);
            assert_relative_eq!(v, 2.0 * t - 1.0, epsilon = 1e-12);
            assert_relative_eq!(d, 2.0, epsilon = 1e-10);
            assert!(dd.abs() < 1e-10);
        }
    }

    #[test]
    fn interpolates_sine_accurately() {
        let n = 20;
        let knots: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let t = std::f64::consts::PI * i as f64 / (n - 1) as f64;
                (t, t.sin())
            })
            .collect();
        let s = CubicSpline::fit(&knots).unwrap();
        let mut worst = 0.0f64;
        for i in 0..=1000 {
            let t = std::f64::consts::PI * i as f64 / 1000.0;
            worst = worst.max((s.value(t) - t.sin()).abs());
        }
        assert!(worst < 1e-4, "max interpolation error {worst:.2e}");
    }

    #[test]
    fn c2_continuity_at_interior_knots() {
        let knots: Vec<(f64, f64)> =
            (0..9).map(|i| (i as f64 * 0.3, (i as f64 * 0.9).cos())).collect();
        let s = CubicSpline::fit(&knots).unwrap();
        for i in 1..8 {
            let t = knots[i].0;
            let eps = 1e-10;
            let left = s.eval(t - eps);
            let right = s.eval(t + eps);
            assert!((left.0 - right.0).abs() < 1e-9);
            assert!((left.1 - right.1).abs() < 1e-7);
            assert!((left.2 - right.2).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(matches!(
            CubicSpline::fit(&[(0.0, 1.0), (1.0, 2.0)]),
            Err(PlanError::TooFewKnots(2))
        ));
        assert!(matches!(
            CubicSpline::fit(&[(0.0, 1.0), (1.0, 2.0), (1.0, 3.0)]),
            Err(PlanError::NonIncreasingKnots { .. })
        ));
    }

    #[test]
    fn interpolates_all_knots() {
        let knots = [(0.0, 1.0), (0.4, -0.3), (1.1, 2.2), (1.5, 0.0), (2.0, 1.0)];
        let s = CubicSpline::fit(&knots).unwrap();
        for (t, y) in knots {
            assert_relative_eq!(s.value(t), y, epsilon = 1e-12);
        }
    }
}
