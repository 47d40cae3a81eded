//! Gaussian-process regression with a squared-exponential kernel.

use super::SolverError;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Largest diagonal jitter tried before a kernel matrix is declared singular.
const MAX_JITTER: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GaussianProcess {
    xs: Vec<Vec<f64>>,
    length_scale: f64,
    y_mean: f64,
    y_scale: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
}

fn sq_exp(a: &[f64], b: &[f64], length_scale: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-0.5 * d2 / (length_scale * length_scale)).exp()
}

impl GaussianProcess {
    /// Fits on standardized targets. `noise` is the observation variance in
    /// standardized units; when the Cholesky factorization fails, a growing
    /// diagonal jitter is added up to [`MAX_JITTER`].
    pub fn fit(xs: &[Vec<f64>], ys: &[f64], length_scale: f64, noise: f64) -> Result<Self, SolverError> {
        assert_eq!(xs.len(), ys.len(), "inputs and targets differ in length");
        let n = xs.len();
        if n == 0 {
            return Err(SolverError::EmptyHistory);
        }
        let y_mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        let y = DVector::from_iterator(n, ys.iter().map(|y| (y - y_mean) / y_scale));
        let k = DMatrix::from_fn(n, n, |i, j| sq_exp(&xs[i], &xs[j], length_scale));

        let mut jitter = 0.0;
        loop {
            let mut kn = k.clone();
            for i in 0..n {
                kn[(i, i)] += noise + jitter;
            }
            if let Some(chol) = Cholesky::new(kn) {
                let alpha = chol.solve(&y);
                return Ok(Self {
                    xs: xs.to_vec(),
                    length_scale,
                    y_mean,
                    y_scale,
                    chol,
                    alpha,
                    jitter,
                });
            }
            jitter = if jitter == 0.0 { 1e-12 } else { jitter * 10.0 };
            if jitter > MAX_JITTER {
                return Err(SolverError::SingularKernel { jitter: jitter / 10.0 });
            }
        }
    }

    /// Jitter that was needed to factorize the kernel matrix.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Posterior mean and variance in standardized units.
    pub fn predict_standardized(&self, x: &[f64]) -> (f64, f64) {
        let ks = DVector::from_iterator(self.xs.len(), self.xs.iter().map(|xi| sq_exp(xi, x, self.length_scale)));
        let mean = ks.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&ks).expect("cholesky factor is invertible");
        let var = (1.0 - v.dot(&v)).max(0.0);
        (mean, var)
    }

    /// Posterior mean and variance in the units of the training targets.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let (m, v) = self.predict_standardized(x);
        (m * self.y_scale + self.y_mean, v * self.y_scale * self.y_scale)
    }

    /// Maps a value in target units to standardized units.
    pub fn standardize(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_scale
    }
}
