use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::anchored_mean;
use super::knn::Standardizer;

/// Ridge regression on standardized columns with an unpenalized intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeState {
    pub standardizer: Standardizer,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl RidgeState {
    /// Solves through the eigendecomposition of the Gram matrix, dropping
    /// directions with negligible eigenvalues, so `lambda = 0` gives the
    /// minimum-norm least-squares fit.
    pub(crate) fn fit(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Self {
        let standardizer = Standardizer::fit(x);
        let n = x.len();
        let width = standardizer.mean.len();
        let intercept = anchored_mean(y.iter().copied());
        let z = DMatrix::from_fn(n, width, |i, j| (x[i][j] - standardizer.mean[j]) / standardizer.scale[j]);
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - intercept));
        let gram = z.transpose() * &z;
        let rhs = z.transpose() * yc;
        let eig = gram.symmetric_eigen();
        let top = eig.eigenvalues.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let tol = top * 1e-12 * width.max(1) as f64;
        let mut beta = DVector::zeros(width);
        for (k, &e) in eig.eigenvalues.iter().enumerate() {
            if e <= tol {
                continue;
            }
            let v = eig.eigenvectors.column(k);
            let proj = v.dot(&rhs);
            beta += v * (proj / (e + lambda));
        }
        RidgeState {
            standardizer,
            coefficients: beta.iter().copied().collect(),
            intercept,
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let z = self.standardizer.apply(row);
        self.intercept + z.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>()
    }
}
