//! Ridge regression (normal equations) and binary logistic regression
//! (full-batch gradient descent).

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

fn check_dims(expected: usize, x: &ArrayView2<f64>) -> Result<()> {
    if x.ncols() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: x.ncols(),
        });
    }
    Ok(())
}

fn column_stats(x: &ArrayView2<f64>) -> (Vec<f64>, Vec<f64>) {
    let mean = x.mean_axis(Axis(0)).map(|m| m.to_vec()).unwrap_or_default();
    let std = x.std_axis(Axis(0), 0.0).to_vec();
    (mean, std)
}

/// `y = intercept + x . coef`; the intercept is not penalised.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub coef: Vec<f64>,
    pub intercept: f64,
    feature_std: Vec<f64>,
}

impl RidgeModel {
    pub fn fit(x: ArrayView2<f64>, y: &[f64], lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(invalid("ridge lambda must be >= 0"));
        }
        let (n, p) = x.dim();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let (mean, std) = column_stats(&x);
        let y_mean = y.iter().sum::<f64>() / n as f64;

        let mut gram = DMatrix::<f64>::zeros(p, p);
        let mut rhs = DVector::<f64>::zeros(p);
        let mut centered = vec![0.0; p];
        for (row, &t) in x.outer_iter().zip(y) {
            for j in 0..p {
                centered[j] = row[j] - mean[j];
            }
            let yc = t - y_mean;
            for i in 0..p {
                rhs[i] += centered[i] * yc;
                for j in 0..=i {
                    gram[(i, j)] += centered[i] * centered[j];
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                gram[(j, i)] = gram[(i, j)];
            }
            gram[(i, i)] += lambda;
        }
        let max_diag = (0..p).map(|i| gram[(i, i)]).fold(0.0, f64::max);
        let chol = gram.cholesky().ok_or(Error::SingularSystem)?;
        let l = chol.l_dirty();
        let min_pivot = (0..p).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
        if p > 0 && !(min_pivot > 1e-12 * max_diag) {
            return Err(Error::SingularSystem);
        }
        let coef = chol.solve(&rhs);
        let intercept = y_mean - coef.iter().zip(&mean).map(|(c, m)| c * m).sum::<f64>();
        Ok(Self {
            coef: coef.iter().copied().collect(),
            intercept,
            feature_std: std,
        })
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dims(self.coef.len(), &x)?;
        let values = x
            .outer_iter()
            .map(|row| self.intercept + row.iter().zip(&self.coef).map(|(a, b)| a * b).sum::<f64>());
        Ok(Array2::from_shape_vec((x.nrows(), 1), values.collect()).expect("one column"))
    }

    /// `|coef| * std(feature)`, normalised.
    pub fn importances(&self) -> Vec<f64> {
        normalized_abs(&self.coef, &self.feature_std)
    }
}

fn normalized_abs(coef: &[f64], std: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = coef.iter().zip(std).map(|(c, s)| (c * s).abs()).collect();
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter().map(|v| v / total).collect()
    } else {
        vec![0.0; raw.len()]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub lambda: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 2000,
            lambda: 1e-4,
        }
    }
}

/// Binary logistic regression on internally standardised features. The loss
/// is the mean log-loss per row plus `lambda / 2 * |w|^2`, so replicating the
/// rows does not change the effective regularisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// Weights on standardised features.
    weights: Vec<f64>,
    bias: f64,
    mean: Vec<f64>,
    scale: Vec<f64>,
    pub epochs_run: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticModel {
    pub fn fit(x: ArrayView2<f64>, labels: &[usize], params: &LogisticParams) -> Result<Self> {
        if !(params.learning_rate > 0.0) || !(params.lambda >= 0.0) {
            return Err(invalid("logistic needs learning_rate > 0 and lambda >= 0"));
        }
        let (n, p) = x.dim();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(invalid("logistic regression supports binary targets only"));
        }
        let (mean, std) = column_stats(&x);
        let scale: Vec<f64> = std.iter().map(|&s| if s > 0.0 { s } else { 1.0 }).collect();
        let z = Array2::from_shape_fn((n, p), |(i, j)| (x[[i, j]] - mean[j]) / scale[j]);
        let y: Vec<f64> = labels.iter().map(|&v| v as f64).collect();

        let mut w = vec![0.0; p];
        let mut b = 0.0;
        let mut grad = vec![0.0; p];
        let mut epochs_run = 0;
        for _ in 0..params.epochs {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut grad_b = 0.0;
            for (row, &t) in z.outer_iter().zip(&y) {
                let margin = b + row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
                let err = sigmoid(margin) - t;
                grad_b += err;
                for (g, v) in grad.iter_mut().zip(row) {
                    *g += err * v;
                }
            }
            grad_b /= n as f64;
            for (g, wj) in grad.iter_mut().zip(&w) {
                *g = *g / n as f64 + params.lambda * wj;
            }
            let norm = (grad_b * grad_b + grad.iter().map(|g| g * g).sum::<f64>()).sqrt();
            if norm < 1e-6 {
                break;
            }
            b -= params.learning_rate * grad_b;
            for (wj, g) in w.iter_mut().zip(&grad) {
                *wj -= params.learning_rate * g;
            }
            epochs_run += 1;
        }
        Ok(Self {
            weights: w,
            bias: b,
            mean,
            scale,
            epochs_run,
        })
    }

    /// Columns: `P(y = 0)`, `P(y = 1)`.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dims(self.weights.len(), &x)?;
        let mut out = Array2::zeros((x.nrows(), 2));
        for (i, row) in x.outer_iter().enumerate() {
            let margin = self.bias
                + row
                    .iter()
                    .enumerate()
                    .map(|(j, v)| (v - self.mean[j]) / self.scale[j] * self.weights[j])
                    .sum::<f64>();
            let p = sigmoid(margin);
            out[[i, 0]] = 1.0 - p;
            out[[i, 1]] = p;
        }
        Ok(out)
    }

    /// Coefficients on the original feature scale.
    pub fn coefficients(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.scale).map(|(w, s)| w / s).collect()
    }

    /// Absolute standardised coefficients, normalised.
    pub fn importances(&self) -> Vec<f64> {
        normalized_abs(&self.weights, &vec![1.0; self.weights.len()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn ridge_interpolates_exact_line() {
        let x = Array2::from_shape_fn((20, 1), |(i, _)| i as f64 * 0.5 - 3.0);
        let y: Vec<f64> = x.column(0).iter().map(|v| 2.0 * v + 1.0).collect();
        let m = RidgeModel::fit(x.view(), &y, 0.0).unwrap();
        assert!((m.coef[0] - 2.0).abs() < 1e-9);
        assert!((m.intercept - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ridge_collinear_without_penalty_is_singular() {
        let x = Array2::from_shape_fn((10, 2), |(i, _)| i as f64);
        let y: Vec<f64> = (0..10).map(f64::from).collect();
        assert!(matches!(RidgeModel::fit(x.view(), &y, 0.0), Err(Error::SingularSystem)));
        assert!(RidgeModel::fit(x.view(), &y, 0.1).is_ok());
    }

    #[test]
    fn ridge_penalty_shrinks() {
        let x = Array2::from_shape_fn((30, 1), |(i, _)| i as f64);
        let y: Vec<f64> = (0..30).map(|i| 3.0 * i as f64).collect();
        let a = RidgeModel::fit(x.view(), &y, 0.0).unwrap();
        let b = RidgeModel::fit(x.view(), &y, 1000.0).unwrap();
        assert!(b.coef[0].abs() < a.coef[0].abs());
    }

    #[test]
    fn logistic_separates_two_points() {
        let x = array![[-1.0], [1.0]];
        let params = LogisticParams { lambda: 0.0, epochs: 500, ..Default::default() };
        let m = LogisticModel::fit(x.view(), &[0, 1], &params).unwrap();
        let p = m.predict(x.view()).unwrap();
        assert!(p[[0, 1]] < 0.5 && p[[1, 1]] > 0.5);
    }

    #[test]
    fn logistic_converges_on_overlapping_data() {
        let x = Array2::from_shape_fn((40, 1), |(i, _)| (i % 10) as f64);
        let labels: Vec<usize> = (0..40).map(|i| usize::from((i % 10) as f64 + (i / 10) as f64 > 6.0)).collect();
        let params = LogisticParams { lambda: 0.01, epochs: 100_000, learning_rate: 1.0 };
        let m = LogisticModel::fit(x.view(), &labels, &params).unwrap();
        assert!(m.epochs_run < 100_000);
        assert!(m.coefficients()[0] > 0.0);
    }

    #[test]
    fn logistic_rejects_multiclass() {
        let x = array![[0.0], [1.0], [2.0]];
        assert!(LogisticModel::fit(x.view(), &[0, 1, 2], &LogisticParams::default()).is_err());
    }
}
