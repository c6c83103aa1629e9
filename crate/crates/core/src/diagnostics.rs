//! Numerical checks of two properties of sampled encodings:
//!
//! - the squared error of a model averaged over draws splits into the error
//!   of the draw-averaged prediction plus the within-row prediction variance,
//!   `MSE = MSE0 + REG`;
//! - the expectation of a smooth model over a posterior is approximated by
//!   `f(theta_hat) + 1/2 tr(H C)`, with `C` the posterior covariance and `H`
//!   the Hessian of `f` at the posterior mean.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conjugate::{ConjugateParams, Task};
use crate::dataset::{format_f64, Dataset, TargetValues};
use crate::encoder::EncoderModel;
use crate::error::{invalid, Error, Result};
use crate::sampler::{derive_stream, draw, mix_seed, StreamRng};

/// Encoder streams used by [`mse_decompose`] for the two draw sets.
pub const DECOMPOSE_MEAN_STREAM: u64 = 2;
pub const DECOMPOSE_EVAL_STREAM: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub n_rows: usize,
    pub draws: usize,
    pub mse_total: f64,
    pub mse0: f64,
    pub reg: f64,
    /// `mse_total - mse0 - reg`.
    pub residual: f64,
}

impl DecompositionReport {
    pub fn relative_residual(&self) -> f64 {
        if self.mse_total > 0.0 {
            self.residual.abs() / self.mse_total
        } else {
            self.residual.abs()
        }
    }
}

/// Decomposes the squared error of per-draw predictions.
///
/// `mean_set` and `eval_set` are `draws x n` matrices of predictions from two
/// independent draw sets. The per-row mean prediction `y_hat` comes from
/// `mean_set`; `mse_total` and `reg` are measured on `eval_set` around it, so
/// the residual is a Monte Carlo error that shrinks like `1 / sqrt(draws)`
/// instead of cancelling algebraically.
pub fn decompose(y: &[f64], mean_set: ArrayView2<f64>, eval_set: ArrayView2<f64>) -> Result<DecompositionReport> {
    let (draws, n) = eval_set.dim();
    if mean_set.dim() != (draws, n) || y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y.len(),
        });
    }
    if draws < 2 {
        return Err(invalid("decomposition needs at least 2 draws"));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let y_hat: Vec<f64> = (0..n)
        .map(|i| mean_set.column(i).iter().sum::<f64>() / draws as f64)
        .collect();
    let mut total = 0.0;
    let mut reg = 0.0;
    for row in eval_set.outer_iter() {
        for ((p, t), m) in row.iter().zip(y).zip(&y_hat) {
            total += (t - p).powi(2);
            reg += (p - m).powi(2);
        }
    }
    let scale = 1.0 / (draws * n) as f64;
    let mse_total = total * scale;
    let reg = reg * scale;
    let mse0 = y.iter().zip(&y_hat).map(|(t, m)| (t - m).powi(2)).sum::<f64>() / n as f64;
    Ok(DecompositionReport {
        n_rows: n,
        draws,
        mse_total,
        mse0,
        reg,
        residual: mse_total - mse0 - reg,
    })
}

/// Encodes `data` with two independent sets of `draws` copies and decomposes
/// the error of `predict` (a regression model on encoded features).
pub fn mse_decompose<F>(model: &EncoderModel, data: &Dataset, draws: usize, predict: F) -> Result<DecompositionReport>
where
    F: Fn(ArrayView2<f64>) -> Result<Array2<f64>>,
{
    let TargetValues::Regression(y) = &data.target.values else {
        return Err(Error::TaskMismatch {
            expected: "regression".into(),
            found: data.task().to_string(),
        });
    };
    let n = data.n_rows();
    let per_draw = |stream| -> Result<Array2<f64>> {
        let encoded = model.transform(data, draws, stream)?;
        let out = predict(encoded.features.view())?;
        if out.dim() != (draws * n, 1) {
            return Err(Error::DimensionMismatch {
                expected: draws * n,
                found: out.nrows(),
            });
        }
        // Copy-major rows reshape directly into draws x n.
        Ok(out.into_shape_with_order((draws, n)).expect("sizes checked"))
    };
    let a = per_draw(DECOMPOSE_MEAN_STREAM)?;
    let b = per_draw(DECOMPOSE_EVAL_STREAM)?;
    decompose(y, a.view(), b.view())
}

impl DecompositionReport {
    pub fn write_csv_to<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["n_rows", "draws", "mse_total", "mse0", "reg", "residual"])?;
        w.write_record([
            self.n_rows.to_string(),
            self.draws.to_string(),
            format_f64(self.mse_total),
            format_f64(self.mse0),
            format_f64(self.reg),
            format_f64(self.residual),
        ])?;
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        format!(
            "MSE decomposition over {} rows x {} draws\n  mse_total {:.6e}\n  mse0      {:.6e}\n  reg       {:.6e}\n  residual  {:.6e} ({:.4}% of total)\n",
            self.n_rows,
            self.draws,
            self.mse_total,
            self.mse0,
            self.reg,
            self.residual,
            100.0 * self.relative_residual()
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplaceEstimate {
    pub theta_hat: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub hessian: Vec<Vec<f64>>,
    /// `f(theta_hat)`.
    pub plug_in: f64,
    /// `1/2 tr(H C)`.
    pub correction: f64,
    pub prediction: f64,
}

/// Finite-difference step for coordinate `i`.
pub fn fd_step(theta: f64) -> f64 {
    1e-4_f64.max(1e-4 * theta.abs())
}

/// Central finite-difference Hessian of `f` at `theta`.
pub fn hessian<F: Fn(&[f64]) -> f64>(f: &F, theta: &[f64]) -> Result<Vec<Vec<f64>>> {
    let d = theta.len();
    let f0 = f(theta);
    if !f0.is_finite() {
        return Err(Error::NonFinite(format!("model value at {theta:?}")));
    }
    let h: Vec<f64> = theta.iter().map(|&t| fd_step(t)).collect();
    let eval = |shift: &[(usize, f64)]| -> Result<f64> {
        let mut point = theta.to_vec();
        for &(i, delta) in shift {
            point[i] += delta;
        }
        let v = f(&point);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(format!("model value at {point:?}")))
        }
    };
    let mut out = vec![vec![0.0; d]; d];
    for i in 0..d {
        let plus = eval(&[(i, h[i])])?;
        let minus = eval(&[(i, -h[i])])?;
        out[i][i] = (plus - 2.0 * f0 + minus) / (h[i] * h[i]);
        for j in 0..i {
            let pp = eval(&[(i, h[i]), (j, h[j])])?;
            let pm = eval(&[(i, h[i]), (j, -h[j])])?;
            let mp = eval(&[(i, -h[i]), (j, h[j])])?;
            let mm = eval(&[(i, -h[i]), (j, -h[j])])?;
            let v = (pp - pm - mp + mm) / (4.0 * h[i] * h[j]);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    Ok(out)
}

/// Second-order approximation of `E[f(theta)]` under `params`, where `f`
/// takes the parameter vector laid out as in [`ConjugateParams::mean`].
pub fn laplace_predict<F: Fn(&[f64]) -> f64>(f: F, params: &ConjugateParams) -> Result<LaplaceEstimate> {
    let theta_hat = params.mean()?;
    let covariance = params.covariance()?;
    let hessian = hessian(&f, &theta_hat)?;
    let plug_in = f(&theta_hat);
    let trace: f64 = hessian
        .iter()
        .zip(&covariance)
        .map(|(hr, cr)| hr.iter().zip(cr).map(|(h, c)| h * c).sum::<f64>())
        .sum();
    let correction = 0.5 * trace;
    Ok(LaplaceEstimate {
        theta_hat,
        covariance,
        hessian,
        plug_in,
        correction,
        prediction: plug_in + correction,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub draws: usize,
}

const MC_BLOCK: usize = 16_384;

/// Mean of `values` produced block-wise: block `b` gets its own rng keyed
/// by `(seed, b)`, and block sums are combined in block order, so the result
/// does not depend on the thread count.
fn blocked_mean<G>(draws: usize, seed: u64, sample: G) -> MonteCarloEstimate
where
    G: Fn(&mut StreamRng) -> f64 + Sync,
{
    let blocks = draws.div_ceil(MC_BLOCK);
    let sums: Vec<(f64, f64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = StreamRng::seed_from(seed, b as u64);
            let len = MC_BLOCK.min(draws - b * MC_BLOCK);
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..len {
                let v = sample(&mut rng);
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = draws as f64;
    let mean = s / n;
    let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
    MonteCarloEstimate {
        mean,
        std_error: (var / n).sqrt(),
        draws,
    }
}

/// Monte Carlo `E[f(theta)]` for `theta ~ N(mean, cov)`. `cov` may be
/// singular (e.g. a Dirichlet covariance); it is factored by eigen
/// decomposition with negative round-off eigenvalues clipped to zero.
pub fn mc_normal_expectation<F>(f: F, mean: &[f64], cov: &[Vec<f64>], draws: usize, seed: u64) -> Result<MonteCarloEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let d = mean.len();
    if cov.len() != d || cov.iter().any(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: cov.len(),
        });
    }
    if draws < 2 {
        return Err(invalid("Monte Carlo needs at least 2 draws"));
    }
    let m = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
    let eig = SymmetricEigen::new(m);
    let root = DMatrix::from_fn(d, d, |i, j| eig.eigenvectors[(i, j)] * eig.eigenvalues[j].max(0.0).sqrt());
    Ok(blocked_mean(draws, seed, |rng| {
        let z: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        let theta: Vec<f64> = (0..d)
            .map(|i| mean[i] + (0..d).map(|j| root[(i, j)] * z[j]).sum::<f64>())
            .collect();
        f(&theta)
    }))
}

/// Monte Carlo `E[f(theta)]` for `theta` drawn from the conjugate posterior.
pub fn mc_posterior_expectation<F>(f: F, params: &ConjugateParams, draws: usize, seed: u64) -> Result<MonteCarloEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if !params.is_proper() {
        return Err(Error::ImproperDistribution(format!("{params:?}")));
    }
    if draws < 2 {
        return Err(invalid("Monte Carlo needs at least 2 draws"));
    }
    Ok(blocked_mean(draws, seed, |rng| {
        let theta = crate::sampler::draw_with(params, rng).expect("proper params").theta();
        f(&theta)
    }))
}

impl LaplaceEstimate {
    pub fn write_csv_to<W: std::io::Write>(&self, label: &str, mc: Option<&MonteCarloEstimate>, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["case", "plug_in", "correction", "laplace", "monte_carlo", "monte_carlo_se"])?;
        w.write_record([
            label.to_string(),
            format_f64(self.plug_in),
            format_f64(self.correction),
            format_f64(self.prediction),
            mc.map(|m| format_f64(m.mean)).unwrap_or_default(),
            mc.map(|m| format_f64(m.std_error)).unwrap_or_default(),
        ])?;
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Laplace approximation at theta_hat = {:?}", self.theta_hat);
        let _ = writeln!(s, "  plug-in    {:.10}", self.plug_in);
        let _ = writeln!(s, "  correction {:.10}", self.correction);
        let _ = writeln!(s, "  corrected  {:.10}", self.prediction);
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub column: String,
    pub category: String,
    pub count: u64,
    pub posterior_mean: f64,
    /// Empirical standard deviation of the encoded `p` over the draws.
    pub draw_std: f64,
    /// Closed-form posterior standard deviation.
    pub posterior_std: f64,
    /// Standard deviation of a multiplicative-noise encoding of the
    /// category mean, `sigma * mean`.
    pub baseline_std: f64,
}

/// Per-category spread of sampled encodings next to the spread a single
/// global noise level would give.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseComparison {
    pub baseline_sigma: f64,
    pub draws: usize,
    pub rows: Vec<NoiseRow>,
}

/// Compares every category of a binary encoder with a multiplicative-noise
/// baseline at `baseline_sigma`. Draws use stream `(mix_seed(seed, 4),
/// column, category, k)`.
pub fn compare_noise_injection(model: &EncoderModel, baseline_sigma: f64, draws: usize, seed: u64) -> Result<NoiseComparison> {
    if model.task != Task::Binary {
        return Err(Error::TaskMismatch {
            expected: "binary".into(),
            found: model.task.to_string(),
        });
    }
    if draws < 2 {
        return Err(invalid("need at least 2 draws"));
    }
    let master = mix_seed(seed, 4);
    let mut rows = Vec::new();
    for (m, col) in model.columns.iter().enumerate() {
        for (v, entry) in col.categories.iter().enumerate() {
            let ConjugateParams::Beta(b) = &entry.posterior else {
                return Err(invalid("binary model with a non-Beta posterior"));
            };
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for k in 0..draws {
                let ctx = derive_stream(master, m as u64, v as u64, k as u64);
                let p = draw(&entry.posterior, &ctx)?.theta()[0];
                sum += p;
                sum_sq += p * p;
            }
            let n = draws as f64;
            let mean = sum / n;
            let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
            rows.push(NoiseRow {
                column: col.name.clone(),
                category: entry.value.clone(),
                count: entry.count,
                posterior_mean: b.mean(),
                draw_std: var.sqrt(),
                posterior_std: b.variance().sqrt(),
                baseline_std: baseline_sigma * b.mean(),
            });
        }
    }
    Ok(NoiseComparison {
        baseline_sigma,
        draws,
        rows,
    })
}

impl NoiseComparison {
    pub fn write_csv_to<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "column",
            "category",
            "count",
            "posterior_mean",
            "draw_std",
            "posterior_std",
            "baseline_std",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.column.clone(),
                r.category.clone(),
                r.count.to_string(),
                format_f64(r.posterior_mean),
                format_f64(r.draw_std),
                format_f64(r.posterior_std),
                format_f64(r.baseline_std),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let stds: Vec<f64> = self.rows.iter().map(|r| r.draw_std).collect();
        let min = stds.iter().copied().fold(f64::INFINITY, f64::min);
        let max = stds.iter().copied().fold(0.0, f64::max);
        format!(
            "{} categories, {} draws each: sampled std ranges {:.4e}..{:.4e} (ratio {:.2}); noise baseline sigma {}\n",
            self.rows.len(),
            self.draws,
            min,
            max,
            if min > 0.0 { max / min } else { f64::INFINITY },
            self.baseline_sigma
        )
    }
}
