//! Conjugate prior/posterior parameters for the three supported task types.
//!
//! | task       | likelihood  | conjugate prior | parameters            |
//! |------------|-------------|-----------------|-----------------------|
//! | binary     | Bernoulli   | Beta            | `alpha`, `beta`       |
//! | multiclass | Categorical | Dirichlet       | `alphas[c]`           |
//! | regression | Normal      | Normal-Gamma    | `mu0, nu, alpha, beta`|
//!
//! The global prior is built from target statistics of the whole training set
//! scaled by a non-negative factor `gamma` (`gamma = 0` is uninformative), and
//! every category's posterior is obtained by the closed-form conjugate update
//! with that category's sufficient statistics.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Learning task, which fixes the likelihood and conjugate family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Binary,
    Multiclass,
    Regression,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Binary => "binary",
            Task::Multiclass => "multiclass",
            Task::Regression => "regression",
        }
    }

    pub fn is_classification(self) -> bool {
        !matches!(self, Task::Regression)
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(Task::Binary),
            "multiclass" => Ok(Task::Multiclass),
            "regression" => Ok(Task::Regression),
            other => Err(invalid(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
            return Err(invalid(format!("Beta({alpha}, {beta}) needs alpha, beta > 0")));
        }
        Ok(Self { alpha, beta })
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    /// `alpha * beta / ((alpha + beta)^2 (alpha + beta + 1))`
    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirichletParams {
    pub alphas: Vec<f64>,
}

impl DirichletParams {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.len() < 2 {
            return Err(invalid("Dirichlet needs at least two classes"));
        }
        if alphas.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return Err(invalid("Dirichlet components must be positive"));
        }
        Ok(Self { alphas })
    }

    pub fn concentration(&self) -> f64 {
        self.alphas.iter().sum()
    }

    pub fn mean(&self) -> Vec<f64> {
        let total = self.concentration();
        self.alphas.iter().map(|a| a / total).collect()
    }
}

/// Normal-Gamma over `(mu, tau)`: `tau ~ Gamma(alpha, rate = beta)`,
/// `mu | tau ~ Normal(mu0, 1 / (nu * tau))`.
///
/// `nu`, `alpha` and `beta` may be zero (the scaled regression prior has
/// `nu = 0`), in which case the value is stored but cannot be sampled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalGammaParams {
    pub mu0: f64,
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl NormalGammaParams {
    pub fn new(mu0: f64, nu: f64, alpha: f64, beta: f64) -> Result<Self> {
        let ok = mu0.is_finite()
            && [nu, alpha, beta].iter().all(|v| v.is_finite() && *v >= 0.0);
        if !ok {
            return Err(invalid(format!(
                "NormalGamma({mu0}, {nu}, {alpha}, {beta}) needs finite mu0 and nu, alpha, beta >= 0"
            )));
        }
        Ok(Self { mu0, nu, alpha, beta })
    }

    pub fn is_proper(&self) -> bool {
        self.nu > 0.0 && self.alpha > 0.0 && self.beta > 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConjugateParams {
    Beta(BetaParams),
    Dirichlet(DirichletParams),
    NormalGamma(NormalGammaParams),
}

impl ConjugateParams {
    pub fn task(&self) -> Task {
        match self {
            ConjugateParams::Beta(_) => Task::Binary,
            ConjugateParams::Dirichlet(_) => Task::Multiclass,
            ConjugateParams::NormalGamma(_) => Task::Regression,
        }
    }

    pub fn is_proper(&self) -> bool {
        match self {
            ConjugateParams::Beta(_) | ConjugateParams::Dirichlet(_) => true,
            ConjugateParams::NormalGamma(p) => p.is_proper(),
        }
    }

    /// Length of the parameter vector `theta` a draw produces: `p`, the
    /// full probability vector, or `(mu, tau)`.
    pub fn dim(&self) -> usize {
        match self {
            ConjugateParams::Beta(_) => 1,
            ConjugateParams::Dirichlet(d) => d.alphas.len(),
            ConjugateParams::NormalGamma(_) => 2,
        }
    }

    fn require_proper(&self) -> Result<()> {
        if self.is_proper() {
            Ok(())
        } else {
            Err(Error::ImproperDistribution(format!("{self:?}")))
        }
    }

    /// Posterior expectation of `theta`: `[p]`, `pi`, or `[mu0, alpha / beta]`.
    pub fn mean(&self) -> Result<Vec<f64>> {
        self.require_proper()?;
        Ok(match self {
            ConjugateParams::Beta(b) => vec![b.mean()],
            ConjugateParams::Dirichlet(d) => d.mean(),
            ConjugateParams::NormalGamma(ng) => vec![ng.mu0, ng.alpha / ng.beta],
        })
    }

    /// Closed-form covariance of `theta` as a dense row-major matrix.
    ///
    /// For the Normal-Gamma `mu` and `tau` are uncorrelated and
    /// `Var(mu) = beta / (nu (alpha - 1))`, which needs `alpha > 1`.
    pub fn covariance(&self) -> Result<Vec<Vec<f64>>> {
        self.require_proper()?;
        Ok(match self {
            ConjugateParams::Beta(b) => vec![vec![b.variance()]],
            ConjugateParams::Dirichlet(d) => {
                let a0 = d.concentration();
                let mean = d.mean();
                let k = mean.len();
                let mut cov = vec![vec![0.0; k]; k];
                for i in 0..k {
                    for j in 0..k {
                        let diag = if i == j { mean[i] } else { 0.0 };
                        cov[i][j] = (diag - mean[i] * mean[j]) / (a0 + 1.0);
                    }
                }
                cov
            }
            ConjugateParams::NormalGamma(ng) => {
                if ng.alpha <= 1.0 {
                    return Err(Error::ImproperDistribution(format!(
                        "Var(mu) is infinite for alpha = {} <= 1",
                        ng.alpha
                    )));
                }
                let var_mu = ng.beta / (ng.nu * (ng.alpha - 1.0));
                let var_tau = ng.alpha / (ng.beta * ng.beta);
                vec![vec![var_mu, 0.0], vec![0.0, var_tau]]
            }
        })
    }
}

/// Sufficient statistics of a set of targets: either the whole training set
/// (the target summary behind the prior) or the rows of one category.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "task")]
pub enum TargetStats {
    Binary { n: u64, successes: u64 },
    Multiclass { counts: Vec<u64> },
    Regression { n: u64, mean: f64, sum_sq_dev: f64 },
}

impl TargetStats {
    pub fn empty(task: Task, n_classes: usize) -> Self {
        match task {
            Task::Binary => TargetStats::Binary { n: 0, successes: 0 },
            Task::Multiclass => TargetStats::Multiclass {
                counts: vec![0; n_classes],
            },
            Task::Regression => TargetStats::Regression {
                n: 0,
                mean: 0.0,
                sum_sq_dev: 0.0,
            },
        }
    }

    pub fn from_binary(ys: &[u8]) -> Self {
        let mut s = Self::empty(Task::Binary, 2);
        ys.iter().for_each(|&y| s.push_binary(y));
        s
    }

    pub fn from_classes(ys: &[usize], n_classes: usize) -> Self {
        let mut s = Self::empty(Task::Multiclass, n_classes);
        ys.iter().for_each(|&y| s.push_class(y));
        s
    }

    pub fn from_values(ys: &[f64]) -> Self {
        let mut s = Self::empty(Task::Regression, 0);
        ys.iter().for_each(|&y| s.push_value(y));
        s
    }

    pub fn task(&self) -> Task {
        match self {
            TargetStats::Binary { .. } => Task::Binary,
            TargetStats::Multiclass { .. } => Task::Multiclass,
            TargetStats::Regression { .. } => Task::Regression,
        }
    }

    pub fn n(&self) -> u64 {
        match self {
            TargetStats::Binary { n, .. } | TargetStats::Regression { n, .. } => *n,
            TargetStats::Multiclass { counts } => counts.iter().sum(),
        }
    }

    pub fn push_binary(&mut self, y: u8) {
        if let TargetStats::Binary { n, successes } = self {
            *n += 1;
            *successes += u64::from(y != 0);
        } else {
            debug_assert!(false, "push_binary on {:?}", self.task());
        }
    }

    pub fn push_class(&mut self, class: usize) {
        if let TargetStats::Multiclass { counts } = self {
            if class >= counts.len() {
                counts.resize(class + 1, 0);
            }
            counts[class] += 1;
        } else {
            debug_assert!(false, "push_class on {:?}", self.task());
        }
    }

    /// Welford update of mean and sum of squared deviations.
    pub fn push_value(&mut self, y: f64) {
        if let TargetStats::Regression { n, mean, sum_sq_dev } = self {
            *n += 1;
            let delta = y - *mean;
            *mean += delta / *n as f64;
            *sum_sq_dev += delta * (y - *mean);
        } else {
            debug_assert!(false, "push_value on {:?}", self.task());
        }
    }

    /// Statistics of the union of two disjoint example sets.
    pub fn merge(&self, other: &TargetStats) -> Result<TargetStats> {
        match (self, other) {
            (
                TargetStats::Binary { n: n1, successes: s1 },
                TargetStats::Binary { n: n2, successes: s2 },
            ) => Ok(TargetStats::Binary {
                n: n1 + n2,
                successes: s1 + s2,
            }),
            (TargetStats::Multiclass { counts: a }, TargetStats::Multiclass { counts: b }) => {
                let len = a.len().max(b.len());
                let counts = (0..len)
                    .map(|i| a.get(i).copied().unwrap_or(0) + b.get(i).copied().unwrap_or(0))
                    .collect();
                Ok(TargetStats::Multiclass { counts })
            }
            (
                TargetStats::Regression { n: n1, mean: m1, sum_sq_dev: q1 },
                TargetStats::Regression { n: n2, mean: m2, sum_sq_dev: q2 },
            ) => {
                if *n1 == 0 {
                    return Ok(other.clone());
                }
                if *n2 == 0 {
                    return Ok(self.clone());
                }
                let n = n1 + n2;
                let (a, b, nf) = (*n1 as f64, *n2 as f64, n as f64);
                let delta = m2 - m1;
                Ok(TargetStats::Regression {
                    n,
                    mean: m1 + delta * b / nf,
                    sum_sq_dev: q1 + q2 + delta * delta * a * b / nf,
                })
            }
            (a, b) => Err(Error::TaskMismatch {
                expected: a.task().to_string(),
                found: b.task().to_string(),
            }),
        }
    }
}

/// Global prior with target statistics down-weighted by `gamma`.
///
/// binary: `Beta(1 + g*sum(y), 1 + g*sum(1 - y))`;
/// multiclass: `Dirichlet(1 + g*count_c)`;
/// regression: `NormalGamma(mean(y), 0, g*N/2, g/2 * sum((y - mean)^2))`.
pub fn scaled_prior(summary: &TargetStats, gamma: f64) -> Result<ConjugateParams> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(invalid(format!("gamma must be finite and >= 0, got {gamma}")));
    }
    Ok(match summary {
        TargetStats::Binary { n, successes } => {
            let s = *successes as f64;
            let f = (*n - *successes) as f64;
            ConjugateParams::Beta(BetaParams::new(1.0 + gamma * s, 1.0 + gamma * f)?)
        }
        TargetStats::Multiclass { counts } => ConjugateParams::Dirichlet(DirichletParams::new(
            counts.iter().map(|&c| 1.0 + gamma * c as f64).collect(),
        )?),
        TargetStats::Regression { n, mean, sum_sq_dev } => {
            ConjugateParams::NormalGamma(NormalGammaParams::new(
                *mean,
                0.0,
                gamma * *n as f64 / 2.0,
                gamma / 2.0 * sum_sq_dev.max(0.0),
            )?)
        }
    })
}

/// Floor applied when a regression posterior ends up with `beta == 0`
/// (constant targets in the category and an uninformative prior).
pub fn degenerate_beta_floor(prior_beta: f64, half_ss: f64, cross: f64) -> f64 {
    1e-9 * (prior_beta + half_ss + cross).max(1.0)
}

/// Closed-form conjugate update of `prior` with a category's statistics.
pub fn posterior_update(prior: &ConjugateParams, stats: &TargetStats) -> Result<ConjugateParams> {
    match (prior, stats) {
        (ConjugateParams::Beta(p), TargetStats::Binary { n, successes }) => {
            Ok(ConjugateParams::Beta(BetaParams {
                alpha: p.alpha + *successes as f64,
                beta: p.beta + (*n - *successes) as f64,
            }))
        }
        (ConjugateParams::Dirichlet(p), TargetStats::Multiclass { counts }) => {
            if counts.len() > p.alphas.len() {
                return Err(invalid(format!(
                    "category has {} classes, prior has {}",
                    counts.len(),
                    p.alphas.len()
                )));
            }
            let alphas = p
                .alphas
                .iter()
                .enumerate()
                .map(|(c, a)| a + counts.get(c).copied().unwrap_or(0) as f64)
                .collect();
            Ok(ConjugateParams::Dirichlet(DirichletParams { alphas }))
        }
        (ConjugateParams::NormalGamma(p), TargetStats::Regression { n, mean, sum_sq_dev }) => {
            if *n == 0 {
                return Ok(prior.clone());
            }
            let count = *n as f64;
            let nu = p.nu + count;
            let mu0 = (p.nu * p.mu0 + count * mean) / nu;
            let alpha = p.alpha + count / 2.0;
            let half_ss = sum_sq_dev.max(0.0) / 2.0;
            let dev = mean - p.mu0;
            let cross = count * p.nu / nu * dev * dev / 2.0;
            let mut beta = p.beta + half_ss + cross;
            if beta <= 0.0 {
                beta = degenerate_beta_floor(p.beta, half_ss, cross);
            }
            Ok(ConjugateParams::NormalGamma(NormalGammaParams {
                mu0,
                nu,
                alpha,
                beta,
            }))
        }
        (p, s) => Err(Error::TaskMismatch {
            expected: p.task().to_string(),
            found: s.task().to_string(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beta(p: &ConjugateParams) -> BetaParams {
        match p {
            ConjugateParams::Beta(b) => *b,
            other => panic!("expected Beta, got {other:?}"),
        }
    }

    fn ng(p: &ConjugateParams) -> NormalGammaParams {
        match p {
            ConjugateParams::NormalGamma(b) => *b,
            other => panic!("expected NormalGamma, got {other:?}"),
        }
    }

    fn binary_summary(n: u64, successes: u64) -> TargetStats {
        TargetStats::Binary { n, successes }
    }

    #[test]
    fn binary_prior_gamma_zero_is_uniform() {
        let p = scaled_prior(&binary_summary(10, 6), 0.0).unwrap();
        assert_eq!(beta(&p), BetaParams { alpha: 1.0, beta: 1.0 });
    }

    #[test]
    fn binary_prior_scaled() {
        let p = scaled_prior(&binary_summary(10, 6), 0.5).unwrap();
        assert_eq!(beta(&p), BetaParams { alpha: 4.0, beta: 3.0 });
    }

    #[test]
    fn regression_prior_scaled() {
        let p = scaled_prior(&TargetStats::from_values(&[1.0, 2.0, 3.0, 4.0]), 1.0).unwrap();
        assert_eq!(
            ng(&p),
            NormalGammaParams { mu0: 2.5, nu: 0.0, alpha: 2.0, beta: 2.5 }
        );
    }

    #[test]
    fn gamma_zero_priors_are_uninformative() {
        let d = scaled_prior(&TargetStats::from_classes(&[0, 1, 1, 2], 3), 0.0).unwrap();
        assert_eq!(d, ConjugateParams::Dirichlet(DirichletParams { alphas: vec![1.0; 3] }));
        let r = ng(&scaled_prior(&TargetStats::from_values(&[3.0, 5.0]), 0.0).unwrap());
        assert_eq!(r, NormalGammaParams { mu0: 4.0, nu: 0.0, alpha: 0.0, beta: 0.0 });
        assert!(!r.is_proper());
    }

    #[test]
    fn negative_gamma_rejected() {
        assert!(scaled_prior(&binary_summary(3, 1), -0.1).is_err());
        assert!(scaled_prior(&binary_summary(3, 1), f64::NAN).is_err());
    }

    #[test]
    fn beta_update() {
        let prior = ConjugateParams::Beta(BetaParams { alpha: 1.0, beta: 1.0 });
        let post = posterior_update(&prior, &TargetStats::from_binary(&[1, 1, 0, 1, 0])).unwrap();
        assert_eq!(beta(&post), BetaParams { alpha: 4.0, beta: 3.0 });
    }

    #[test]
    fn dirichlet_update() {
        let prior = ConjugateParams::Dirichlet(DirichletParams { alphas: vec![1.0; 3] });
        let stats = TargetStats::Multiclass { counts: vec![2, 0, 5] };
        let post = posterior_update(&prior, &stats).unwrap();
        assert_eq!(
            post,
            ConjugateParams::Dirichlet(DirichletParams { alphas: vec![3.0, 1.0, 6.0] })
        );
    }

    #[test]
    fn normal_gamma_update() {
        let prior = ConjugateParams::NormalGamma(NormalGammaParams {
            mu0: 2.5,
            nu: 0.0,
            alpha: 2.0,
            beta: 2.5,
        });
        let post = ng(&posterior_update(&prior, &TargetStats::from_values(&[10.0, 12.0])).unwrap());
        assert_eq!(post, NormalGammaParams { mu0: 11.0, nu: 2.0, alpha: 3.0, beta: 3.5 });
    }

    #[test]
    fn normal_gamma_cross_term() {
        // nu = 2 prior at mu0 = 0; category y = [4]: cross = 1*2/3 * 16 / 2.
        let prior = ConjugateParams::NormalGamma(NormalGammaParams {
            mu0: 0.0,
            nu: 2.0,
            alpha: 1.0,
            beta: 1.0,
        });
        let post = ng(&posterior_update(&prior, &TargetStats::from_values(&[4.0])).unwrap());
        assert!((post.mu0 - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(post.nu, 3.0);
        assert_eq!(post.alpha, 1.5);
        assert!((post.beta - (1.0 + 16.0 / 3.0)).abs() < 1e-14);
    }

    #[test]
    fn degenerate_regression_posterior_is_floored() {
        let prior = scaled_prior(&TargetStats::from_values(&[1.0, 2.0, 7.0]), 0.0).unwrap();
        let post = ng(&posterior_update(&prior, &TargetStats::from_values(&[5.0, 5.0])).unwrap());
        assert_eq!(post.mu0, 5.0);
        assert_eq!(post.beta, 1e-9);
        assert!(post.is_proper());
    }

    #[test]
    fn task_mismatch() {
        let prior = ConjugateParams::Beta(BetaParams { alpha: 1.0, beta: 1.0 });
        let err = posterior_update(&prior, &TargetStats::from_values(&[1.0])).unwrap_err();
        assert!(matches!(err, Error::TaskMismatch { .. }));
    }

    #[test]
    fn posterior_means() {
        let m = |p: ConjugateParams| p.mean().unwrap();
        assert_eq!(m(ConjugateParams::Beta(BetaParams { alpha: 1.0, beta: 1.0 })), vec![0.5]);
        assert_eq!(m(ConjugateParams::Beta(BetaParams { alpha: 4.0, beta: 3.0 })), vec![4.0 / 7.0]);
        let d = m(ConjugateParams::Dirichlet(DirichletParams { alphas: vec![3.0, 1.0, 6.0] }));
        for (got, want) in d.iter().zip([0.3, 0.1, 0.6]) {
            assert!((got - want).abs() < 1e-15);
        }
        let ng = ConjugateParams::NormalGamma(NormalGammaParams {
            mu0: 11.0,
            nu: 2.0,
            alpha: 3.0,
            beta: 3.5,
        });
        assert_eq!(m(ng), vec![11.0, 3.0 / 3.5]);
    }

    #[test]
    fn improper_mean_is_error() {
        let p = ConjugateParams::NormalGamma(NormalGammaParams {
            mu0: 0.0,
            nu: 0.0,
            alpha: 1.0,
            beta: 1.0,
        });
        assert!(matches!(p.mean(), Err(Error::ImproperDistribution(_))));
    }

    #[test]
    fn regression_nu_zero_posterior_mean_is_category_mean() {
        let prior = scaled_prior(&TargetStats::from_values(&[0.0, 1.0, 9.0, 2.0]), 0.7).unwrap();
        let stats = TargetStats::from_values(&[3.25, 1.5, 8.0]);
        let post = ng(&posterior_update(&prior, &stats).unwrap());
        let TargetStats::Regression { mean, .. } = stats else { unreachable!() };
        assert_eq!(post.mu0, mean);
    }

    #[test]
    fn welford_matches_two_pass() {
        let ys = [1e9 + 4.0, 1e9 + 7.0, 1e9 + 13.0, 1e9 + 16.0];
        let TargetStats::Regression { mean, sum_sq_dev, .. } = TargetStats::from_values(&ys) else {
            unreachable!()
        };
        assert_eq!(mean, 1e9 + 10.0);
        assert!((sum_sq_dev - 90.0).abs() < 1e-6);
    }

    #[test]
    fn dirichlet_covariance_rows_sum_to_zero() {
        let p = ConjugateParams::Dirichlet(DirichletParams { alphas: vec![2.0, 3.0, 5.0] });
        for row in p.covariance().unwrap() {
            assert!(row.iter().sum::<f64>().abs() < 1e-15);
        }
    }
}
