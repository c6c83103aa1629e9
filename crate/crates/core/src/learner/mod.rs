//! Downstream models trained on encoded features: ridge, logistic regression
//! and a random forest, plus cross-validated encoder/learner pipelines.

pub mod cv;
pub mod forest;
pub mod linear;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::TargetValues;
use crate::error::{invalid, Error, Result};

pub use forest::{ForestModel, ForestParams};
pub use linear::{LogisticModel, LogisticParams, RidgeModel};

/// Borrowed training target.
#[derive(Clone, Copy, Debug)]
pub enum LearnTarget<'a> {
    Classes { labels: &'a [usize], n_classes: usize },
    Values(&'a [f64]),
}

impl LearnTarget<'_> {
    pub fn len(&self) -> usize {
        match self {
            LearnTarget::Classes { labels, .. } => labels.len(),
            LearnTarget::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Owned counterpart of [`LearnTarget`].
#[derive(Clone, Debug, PartialEq)]
pub enum OwnedTarget {
    Classes { labels: Vec<usize>, n_classes: usize },
    Values(Vec<f64>),
}

impl OwnedTarget {
    /// Class indices follow `classes`; binary targets are always `0`/`1`.
    pub fn from_values(values: &TargetValues, classes: &[String]) -> Result<Self> {
        Ok(match values {
            TargetValues::Regression(v) => OwnedTarget::Values(v.clone()),
            TargetValues::Binary(_) => OwnedTarget::Classes {
                labels: values.class_indices(classes)?,
                n_classes: 2,
            },
            TargetValues::Multiclass(_) => OwnedTarget::Classes {
                labels: values.class_indices(classes)?,
                n_classes: classes.len(),
            },
        })
    }

    pub fn as_target(&self) -> LearnTarget<'_> {
        match self {
            OwnedTarget::Classes { labels, n_classes } => LearnTarget::Classes {
                labels,
                n_classes: *n_classes,
            },
            OwnedTarget::Values(v) => LearnTarget::Values(v),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerSpec {
    Ridge { lambda: f64 },
    Logistic(LogisticParams),
    RandomForest(ForestParams),
}

impl Default for LearnerSpec {
    fn default() -> Self {
        LearnerSpec::RandomForest(ForestParams::default())
    }
}

impl LearnerSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            LearnerSpec::Ridge { lambda } if !(*lambda >= 0.0) => Err(invalid("ridge lambda must be >= 0")),
            LearnerSpec::Logistic(p) if !(p.learning_rate > 0.0) || !(p.lambda >= 0.0) => {
                Err(invalid("logistic needs learning_rate > 0 and lambda >= 0"))
            }
            LearnerSpec::RandomForest(p) => p.validate(),
            _ => Ok(()),
        }
    }

    /// Same learner with its internal seed (if any) replaced.
    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            LearnerSpec::RandomForest(p) => LearnerSpec::RandomForest(ForestParams { seed, ..p.clone() }),
            other => other.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Ridge(RidgeModel),
    Logistic(LogisticModel),
    RandomForest(ForestModel),
}

pub fn train(spec: &LearnerSpec, x: ArrayView2<f64>, target: &LearnTarget) -> Result<TrainedModel> {
    spec.validate()?;
    if target.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: target.len(),
        });
    }
    match (spec, target) {
        (LearnerSpec::Ridge { lambda }, LearnTarget::Values(y)) => {
            RidgeModel::fit(x, y, *lambda).map(TrainedModel::Ridge)
        }
        (LearnerSpec::Ridge { .. }, _) => Err(Error::TaskMismatch {
            expected: "regression".into(),
            found: "classification".into(),
        }),
        (LearnerSpec::Logistic(p), LearnTarget::Classes { labels, n_classes }) if *n_classes <= 2 => {
            LogisticModel::fit(x, labels, p).map(TrainedModel::Logistic)
        }
        (LearnerSpec::Logistic(_), LearnTarget::Classes { .. }) => Err(Error::TaskMismatch {
            expected: "binary".into(),
            found: "multiclass".into(),
        }),
        (LearnerSpec::Logistic(_), LearnTarget::Values(_)) => Err(Error::TaskMismatch {
            expected: "binary".into(),
            found: "regression".into(),
        }),
        (LearnerSpec::RandomForest(p), t) => ForestModel::fit(p, x, t).map(TrainedModel::RandomForest),
    }
}

impl TrainedModel {
    /// Class probabilities (one column per class) or regression values
    /// (one column).
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            TrainedModel::Ridge(m) => m.predict(x),
            TrainedModel::Logistic(m) => m.predict(x),
            TrainedModel::RandomForest(m) => m.predict(x),
        }
    }

    /// Normalised importances. Linear models use absolute standardised
    /// coefficients as a proxy.
    pub fn importances(&self) -> Vec<f64> {
        match self {
            TrainedModel::Ridge(m) => m.importances(),
            TrainedModel::Logistic(m) => m.importances(),
            TrainedModel::RandomForest(m) => m.importances().to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub origin: String,
    pub importance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupImportance {
    pub origin: String,
    pub importance: f64,
}

/// Per encoded feature importances and their sums per source column, in
/// first-appearance order of the source columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportanceReport {
    pub features: Vec<FeatureImportance>,
    pub grouped: Vec<GroupImportance>,
}

impl FeatureImportanceReport {
    pub fn new(importances: &[f64], names: &[String], origins: &[String]) -> Result<Self> {
        if importances.len() != names.len() || names.len() != origins.len() {
            return Err(Error::DimensionMismatch {
                expected: names.len(),
                found: importances.len(),
            });
        }
        let total: f64 = importances.iter().sum();
        let scale = if total > 0.0 { 1.0 / total } else { 0.0 };
        let features: Vec<FeatureImportance> = importances
            .iter()
            .zip(names.iter().zip(origins))
            .map(|(&v, (name, origin))| FeatureImportance {
                feature: name.clone(),
                origin: origin.clone(),
                importance: v * scale,
            })
            .collect();
        let mut grouped: Vec<GroupImportance> = Vec::new();
        for f in &features {
            match grouped.iter_mut().find(|g| g.origin == f.origin) {
                Some(g) => g.importance += f.importance,
                None => grouped.push(GroupImportance {
                    origin: f.origin.clone(),
                    importance: f.importance,
                }),
            }
        }
        Ok(Self { features, grouped })
    }

    pub fn group(&self, origin: &str) -> Option<f64> {
        self.grouped.iter().find(|g| g.origin == origin).map(|g| g.importance)
    }

    /// Summed importance of the given source columns.
    pub fn total_of<S: AsRef<str>>(&self, origins: &[S]) -> f64 {
        origins.iter().filter_map(|o| self.group(o.as_ref())).sum()
    }
}
