//! Encoder + learner pipelines and k-fold cross-validation.
//!
//! The encoder is always fitted on the training rows of a fold only. Fold
//! `f` derives its encoder and learner seeds as `mix_seed(seed, f)`; training
//! rows are encoded with stream 0 and held-out rows with stream 1.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{train, FeatureImportanceReport, LearnerSpec, OwnedTarget, TrainedModel};
use crate::conjugate::Task;
use crate::dataset::{Dataset, TargetValues};
use crate::encoder::{EncodedDataset, EncoderConfig, EncoderModel, TargetMeanEncoder};
use crate::error::{invalid, Error, Result};
use crate::sampler::{mix_seed, StreamRng};

pub const TRAIN_STREAM: u64 = 0;
pub const PREDICT_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncoderSpec {
    Sampling(EncoderConfig),
    /// Deterministic category means at prediction time; at training time
    /// optionally leave-one-out and multiplicatively noised.
    TargetMean {
        #[serde(default)]
        leave_one_out: bool,
        #[serde(default)]
        noise_sigma: f64,
        #[serde(default)]
        seed: u64,
    },
}

impl EncoderSpec {
    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            EncoderSpec::Sampling(c) => EncoderSpec::Sampling(EncoderConfig { seed, ..c.clone() }),
            EncoderSpec::TargetMean { leave_one_out, noise_sigma, .. } => EncoderSpec::TargetMean {
                leave_one_out: *leave_one_out,
                noise_sigma: *noise_sigma,
                seed,
            },
        }
    }

    fn seed(&self) -> u64 {
        match self {
            EncoderSpec::Sampling(c) => c.seed,
            EncoderSpec::TargetMean { seed, .. } => *seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub encoder: EncoderSpec,
    pub learner: LearnerSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedEncoder {
    Sampling(EncoderModel),
    TargetMean(TargetMeanEncoder),
}

/// A trained pipeline. Serialized by the CLI `train` command as JSON with
/// keys `spec`, `encoder`, `model`, `task`, `classes`, `feature_names` and
/// `feature_origin`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub spec: Pipeline,
    pub encoder: FittedEncoder,
    pub model: TrainedModel,
    pub task: Task,
    pub classes: Vec<String>,
    pub feature_names: Vec<String>,
    pub feature_origin: Vec<String>,
}

impl Pipeline {
    /// Encodes `data` for training and returns the fitted encoder with it.
    pub fn encode_train(&self, data: &Dataset) -> Result<(FittedEncoder, EncodedDataset)> {
        match &self.encoder {
            EncoderSpec::Sampling(config) => {
                let model = EncoderModel::fit(data, config)?;
                let encoded = model.transform(data, config.k_draws, TRAIN_STREAM)?;
                Ok((FittedEncoder::Sampling(model), encoded))
            }
            EncoderSpec::TargetMean { leave_one_out, noise_sigma, seed } => {
                let enc = TargetMeanEncoder::fit(data)?;
                let encoded = enc.fit_transform(data, *leave_one_out, *noise_sigma, *seed)?;
                Ok((FittedEncoder::TargetMean(enc), encoded))
            }
        }
    }

    pub fn fit(&self, data: &Dataset) -> Result<FittedPipeline> {
        let (encoder, encoded) = self.encode_train(data)?;
        let classes = match &encoder {
            FittedEncoder::Sampling(m) if m.task == Task::Multiclass => m.classes.clone(),
            _ => data.target.values.classes(),
        };
        let target = OwnedTarget::from_values(&encoded.target, &classes)?;
        let model = train(&self.learner, encoded.features.view(), &target.as_target())?;
        Ok(FittedPipeline {
            spec: self.clone(),
            encoder,
            model,
            task: data.task(),
            classes,
            feature_names: encoded.feature_names,
            feature_origin: encoded.feature_origin,
        })
    }
}

impl FittedPipeline {
    /// One row per input row: class probabilities averaged over the `K`
    /// encoded copies, or regression values.
    pub fn predict(&self, data: &Dataset) -> Result<Array2<f64>> {
        match &self.encoder {
            FittedEncoder::Sampling(m) => {
                m.predict_average(data, m.config.k_draws, PREDICT_STREAM, |x| self.model.predict(x))
            }
            FittedEncoder::TargetMean(enc) => {
                let encoded = enc.transform(data)?;
                self.model.predict(encoded.features.view())
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn importance(&self) -> Result<FeatureImportanceReport> {
        FeatureImportanceReport::new(&self.model.importances(), &self.feature_names, &self.feature_origin)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    R2,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(Metric::Accuracy),
            "r2" => Ok(Metric::R2),
            other => Err(invalid(format!("unknown metric `{other}` (expected accuracy or r2)"))),
        }
    }
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::R2 => "r2",
        }
    }

    pub fn default_for(task: Task) -> Self {
        if task.is_classification() {
            Metric::Accuracy
        } else {
            Metric::R2
        }
    }

    /// Scores predictions from [`FittedPipeline::predict`]. For accuracy the
    /// argmax column indexes `classes`.
    pub fn score(self, predictions: ArrayView2<f64>, truth: &TargetValues, classes: &[String]) -> Result<f64> {
        if predictions.nrows() != truth.len() || truth.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                found: predictions.nrows(),
            });
        }
        match self {
            Metric::Accuracy => {
                let labels = match truth {
                    TargetValues::Multiclass(v) => v
                        .iter()
                        .map(|l| classes.iter().position(|c| c == l))
                        .collect::<Vec<_>>(),
                    other => other.class_indices(classes)?.into_iter().map(Some).collect(),
                };
                let correct = predictions
                    .outer_iter()
                    .zip(&labels)
                    .filter(|(row, label)| Some(argmax(row.iter().copied())) == **label)
                    .count();
                Ok(correct as f64 / labels.len() as f64)
            }
            Metric::R2 => {
                let TargetValues::Regression(y) = truth else {
                    return Err(Error::TaskMismatch {
                        expected: "regression".into(),
                        found: truth.task().to_string(),
                    });
                };
                let mean = y.iter().sum::<f64>() / y.len() as f64;
                let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
                let ss_res: f64 = y.iter().zip(predictions.column(0)).map(|(v, p)| (v - p).powi(2)).sum();
                Ok(if ss_tot > 0.0 {
                    1.0 - ss_res / ss_tot
                } else if ss_res == 0.0 {
                    1.0
                } else {
                    0.0
                })
            }
        }
    }
}

/// First index of the maximum; ties resolve to the lower class.
pub fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Held-out row indices of each fold, sorted ascending. Classification
/// targets are stratified: every class is shuffled and dealt round-robin,
/// continuing where the previous class stopped.
pub fn make_folds(target: &TargetValues, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let n = target.len();
    if folds < 2 {
        return Err(invalid("folds must be at least 2"));
    }
    if n < folds {
        return Err(invalid(format!("{n} rows cannot fill {folds} folds")));
    }
    let groups: Vec<Vec<usize>> = match target {
        TargetValues::Regression(_) => vec![(0..n).collect()],
        other => {
            let classes = other.classes();
            let idx = other.class_indices(&classes)?;
            let mut groups = vec![Vec::new(); classes.len()];
            for (row, &c) in idx.iter().enumerate() {
                groups[c].push(row);
            }
            groups.retain(|g| !g.is_empty());
            if let Some(small) = groups.iter().find(|g| g.len() < folds) {
                return Err(invalid(format!(
                    "class `{}` has {} rows, fewer than {folds} folds",
                    target.cell(small[0]),
                    small.len()
                )));
            }
            groups
        }
    };
    let mut out = vec![Vec::new(); folds];
    let mut next = 0;
    for (g, mut rows) in groups.into_iter().enumerate() {
        StreamRng::seed_from(seed, g as u64).shuffle(&mut rows);
        for row in rows {
            out[next].push(row);
            next = (next + 1) % folds;
        }
    }
    out.iter_mut().for_each(|f| f.sort_unstable());
    Ok(out)
}

/// Complement of `test` in `0..n`.
pub fn train_rows(n: usize, test: &[usize]) -> Vec<usize> {
    let mut held = vec![false; n];
    test.iter().for_each(|&r| held[r] = true);
    (0..n).filter(|&r| !held[r]).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub metric: Metric,
    pub fold_scores: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over folds.
    pub std: f64,
}

impl CvResult {
    pub fn from_scores(metric: Metric, fold_scores: Vec<f64>) -> Self {
        let k = fold_scores.len() as f64;
        let mean = fold_scores.iter().sum::<f64>() / k;
        let std = if fold_scores.len() > 1 {
            (fold_scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            metric,
            fold_scores,
            mean,
            std,
        }
    }
}

/// The pipeline with seeds derived for fold `fold`.
pub fn fold_pipeline(pipeline: &Pipeline, fold: usize) -> Pipeline {
    Pipeline {
        encoder: pipeline.encoder.with_seed(mix_seed(pipeline.encoder.seed(), fold as u64)),
        learner: match &pipeline.learner {
            LearnerSpec::RandomForest(p) => pipeline.learner.with_seed(mix_seed(p.seed, fold as u64)),
            other => other.clone(),
        },
    }
}

/// Fits the fold's pipeline on its training rows.
pub fn fit_fold(pipeline: &Pipeline, data: &Dataset, folds: &[Vec<usize>], fold: usize) -> Result<FittedPipeline> {
    let train = data.subset(&train_rows(data.n_rows(), &folds[fold]));
    fold_pipeline(pipeline, fold).fit(&train)
}

/// `folds`-fold cross-validation. Fold assignment uses `seed`.
pub fn cross_validate(pipeline: &Pipeline, data: &Dataset, folds: usize, metric: Metric, seed: u64) -> Result<CvResult> {
    if metric == Metric::R2 && data.task() != Task::Regression {
        return Err(invalid("r2 requires a regression target"));
    }
    if metric == Metric::Accuracy && data.task() == Task::Regression {
        return Err(invalid("accuracy requires a classification target"));
    }
    let assignment = make_folds(&data.target.values, folds, seed)?;
    let mut scores = Vec::with_capacity(folds);
    for (f, test_rows) in assignment.iter().enumerate() {
        let fitted = fit_fold(pipeline, data, &assignment, f)?;
        let test = data.subset(test_rows);
        let pred = fitted.predict(&test)?;
        scores.push(metric.score(pred.view(), &test.target.values, &fitted.classes)?);
    }
    Ok(CvResult::from_scores(metric, scores))
}
