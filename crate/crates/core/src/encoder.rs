//! The sampling Bayesian encoder and the deterministic target-mean baselines.
//!
//! Fitting builds a scaled global prior and one conjugate posterior per
//! `(column, category)`. Transforming emits `K` copies of the data; in copy
//! `k` every categorical cell is replaced by `f(theta)` for a fresh draw
//! `theta ~ posterior(category)`. Predictions are averaged over the `K` copies.
//!
//! # Model document
//!
//! [`EncoderModel::to_json`] writes a JSON object with these keys:
//!
//! - `format`: always `"sampling-bayes-encoder"`; `version`: currently `1`
//! - `task`: `binary` | `multiclass` | `regression`; `target`: target column
//! - `classes`: class labels in first-appearance order (multiclass only)
//! - `config`: `gamma`, `k_draws`, `mapping`, `seed`, `unseen_policy`, `mode`
//! - `summary`: global target statistics (`task`, `n`, ...)
//! - `prior`: the scaled prior, e.g. `{"beta": {"alpha": 1, "beta": 1}}`
//! - `schema`: ordered `[{"name", "kind"}]` of feature columns
//! - `columns`: per categorical column `{"name", "categories": [{"value",
//!   "count", "posterior"}]}` in first-appearance order

use std::collections::{BTreeMap, HashMap};

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conjugate::{posterior_update, scaled_prior, ConjugateParams, NormalGammaParams, Task, TargetStats};
use crate::dataset::{Dataset, FeatureValues, TargetValues};
use crate::error::{invalid, Error, Result};
use crate::sampler::{derive_stream, draw, mix_seed, PosteriorDraw};

pub const MODEL_FORMAT: &str = "sampling-bayes-encoder";
pub const MODEL_VERSION: u32 = 1;

const WOE_EPS: f64 = 1e-12;

/// Maps a posterior draw to the features fed to the learner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingFunction {
    MeanOnly,
    MeanAndPrecision,
    Polynomial2,
    WeightOfEvidence,
}

impl std::str::FromStr for MappingFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_only" => Ok(Self::MeanOnly),
            "mean_and_precision" => Ok(Self::MeanAndPrecision),
            "polynomial2" => Ok(Self::Polynomial2),
            "weight_of_evidence" => Ok(Self::WeightOfEvidence),
            other => Err(invalid(format!("unknown mapping `{other}`"))),
        }
    }
}

impl MappingFunction {
    pub fn name(self) -> &'static str {
        match self {
            Self::MeanOnly => "mean_only",
            Self::MeanAndPrecision => "mean_and_precision",
            Self::Polynomial2 => "polynomial2",
            Self::WeightOfEvidence => "weight_of_evidence",
        }
    }
}

/// What to emit for a category that was not seen during fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnseenPolicy {
    SampleFromPrior,
    PriorMean,
}

/// `PosteriorMean` replaces every draw with the posterior mean, which turns
/// the encoder into deterministic Bayesian target encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawMode {
    Sample,
    PosteriorMean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub gamma: f64,
    pub k_draws: usize,
    pub mapping: MappingFunction,
    pub seed: u64,
    pub unseen_policy: UnseenPolicy,
    pub mode: DrawMode,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            k_draws: 4,
            mapping: MappingFunction::MeanOnly,
            seed: 0,
            unseen_policy: UnseenPolicy::SampleFromPrior,
            mode: DrawMode::Sample,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self, task: Task) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(invalid(format!("gamma must be finite and >= 0, got {}", self.gamma)));
        }
        if self.k_draws == 0 {
            return Err(invalid("k_draws must be at least 1"));
        }
        if self.mapping == MappingFunction::WeightOfEvidence && task != Task::Binary {
            return Err(invalid("weight_of_evidence mapping requires a binary task"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

fn column_specs(data: &Dataset) -> Vec<ColumnSpec> {
    data.features
        .iter()
        .map(|f| ColumnSpec {
            name: f.name.clone(),
            kind: if f.is_categorical() { ColumnKind::Categorical } else { ColumnKind::Numeric },
        })
        .collect()
}

fn check_schema(expected: &[ColumnSpec], data: &Dataset) -> Result<()> {
    let found = column_specs(data);
    if found != expected {
        let describe = |cols: &[ColumnSpec]| {
            cols.iter()
                .map(|c| format!("{}:{:?}", c.name, c.kind))
                .collect::<Vec<_>>()
                .join(",")
        };
        return Err(Error::SchemaMismatch(format!(
            "expected columns [{}], found [{}]",
            describe(expected),
            describe(&found)
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryEntry {
    pub value: String,
    pub count: u64,
    pub posterior: ConjugateParams,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(from = "ColumnModelDoc")]
pub struct ColumnModel {
    pub name: String,
    pub categories: Vec<CategoryEntry>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

#[derive(Deserialize)]
struct ColumnModelDoc {
    name: String,
    categories: Vec<CategoryEntry>,
}

impl From<ColumnModelDoc> for ColumnModel {
    fn from(doc: ColumnModelDoc) -> Self {
        let mut col = ColumnModel {
            name: doc.name,
            categories: doc.categories,
            index: HashMap::new(),
        };
        col.rebuild_index();
        col
    }
}

impl PartialEq for ColumnModel {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.categories == other.categories
    }
}

impl ColumnModel {
    fn rebuild_index(&mut self) {
        self.index = self
            .categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.value.clone(), i))
            .collect();
    }

    pub fn get(&self, value: &str) -> Option<&CategoryEntry> {
        self.index.get(value).map(|&i| &self.categories[i])
    }
}

/// Fitted encoder: per-column posterior tables plus the prior they share.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderModel {
    pub format: String,
    pub version: u32,
    pub task: Task,
    pub target: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub classes: Vec<String>,
    pub config: EncoderConfig,
    pub summary: TargetStats,
    pub prior: ConjugateParams,
    pub schema: Vec<ColumnSpec>,
    pub columns: Vec<ColumnModel>,
}

/// `K * N` encoded rows, copy-major: row `k * N + n` is copy `k` of origin
/// row `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedDataset {
    pub n_origin: usize,
    pub k_draws: usize,
    pub origin_row: Vec<usize>,
    pub draw_index: Vec<usize>,
    pub features: Array2<f64>,
    pub feature_names: Vec<String>,
    /// Source column of every encoded feature.
    pub feature_origin: Vec<String>,
    pub target: TargetValues,
}

impl EncodedDataset {
    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    /// Averages per-row model outputs over the copies of each origin row.
    pub fn average_by_origin(&self, outputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        if outputs.nrows() != self.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows(),
                found: outputs.nrows(),
            });
        }
        let mut acc = Array2::<f64>::zeros((self.n_origin, outputs.ncols()));
        for (i, row) in outputs.outer_iter().enumerate() {
            let mut target = acc.row_mut(self.origin_row[i]);
            target += &row;
        }
        let mut counts = vec![0usize; self.n_origin];
        self.origin_row.iter().for_each(|&n| counts[n] += 1);
        for (mut row, c) in acc.outer_iter_mut().zip(counts) {
            row /= c.max(1) as f64;
        }
        Ok(acc)
    }

    /// Encoded features and target as CSV; leading `origin_row` and `draw`
    /// columns tie each row back to its source.
    pub fn write_csv_to<W: std::io::Write>(&self, target_name: &str, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["origin_row".to_string(), "draw".to_string()];
        header.extend(self.feature_names.iter().cloned());
        header.push(target_name.to_string());
        wtr.write_record(&header)?;
        for (i, row) in self.features.outer_iter().enumerate() {
            let mut record = vec![self.origin_row[i].to_string(), self.draw_index[i].to_string()];
            record.extend(row.iter().map(|v| crate::dataset::format_f64(*v)));
            record.push(self.target.cell(i));
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Feature names produced by `mapping` for one column, before prefixing.
pub fn mapping_component_names(mapping: MappingFunction, task: Task, classes: &[String]) -> Result<Vec<String>> {
    let base: Vec<String> = match (task, mapping) {
        (Task::Binary, MappingFunction::WeightOfEvidence) => return Ok(vec!["woe".into()]),
        (_, MappingFunction::WeightOfEvidence) => {
            return Err(invalid("weight_of_evidence mapping requires a binary task"))
        }
        (Task::Binary, MappingFunction::MeanAndPrecision) => vec!["p".into(), "pseudo_count".into()],
        (Task::Binary, _) => vec!["p".into()],
        (Task::Multiclass, m) => {
            let mut names: Vec<String> = classes
                .iter()
                .take(classes.len().saturating_sub(1))
                .map(|c| format!("pi_{c}"))
                .collect();
            if m == MappingFunction::MeanAndPrecision {
                names.push("pseudo_count".into());
            }
            names
        }
        (Task::Regression, MappingFunction::MeanOnly) => vec!["mu".into()],
        (Task::Regression, _) => vec!["mu".into(), "tau".into()],
    };
    if mapping != MappingFunction::Polynomial2 {
        return Ok(base);
    }
    let mut names = base.clone();
    names.extend(base.iter().map(|b| format!("{b}^2")));
    for i in 0..base.len() {
        for j in i + 1..base.len() {
            names.push(format!("{}*{}", base[i], base[j]));
        }
    }
    Ok(names)
}

/// Applies the mapping function to a draw. `params` is the distribution the
/// draw came from; it supplies the pseudo-count for classification
/// `mean_and_precision`.
pub fn apply_mapping(mapping: MappingFunction, draw: &PosteriorDraw, params: &ConjugateParams) -> Result<Vec<f64>> {
    let pseudo_count = || match params {
        ConjugateParams::Beta(b) => b.alpha + b.beta,
        ConjugateParams::Dirichlet(d) => d.concentration(),
        ConjugateParams::NormalGamma(ng) => ng.nu,
    };
    let base = match (draw, mapping) {
        (PosteriorDraw::Binary { p }, MappingFunction::WeightOfEvidence) => {
            let p = p.clamp(WOE_EPS, 1.0 - WOE_EPS);
            return Ok(vec![(p / (1.0 - p)).ln()]);
        }
        (_, MappingFunction::WeightOfEvidence) => {
            return Err(invalid("weight_of_evidence mapping requires a binary task"))
        }
        (PosteriorDraw::Binary { p }, MappingFunction::MeanAndPrecision) => vec![*p, pseudo_count()],
        (PosteriorDraw::Binary { p }, _) => vec![*p],
        (PosteriorDraw::Multiclass { pi }, m) => {
            let mut v = pi[..pi.len().saturating_sub(1)].to_vec();
            if m == MappingFunction::MeanAndPrecision {
                v.push(pseudo_count());
            }
            v
        }
        (PosteriorDraw::Regression { mu, .. }, MappingFunction::MeanOnly) => vec![*mu],
        (PosteriorDraw::Regression { mu, tau }, _) => vec![*mu, *tau],
    };
    if mapping != MappingFunction::Polynomial2 {
        return Ok(base);
    }
    let mut out = base.clone();
    out.extend(base.iter().map(|b| b * b));
    for i in 0..base.len() {
        for j in i + 1..base.len() {
            out.push(base[i] * base[j]);
        }
    }
    Ok(out)
}

/// Global target variance used to stand in for an uninformative prior.
fn global_variance(summary: &TargetStats) -> f64 {
    match summary {
        TargetStats::Regression { n, sum_sq_dev, .. } if *n > 0 => (sum_sq_dev / *n as f64).max(1e-9),
        _ => 1.0,
    }
}

impl EncoderModel {
    /// Computes the scaled prior and every category's posterior.
    pub fn fit(data: &Dataset, config: &EncoderConfig) -> Result<Self> {
        if data.n_rows() == 0 {
            return Err(Error::EmptyDataset);
        }
        let task = data.task();
        config.validate(task)?;
        let classes = match task {
            Task::Multiclass => data.target.values.classes(),
            _ => Vec::new(),
        };
        if task == Task::Multiclass && classes.len() < 2 {
            return Err(invalid("multiclass target needs at least two classes"));
        }
        let summary = data.target.values.stats(0..data.n_rows(), &classes)?;
        let prior = scaled_prior(&summary, config.gamma)?;
        let class_idx = match task {
            Task::Multiclass => Some(data.target.values.class_indices(&classes)?),
            _ => None,
        };

        let mut columns = Vec::new();
        for feature in &data.features {
            let FeatureValues::Categorical(values) = &feature.values else {
                continue;
            };
            let mut order: Vec<String> = Vec::new();
            let mut stats: HashMap<&str, TargetStats> = HashMap::new();
            for (row, value) in values.iter().enumerate() {
                if value.is_empty() {
                    continue;
                }
                let entry = stats.entry(value.as_str()).or_insert_with(|| {
                    order.push(value.clone());
                    TargetStats::empty(task, classes.len())
                });
                match (&data.target.values, &class_idx) {
                    (TargetValues::Binary(y), _) => entry.push_binary(y[row]),
                    (TargetValues::Multiclass(_), Some(idx)) => entry.push_class(idx[row]),
                    (TargetValues::Regression(y), _) => entry.push_value(y[row]),
                    (TargetValues::Multiclass(_), None) => unreachable!(),
                }
            }
            if order.is_empty() {
                return Err(Error::AllMissing(feature.name.clone()));
            }
            let categories = order
                .into_iter()
                .map(|value| {
                    let s = &stats[value.as_str()];
                    Ok(CategoryEntry {
                        count: s.n(),
                        posterior: posterior_update(&prior, s)?,
                        value,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let mut col = ColumnModel {
                name: feature.name.clone(),
                categories,
                index: HashMap::new(),
            };
            col.rebuild_index();
            columns.push(col);
        }

        Ok(Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            task,
            target: data.target.name.clone(),
            classes,
            config: config.clone(),
            summary,
            prior,
            schema: column_specs(data),
            columns,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: EncoderModel = serde_json::from_str(text)?;
        if model.format != MODEL_FORMAT {
            return Err(invalid(format!("not an encoder model document: `{}`", model.format)));
        }
        if model.version != MODEL_VERSION {
            return Err(invalid(format!("unsupported model version {}", model.version)));
        }
        Ok(model)
    }

    pub fn column(&self, name: &str) -> Option<&ColumnModel> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Encoded feature names in output order, with their source column.
    pub fn feature_layout(&self) -> Result<(Vec<String>, Vec<String>)> {
        let comps = mapping_component_names(self.config.mapping, self.task, &self.classes)?;
        let mut names = Vec::new();
        let mut origin = Vec::new();
        for spec in &self.schema {
            match spec.kind {
                ColumnKind::Numeric => {
                    names.push(spec.name.clone());
                    origin.push(spec.name.clone());
                }
                ColumnKind::Categorical => {
                    for c in &comps {
                        names.push(format!("{}__{c}", spec.name));
                        origin.push(spec.name.clone());
                    }
                }
            }
        }
        Ok((names, origin))
    }

    /// Distribution used for categories not seen during fit.
    ///
    /// A regression prior with `nu = 0` (or `alpha = beta = 0` when
    /// `gamma = 0`) cannot be sampled; it is completed with one
    /// pseudo-observation at the global mean and variance.
    pub fn unseen_distribution(&self) -> ConjugateParams {
        match &self.prior {
            ConjugateParams::NormalGamma(p) if !p.is_proper() => {
                let var = global_variance(&self.summary);
                let (alpha, beta) = if p.alpha > 0.0 && p.beta > 0.0 {
                    (p.alpha, p.beta)
                } else {
                    (0.5, 0.5 * var)
                };
                ConjugateParams::NormalGamma(NormalGammaParams {
                    mu0: p.mu0,
                    nu: if p.nu > 0.0 { p.nu } else { 1.0 },
                    alpha,
                    beta,
                })
            }
            other => other.clone(),
        }
    }

    fn unseen_mean_draw(&self) -> Result<PosteriorDraw> {
        match &self.prior {
            ConjugateParams::NormalGamma(p) => {
                let tau = if p.alpha > 0.0 && p.beta > 0.0 {
                    p.alpha / p.beta
                } else {
                    1.0 / global_variance(&self.summary)
                };
                Ok(PosteriorDraw::Regression { mu: p.mu0, tau })
            }
            other => PosteriorDraw::at_mean(other),
        }
    }

    /// Draw (or point value) for one categorical cell.
    fn cell_draw(&self, entry: Option<&CategoryEntry>, master: u64, column: usize, row: usize, k: usize) -> Result<(PosteriorDraw, ConjugateParams)> {
        let sample = self.config.mode == DrawMode::Sample;
        match entry {
            Some(e) => {
                let d = if sample {
                    draw(&e.posterior, &derive_stream(master, column as u64, row as u64, k as u64))?
                } else {
                    PosteriorDraw::at_mean(&e.posterior)?
                };
                Ok((d, e.posterior.clone()))
            }
            None => {
                let params = self.unseen_distribution();
                let d = match (self.config.unseen_policy, sample) {
                    (UnseenPolicy::SampleFromPrior, true) => {
                        draw(&params, &derive_stream(master, column as u64, row as u64, k as u64))?
                    }
                    _ => self.unseen_mean_draw()?,
                };
                Ok((d, params))
            }
        }
    }

    /// Encodes `data` into `k_draws` stacked copies. `stream` selects an
    /// independent family of draws (e.g. 0 for training, 1 for prediction).
    pub fn transform(&self, data: &Dataset, k_draws: usize, stream: u64) -> Result<EncodedDataset> {
        if k_draws == 0 {
            return Err(invalid("k_draws must be at least 1"));
        }
        check_schema(&self.schema, data)?;
        if data.task() != self.task {
            return Err(Error::TaskMismatch {
                expected: self.task.to_string(),
                found: data.task().to_string(),
            });
        }
        let (feature_names, feature_origin) = self.feature_layout()?;
        let width = feature_names.len();
        let n = data.n_rows();
        let master = mix_seed(self.config.seed, stream);

        // Category lookup once per cell rather than once per copy.
        enum Source<'a> {
            Numeric(&'a [f64]),
            Categorical(usize, Vec<Option<&'a CategoryEntry>>),
        }
        let mut sources = Vec::with_capacity(data.features.len());
        let mut cat_index = 0;
        for f in &data.features {
            match &f.values {
                FeatureValues::Numeric(v) => sources.push(Source::Numeric(v)),
                FeatureValues::Categorical(v) => {
                    let col = &self.columns[cat_index];
                    let lookup = v
                        .iter()
                        .map(|value| if value.is_empty() { None } else { col.get(value) })
                        .collect();
                    sources.push(Source::Categorical(cat_index, lookup));
                    cat_index += 1;
                }
            }
        }

        let mut features = Array2::<f64>::zeros((k_draws * n, width));
        let buf = features.as_slice_mut().expect("fresh arrays are contiguous");
        buf.par_chunks_mut(width.max(1))
            .enumerate()
            .try_for_each(|(i, out)| -> Result<()> {
                let (k, row) = (i / n, i % n);
                let mut pos = 0;
                for src in &sources {
                    match src {
                        Source::Numeric(v) => {
                            out[pos] = v[row];
                            pos += 1;
                        }
                        Source::Categorical(m, lookup) => {
                            let (d, params) = self.cell_draw(lookup[row], master, *m, row, k)?;
                            let enc = apply_mapping(self.config.mapping, &d, &params)?;
                            out[pos..pos + enc.len()].copy_from_slice(&enc);
                            pos += enc.len();
                        }
                    }
                }
                Ok(())
            })?;

        let origin: Vec<usize> = (0..k_draws * n).map(|i| i % n).collect();
        let target = data.target.values.subset(&origin);
        Ok(EncodedDataset {
            n_origin: n,
            k_draws,
            draw_index: (0..k_draws * n).map(|i| i / n).collect(),
            origin_row: origin,
            features,
            feature_names,
            feature_origin,
            target,
        })
    }

    /// Averages `learner_predict` over `k_draws` encoded copies of `data`.
    /// For classifiers the outputs are class probabilities, so the argmax
    /// should be taken after this average.
    pub fn predict_average<F>(&self, data: &Dataset, k_draws: usize, stream: u64, learner_predict: F) -> Result<Array2<f64>>
    where
        F: Fn(ArrayView2<f64>) -> Result<Array2<f64>>,
    {
        let encoded = self.transform(data, k_draws, stream)?;
        let outputs = learner_predict(encoded.features.view())?;
        encoded.average_by_origin(outputs.view())
    }
}

// ---------------------------------------------------------------------------
// Target-mean baselines

/// Conditional target mean per category, optionally leave-one-out and with
/// multiplicative Gaussian noise `value * (1 + N(0, sigma^2))` at training time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetMeanEncoder {
    pub task: Task,
    pub global_mean: f64,
    schema: Vec<ColumnSpec>,
    /// Per categorical column: category -> (sum of targets, count).
    columns: Vec<BTreeMap<String, (f64, u64)>>,
}

fn numeric_targets(values: &TargetValues) -> Result<Vec<f64>> {
    match values {
        TargetValues::Binary(v) => Ok(v.iter().map(|&y| f64::from(y)).collect()),
        TargetValues::Regression(v) => Ok(v.clone()),
        TargetValues::Multiclass(_) => Err(Error::TaskMismatch {
            expected: "binary or regression".into(),
            found: "multiclass".into(),
        }),
    }
}

impl TargetMeanEncoder {
    pub fn fit(data: &Dataset) -> Result<Self> {
        if data.n_rows() == 0 {
            return Err(Error::EmptyDataset);
        }
        let y = numeric_targets(&data.target.values)?;
        let global_mean = y.iter().sum::<f64>() / y.len() as f64;
        let mut columns = Vec::new();
        for f in &data.features {
            let FeatureValues::Categorical(values) = &f.values else {
                continue;
            };
            let mut table: BTreeMap<String, (f64, u64)> = BTreeMap::new();
            for (v, &t) in values.iter().zip(&y) {
                if v.is_empty() {
                    continue;
                }
                let e = table.entry(v.clone()).or_insert((0.0, 0));
                e.0 += t;
                e.1 += 1;
            }
            if table.is_empty() {
                return Err(Error::AllMissing(f.name.clone()));
            }
            columns.push(table);
        }
        Ok(Self {
            task: data.task(),
            global_mean,
            schema: column_specs(data),
            columns,
        })
    }

    fn layout(&self) -> (Vec<String>, Vec<String>) {
        self.schema
            .iter()
            .map(|c| match c.kind {
                ColumnKind::Numeric => (c.name.clone(), c.name.clone()),
                ColumnKind::Categorical => (format!("{}__mean", c.name), c.name.clone()),
            })
            .unzip()
    }

    fn encode(&self, data: &Dataset, cell: impl Fn(usize, usize, Option<(f64, u64)>) -> f64) -> Result<EncodedDataset> {
        check_schema(&self.schema, data)?;
        let (feature_names, feature_origin) = self.layout();
        let n = data.n_rows();
        let mut features = Array2::<f64>::zeros((n, feature_names.len()));
        let mut cat = 0;
        for (j, f) in data.features.iter().enumerate() {
            match &f.values {
                FeatureValues::Numeric(v) => {
                    for (r, x) in v.iter().enumerate() {
                        features[[r, j]] = *x;
                    }
                }
                FeatureValues::Categorical(v) => {
                    let table = &self.columns[cat];
                    for (r, value) in v.iter().enumerate() {
                        let stats = if value.is_empty() { None } else { table.get(value).copied() };
                        features[[r, j]] = cell(cat, r, stats);
                    }
                    cat += 1;
                }
            }
        }
        Ok(EncodedDataset {
            n_origin: n,
            k_draws: 1,
            origin_row: (0..n).collect(),
            draw_index: vec![0; n],
            features,
            feature_names,
            feature_origin,
            target: data.target.values.clone(),
        })
    }

    /// Full-data category means; unseen or missing categories get the
    /// global mean.
    pub fn transform(&self, data: &Dataset) -> Result<EncodedDataset> {
        self.encode(data, |_, _, stats| match stats {
            Some((sum, count)) => sum / count as f64,
            None => self.global_mean,
        })
    }

    /// Encodes the training data itself. With `leave_one_out` a row's own
    /// target is excluded from its encoding; a category with a single row
    /// falls back to the global mean.
    pub fn fit_transform(&self, data: &Dataset, leave_one_out: bool, noise_sigma: f64, seed: u64) -> Result<EncodedDataset> {
        if !(noise_sigma >= 0.0) {
            return Err(invalid("noise_sigma must be >= 0"));
        }
        let y = numeric_targets(&data.target.values)?;
        let master = mix_seed(seed, 0);
        self.encode(data, |col, row, stats| {
            let base = match stats {
                Some((sum, count)) if leave_one_out => {
                    if count <= 1 {
                        self.global_mean
                    } else {
                        (sum - y[row]) / (count - 1) as f64
                    }
                }
                Some((sum, count)) => sum / count as f64,
                None => self.global_mean,
            };
            if noise_sigma > 0.0 {
                let z = derive_stream(master, col as u64, row as u64, 0).rng().standard_normal();
                base * (1.0 + noise_sigma * z)
            } else {
                base
            }
        })
    }
}

/// One-shot training-time baseline encoding.
pub fn baseline_target_mean(data: &Dataset, noise_sigma: f64, leave_one_out: bool, seed: u64) -> Result<EncodedDataset> {
    TargetMeanEncoder::fit(data)?.fit_transform(data, leave_one_out, noise_sigma, seed)
}
