//! Hyperparameter sweeps, tuning and side-by-side importance tables, with
//! their CSV forms.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{format_f64, Dataset};
use crate::encoder::MappingFunction;
use crate::error::{invalid, Result};
use crate::learner::cv::{cross_validate, CvResult, EncoderSpec, Metric, Pipeline};
use crate::learner::FeatureImportanceReport;

/// Encoder hyperparameter varied by a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    KDraws,
    Gamma,
    Mapping,
}

impl std::str::FromStr for SweepParam {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k_draws" | "k" => Ok(SweepParam::KDraws),
            "gamma" => Ok(SweepParam::Gamma),
            "mapping" => Ok(SweepParam::Mapping),
            other => Err(invalid(format!("unknown sweep parameter `{other}` (k_draws, gamma, mapping)"))),
        }
    }
}

impl SweepParam {
    /// Header of the value column in sweep CSVs.
    pub fn column(self) -> &'static str {
        match self {
            SweepParam::KDraws => "k",
            SweepParam::Gamma => "gamma",
            SweepParam::Mapping => "mapping",
        }
    }

    /// `base` with this parameter set from its textual value.
    pub fn apply(self, base: &Pipeline, value: &str) -> Result<Pipeline> {
        let EncoderSpec::Sampling(config) = &base.encoder else {
            return Err(invalid("sweeps vary the sampling encoder; the pipeline uses target_mean"));
        };
        let mut config = config.clone();
        match self {
            SweepParam::KDraws => {
                config.k_draws = value
                    .trim()
                    .parse()
                    .map_err(|_| invalid(format!("k_draws value `{value}` is not a positive integer")))?;
            }
            SweepParam::Gamma => {
                config.gamma = value
                    .trim()
                    .parse()
                    .map_err(|_| invalid(format!("gamma value `{value}` is not a number")))?;
            }
            SweepParam::Mapping => config.mapping = value.trim().parse::<MappingFunction>()?,
        }
        Ok(Pipeline {
            encoder: EncoderSpec::Sampling(config),
            learner: base.learner.clone(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub result: CvResult,
}

/// Cross-validates `base` once per value. All values share the fold
/// assignment and per-fold seeds, so differences are paired.
pub fn sweep(base: &Pipeline, data: &Dataset, param: SweepParam, values: &[String], folds: usize, metric: Metric, seed: u64) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(invalid("sweep needs at least one value"));
    }
    values
        .iter()
        .map(|v| {
            let pipeline = param.apply(base, v)?;
            if let EncoderSpec::Sampling(c) = &pipeline.encoder {
                c.validate(data.task())?;
            }
            Ok(SweepRow {
                value: v.trim().to_string(),
                result: cross_validate(&pipeline, data, folds, metric, seed)?,
            })
        })
        .collect()
}

/// Columns: parameter, `mean_metric`, `std_metric`.
pub fn write_sweep_csv<W: Write>(param: SweepParam, rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([param.column(), "mean_metric", "std_metric"])?;
    for r in rows {
        w.write_record([r.value.clone(), format_f64(r.result.mean), format_f64(r.result.std)])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: `fold`, metric name; one row per fold.
pub fn write_cv_csv<W: Write>(result: &CvResult, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["fold", result.metric.name()])?;
    for (i, s) in result.fold_scores.iter().enumerate() {
        w.write_record([i.to_string(), format_f64(*s)])?;
    }
    w.flush()?;
    Ok(())
}

/// Index and score of the candidate with the best mean; ties keep the
/// earliest candidate.
pub fn tune(candidates: &[Pipeline], data: &Dataset, folds: usize, metric: Metric, seed: u64) -> Result<(usize, CvResult)> {
    let mut best: Option<(usize, CvResult)> = None;
    for (i, p) in candidates.iter().enumerate() {
        let r = cross_validate(p, data, folds, metric, seed)?;
        if best.as_ref().is_none_or(|(_, b)| r.mean > b.mean) {
            best = Some((i, r));
        }
    }
    best.ok_or_else(|| invalid("tuning needs at least one candidate"))
}

/// Grouped importances of several fitted pipelines, by source column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub labels: Vec<String>,
    pub origins: Vec<String>,
    /// `values[i][j]`: importance of `origins[i]` under `labels[j]`.
    pub values: Vec<Vec<f64>>,
}

impl ImportanceTable {
    pub fn new(labels: Vec<String>, reports: &[FeatureImportanceReport]) -> Result<Self> {
        if labels.len() != reports.len() || reports.is_empty() {
            return Err(invalid("one label per importance report is required"));
        }
        let origins: Vec<String> = reports[0].grouped.iter().map(|g| g.origin.clone()).collect();
        let values = origins
            .iter()
            .map(|o| reports.iter().map(|r| r.group(o).unwrap_or(0.0)).collect())
            .collect();
        Ok(Self { labels, origins, values })
    }

    /// Columns: `feature`, then one per label.
    pub fn write_csv_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["feature".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (o, row) in self.origins.iter().zip(&self.values) {
            let mut rec = vec![o.clone()];
            rec.extend(row.iter().map(|v| format_f64(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use crate::learner::LearnerSpec;

    fn base() -> Pipeline {
        Pipeline {
            encoder: EncoderSpec::Sampling(EncoderConfig::default()),
            learner: LearnerSpec::default(),
        }
    }

    #[test]
    fn apply_parses_values() {
        let p = SweepParam::KDraws.apply(&base(), "8").unwrap();
        assert!(matches!(p.encoder, EncoderSpec::Sampling(EncoderConfig { k_draws: 8, .. })));
        let p = SweepParam::Mapping.apply(&base(), "polynomial2").unwrap();
        assert!(matches!(
            p.encoder,
            EncoderSpec::Sampling(EncoderConfig { mapping: MappingFunction::Polynomial2, .. })
        ));
        assert!(SweepParam::Gamma.apply(&base(), "x").is_err());
        assert!("depth".parse::<SweepParam>().is_err());
    }

    #[test]
    fn sweep_csv_layout() {
        let rows = vec![SweepRow {
            value: "2".into(),
            result: CvResult::from_scores(Metric::Accuracy, vec![0.5, 0.75]),
        }];
        let mut out = Vec::new();
        write_sweep_csv(SweepParam::KDraws, &rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().next(), Some("k,mean_metric,std_metric"));
        assert!(text.lines().nth(1).unwrap().starts_with("2,0.625,"));
    }
}
