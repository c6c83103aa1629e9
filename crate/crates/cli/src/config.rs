use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sbe_core::encoder::MappingFunction;
use sbe_core::{EncoderSpec, GeneratorSpec, LearnerSpec, Metric, Schema};

use crate::CliError;

/// Where the input rows come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Generator(GeneratorSpec),
    Csv {
        path: PathBuf,
        /// Inline schema; when absent `<path stem>.schema.json` is read.
        #[serde(default)]
        schema: Option<Schema>,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepLists {
    pub gamma: Vec<f64>,
    pub k_draws: Vec<usize>,
    pub mapping: Vec<MappingFunction>,
}

/// The JSON document accepted by `--config`. Every field is optional;
/// command-line flags override it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: Option<DataSource>,
    pub encoders: Vec<EncoderSpec>,
    pub learners: Vec<LearnerSpec>,
    pub metric: Option<Metric>,
    pub folds: Option<usize>,
    pub sweep: SweepLists,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| {
            CliError::Config(format!(
                "{}: line {}, column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })
    }
}

pub fn schema_sidecar(csv: &Path) -> PathBuf {
    let stem = csv.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    csv.with_file_name(format!("{stem}.schema.json"))
}
