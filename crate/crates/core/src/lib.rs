//! Sampling Bayesian encoding of categorical features.
//!
//! Each category gets a conjugate posterior over the target distribution.
//! Training data is augmented `K`-fold by encoding every categorical cell
//! with a fresh posterior draw, and predictions are averaged over `K`
//! encoded copies.

pub mod conjugate;
pub mod dataset;
pub mod diagnostics;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod learner;
pub mod sampler;

pub use conjugate::{
    posterior_update, scaled_prior, BetaParams, ConjugateParams, DirichletParams, NormalGammaParams, TargetStats, Task,
};
pub use dataset::{
    generate, quantile_bin, read_csv, write_csv, Dataset, Feature, FeatureValues, GeneratorKind, GeneratorSpec, Schema,
    Target, TargetValues,
};
pub use encoder::{
    apply_mapping, baseline_target_mean, DrawMode, EncodedDataset, EncoderConfig, EncoderModel, MappingFunction,
    TargetMeanEncoder, UnseenPolicy,
};
pub use error::{Error, Result};
pub use learner::cv::{cross_validate, CvResult, EncoderSpec, FittedPipeline, Metric, Pipeline};
pub use learner::{train, FeatureImportanceReport, ForestParams, LearnTarget, LearnerSpec, TrainedModel};
pub use sampler::{derive_stream, draw, PosteriorDraw, SeedContext, StreamRng};
