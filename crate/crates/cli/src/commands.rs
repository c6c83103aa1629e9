use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

use sbe_core::dataset::{format_f64, read_csv, write_csv_to};
use sbe_core::diagnostics::{compare_noise_injection, laplace_predict, mc_posterior_expectation, mse_decompose};
use sbe_core::encoder::EncoderModel;
use sbe_core::experiment::{sweep, write_cv_csv, write_sweep_csv, ImportanceTable, SweepParam};
use sbe_core::learner::cv::FittedEncoder;
use sbe_core::learner::LogisticParams;
use sbe_core::sampler::{mix_seed, PosteriorDraw};
use sbe_core::{
    apply_mapping, cross_validate, generate, CvResult, Dataset, EncoderConfig, EncoderSpec, FittedPipeline, ForestParams,
    GeneratorSpec, LearnerSpec, Metric, Pipeline, Schema, Task, TrainedModel,
};

use crate::config::{schema_sidecar, DataSource, ExperimentConfig};
use crate::output::{write_atomic, write_text};
use crate::{
    Cli, CliError, Command, DataArgs, DiagnoseArgs, EncoderArgs, EvaluateArgs, FitArgs, GenDataArgs, ImportanceArgs,
    LearnerArgs, SweepArgs, TrainArgs, TransformArgs,
};

struct Context {
    config: ExperimentConfig,
    seed: u64,
    output_dir: PathBuf,
}

impl Context {
    fn out_path(&self, explicit: &Option<PathBuf>, default_name: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.output_dir.join(default_name))
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Parses a snake_case enum name the same way the JSON config does.
fn parse_enum<T: DeserializeOwned>(flag: &str, value: &str) -> Result<T, CliError> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| CliError::Config(format!("--{flag}: unrecognised value `{value}`")))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(config_err("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(runtime_err)?;
    }
    let ctx = Context {
        seed: cli.seed.or(config.seed).unwrap_or(0),
        output_dir: cli
            .output_dir
            .clone()
            .or_else(|| config.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from(".")),
        config,
    };
    match cli.command {
        Command::GenData(a) => gen_data(&ctx, a),
        Command::Fit(a) => fit(&ctx, a),
        Command::Transform(a) => transform(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::Sweep(a) => run_sweep(&ctx, a),
        Command::Diagnose(a) => diagnose(&ctx, a),
        Command::Importance(a) => importance(&ctx, a),
    }
}

fn read_schema(path: &Path) -> Result<Schema, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| runtime_err(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn load_csv(path: &Path, schema: Option<Schema>, schema_path: Option<&Path>) -> Result<Dataset, CliError> {
    let schema = match (schema, schema_path) {
        (Some(s), _) => s,
        (None, Some(p)) => read_schema(p)?,
        (None, None) => read_schema(&schema_sidecar(path))?,
    };
    read_csv(path, &schema).map_err(|e| runtime_err(format!("{}: {e}", path.display())))
}

fn load_data(ctx: &Context, args: &DataArgs) -> Result<Dataset, CliError> {
    if let Some(path) = &args.data {
        return load_csv(path, None, args.schema.as_deref());
    }
    match &ctx.config.data {
        Some(DataSource::Csv { path, schema }) => load_csv(path, schema.clone(), args.schema.as_deref()),
        Some(DataSource::Generator(spec)) => {
            let spec = GeneratorSpec {
                seed: ctx.seed,
                ..spec.clone()
            };
            spec.validate().map_err(config_err)?;
            Ok(generate(&spec)?)
        }
        None => Err(config_err("no input data: pass --data or set `data` in the config")),
    }
}

fn encoder_spec(ctx: &Context, args: &EncoderArgs) -> Result<EncoderSpec, CliError> {
    let base = ctx
        .config
        .encoders
        .first()
        .cloned()
        .unwrap_or_else(|| EncoderSpec::Sampling(EncoderConfig::default()));
    let mut spec = match args.encoder.as_deref() {
        None => base,
        Some("sampling") => match base {
            s @ EncoderSpec::Sampling(_) => s,
            _ => EncoderSpec::Sampling(EncoderConfig::default()),
        },
        Some("target_mean") => match base {
            s @ EncoderSpec::TargetMean { .. } => s,
            _ => EncoderSpec::TargetMean {
                leave_one_out: false,
                noise_sigma: 0.0,
                seed: 0,
            },
        },
        Some(other) => return Err(config_err(format!("--encoder: unknown encoder `{other}`"))),
    };
    match &mut spec {
        EncoderSpec::Sampling(c) => {
            if args.leave_one_out || args.noise_sigma.is_some() {
                return Err(config_err("--leave-one-out and --noise-sigma apply to the target_mean encoder"));
            }
            if let Some(g) = args.gamma {
                c.gamma = g;
            }
            if let Some(k) = args.k_draws {
                c.k_draws = k;
            }
            if let Some(m) = &args.mapping {
                c.mapping = parse_enum("mapping", m)?;
            }
            if let Some(u) = &args.unseen_policy {
                c.unseen_policy = parse_enum("unseen-policy", u)?;
            }
            if !(c.gamma >= 0.0) || !c.gamma.is_finite() {
                return Err(config_err(format!("gamma must be finite and >= 0, got {}", c.gamma)));
            }
            if c.k_draws == 0 {
                return Err(config_err("k_draws must be at least 1"));
            }
        }
        EncoderSpec::TargetMean { leave_one_out, noise_sigma, .. } => {
            if args.gamma.is_some() || args.k_draws.is_some() || args.mapping.is_some() || args.unseen_policy.is_some() {
                return Err(config_err("--gamma, --k-draws, --mapping and --unseen-policy apply to the sampling encoder"));
            }
            *leave_one_out |= args.leave_one_out;
            if let Some(s) = args.noise_sigma {
                *noise_sigma = s;
            }
            if !(*noise_sigma >= 0.0) {
                return Err(config_err("noise_sigma must be >= 0"));
            }
        }
    }
    Ok(spec.with_seed(ctx.seed))
}

fn learner_spec(ctx: &Context, args: &LearnerArgs, fallback: LearnerSpec) -> Result<LearnerSpec, CliError> {
    let base = ctx.config.learners.first().cloned().unwrap_or(fallback);
    let mut spec = match args.learner.as_deref() {
        None => base,
        Some("random_forest") => match base {
            s @ LearnerSpec::RandomForest(_) => s,
            _ => LearnerSpec::RandomForest(ForestParams::default()),
        },
        Some("ridge") => match base {
            s @ LearnerSpec::Ridge { .. } => s,
            _ => LearnerSpec::Ridge { lambda: 1e-3 },
        },
        Some("logistic") => match base {
            s @ LearnerSpec::Logistic(_) => s,
            _ => LearnerSpec::Logistic(LogisticParams::default()),
        },
        Some(other) => return Err(config_err(format!("--learner: unknown learner `{other}`"))),
    };
    let forest_flags = args.n_trees.is_some() || args.max_depth.is_some() || args.min_leaf.is_some() || args.features_per_split.is_some();
    match &mut spec {
        LearnerSpec::RandomForest(p) => {
            if args.lambda.is_some() || args.learning_rate.is_some() || args.epochs.is_some() {
                return Err(config_err("--lambda, --learning-rate and --epochs do not apply to random_forest"));
            }
            p.n_trees = args.n_trees.unwrap_or(p.n_trees);
            p.max_depth = args.max_depth.unwrap_or(p.max_depth);
            p.min_leaf = args.min_leaf.unwrap_or(p.min_leaf);
            if args.features_per_split.is_some() {
                p.features_per_split = args.features_per_split;
            }
            p.seed = ctx.seed;
        }
        LearnerSpec::Ridge { lambda } => {
            if forest_flags || args.learning_rate.is_some() || args.epochs.is_some() {
                return Err(config_err("only --lambda applies to ridge"));
            }
            *lambda = args.lambda.unwrap_or(*lambda);
        }
        LearnerSpec::Logistic(p) => {
            if forest_flags {
                return Err(config_err("forest flags do not apply to logistic"));
            }
            p.lambda = args.lambda.unwrap_or(p.lambda);
            p.learning_rate = args.learning_rate.unwrap_or(p.learning_rate);
            p.epochs = args.epochs.unwrap_or(p.epochs);
        }
    }
    spec.validate().map_err(config_err)?;
    Ok(spec)
}

fn check_task(spec: &EncoderSpec, task: Task) -> Result<(), CliError> {
    match spec {
        EncoderSpec::Sampling(c) => c.validate(task).map_err(config_err),
        EncoderSpec::TargetMean { .. } if task == Task::Multiclass => {
            Err(config_err("the target_mean encoder supports binary and regression targets only"))
        }
        EncoderSpec::TargetMean { .. } => Ok(()),
    }
}

fn metric_for(ctx: &Context, flag: &Option<String>, task: Task) -> Result<Metric, CliError> {
    let metric = match flag {
        Some(m) => m.parse::<Metric>().map_err(config_err)?,
        None => ctx.config.metric.unwrap_or_else(|| Metric::default_for(task)),
    };
    match (metric, task) {
        (Metric::R2, Task::Regression) | (Metric::Accuracy, Task::Binary | Task::Multiclass) => Ok(metric),
        _ => Err(config_err(format!("metric {} does not fit a {task} target", metric.name()))),
    }
}

fn folds_for(ctx: &Context, flag: Option<usize>) -> Result<usize, CliError> {
    let folds = flag.or(ctx.config.folds).unwrap_or(5);
    if folds < 2 {
        return Err(config_err("folds must be at least 2"));
    }
    Ok(folds)
}

fn gen_data(ctx: &Context, a: GenDataArgs) -> Result<(), CliError> {
    let mut spec = match &ctx.config.data {
        Some(DataSource::Generator(s)) => s.clone(),
        _ => GeneratorSpec::default(),
    };
    if let Some(kind) = &a.kind {
        spec.kind = parse_enum("kind", kind)?;
    }
    spec.n_rows = a.rows.unwrap_or(spec.n_rows);
    spec.n_features = a.features.unwrap_or(spec.n_features);
    spec.n_informative = a.informative.unwrap_or(spec.n_informative);
    spec.n_categorical = a.categorical.unwrap_or(spec.n_categorical);
    spec.bins_min = a.bins_min.unwrap_or(spec.bins_min);
    spec.bins_max = a.bins_max.unwrap_or(spec.bins_max);
    spec.seed = ctx.seed;
    spec.validate().map_err(config_err)?;
    let data = generate(&spec)?;
    let out = ctx.out_path(&a.out, "data.csv");
    write_atomic(&out, |w| write_csv_to(&data, w))?;
    let mut schema = serde_json::to_string_pretty(&data.schema()).map_err(runtime_err)?;
    schema.push('\n');
    write_text(&schema_sidecar(&out), &schema)?;
    println!("wrote {} rows to {}", data.n_rows(), out.display());
    Ok(())
}

fn fit(ctx: &Context, a: FitArgs) -> Result<(), CliError> {
    let spec = encoder_spec(ctx, &a.encoder)?;
    let EncoderSpec::Sampling(config) = &spec else {
        return Err(config_err("fit writes a sampling encoder model; use --encoder sampling"));
    };
    let data = load_data(ctx, &a.data)?;
    check_task(&spec, data.task())?;
    let model = EncoderModel::fit(&data, config)?;
    let out = ctx.out_path(&a.out, "model.json");
    let json = model.to_json()?;
    write_text(&out, &json)?;
    println!("wrote encoder model for {} columns to {}", model.columns.len(), out.display());
    Ok(())
}

fn transform(ctx: &Context, a: TransformArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.model).map_err(|e| runtime_err(format!("{}: {e}", a.model.display())))?;
    let model = EncoderModel::from_json(&text)?;
    let data = load_data(ctx, &a.data)?;
    let k = a.k_draws.unwrap_or(model.config.k_draws);
    if k == 0 {
        return Err(config_err("k_draws must be at least 1"));
    }
    let encoded = model.transform(&data, k, a.stream)?;
    let out = ctx.out_path(&a.out, "encoded.csv");
    write_atomic(&out, |w| encoded.write_csv_to(&data.target.name, w))?;
    println!("wrote {} encoded rows to {}", encoded.n_rows(), out.display());
    Ok(())
}

fn pipeline(ctx: &Context, enc: &EncoderArgs, learner: &LearnerArgs) -> Result<Pipeline, CliError> {
    Ok(Pipeline {
        encoder: encoder_spec(ctx, enc)?,
        learner: learner_spec(ctx, learner, LearnerSpec::default())?,
    })
}

fn train(ctx: &Context, a: TrainArgs) -> Result<(), CliError> {
    let p = pipeline(ctx, &a.encoder, &a.learner)?;
    let data = load_data(ctx, &a.data)?;
    check_task(&p.encoder, data.task())?;
    let fitted = p.fit(&data)?;
    let out = ctx.out_path(&a.out, "pipeline.json");
    write_text(&out, &fitted.to_json()?)?;
    println!("wrote trained pipeline to {}", out.display());
    Ok(())
}

fn evaluate(ctx: &Context, a: EvaluateArgs) -> Result<(), CliError> {
    let out = ctx.out_path(&a.out, "evaluate.csv");
    if let Some(model_path) = &a.model {
        let text = std::fs::read_to_string(model_path).map_err(|e| runtime_err(format!("{}: {e}", model_path.display())))?;
        let fitted = FittedPipeline::from_json(&text)?;
        let data = load_data(ctx, &a.data)?;
        let metric = metric_for(ctx, &a.metric, data.task())?;
        let pred = fitted.predict(&data)?;
        let score = metric.score(pred.view(), &data.target.values, &fitted.classes)?;
        write_atomic(&out, |w| {
            let mut w = csv::Writer::from_writer(w);
            w.write_record(["rows", metric.name()])?;
            w.write_record([data.n_rows().to_string(), format_f64(score)])?;
            w.flush()?;
            Ok(())
        })?;
        println!("{} = {score:.6} on {} rows", metric.name(), data.n_rows());
        return Ok(());
    }
    let p = pipeline(ctx, &a.encoder, &a.learner)?;
    let folds = folds_for(ctx, a.folds)?;
    let data = load_data(ctx, &a.data)?;
    check_task(&p.encoder, data.task())?;
    let metric = metric_for(ctx, &a.metric, data.task())?;
    let result: CvResult = cross_validate(&p, &data, folds, metric, ctx.seed)?;
    write_atomic(&out, |w| write_cv_csv(&result, w))?;
    println!("{} = {:.6} +- {:.6} over {folds} folds", metric.name(), result.mean, result.std);
    Ok(())
}

fn run_sweep(ctx: &Context, a: SweepArgs) -> Result<(), CliError> {
    let param: SweepParam = a.param.parse().map_err(config_err)?;
    let values: Vec<String> = if !a.values.is_empty() {
        a.values.clone()
    } else {
        let s = &ctx.config.sweep;
        match param {
            SweepParam::KDraws => s.k_draws.iter().map(|k| k.to_string()).collect(),
            SweepParam::Gamma => s.gamma.iter().map(|g| format_f64(*g)).collect(),
            SweepParam::Mapping => s.mapping.iter().map(|m| m.name().to_string()).collect(),
        }
    };
    if values.is_empty() {
        return Err(config_err(format!("no values for `{}`: pass --values or set sweep.{} in the config", a.param, a.param)));
    }
    let p = pipeline(ctx, &a.encoder, &a.learner)?;
    if !matches!(p.encoder, EncoderSpec::Sampling(_)) {
        return Err(config_err("sweeps vary the sampling encoder"));
    }
    for v in &values {
        let candidate = param.apply(&p, v).map_err(config_err)?;
        if let EncoderSpec::Sampling(c) = &candidate.encoder {
            if c.k_draws == 0 || !(c.gamma >= 0.0) {
                return Err(config_err(format!("invalid {} value `{v}`", param.column())));
            }
        }
    }
    let folds = folds_for(ctx, a.folds)?;
    let data = load_data(ctx, &a.data)?;
    check_task(&p.encoder, data.task())?;
    let metric = metric_for(ctx, &a.metric, data.task())?;
    let rows = sweep(&p, &data, param, &values, folds, metric, ctx.seed)?;
    let out = ctx.out_path(&a.out, &format!("sweep_{}.csv", param.column()));
    write_atomic(&out, |w| write_sweep_csv(param, &rows, w))?;
    for r in &rows {
        println!("{}={}: {:.6} +- {:.6}", param.column(), r.value, r.result.mean, r.result.std);
    }
    Ok(())
}

/// Output column of a smooth learner that the Laplace comparison tracks.
fn smooth_output(model: &TrainedModel) -> Option<usize> {
    match model {
        TrainedModel::Ridge(_) => Some(0),
        TrainedModel::Logistic(_) => Some(1),
        TrainedModel::RandomForest(_) => None,
    }
}

fn diagnose(ctx: &Context, a: DiagnoseArgs) -> Result<(), CliError> {
    let encoder = encoder_spec(ctx, &a.encoder)?;
    if !matches!(encoder, EncoderSpec::Sampling(_)) {
        return Err(config_err("diagnose needs the sampling encoder"));
    }
    if a.draws < 2 || a.mc_draws < 2 {
        return Err(config_err("--draws and --mc-draws must be at least 2"));
    }
    let data = load_data(ctx, &a.data)?;
    check_task(&encoder, data.task())?;
    let fallback = match data.task() {
        Task::Regression => LearnerSpec::Ridge { lambda: 1e-3 },
        Task::Binary => LearnerSpec::Logistic(LogisticParams::default()),
        Task::Multiclass => LearnerSpec::default(),
    };
    let learner = learner_spec(ctx, &a.learner, fallback)?;
    let fitted = Pipeline { encoder, learner }.fit(&data)?;
    let FittedEncoder::Sampling(model) = &fitted.encoder else {
        unreachable!("sampling encoder checked above")
    };
    let mut summary = String::new();

    if data.task() == Task::Regression {
        let report = mse_decompose(model, &data, a.draws, |x| fitted.model.predict(x))?;
        write_atomic(&ctx.output_dir.join("decomposition.csv"), |w| report.write_csv_to(w))?;
        summary.push_str(&report.summary());
    }
    if data.task() == Task::Binary {
        let noise = compare_noise_injection(model, a.baseline_sigma, a.draws, ctx.seed)?;
        write_atomic(&ctx.output_dir.join("noise.csv"), |w| noise.write_csv_to(w))?;
        summary.push_str(&noise.summary());
    }

    match smooth_output(&fitted.model) {
        Some(out_col) => {
            let rows = laplace_rows(model, &fitted, &data, out_col, a.mc_draws, ctx.seed)?;
            write_atomic(&ctx.output_dir.join("laplace.csv"), |w| {
                let mut w = csv::Writer::from_writer(w);
                w.write_record([
                    "column",
                    "category",
                    "count",
                    "plug_in",
                    "correction",
                    "laplace",
                    "monte_carlo",
                    "monte_carlo_se",
                ])?;
                for r in &rows {
                    w.write_record(r)?;
                }
                w.flush()?;
                Ok(())
            })?;
            let _ = writeln!(summary, "Laplace comparison written for {} categories", rows.len());
        }
        None => summary.push_str("Laplace comparison skipped: the learner is not smooth in the encoded features\n"),
    }
    write_text(&ctx.output_dir.join("diagnose.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

/// One CSV row per category: the learner's output as a function of that
/// category's parameters, with all other features at their training means.
fn laplace_rows(model: &EncoderModel, fitted: &FittedPipeline, data: &Dataset, out_col: usize, mc_draws: usize, seed: u64) -> Result<Vec<Vec<String>>, CliError> {
    let encoded = model.transform(data, 1, 0)?;
    let reference: Vec<f64> = encoded
        .features
        .mean_axis(ndarray::Axis(0))
        .map(|m| m.to_vec())
        .unwrap_or_default();
    let mut rows = Vec::new();
    for (m, col) in model.columns.iter().enumerate() {
        let block: Vec<usize> = (0..fitted.feature_origin.len())
            .filter(|&j| fitted.feature_origin[j] == col.name)
            .collect();
        for (v, entry) in col.categories.iter().enumerate() {
            let f = |theta: &[f64]| -> f64 {
                let Ok(draw) = PosteriorDraw::from_theta(model.task, theta) else {
                    return f64::NAN;
                };
                let Ok(features) = apply_mapping(model.config.mapping, &draw, &entry.posterior) else {
                    return f64::NAN;
                };
                let mut row = reference.clone();
                for (&j, x) in block.iter().zip(features) {
                    row[j] = x;
                }
                let x = ndarray::Array2::from_shape_vec((1, row.len()), row).expect("one row");
                fitted.model.predict(x.view()).map(|p| p[[0, out_col]]).unwrap_or(f64::NAN)
            };
            let mut record = vec![col.name.clone(), entry.value.clone(), entry.count.to_string()];
            match laplace_predict(f, &entry.posterior) {
                Ok(est) => {
                    let mc = mc_posterior_expectation(f, &entry.posterior, mc_draws, mix_seed(seed, (m * 1_000_003 + v) as u64))?;
                    record.extend([
                        format_f64(est.plug_in),
                        format_f64(est.correction),
                        format_f64(est.prediction),
                        format_f64(mc.mean),
                        format_f64(mc.std_error),
                    ]);
                }
                // Categories whose posterior has no finite covariance.
                Err(_) => record.extend(std::iter::repeat_n(String::new(), 5)),
            }
            rows.push(record);
        }
    }
    Ok(rows)
}

fn importance(ctx: &Context, a: ImportanceArgs) -> Result<(), CliError> {
    let encoders: Vec<EncoderSpec> = if ctx.config.encoders.len() >= 2 {
        ctx.config.encoders[..2].to_vec()
    } else {
        vec![
            EncoderSpec::Sampling(EncoderConfig::default()),
            EncoderSpec::TargetMean {
                leave_one_out: false,
                noise_sigma: 0.0,
                seed: 0,
            },
        ]
    };
    let learner = learner_spec(ctx, &a.learner, LearnerSpec::default())?;
    if !matches!(learner, LearnerSpec::RandomForest(_)) {
        return Err(config_err("importance compares random forest importances; use --learner random_forest"));
    }
    let data = load_data(ctx, &a.data)?;
    let mut labels = Vec::new();
    let mut reports = Vec::new();
    for enc in &encoders {
        check_task(enc, data.task())?;
        let base = match enc {
            EncoderSpec::Sampling(_) => "sampling",
            EncoderSpec::TargetMean { .. } => "target_mean",
        };
        let label = if labels.iter().any(|l| l == base) { format!("{base}_{}", labels.len() + 1) } else { base.to_string() };
        let fitted = Pipeline {
            encoder: enc.with_seed(ctx.seed),
            learner: learner.clone(),
        }
        .fit(&data)?;
        reports.push(fitted.importance()?);
        labels.push(label);
    }
    let table = ImportanceTable::new(labels, &reports)?;
    let out = ctx.out_path(&a.out, "importance.csv");
    write_atomic(&out, |w| table.write_csv_to(w))?;
    println!("wrote grouped importances for {} features to {}", table.origins.len(), out.display());
    Ok(())
}
