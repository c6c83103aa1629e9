//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p sbe-core --test acceptance --release`. Pass
//! criterion numbers after `--` to run a subset. Criteria 1-5 are
//! desk-scale experiment reproductions whose outcome is reported but does
//! not fail the target; any failure among criteria 6-12 does.

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};

use sbe_core::diagnostics::{laplace_predict, mc_normal_expectation, mse_decompose};
use sbe_core::experiment::{sweep, tune, write_cv_csv, write_sweep_csv, SweepParam};
use sbe_core::learner::cv::{fit_fold, make_folds};
use sbe_core::{
    cross_validate, generate, posterior_update, scaled_prior, write_csv, BetaParams, ConjugateParams, Dataset,
    DirichletParams, EncoderConfig, EncoderModel, EncoderSpec, Feature, ForestParams, GeneratorSpec, LearnerSpec,
    MappingFunction, Metric, NormalGammaParams, Pipeline, Result, StreamRng, Target, TargetStats, TargetValues,
};

const FOLDS: usize = 5;

struct Check {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Result<Check> {
    Ok(Check { pass, detail: detail.into() })
}

// ---------------------------------------------------------------------------
// Experiment reproductions

fn forest(seed: u64) -> LearnerSpec {
    LearnerSpec::RandomForest(ForestParams { n_trees: 50, max_depth: 40, seed, ..Default::default() })
}

fn sampling(gamma: f64, k_draws: usize, mapping: MappingFunction, seed: u64) -> EncoderSpec {
    EncoderSpec::Sampling(EncoderConfig { gamma, k_draws, mapping, seed, ..Default::default() })
}

fn blobs(seed: u64) -> Result<Dataset> {
    generate(&GeneratorSpec { seed, ..Default::default() })
}

fn quadratic(seed: u64) -> Result<Dataset> {
    generate(&GeneratorSpec::hastie(10_000, 2, seed))
}

/// Tuned sampling encoder against the tuned leave-one-out baseline on ten
/// seeded datasets.
fn direction(make: fn(u64) -> Result<Dataset>) -> Result<Check> {
    let mut sum_sampling = 0.0;
    let mut sum_loo = 0.0;
    let mut wins = 0;
    let seeds = 0..10u64;
    for seed in seeds.clone() {
        let data = make(seed)?;
        let loo: Vec<Pipeline> = [0.0, 0.05, 0.1, 0.2]
            .iter()
            .map(|&noise_sigma| Pipeline {
                encoder: EncoderSpec::TargetMean { leave_one_out: true, noise_sigma, seed },
                learner: forest(seed),
            })
            .collect();
        let samp: Vec<Pipeline> = [
            (0.0, MappingFunction::MeanOnly),
            (0.1, MappingFunction::MeanOnly),
            (0.0, MappingFunction::MeanAndPrecision),
        ]
        .iter()
        .map(|&(gamma, mapping)| Pipeline { encoder: sampling(gamma, 2, mapping, seed), learner: forest(seed) })
        .collect();
        let (_, l) = tune(&loo, &data, FOLDS, Metric::Accuracy, seed)?;
        let (_, s) = tune(&samp, &data, FOLDS, Metric::Accuracy, seed)?;
        sum_loo += l.mean;
        sum_sampling += s.mean;
        wins += usize::from(s.mean > l.mean);
        println!("    seed {seed}: sampling {:.4}  leave-one-out {:.4}", s.mean, l.mean);
    }
    let n = seeds.count() as f64;
    let (ms, ml) = (sum_sampling / n, sum_loo / n);
    check(
        ms >= ml - 0.003 && wins >= 6,
        format!("mean sampling {ms:.4} vs leave-one-out {ml:.4}; sampling ahead on {wins}/10 seeds"),
    )
}

fn mean_sweep(param: SweepParam, values: &[&str], seeds: &[u64], base: impl Fn(u64) -> Pipeline) -> Result<Vec<f64>> {
    let values: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    let mut totals = vec![0.0; values.len()];
    for &seed in seeds {
        let data = blobs(seed)?;
        let rows = sweep(&base(seed), &data, param, &values, FOLDS, Metric::Accuracy, seed)?;
        for (t, r) in totals.iter_mut().zip(&rows) {
            *t += r.result.mean;
        }
    }
    Ok(totals.into_iter().map(|t| t / seeds.len() as f64).collect())
}

fn fmt_curve(values: &[&str], acc: &[f64]) -> String {
    values.iter().zip(acc).map(|(v, a)| format!("{v}:{a:.4}")).collect::<Vec<_>>().join(" ")
}

fn k_plateau() -> Result<Check> {
    let ks = ["1", "2", "4", "8", "16"];
    let acc = mean_sweep(SweepParam::KDraws, &ks, &[0, 1], |seed| Pipeline {
        encoder: sampling(0.1, 2, MappingFunction::MeanOnly, seed),
        learner: forest(seed),
    })?;
    let (k1, k2, k16) = (acc[0], acc[1], acc[4]);
    check((k2 - k16).abs() <= 0.005 && k1 <= k16 + 0.005, fmt_curve(&ks, &acc))
}

fn gamma_response() -> Result<Check> {
    let gammas = ["0", "0.01", "0.1", "0.5", "1", "10", "100"];
    let acc = mean_sweep(SweepParam::Gamma, &gammas, &[0, 1, 2, 3, 4], |seed| Pipeline {
        encoder: sampling(0.0, 2, MappingFunction::MeanOnly, seed),
        learner: forest(seed),
    })?;
    let low = &acc[..5];
    let spread = low.iter().cloned().fold(f64::MIN, f64::max) - low.iter().cloned().fold(f64::MAX, f64::min);
    let drop = acc[0] - acc[6];
    check(
        spread < 0.01 && drop > 0.005,
        format!("{}; spread for gamma<=1 {spread:.4}, drop at 100 {drop:.4}", fmt_curve(&gammas, &acc)),
    )
}

fn importance_shift() -> Result<Check> {
    let mut fewer = 0;
    let mut lines = Vec::new();
    for seed in 0..10u64 {
        let data = blobs(seed)?;
        let categorical: Vec<&str> =
            data.features.iter().filter(|f| f.is_categorical()).map(|f| f.name.as_str()).collect();
        let share = |encoder| -> Result<f64> {
            let fitted = Pipeline { encoder, learner: forest(seed) }.fit(&data)?;
            Ok(fitted.importance()?.total_of(&categorical))
        };
        let s = share(sampling(0.1, 2, MappingFunction::MeanOnly, seed))?;
        let t = share(EncoderSpec::TargetMean { leave_one_out: false, noise_sigma: 0.0, seed })?;
        fewer += usize::from(s < t);
        lines.push(format!("{s:.3}/{t:.3}"));
    }
    check(
        fewer >= 8,
        format!("categorical share lower under sampling on {fewer}/10 seeds (sampling/target mean: {})", lines.join(" ")),
    )
}

// ---------------------------------------------------------------------------
// Exact and statistical properties

fn conjugate_examples() -> Result<Check> {
    let mut failures = Vec::new();
    let mut expect = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    let rel = |a: f64, b: f64| a == b || (a - b).abs() <= 1e-12 * b.abs();

    let binary = TargetStats::Binary { n: 10, successes: 6 };
    let p = scaled_prior(&binary, 0.5)?;
    expect("binary prior", p == ConjugateParams::Beta(BetaParams { alpha: 4.0, beta: 3.0 }));

    let reg = scaled_prior(&TargetStats::from_values(&[1.0, 2.0, 3.0, 4.0]), 1.0)?;
    let ConjugateParams::NormalGamma(ng) = &reg else { unreachable!() };
    expect(
        "regression prior",
        rel(ng.mu0, 2.5) && ng.nu == 0.0 && rel(ng.alpha, 2.0) && rel(ng.beta, 2.5),
    );

    let beta = posterior_update(
        &ConjugateParams::Beta(BetaParams { alpha: 1.0, beta: 1.0 }),
        &TargetStats::from_binary(&[1, 1, 1, 0, 0]),
    )?;
    expect("beta update", beta == ConjugateParams::Beta(BetaParams { alpha: 4.0, beta: 3.0 }));

    let dir = posterior_update(
        &ConjugateParams::Dirichlet(DirichletParams { alphas: vec![1.0; 3] }),
        &TargetStats::from_classes(&[0, 0, 2, 2, 2, 2, 2], 3),
    )?;
    expect("dirichlet update", dir == ConjugateParams::Dirichlet(DirichletParams { alphas: vec![3.0, 1.0, 6.0] }));

    let post = posterior_update(&reg, &TargetStats::from_values(&[10.0, 12.0]))?;
    let ConjugateParams::NormalGamma(ng) = &post else { unreachable!() };
    expect(
        "normal-gamma update",
        rel(ng.mu0, 11.0) && rel(ng.nu, 2.0) && rel(ng.alpha, 3.0) && rel(ng.beta, 3.5),
    );

    let cats = ["a", "a", "a", "a", "a", "b", "b", "b", "b"];
    let ys = vec![1, 1, 1, 0, 0, 0, 0, 0, 0];
    let data = Dataset::new(
        vec![Feature::categorical("c", cats)],
        Target { name: "y".into(), values: TargetValues::Binary(ys) },
    )?;
    let model = EncoderModel::fit(&data, &EncoderConfig { gamma: 0.0, ..Default::default() })?;
    let col = &model.columns[0];
    expect(
        "encoder beta posteriors",
        col.get("a").unwrap().posterior == ConjugateParams::Beta(BetaParams { alpha: 4.0, beta: 3.0 })
            && col.get("b").unwrap().posterior == ConjugateParams::Beta(BetaParams { alpha: 1.0, beta: 5.0 }),
    );

    let data = Dataset::new(
        vec![Feature::categorical("c", ["a", "a"])],
        Target { name: "y".into(), values: TargetValues::Regression(vec![10.0, 12.0]) },
    )?;
    let model = EncoderModel::fit(&data, &EncoderConfig { gamma: 0.0, ..Default::default() })?;
    expect(
        "encoder normal-gamma posterior",
        model.columns[0].get("a").unwrap().posterior
            == ConjugateParams::NormalGamma(NormalGammaParams { mu0: 11.0, nu: 2.0, alpha: 1.0, beta: 1.0 }),
    );

    let detail = if failures.is_empty() { "8/8 examples exact".to_string() } else { format!("failed: {}", failures.join(", ")) };
    check(failures.is_empty(), detail)
}

/// Sample mean and variance with CLT standard errors for both.
fn moments(xs: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    (mean, (var / n).sqrt(), var, ((m4 - var * var) / n).sqrt())
}

/// Closed-form Beta(2, 5) CDF: P(Binomial(6, x) >= 2).
fn beta_2_5_cdf(x: f64) -> f64 {
    1.0 - (1.0 - x).powi(6) - 6.0 * x * (1.0 - x).powi(5)
}

fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

fn sampler_moments() -> Result<Check> {
    const DRAWS: usize = 100_000;
    const KS_DRAWS: usize = 10_000;
    // Kolmogorov critical value at the 0.001 level.
    let ks_critical = 1.949 / (KS_DRAWS as f64).sqrt();
    let mut failures = Vec::new();
    let mut worst_ks: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = StreamRng::seed_from(seed, 7);
        let mut within = |name: String, xs: &[f64], mean: f64, var: f64| {
            let (m, m_se, v, v_se) = moments(xs);
            if (m - mean).abs() > 4.0 * m_se || (v - var).abs() > 4.0 * v_se {
                failures.push(format!("{name} seed {seed}: mean {m:.5} var {v:.5}"));
            }
        };
        for (a, b) in [(2.0, 5.0), (0.5, 0.5), (50.0, 150.0)] {
            let xs: Vec<f64> = (0..DRAWS).map(|_| rng.beta(a, b)).collect();
            let s = a + b;
            within(format!("Beta({a},{b})"), &xs, a / s, a * b / (s * s * (s + 1.0)));
        }
        for shape in [0.3, 1.0, 4.5] {
            let xs: Vec<f64> = (0..DRAWS).map(|_| rng.gamma(shape)).collect();
            within(format!("Gamma({shape})"), &xs, shape, shape);
        }
        let alphas = [1.0, 2.5, 6.5];
        let a0: f64 = alphas.iter().sum();
        let draws: Vec<Vec<f64>> = (0..DRAWS).map(|_| rng.dirichlet(&alphas)).collect();
        for (i, &a) in alphas.iter().enumerate() {
            let xs: Vec<f64> = draws.iter().map(|d| d[i]).collect();
            let m = a / a0;
            within(format!("Dirichlet[{i}]"), &xs, m, m * (1.0 - m) / (a0 + 1.0));
        }
        let xs: Vec<f64> = (0..KS_DRAWS).map(|_| rng.beta(2.0, 5.0)).collect();
        let d = ks_statistic(xs, beta_2_5_cdf);
        worst_ks = worst_ks.max(d);
        if d >= ks_critical {
            failures.push(format!("KS seed {seed}: D = {d:.4}"));
        }
    }
    let detail = format!(
        "{} failures over 20 seeds; largest KS D {worst_ks:.4} (critical {ks_critical:.4}){}",
        failures.len(),
        if failures.is_empty() { String::new() } else { format!(": {}", failures.join("; ")) }
    );
    check(failures.is_empty(), detail)
}

fn augmentation_fuzz() -> Result<Check> {
    let mut rng = StreamRng::seed_from(2024, 0);
    for case in 0..100 {
        let n = 1 + rng.below(200) as usize;
        let k = 1 + rng.below(10) as usize;
        let levels = 1 + rng.below(12);
        let cats: Vec<String> = (0..n).map(|_| format!("v{}", rng.below(levels))).collect();
        let ys: Vec<u8> = (0..n).map(|_| rng.below(2) as u8).collect();
        let data = Dataset::new(
            vec![Feature::categorical("c", cats), Feature::numeric("x", (0..n).map(|i| i as f64).collect())],
            Target { name: "y".into(), values: TargetValues::Binary(ys) },
        )?;
        let model = EncoderModel::fit(&data, &EncoderConfig { k_draws: k, seed: case, ..Default::default() })?;
        let encoded = model.transform(&data, k, 0)?;
        let mut seen = vec![0usize; n];
        for &o in &encoded.origin_row {
            seen[o] += 1;
        }
        let ordered = (0..k * n).all(|r| encoded.origin_row[r] == r % n && encoded.draw_index[r] == r / n);
        if encoded.n_rows() != k * n || seen.iter().any(|&c| c != k) || !ordered {
            return check(false, format!("shape N={n} K={k} broke the invariant"));
        }
    }
    check(true, "100/100 shapes with K*N rows and each origin row K times")
}

/// Ten categories with different means and sizes, scored by a fixed
/// shrunken linear map of the encoded mean.
fn decomposition_scenario() -> Result<Dataset> {
    let mut rng = StreamRng::seed_from(77, 0);
    let mut cats = Vec::new();
    let mut ys = Vec::new();
    for c in 0..10 {
        for _ in 0..(3 + 4 * c) {
            cats.push(format!("v{c}"));
            ys.push(0.4 * c as f64 + rng.normal(0.0, 1.0));
        }
    }
    Dataset::new(
        vec![Feature::categorical("c", cats)],
        Target { name: "y".into(), values: TargetValues::Regression(ys) },
    )
}

fn decomposition_identity() -> Result<Check> {
    let data = decomposition_scenario()?;
    let predict = |x: ArrayView2<f64>| -> Result<Array2<f64>> {
        Ok(x.column(0).mapv(|m| 0.9 * m + 0.1).insert_axis(ndarray::Axis(1)))
    };
    let mut decreasing = 0;
    let mut at_max = Vec::new();
    for seed in 0..5u64 {
        let model = EncoderModel::fit(&data, &EncoderConfig { gamma: 0.2, seed, ..Default::default() })?;
        let small = mse_decompose(&model, &data, 100, predict)?.relative_residual();
        let large = mse_decompose(&model, &data, 10_000, predict)?.relative_residual();
        decreasing += usize::from(large < small);
        at_max.push(large);
    }
    let worst = at_max.iter().cloned().fold(0.0, f64::max);
    check(
        worst < 0.01 && decreasing == 5,
        format!("largest residual at 10^4 draws {:.3}% of total; decreasing on {decreasing}/5 seeds", 100.0 * worst),
    )
}

fn laplace_exactness() -> Result<Check> {
    let params = ConjugateParams::Dirichlet(DirichletParams { alphas: vec![3000.0, 5000.0, 2000.0] });
    let a = [[1.5, -0.4, 0.2], [-0.4, 2.0, 0.7], [0.2, 0.7, -1.1]];
    let quad = |t: &[f64]| -> f64 { (0..3).map(|i| (0..3).map(|j| t[i] * a[i][j] * t[j]).sum::<f64>()).sum() };
    let est = laplace_predict(quad, &params)?;
    let mean = params.mean()?;
    let cov = params.covariance()?;
    let trace: f64 = (0..3).map(|i| (0..3).map(|j| a[i][j] * cov[j][i]).sum::<f64>()).sum();
    let closed = quad(&mean) + trace;
    let exact_err = (est.prediction - closed).abs();

    let mc = mc_normal_expectation(quad, &mean, &cov, 1_000_000, 11)?;
    let mc_z = (mc.mean - closed).abs() / mc.std_error;

    let beta = ConjugateParams::Beta(BetaParams { alpha: 50.0, beta: 150.0 });
    let b = BetaParams { alpha: 50.0, beta: 150.0 };
    let second_moment = b.variance() + b.mean() * b.mean();
    let beta_err = (laplace_predict(|t: &[f64]| t[0] * t[0], &beta)?.prediction - second_moment).abs();

    check(
        exact_err < 1e-10 && mc_z < 4.0 && beta_err < 1e-4,
        format!("quadratic error {exact_err:.2e}; Monte Carlo {mc_z:.2} SE away; Beta(50,150) p^2 error {beta_err:.2e}"),
    )
}

/// CSV outputs of a small pipeline run inside a pool of `threads` workers.
fn pipeline_csvs(threads: usize) -> Result<HashMap<&'static str, Vec<u8>>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");
    pool.install(|| {
        let data = generate(&GeneratorSpec { n_rows: 1_500, seed: 3, ..Default::default() })?;
        let pipeline = Pipeline {
            encoder: sampling(0.1, 3, MappingFunction::MeanOnly, 3),
            learner: LearnerSpec::RandomForest(ForestParams { n_trees: 20, seed: 3, ..Default::default() }),
        };
        let mut out = HashMap::new();

        let dir = tempfile::tempdir()?;
        let path = dir.path().join("data.csv");
        write_csv(&data, &path)?;
        out.insert("data", std::fs::read(&path)?);

        let model = EncoderModel::fit(&data, &EncoderConfig { k_draws: 3, seed: 3, ..Default::default() })?;
        let mut buf = Vec::new();
        model.transform(&data, 3, 0)?.write_csv_to("y", &mut buf)?;
        out.insert("encoded", buf);

        let mut buf = Vec::new();
        write_cv_csv(&cross_validate(&pipeline, &data, FOLDS, Metric::Accuracy, 3)?, &mut buf)?;
        out.insert("evaluate", buf);

        let values: Vec<String> = ["1", "2"].iter().map(|v| v.to_string()).collect();
        let mut buf = Vec::new();
        let rows = sweep(&pipeline, &data, SweepParam::KDraws, &values, 3, Metric::Accuracy, 3)?;
        write_sweep_csv(SweepParam::KDraws, &rows, &mut buf)?;
        out.insert("sweep", buf);
        Ok(out)
    })
}

fn thread_determinism() -> Result<Check> {
    let one = pipeline_csvs(1)?;
    let eight = pipeline_csvs(8)?;
    let mut names: Vec<&&str> = one.keys().collect();
    names.sort();
    let differing: Vec<String> = names.iter().filter(|n| one[**n] != eight[**n]).map(|n| n.to_string()).collect();
    let detail = if differing.is_empty() {
        format!("{} CSVs byte-identical with 1 and 8 threads", names.len())
    } else {
        format!("differ: {}", differing.join(", "))
    };
    check(differing.is_empty(), detail)
}

fn leakage_canary() -> Result<Check> {
    let data = generate(&GeneratorSpec { n_rows: 1_000, seed: 8, ..Default::default() })?;
    let folds = make_folds(&data.target.values, FOLDS, 8)?;
    let learner = LearnerSpec::RandomForest(ForestParams { n_trees: 5, seed: 8, ..Default::default() });
    let encoders = [
        sampling(0.1, 2, MappingFunction::MeanOnly, 8),
        EncoderSpec::TargetMean { leave_one_out: true, noise_sigma: 0.1, seed: 8 },
    ];
    let mut compared = 0;
    for encoder in encoders {
        let pipeline = Pipeline { encoder, learner: learner.clone() };
        for (f, held_out) in folds.iter().enumerate() {
            let mut poisoned = data.clone();
            let TargetValues::Binary(y) = &mut poisoned.target.values else { unreachable!() };
            for &r in held_out {
                y[r] = 1 - y[r];
            }
            let clean = serde_json::to_string(&fit_fold(&pipeline, &data, &folds, f)?.encoder)?;
            let dirty = serde_json::to_string(&fit_fold(&pipeline, &poisoned, &folds, f)?.encoder)?;
            if clean != dirty {
                return check(false, format!("fold {f} encoder changed after poisoning held-out targets"));
            }
            compared += 1;
        }
    }
    check(true, format!("{compared}/{compared} fold encoders byte-identical after poisoning held-out targets"))
}

// ---------------------------------------------------------------------------

type Criterion = (u32, &'static str, bool, fn() -> Result<Check>);

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        (1, "encoder comparison on blobs", false, || direction(blobs)),
        (2, "encoder comparison on quadratic data", false, || direction(quadratic)),
        (3, "accuracy plateau in K", false, k_plateau),
        (4, "gamma insensitivity then degradation", false, gamma_response),
        (5, "categorical importance shift", false, importance_shift),
        (6, "conjugate update examples", true, conjugate_examples),
        (7, "sampler moments and KS", true, sampler_moments),
        (8, "augmentation invariant", true, augmentation_fuzz),
        (9, "loss decomposition identity", true, decomposition_identity),
        (10, "Laplace correction exactness", true, laplace_exactness),
        (11, "thread-count determinism", true, thread_determinism),
        (12, "fold leakage canary", true, leakage_canary),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut hard_failures = 0;
    let mut summary = Vec::new();
    for (id, name, required, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        println!("criterion {id}: {name} ...");
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(c) => (c.pass, c.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass && required {
            hard_failures += 1;
        }
        summary.push(format!(
            "{} criterion {id} ({name}): {detail} [{:.0}s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        ));
        println!("{}", summary.last().unwrap());
    }
    println!("\nacceptance summary");
    for line in &summary {
        println!("{line}");
    }
    if hard_failures > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
