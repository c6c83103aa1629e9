//! Tabular datasets, synthetic generators, quantile binning and CSV I/O.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conjugate::{Task, TargetStats};
use crate::error::{invalid, Error, Result};
use crate::sampler::StreamRng;

/// Cells of one feature column. Categorical cells are strings; the empty
/// string marks a missing value.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureValues {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl FeatureValues {
    pub fn len(&self) -> usize {
        match self {
            FeatureValues::Numeric(v) => v.len(),
            FeatureValues::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn subset(&self, rows: &[usize]) -> Self {
        match self {
            FeatureValues::Numeric(v) => FeatureValues::Numeric(rows.iter().map(|&r| v[r]).collect()),
            FeatureValues::Categorical(v) => {
                FeatureValues::Categorical(rows.iter().map(|&r| v[r].clone()).collect())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Feature {
    pub name: String,
    pub values: FeatureValues,
}

impl Feature {
    pub fn numeric(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values: FeatureValues::Numeric(values),
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, values: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            values: FeatureValues::Categorical(values.into_iter().map(Into::into).collect()),
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.values, FeatureValues::Categorical(_))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TargetValues {
    /// 0/1 labels.
    Binary(Vec<u8>),
    /// Class labels; class order is first appearance.
    Multiclass(Vec<String>),
    Regression(Vec<f64>),
}

impl TargetValues {
    pub fn task(&self) -> Task {
        match self {
            TargetValues::Binary(_) => Task::Binary,
            TargetValues::Multiclass(_) => Task::Multiclass,
            TargetValues::Regression(_) => Task::Regression,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TargetValues::Binary(v) => v.len(),
            TargetValues::Multiclass(v) => v.len(),
            TargetValues::Regression(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        match self {
            TargetValues::Binary(v) => TargetValues::Binary(rows.iter().map(|&r| v[r]).collect()),
            TargetValues::Multiclass(v) => {
                TargetValues::Multiclass(rows.iter().map(|&r| v[r].clone()).collect())
            }
            TargetValues::Regression(v) => TargetValues::Regression(rows.iter().map(|&r| v[r]).collect()),
        }
    }

    /// Class labels in order of first appearance (binary: `["0", "1"]`).
    pub fn classes(&self) -> Vec<String> {
        match self {
            TargetValues::Binary(_) => vec!["0".into(), "1".into()],
            TargetValues::Multiclass(v) => {
                let mut seen = HashMap::new();
                let mut order = Vec::new();
                for label in v {
                    if !seen.contains_key(label) {
                        seen.insert(label.clone(), order.len());
                        order.push(label.clone());
                    }
                }
                order
            }
            TargetValues::Regression(_) => Vec::new(),
        }
    }

    /// Class index of every row given a class ordering. Unknown labels are
    /// an error.
    pub fn class_indices(&self, classes: &[String]) -> Result<Vec<usize>> {
        match self {
            TargetValues::Binary(v) => Ok(v.iter().map(|&y| y as usize).collect()),
            TargetValues::Multiclass(v) => {
                let index: HashMap<&str, usize> =
                    classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
                v.iter()
                    .map(|label| {
                        index
                            .get(label.as_str())
                            .copied()
                            .ok_or_else(|| invalid(format!("unknown class label `{label}`")))
                    })
                    .collect()
            }
            TargetValues::Regression(_) => Err(Error::TaskMismatch {
                expected: "classification".into(),
                found: "regression".into(),
            }),
        }
    }

    /// Sufficient statistics of the selected rows.
    pub fn stats(&self, rows: impl Iterator<Item = usize>, classes: &[String]) -> Result<TargetStats> {
        Ok(match self {
            TargetValues::Binary(v) => {
                let mut s = TargetStats::empty(Task::Binary, 2);
                rows.for_each(|r| s.push_binary(v[r]));
                s
            }
            TargetValues::Multiclass(_) => {
                let idx = self.class_indices(classes)?;
                let mut s = TargetStats::empty(Task::Multiclass, classes.len());
                rows.for_each(|r| s.push_class(idx[r]));
                s
            }
            TargetValues::Regression(v) => {
                let mut s = TargetStats::empty(Task::Regression, 0);
                rows.for_each(|r| s.push_value(v[r]));
                s
            }
        })
    }

    /// The value as a CSV cell.
    pub fn cell(&self, row: usize) -> String {
        match self {
            TargetValues::Binary(v) => v[row].to_string(),
            TargetValues::Multiclass(v) => v[row].clone(),
            TargetValues::Regression(v) => format_f64(v[row]),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Target {
    pub name: String,
    pub values: TargetValues,
}

/// Column roles of a CSV file. Columns that are neither the target nor
/// listed as categorical are numeric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub task: Task,
    pub target: String,
    #[serde(default)]
    pub categorical: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Vec<Feature>,
    pub target: Target,
}

impl Dataset {
    pub fn new(features: Vec<Feature>, target: Target) -> Result<Self> {
        let n = target.values.len();
        let mut names = std::collections::HashSet::new();
        for f in &features {
            if f.values.len() != n {
                return Err(Error::SchemaMismatch(format!(
                    "column `{}` has {} rows, target has {n}",
                    f.name,
                    f.values.len()
                )));
            }
            if !names.insert(f.name.as_str()) || f.name == target.name {
                return Err(Error::SchemaMismatch(format!("duplicate column `{}`", f.name)));
            }
        }
        if let TargetValues::Binary(v) = &target.values {
            if v.iter().any(|&y| y > 1) {
                return Err(invalid("binary target must be 0 or 1"));
            }
        }
        Ok(Self { features, target })
    }

    pub fn n_rows(&self) -> usize {
        self.target.values.len()
    }

    pub fn task(&self) -> Task {
        self.target.values.task()
    }

    pub fn feature(&self, name: &str) -> Option<&Feature> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn schema(&self) -> Schema {
        Schema {
            task: self.task(),
            target: self.target.name.clone(),
            categorical: self
                .features
                .iter()
                .filter(|f| f.is_categorical())
                .map(|f| f.name.clone())
                .collect(),
        }
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self
                .features
                .iter()
                .map(|f| Feature {
                    name: f.name.clone(),
                    values: f.values.subset(rows),
                })
                .collect(),
            target: Target {
                name: self.target.name.clone(),
                values: self.target.values.subset(rows),
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Quantile binning

#[derive(Clone, Debug, PartialEq)]
pub struct BinnedColumn {
    pub labels: Vec<String>,
    /// Inner edges; a value `x` falls in bin `#{e : e < x}`.
    pub edges: Vec<f64>,
    pub n_bins: usize,
}

/// Linear-interpolated empirical quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Discretises a numeric column at its empirical `i / n_bins` quantiles.
///
/// Duplicate edges and edges that would leave a bin empty are merged away,
/// so the result may have fewer than `n_bins` bins (`n_bins` reports the
/// actual count). Labels are `b0, b1, ...` in increasing value order.
pub fn quantile_bin(values: &[f64], n_bins: usize) -> Result<BinnedColumn> {
    if n_bins < 2 {
        return Err(invalid("n_bins must be at least 2"));
    }
    if values.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("cannot bin non-finite values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);

    let mut edges: Vec<f64> = (1..n_bins)
        .map(|i| quantile_sorted(&sorted, i as f64 / n_bins as f64))
        .collect();
    edges.dedup();

    // Drop edges that leave an empty bin: bin i holds (edges[i-1], edges[i]].
    let count_le = |x: f64| sorted.partition_point(|v| *v <= x);
    let mut kept: Vec<f64> = Vec::with_capacity(edges.len());
    let mut prev_count = 0usize;
    for e in edges {
        let c = count_le(e);
        if c > prev_count && c < sorted.len() {
            kept.push(e);
            prev_count = c;
        }
    }

    let labels = values
        .iter()
        .map(|&x| format!("b{}", kept.partition_point(|e| *e < x)))
        .collect();
    Ok(BinnedColumn {
        labels,
        n_bins: kept.len() + 1,
        edges: kept,
    })
}

// ---------------------------------------------------------------------------
// Synthetic generators

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Gaussian clusters at hypercube vertices, labelled by cluster.
    ClassificationBlobs,
    /// Ten standard normals; label is `sum(x^2) > median(chi2_10)`.
    HastieQuadratic,
}

/// Median of the chi-squared distribution with 10 degrees of freedom.
pub const CHI2_10_MEDIAN: f64 = 9.341_817_765_591_966;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub n_rows: usize,
    pub n_features: usize,
    pub n_informative: usize,
    pub n_categorical: usize,
    pub bins_min: usize,
    pub bins_max: usize,
    /// Half the hypercube side on which cluster centres sit.
    pub class_sep: f64,
    pub clusters_per_class: usize,
    /// Fraction of labels replaced by coin flips.
    pub flip_y: f64,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            kind: GeneratorKind::ClassificationBlobs,
            n_rows: 10_000,
            n_features: 10,
            n_informative: 5,
            n_categorical: 2,
            bins_min: 10,
            bins_max: 20,
            class_sep: 1.0,
            clusters_per_class: 2,
            flip_y: 0.01,
            seed: 0,
        }
    }
}

impl GeneratorSpec {
    pub fn hastie(n_rows: usize, n_categorical: usize, seed: u64) -> Self {
        Self {
            kind: GeneratorKind::HastieQuadratic,
            n_rows,
            n_features: 10,
            n_informative: 10,
            n_categorical,
            flip_y: 0.0,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rows == 0 {
            return Err(invalid("n_rows must be positive"));
        }
        if self.n_features == 0 {
            return Err(invalid("n_features must be positive"));
        }
        if self.n_categorical > self.n_features {
            return Err(invalid("n_categorical exceeds n_features"));
        }
        if self.bins_min < 2 || self.bins_min > self.bins_max {
            return Err(invalid("need 2 <= bins_min <= bins_max"));
        }
        if !(0.0..=1.0).contains(&self.flip_y) {
            return Err(invalid("flip_y must lie in [0, 1]"));
        }
        match self.kind {
            GeneratorKind::ClassificationBlobs => {
                if self.n_informative == 0 || self.n_informative > self.n_features {
                    return Err(invalid("need 1 <= n_informative <= n_features"));
                }
                if self.clusters_per_class == 0 {
                    return Err(invalid("clusters_per_class must be positive"));
                }
                if 2 * self.clusters_per_class > 1usize << self.n_informative.min(30) {
                    return Err(invalid("more clusters than hypercube vertices"));
                }
                if !(self.class_sep > 0.0) {
                    return Err(invalid("class_sep must be positive"));
                }
            }
            GeneratorKind::HastieQuadratic => {
                if self.n_features != 10 {
                    return Err(invalid("hastie_quadratic has exactly 10 features"));
                }
            }
        }
        Ok(())
    }
}

/// Label rule of the quadratic generator.
pub fn hastie_label(x: &[f64]) -> u8 {
    u8::from(x.iter().map(|v| v * v).sum::<f64>() > CHI2_10_MEDIAN)
}

/// Generates a binary dataset and bins the first `n_categorical` informative
/// columns. Output columns are named `x0..`, numeric first, binned
/// categorical columns last; the target is `y`.
pub fn generate(spec: &GeneratorSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = StreamRng::seed_from(spec.seed, 0);
    let n = spec.n_rows;
    let p = spec.n_features;
    // Column-major raw features.
    let mut cols = vec![vec![0.0; n]; p];
    let mut labels = vec![0u8; n];

    match spec.kind {
        GeneratorKind::HastieQuadratic => {
            let mut row = vec![0.0; p];
            for r in 0..n {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = rng.standard_normal();
                    cols[j][r] = *v;
                }
                labels[r] = hastie_label(&row);
            }
        }
        GeneratorKind::ClassificationBlobs => {
            let d = spec.n_informative;
            let n_clusters = 2 * spec.clusters_per_class;
            // Distinct hypercube vertices.
            let mut vertices: Vec<u64> = Vec::with_capacity(n_clusters);
            while vertices.len() < n_clusters {
                let v = if d >= 64 { rng.next_u64() } else { rng.below(1u64 << d) };
                if !vertices.contains(&v) {
                    vertices.push(v);
                }
            }
            let centroids: Vec<Vec<f64>> = vertices
                .iter()
                .map(|v| {
                    (0..d)
                        .map(|j| if (v >> (j % 64)) & 1 == 1 { spec.class_sep } else { -spec.class_sep })
                        .collect()
                })
                .collect();
            // Per-cluster random linear map for a non-spherical covariance.
            let transforms: Vec<Vec<f64>> = (0..n_clusters)
                .map(|_| (0..d * d).map(|_| 2.0 * rng.uniform() - 1.0).collect())
                .collect();
            let mut z = vec![0.0; d];
            for r in 0..n {
                let cluster = r % n_clusters;
                labels[r] = (cluster % 2) as u8;
                z.iter_mut().for_each(|v| *v = rng.standard_normal());
                let a = &transforms[cluster];
                for j in 0..d {
                    let mut acc = centroids[cluster][j];
                    for (i, zi) in z.iter().enumerate() {
                        acc += zi * a[i * d + j];
                    }
                    cols[j][r] = acc;
                }
                for col in cols.iter_mut().skip(d) {
                    col[r] = rng.standard_normal();
                }
            }
            for label in labels.iter_mut() {
                if rng.uniform() < spec.flip_y {
                    *label = u8::from(rng.uniform() < 0.5);
                }
            }
            // Row shuffle so clusters are not interleaved by index.
            let mut order: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut order);
            for col in cols.iter_mut() {
                *col = order.iter().map(|&r| col[r]).collect();
            }
            labels = order.iter().map(|&r| labels[r]).collect();
        }
    }

    let mut numeric = Vec::new();
    let mut categorical = Vec::new();
    for (j, col) in cols.into_iter().enumerate() {
        if j < spec.n_categorical {
            let span = (spec.bins_max - spec.bins_min + 1) as u64;
            let bins = spec.bins_min + rng.below(span) as usize;
            categorical.push(quantile_bin(&col, bins)?.labels);
        } else {
            numeric.push(col);
        }
    }
    let mut features = Vec::with_capacity(p);
    for col in numeric {
        features.push(Feature::numeric(format!("x{}", features.len()), col));
    }
    for col in categorical {
        features.push(Feature::categorical(format!("x{}", features.len()), col));
    }
    Dataset::new(
        features,
        Target {
            name: "y".into(),
            values: TargetValues::Binary(labels),
        },
    )
}

// ---------------------------------------------------------------------------
// CSV

/// Shortest decimal that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v}")
}

pub fn read_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv_from(file, schema)
}

pub fn read_csv_from<R: Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(Error::SchemaMismatch("missing header row".into())),
    };
    let names: Vec<String> = header.iter().map(str::to_owned).collect();
    for wanted in std::iter::once(&schema.target).chain(&schema.categorical) {
        if !names.contains(wanted) {
            return Err(Error::SchemaMismatch(format!("unknown column `{wanted}`")));
        }
    }
    let target_idx = names.iter().position(|n| *n == schema.target).unwrap();

    let mut raw: Vec<Vec<String>> = vec![Vec::new(); names.len()];
    for record in records {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { .. } => Error::Csv {
                line: e.position().map(|p| p.line()).unwrap_or(0),
                message: "ragged row".into(),
            },
            _ => e.into(),
        })?;
        for (col, cell) in raw.iter_mut().zip(record.iter()) {
            col.push(cell.to_owned());
        }
    }

    let parse_num = |col: &str, row: usize, cell: &str| -> Result<f64> {
        cell.trim().parse::<f64>().map_err(|_| Error::Csv {
            line: row as u64 + 2,
            message: format!("non-numeric cell `{cell}` in numeric column `{col}`"),
        })
    };

    let mut features = Vec::new();
    let mut target = None;
    for (j, (name, cells)) in names.iter().zip(raw).enumerate() {
        if j == target_idx {
            let values = match schema.task {
                Task::Binary => TargetValues::Binary(
                    cells
                        .iter()
                        .enumerate()
                        .map(|(r, c)| {
                            let v = parse_num(name, r, c)?;
                            if v == 0.0 || v == 1.0 {
                                Ok(v as u8)
                            } else {
                                Err(Error::Csv {
                                    line: r as u64 + 2,
                                    message: format!("binary target must be 0 or 1, got `{c}`"),
                                })
                            }
                        })
                        .collect::<Result<_>>()?,
                ),
                Task::Multiclass => TargetValues::Multiclass(cells),
                Task::Regression => TargetValues::Regression(
                    cells
                        .iter()
                        .enumerate()
                        .map(|(r, c)| parse_num(name, r, c))
                        .collect::<Result<_>>()?,
                ),
            };
            target = Some(Target {
                name: name.clone(),
                values,
            });
        } else if schema.categorical.contains(name) {
            features.push(Feature::categorical(name.clone(), cells));
        } else {
            let values = cells
                .iter()
                .enumerate()
                .map(|(r, c)| parse_num(name, r, c))
                .collect::<Result<_>>()?;
            features.push(Feature::numeric(name.clone(), values));
        }
    }
    Dataset::new(features, target.expect("target index located above"))
}

pub fn write_csv_to<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let header: Vec<&str> = data
        .features
        .iter()
        .map(|f| f.name.as_str())
        .chain(std::iter::once(data.target.name.as_str()))
        .collect();
    wtr.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for r in 0..data.n_rows() {
        row.clear();
        for f in &data.features {
            row.push(match &f.values {
                FeatureValues::Numeric(v) => format_f64(v[r]),
                FeatureValues::Categorical(v) => v[r].clone(),
            });
        }
        row.push(data.target.values.cell(r));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv_to(data, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_schema(categorical: &[&str]) -> Schema {
        Schema {
            task: Task::Binary,
            target: "y".into(),
            categorical: categorical.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn uniform_ranks_bin_evenly() {
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        let b = quantile_bin(&values, 10).unwrap();
        assert_eq!(b.n_bins, 10);
        for i in 0..10 {
            let label = format!("b{i}");
            assert_eq!(b.labels.iter().filter(|l| **l == label).count(), 10);
        }
    }

    #[test]
    fn constant_column_merges_to_one_bin() {
        let b = quantile_bin(&[3.0; 50], 10).unwrap();
        assert_eq!(b.n_bins, 1);
        assert!(b.labels.iter().all(|l| l == "b0"));
    }

    #[test]
    fn heavy_ties_never_leave_empty_bins() {
        let mut values = vec![0.0; 90];
        values.extend((1..=10).map(f64::from));
        let b = quantile_bin(&values, 10).unwrap();
        for i in 0..b.n_bins {
            let label = format!("b{i}");
            assert!(b.labels.contains(&label), "bin {i} empty");
        }
    }

    #[test]
    fn binning_rejects_bad_input() {
        assert!(quantile_bin(&[1.0, 2.0], 1).is_err());
        assert!(quantile_bin(&[], 4).is_err());
    }

    #[test]
    fn generate_is_deterministic() {
        let spec = GeneratorSpec { n_rows: 500, seed: 3, ..Default::default() };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    }

    #[test]
    fn generated_layout() {
        let spec = GeneratorSpec { n_rows: 400, seed: 1, ..Default::default() };
        let data = generate(&spec).unwrap();
        assert_eq!(data.features.len(), 10);
        assert!(data.features[..8].iter().all(|f| !f.is_categorical()));
        assert!(data.features[8..].iter().all(|f| f.is_categorical()));
        assert_eq!(data.schema().categorical, vec!["x8", "x9"]);
    }

    #[test]
    fn hastie_boundary_is_strict() {
        let mut x = [0.0; 10];
        x[0] = CHI2_10_MEDIAN.sqrt();
        let s: f64 = x.iter().map(|v| v * v).sum();
        assert_eq!(hastie_label(&x), u8::from(s > CHI2_10_MEDIAN));
        x[0] = 3.0; // 9 < median
        assert_eq!(hastie_label(&x), 0);
        x[1] = 0.6; // 9.36 > median
        assert_eq!(hastie_label(&x), 1);
    }

    #[test]
    fn impossible_specs_rejected() {
        let bad = [
            GeneratorSpec { n_categorical: 11, ..Default::default() },
            GeneratorSpec { bins_min: 12, bins_max: 10, ..Default::default() },
            GeneratorSpec { n_informative: 0, ..Default::default() },
            GeneratorSpec { n_informative: 1, clusters_per_class: 2, ..Default::default() },
            GeneratorSpec { kind: GeneratorKind::HastieQuadratic, n_features: 5, ..Default::default() },
        ];
        for spec in bad {
            assert!(generate(&spec).is_err(), "{spec:?}");
        }
    }

    #[test]
    fn quoted_cell_is_single_value() {
        let text = "c,x,y\n\"a,b\",1.5,1\nz,2,0\n";
        let d = read_csv_from(text.as_bytes(), &binary_schema(&["c"])).unwrap();
        let FeatureValues::Categorical(c) = &d.features[0].values else { panic!() };
        assert_eq!(c[0], "a,b");
    }

    #[test]
    fn missing_header_is_error() {
        let err = read_csv_from("".as_bytes(), &binary_schema(&[])).unwrap_err();
        assert!(matches!(err, Error::SchemaMismatch(_)));
        // A data row where the header belongs names no target column.
        assert!(read_csv_from("1,0\n2,1\n".as_bytes(), &binary_schema(&[])).is_err());
    }

    #[test]
    fn csv_errors() {
        let s = binary_schema(&[]);
        assert!(read_csv_from("x,y\n1,0\n2\n".as_bytes(), &s).is_err());
        assert!(read_csv_from("x,y\nfoo,0\n".as_bytes(), &s).is_err());
        assert!(read_csv_from("x,y\n1,2\n".as_bytes(), &s).is_err());
        assert!(read_csv_from("x,y\n1,0\n".as_bytes(), &binary_schema(&["nope"])).is_err());
    }

    #[test]
    fn csv_round_trip_generated() {
        let data = generate(&GeneratorSpec { n_rows: 300, seed: 8, ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        write_csv_to(&data, &mut buf).unwrap();
        let back = read_csv_from(buf.as_slice(), &data.schema()).unwrap();
        assert_eq!(back, data);
    }
}
