//! CART random forest: bootstrap per tree, random feature subset per split,
//! Gini impurity for classification and squared error for regression.
//!
//! Rows are sorted once per feature for the whole forest. Each tree filters
//! those orders down to its in-bag rows and keeps them sorted by stable
//! partitioning at every split, so a tree level costs `O(rows * features)`.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::LearnTarget;
use crate::error::{invalid, Error, Result};
use crate::sampler::StreamRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Minimum bootstrap weight on each side of a split.
    pub min_leaf: usize,
    /// Features tried per split; `None` means `floor(sqrt(p))`.
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 12,
            min_leaf: 1,
            features_per_split: None,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(invalid("n_trees must be at least 1"));
        }
        if self.max_depth == 0 {
            return Err(invalid("max_depth must be at least 1"));
        }
        if self.min_leaf == 0 {
            return Err(invalid("min_leaf must be at least 1"));
        }
        if self.features_per_split == Some(0) {
            return Err(invalid("features_per_split must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        offset: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
    leaf_values: Vec<f64>,
}

impl Tree {
    fn leaf(&self, row: &[f64]) -> &[f64] {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if row[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                Node::Leaf { offset } => {
                    let start = *offset as usize;
                    return &self.leaf_values[start..];
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub n_features: usize,
    /// Class count for classification, 1 for regression.
    pub n_outputs: usize,
    pub classification: bool,
    trees: Vec<Tree>,
    importances: Vec<f64>,
}

impl ForestModel {
    /// Mean decrease in impurity, normalised per tree then averaged.
    pub fn importances(&self) -> &[f64] {
        &self.importances
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Class probabilities (classification) or predicted values, one row per
    /// input row.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                found: x.ncols(),
            });
        }
        let k = self.n_outputs;
        let mut out = Array2::<f64>::zeros((x.nrows(), k));
        let scale = 1.0 / self.trees.len() as f64;
        let buf = out.as_slice_mut().expect("fresh arrays are contiguous");
        buf.par_chunks_mut(k).enumerate().for_each(|(r, dst)| {
            let row: Vec<f64> = x.row(r).to_vec();
            for tree in &self.trees {
                for (d, v) in dst.iter_mut().zip(tree.leaf(&row)) {
                    *d += v;
                }
            }
            dst.iter_mut().for_each(|d| *d *= scale);
        });
        Ok(out)
    }

    pub fn fit(params: &ForestParams, x: ArrayView2<f64>, target: &LearnTarget) -> Result<Self> {
        params.validate()?;
        let n = x.nrows();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if target.len() != n {
            return Err(invalid(format!("{} targets for {n} rows", target.len())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("forest features must be finite"));
        }
        let p = x.ncols();
        let x = x.as_standard_layout().into_owned();
        let columns: Vec<Vec<f64>> = (0..p).map(|j| x.column(j).to_vec()).collect();
        let sorted: Vec<Vec<u32>> = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
                idx
            })
            .collect();
        let mtry = params
            .features_per_split
            .unwrap_or_else(|| ((p as f64).sqrt().floor() as usize).max(1))
            .min(p)
            .max(1);

        let (n_outputs, classification) = match target {
            LearnTarget::Classes { n_classes, .. } => (*n_classes, true),
            LearnTarget::Values(_) => (1, false),
        };

        let trees: Vec<(Tree, Vec<f64>)> = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = StreamRng::seed_from(params.seed, t as u64);
                let mut builder = TreeBuilder::new(&columns, &sorted, target, params, mtry, &mut rng);
                builder.grow_root(&mut rng);
                builder.finish()
            })
            .collect();

        let mut importances = vec![0.0; p];
        let mut trees_out = Vec::with_capacity(trees.len());
        for (tree, imp) in trees {
            let total: f64 = imp.iter().sum();
            if total > 0.0 {
                for (acc, v) in importances.iter_mut().zip(&imp) {
                    *acc += v / total;
                }
            }
            trees_out.push(tree);
        }
        let total: f64 = importances.iter().sum();
        if total > 0.0 {
            importances.iter_mut().for_each(|v| *v /= total);
        }
        Ok(Self {
            n_features: p,
            n_outputs,
            classification,
            trees: trees_out,
            importances,
        })
    }
}

/// Weighted label statistics of a set of rows.
#[derive(Clone)]
enum Acc {
    Classes(Vec<f64>),
    Moments { sum: f64, sum_sq: f64 },
}

struct TreeBuilder<'a> {
    columns: &'a [Vec<f64>],
    target: &'a LearnTarget<'a>,
    params: &'a ForestParams,
    mtry: usize,
    weight: Vec<u32>,
    order: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
    nodes: Vec<Node>,
    leaf_values: Vec<f64>,
    importance: Vec<f64>,
    features: Vec<usize>,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    /// Number of distinct rows going left.
    left_rows: usize,
    gain: f64,
}

impl<'a> TreeBuilder<'a> {
    fn new(
        columns: &'a [Vec<f64>],
        sorted: &[Vec<u32>],
        target: &'a LearnTarget<'a>,
        params: &'a ForestParams,
        mtry: usize,
        rng: &mut StreamRng,
    ) -> Self {
        let n = target.len();
        let mut weight = vec![0u32; n];
        for _ in 0..n {
            weight[rng.below(n as u64) as usize] += 1;
        }
        let order = sorted
            .iter()
            .map(|idx| idx.iter().copied().filter(|&r| weight[r as usize] > 0).collect())
            .collect();
        Self {
            columns,
            target,
            params,
            mtry,
            weight,
            order,
            goes_left: vec![false; n],
            scratch: Vec::new(),
            nodes: Vec::new(),
            leaf_values: Vec::new(),
            importance: vec![0.0; columns.len()],
            features: (0..columns.len()).collect(),
        }
    }

    fn finish(self) -> (Tree, Vec<f64>) {
        (
            Tree {
                nodes: self.nodes,
                leaf_values: self.leaf_values,
            },
            self.importance,
        )
    }

    fn empty_acc(&self) -> Acc {
        match self.target {
            LearnTarget::Classes { n_classes, .. } => Acc::Classes(vec![0.0; *n_classes]),
            LearnTarget::Values(_) => Acc::Moments { sum: 0.0, sum_sq: 0.0 },
        }
    }

    #[inline]
    fn add(&self, acc: &mut Acc, row: usize, sign: f64) {
        let w = self.weight[row] as f64 * sign;
        match (acc, self.target) {
            (Acc::Classes(c), LearnTarget::Classes { labels, .. }) => c[labels[row]] += w,
            (Acc::Moments { sum, sum_sq }, LearnTarget::Values(y)) => {
                *sum += w * y[row];
                *sum_sq += w * y[row] * y[row];
            }
            _ => unreachable!("accumulator matches target kind"),
        }
    }

    /// `sum c^2 / W` for classes, `S^2 / W` for values; impurity times weight
    /// is `W - score` (Gini) or `sum_sq - score` (squared error).
    #[inline]
    fn score(acc: &Acc, w: f64) -> f64 {
        match acc {
            Acc::Classes(c) => c.iter().map(|v| v * v).sum::<f64>() / w,
            Acc::Moments { sum, .. } => sum * sum / w,
        }
    }

    /// `score(left) + score(total - left)` without materialising the right side.
    #[inline]
    fn split_score(left: &Acc, total: &Acc, wl: f64, wr: f64) -> f64 {
        match (left, total) {
            (Acc::Classes(l), Acc::Classes(t)) => {
                let (mut sl, mut sr) = (0.0, 0.0);
                for (a, b) in l.iter().zip(t) {
                    let r = b - a;
                    sl += a * a;
                    sr += r * r;
                }
                sl / wl + sr / wr
            }
            (Acc::Moments { sum: ls, .. }, Acc::Moments { sum: ts, .. }) => {
                let rs = ts - ls;
                ls * ls / wl + rs * rs / wr
            }
            _ => unreachable!("accumulators share the target kind"),
        }
    }

    fn weighted_impurity(acc: &Acc, w: f64) -> f64 {
        match acc {
            Acc::Classes(_) => w - Self::score(acc, w),
            Acc::Moments { sum_sq, .. } => sum_sq - Self::score(acc, w),
        }
    }

    fn grow_root(&mut self, rng: &mut StreamRng) {
        let len = self.order[0].len();
        self.grow(0, len, 0, rng);
    }

    fn make_leaf(&mut self, acc: &Acc, w: f64) -> u32 {
        let offset = self.leaf_values.len() as u32;
        match acc {
            Acc::Classes(c) => self.leaf_values.extend(c.iter().map(|v| v / w)),
            Acc::Moments { sum, .. } => self.leaf_values.push(sum / w),
        }
        self.nodes.push(Node::Leaf { offset });
        (self.nodes.len() - 1) as u32
    }

    fn grow(&mut self, start: usize, end: usize, depth: usize, rng: &mut StreamRng) -> u32 {
        let mut acc = self.empty_acc();
        let mut w = 0.0;
        for i in start..end {
            let r = self.order[0][i] as usize;
            self.add(&mut acc, r, 1.0);
            w += self.weight[r] as f64;
        }
        let impurity = Self::weighted_impurity(&acc, w);
        let min_leaf = self.params.min_leaf as f64;
        if depth >= self.params.max_depth || end - start < 2 || w < 2.0 * min_leaf || impurity <= 1e-12 * w {
            return self.make_leaf(&acc, w);
        }

        let Some(split) = self.find_split(start, end, &acc, w, rng) else {
            return self.make_leaf(&acc, w);
        };
        self.importance[split.feature] += split.gain;

        // Partition every feature order around the chosen split.
        let mid = start + split.left_rows;
        for i in start..end {
            let r = self.order[split.feature][i] as usize;
            self.goes_left[r] = i < mid;
        }
        for f in 0..self.order.len() {
            if f == split.feature {
                continue;
            }
            self.scratch.clear();
            let list = &mut self.order[f];
            let mut write = start;
            for i in start..end {
                let r = list[i];
                if self.goes_left[r as usize] {
                    list[write] = r;
                    write += 1;
                } else {
                    self.scratch.push(r);
                }
            }
            list[write..end].copy_from_slice(&self.scratch);
        }

        let idx = self.nodes.len();
        self.nodes.push(Node::Leaf { offset: 0 });
        let left = self.grow(start, mid, depth + 1, rng);
        let right = self.grow(mid, end, depth + 1, rng);
        self.nodes[idx] = Node::Split {
            feature: split.feature as u32,
            threshold: split.threshold,
            left,
            right,
        };
        idx as u32
    }

    fn find_split(&mut self, start: usize, end: usize, total: &Acc, w: f64, rng: &mut StreamRng) -> Option<SplitChoice> {
        let p = self.features.len();
        let parent_score = Self::score(total, w);
        let min_leaf = self.params.min_leaf as f64;
        let mut best: Option<SplitChoice> = None;
        let mut best_score = f64::NEG_INFINITY;

        for tried in 0..p {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            let j = tried + rng.below((p - tried) as u64) as usize;
            self.features.swap(tried, j);
            let f = self.features[tried];
            let col = &self.columns[f];
            let list = &self.order[f];

            let mut left = self.empty_acc();
            let mut wl = 0.0;
            for i in start..end - 1 {
                let r = list[i] as usize;
                self.add(&mut left, r, 1.0);
                wl += self.weight[r] as f64;
                let x0 = col[r];
                let x1 = col[list[i + 1] as usize];
                if !(x0 < x1) {
                    continue;
                }
                let wr = w - wl;
                if wl < min_leaf || wr < min_leaf {
                    continue;
                }
                let score = Self::split_score(&left, total, wl, wr);
                if score > best_score {
                    best_score = score;
                    let mut threshold = 0.5 * (x0 + x1);
                    if threshold >= x1 {
                        threshold = x0;
                    }
                    best = Some(SplitChoice {
                        feature: f,
                        threshold,
                        left_rows: i + 1 - start,
                        gain: 0.0,
                    });
                }
            }
        }
        best.map(|mut s| {
            // Weighted impurity decrease: (W - parent) - (W - children).
            s.gain = (best_score - parent_score).max(0.0);
            s
        })
    }
}
