//! CART trees and bagged random forests.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::MetricKind;
use crate::dataset::{FeatureTable, TaskKind};
use crate::error::{Error, Result};
use crate::seed::{rng_from, Rng as SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 20,
            max_depth: 12,
            min_leaf: 2,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 || self.min_leaf == 0 {
            return Err(Error::InvalidArgument(format!(
                "forest parameters must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// One fitted regression or classification tree. Feature indices refer to
/// the original table columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    pub bag_size: usize,
}

impl DecisionTree {
    fn predict_with(&self, value: impl Fn(usize) -> f64) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if value(feature) <= threshold { left } else { right },
            }
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub task: TaskKind,
    pub params: ForestParams,
    /// Table columns the model was trained on, ascending.
    pub features: Vec<usize>,
    pub trees: Vec<DecisionTree>,
    /// Every masked feature was constant on the training rows, so each tree
    /// is a single leaf predicting the majority class or the mean.
    pub constant_features: bool,
}

struct Builder<'a> {
    table: &'a FeatureTable,
    features: &'a [usize],
    classification: bool,
    n_classes: usize,
    mtry: usize,
    params: ForestParams,
    nodes: Vec<Node>,
}

/// Impurity totals for a set of rows: Gini counts or sum / sum of squares.
#[derive(Clone)]
enum Stats {
    Counts(Vec<usize>, usize),
    Moments { n: usize, sum: f64, sq: f64 },
}

impl Stats {
    fn empty(classification: bool, n_classes: usize) -> Self {
        if classification {
            Stats::Counts(vec![0; n_classes], 0)
        } else {
            Stats::Moments { n: 0, sum: 0.0, sq: 0.0 }
        }
    }

    fn add(&mut self, y: f64) {
        match self {
            Stats::Counts(c, n) => {
                c[y as usize] += 1;
                *n += 1;
            }
            Stats::Moments { n, sum, sq } => {
                *n += 1;
                *sum += y;
                *sq += y * y;
            }
        }
    }

    fn remove(&mut self, y: f64) {
        match self {
            Stats::Counts(c, n) => {
                c[y as usize] -= 1;
                *n -= 1;
            }
            Stats::Moments { n, sum, sq } => {
                *n -= 1;
                *sum -= y;
                *sq -= y * y;
            }
        }
    }

    /// Size-weighted impurity: `n·gini` or the sum of squared deviations.
    fn weighted_impurity(&self) -> f64 {
        match self {
            Stats::Counts(c, n) => {
                if *n == 0 {
                    return 0.0;
                }
                let n = *n as f64;
                n - c.iter().map(|&k| (k * k) as f64).sum::<f64>() / n
            }
            Stats::Moments { n, sum, sq } => {
                if *n == 0 {
                    return 0.0;
                }
                (sq - sum * sum / *n as f64).max(0.0)
            }
        }
    }

    /// Majority class (lowest id on ties) or mean.
    fn leaf_value(&self) -> f64 {
        match self {
            Stats::Counts(c, _) => {
                let mut best = 0;
                for (i, &k) in c.iter().enumerate() {
                    if k > c[best] {
                        best = i;
                    }
                }
                best as f64
            }
            Stats::Moments { n, sum, .. } => sum / *n as f64,
        }
    }
}

impl Builder<'_> {
    fn stats(&self, rows: &[usize]) -> Stats {
        let mut s = Stats::empty(self.classification, self.n_classes);
        let labels = self.table.labels();
        for &r in rows {
            s.add(labels[r]);
        }
        s
    }

    fn build(&mut self, rows: &mut [usize], depth: usize, rng: &mut SeededRng) -> usize {
        let id = self.nodes.len();
        let stats = self.stats(rows);
        self.nodes.push(Node::Leaf(stats.leaf_value()));
        let parent = stats.weighted_impurity();
        if depth >= self.params.max_depth || rows.len() < 2 * self.params.min_leaf || parent <= 1e-12 {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(rows, &stats, parent, rng) else {
            return id;
        };
        let column = self.table.column(feature);
        let split = partition(rows, |r| column[r] <= threshold);
        let (left_rows, right_rows) = rows.split_at_mut(split);
        let left = self.build(left_rows, depth + 1, rng);
        let right = self.build(right_rows, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&self, rows: &[usize], total: &Stats, parent: f64, rng: &mut SeededRng) -> Option<(usize, f64)> {
        let labels = self.table.labels();
        let min_leaf = self.params.min_leaf;
        let mut candidates: Vec<usize> = sample(rng, self.features.len(), self.mtry)
            .into_iter()
            .map(|i| self.features[i])
            .collect();
        candidates.sort_unstable();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = rows.to_vec();
        for feature in candidates {
            let column = self.table.column(feature);
            order.sort_by(|&a, &b| column[a].total_cmp(&column[b]).then(a.cmp(&b)));
            let mut left = Stats::empty(self.classification, self.n_classes);
            let mut right = total.clone();
            for i in 0..order.len() - 1 {
                let y = labels[order[i]];
                left.add(y);
                right.remove(y);
                let (x, x_next) = (column[order[i]], column[order[i + 1]]);
                if x == x_next || i + 1 < min_leaf || order.len() - i - 1 < min_leaf {
                    continue;
                }
                let impurity = left.weighted_impurity() + right.weighted_impurity();
                if impurity < parent - 1e-12 && best.is_none_or(|b| impurity < b.0) {
                    best = Some((impurity, feature, x + (x_next - x) / 2.0));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

/// Stable in-place partition; returns the size of the `true` prefix.
fn partition(rows: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let (yes, no): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| pred(r));
    let k = yes.len();
    rows[..k].copy_from_slice(&yes);
    rows[k..].copy_from_slice(&no);
    k
}

fn features_per_split(task: TaskKind, d: usize) -> usize {
    let m = if task.is_classification() {
        (d as f64).sqrt().floor() as usize
    } else {
        d / 3
    };
    m.clamp(1, d)
}

/// Fits `params.n_trees` trees on bootstrap bags of `train`, restricted to
/// the columns where `mask` is set. Tree `t` draws from a stream derived from
/// `(seed, t)`.
pub fn train_forest(train: &FeatureTable, mask: &[bool], params: &ForestParams, seed: u64) -> Result<ForestModel> {
    params.validate()?;
    if mask.len() != train.n_features() {
        return Err(Error::DimensionMismatch {
            expected: train.n_features(),
            actual: mask.len(),
            context: "feature mask".into(),
        });
    }
    let features: Vec<usize> = (0..mask.len()).filter(|&j| mask[j]).collect();
    if features.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty feature mask".into()));
    }
    let m = train.n_rows();
    if m < 2 {
        return Err(Error::InsufficientSamples {
            available: m,
            requested: 2,
        });
    }
    let constant_features = features.iter().all(|&j| {
        let c = train.column(j);
        c.iter().all(|&v| v == c[0])
    });
    if constant_features {
        log::warn!("all {} masked features are constant on the training rows", features.len());
    }
    let classification = train.task().is_classification();
    let n_classes = train.n_classes();
    let mtry = features_per_split(train.task(), features.len());
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from(seed, &[t as u64]);
            let mut bag: Vec<usize> = (0..m).map(|_| rng.gen_range(0..m)).collect();
            let mut builder = Builder {
                table: train,
                features: &features,
                classification,
                n_classes,
                mtry,
                params: *params,
                nodes: Vec::new(),
            };
            builder.build(&mut bag, 0, &mut rng);
            DecisionTree {
                nodes: builder.nodes,
                bag_size: m,
            }
        })
        .collect();
    Ok(ForestModel {
        task: train.task(),
        params: *params,
        features,
        trees,
        constant_features,
    })
}

impl ForestModel {
    /// Majority vote (lowest class on ties) or mean over trees.
    pub fn predict_row(&self, value: impl Fn(usize) -> f64) -> f64 {
        let outputs = self.trees.iter().map(|t| t.predict_with(&value));
        if self.task.is_classification() {
            let mut votes: Vec<usize> = Vec::new();
            for c in outputs {
                let c = c as usize;
                if votes.len() <= c {
                    votes.resize(c + 1, 0);
                }
                votes[c] += 1;
            }
            let mut best = 0;
            for (i, &v) in votes.iter().enumerate() {
                if v > votes[best] {
                    best = i;
                }
            }
            best as f64
        } else {
            outputs.sum::<f64>() / self.trees.len() as f64
        }
    }

    pub fn predict(&self, table: &FeatureTable) -> Vec<f64> {
        (0..table.n_rows())
            .map(|r| self.predict_row(|j| table.value(r, j)))
            .collect()
    }

    pub fn score(&self, valid: &FeatureTable, metric: MetricKind) -> Result<f64> {
        metric.check(self.task)?;
        if valid.task().is_classification() != self.task.is_classification() {
            return Err(Error::InvalidArgument("validation task differs from training task".into()));
        }
        metric.compute(valid.labels(), &self.predict(valid))
    }
}
