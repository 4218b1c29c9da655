//! The base-classifier pool.
//!
//! Every model exposes hard labels and class probabilities, and `predict` is
//! always `argmax(predict_proba)` with ties going to the lower class index.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Standardizer};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    GaussianNb,
    OneNn,
    DecisionTreeGini,
    Perceptron,
    External,
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gaussian_nb" => ClassifierKind::GaussianNb,
            "one_nn" => ClassifierKind::OneNn,
            "decision_tree_gini" => ClassifierKind::DecisionTreeGini,
            "perceptron" => ClassifierKind::Perceptron,
            "external" => ClassifierKind::External,
            other => return Err(Error::UnknownClassifier(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub name: String,
    pub kind: ClassifierKind,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Predictions file for `kind = external`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions: Option<PathBuf>,
}

impl ClassifierSpec {
    pub fn new(name: impl Into<String>, kind: ClassifierKind) -> Self {
        ClassifierSpec {
            name: name.into(),
            kind,
            params: BTreeMap::new(),
            predictions: None,
        }
    }

    pub fn external(name: impl Into<String>, path: impl Into<PathBuf>) -> Self {
        ClassifierSpec {
            predictions: Some(path.into()),
            ..ClassifierSpec::new(name, ClassifierKind::External)
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    fn param(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == ClassifierKind::External && self.predictions.is_none() {
            return Err(Error::Config(format!(
                "external classifier `{}` needs a predictions file",
                self.name
            )));
        }
        Ok(())
    }

    /// Default pool: NB, perceptron, 1-NN and an unpruned tree.
    pub fn default_pool() -> Vec<ClassifierSpec> {
        vec![
            ClassifierSpec::new("nb", ClassifierKind::GaussianNb),
            ClassifierSpec::new("perceptron", ClassifierKind::Perceptron),
            ClassifierSpec::new("knn", ClassifierKind::OneNn),
            ClassifierSpec::new("dtc", ClassifierKind::DecisionTreeGini),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub proba: Vec<f64>,
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    spec: ClassifierSpec,
    n_features: usize,
    n_classes: usize,
    model: Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Model {
    GaussianNb(GaussianNb),
    OneNn(OneNn),
    Tree(GiniTree),
    Perceptron(Perceptron),
    External(ExternalPredictions),
}

pub fn train(spec: &ClassifierSpec, ds: &Dataset) -> Result<TrainedClassifier> {
    spec.validate()?;
    if ds.n_samples() == 0 {
        return Err(Error::EmptyPartition("training"));
    }
    let model = match spec.kind {
        ClassifierKind::GaussianNb => Model::GaussianNb(GaussianNb::fit(ds, spec.param("var_smoothing", 1e-9))),
        ClassifierKind::OneNn => Model::OneNn(OneNn::fit(ds, spec.param("standardize", 1.0) != 0.0)),
        ClassifierKind::DecisionTreeGini => {
            let depth = spec.param("max_depth", 0.0);
            let max_depth = (depth > 0.0).then_some(depth as usize);
            Model::Tree(GiniTree::fit(ds, max_depth))
        }
        ClassifierKind::Perceptron => Model::Perceptron(Perceptron::fit(
            ds,
            spec.param("epochs", 10.0) as usize,
            spec.param("learning_rate", 1.0),
            spec.param("seed", 0.0) as u64,
        )),
        ClassifierKind::External => {
            let path = spec.predictions.as_ref().expect("validated");
            Model::External(ExternalPredictions::load(path, ds.n_classes(), None)?)
        }
    };
    Ok(TrainedClassifier {
        spec: spec.clone(),
        n_features: ds.n_features(),
        n_classes: ds.n_classes(),
        model,
    })
}

impl TrainedClassifier {
    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn is_external(&self) -> bool {
        matches!(self.model, Model::External(_))
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(match &self.model {
            Model::GaussianNb(m) => m.proba(x),
            Model::OneNn(m) => m.proba(x),
            Model::Tree(m) => m.proba(x),
            Model::Perceptron(m) => softmax(&m.scores(x)),
            Model::External(_) => return Err(Error::ExternalQuery(self.spec.name.clone())),
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        self.predict_proba(x).map(|p| argmax(&p))
    }

    /// Predictions for every row of `ds`. External models look rows up by
    /// their original row id; native models score the features.
    pub fn predict_dataset(&self, ds: &Dataset) -> Result<Vec<Prediction>> {
        match &self.model {
            Model::External(ext) => ds
                .row_ids()
                .iter()
                .map(|&id| ext.get(id).map(|(label, proba)| Prediction { label, proba }))
                .collect(),
            _ => ds
                .rows()
                .map(|x| {
                    let proba = self.predict_proba(x)?;
                    Ok(Prediction {
                        label: argmax(&proba),
                        proba,
                    })
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GaussianNb {
    log_prior: Vec<f64>,
    mean: Vec<Vec<f64>>,
    var: Vec<Vec<f64>>,
}

impl GaussianNb {
    fn fit(ds: &Dataset, var_smoothing: f64) -> Self {
        let (n, f, c) = (ds.n_samples(), ds.n_features(), ds.n_classes());
        let counts = ds.class_counts();
        let mut mean = vec![vec![0.0; f]; c];
        for i in 0..n {
            for (m, v) in mean[ds.label(i)].iter_mut().zip(ds.row(i)) {
                *m += v;
            }
        }
        for (m, &k) in mean.iter_mut().zip(&counts) {
            if k > 0 {
                m.iter_mut().for_each(|v| *v /= k as f64);
            }
        }
        let mut var = vec![vec![0.0; f]; c];
        for i in 0..n {
            let y = ds.label(i);
            for j in 0..f {
                let d = ds.value(i, j) - mean[y][j];
                var[y][j] += d * d;
            }
        }
        // smoothing: a fraction of the largest overall feature variance
        let max_var = (0..f)
            .map(|j| {
                let mu = ds.rows().map(|r| r[j]).sum::<f64>() / n as f64;
                ds.rows().map(|r| (r[j] - mu) * (r[j] - mu)).sum::<f64>() / n as f64
            })
            .fold(0.0, f64::max);
        let eps = if max_var > 0.0 {
            var_smoothing * max_var
        } else {
            var_smoothing
        };
        for (v, &k) in var.iter_mut().zip(&counts) {
            for x in v.iter_mut() {
                *x = if k > 0 { *x / k as f64 } else { 0.0 } + eps;
            }
        }
        let log_prior = counts
            .iter()
            .map(|&k| {
                if k > 0 {
                    (k as f64 / n as f64).ln()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        GaussianNb { log_prior, mean, var }
    }

    fn joint_log_likelihood(&self, x: &[f64]) -> Vec<f64> {
        self.log_prior
            .iter()
            .zip(self.mean.iter().zip(&self.var))
            .map(|(&lp, (mu, var))| {
                if lp == f64::NEG_INFINITY {
                    return lp;
                }
                let ll: f64 = x
                    .iter()
                    .zip(mu.iter().zip(var))
                    .map(|(v, (m, s))| (2.0 * std::f64::consts::PI * s).ln() + (v - m) * (v - m) / s)
                    .sum();
                lp - 0.5 * ll
            })
            .collect()
    }

    fn proba(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.joint_log_likelihood(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OneNn {
    standardizer: Option<Standardizer>,
    points: Dataset,
}

impl OneNn {
    fn fit(ds: &Dataset, standardize: bool) -> Self {
        let standardizer = standardize.then(|| Standardizer::fit(ds));
        let points = match &standardizer {
            Some(s) => ds.standardized(s),
            None => ds.clone(),
        };
        OneNn { standardizer, points }
    }

    fn proba(&self, x: &[f64]) -> Vec<f64> {
        let q = match &self.standardizer {
            Some(s) => s.transform(x),
            None => x.to_vec(),
        };
        let mut best = (f64::INFINITY, 0usize);
        for (i, row) in self.points.rows().enumerate() {
            let d: f64 = row.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.0 {
                best = (d, i);
            }
        }
        let mut p = vec![0.0; self.points.n_classes()];
        p[self.points.label(best.1)] = 1.0;
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: Vec<usize>,
    },
}

/// Unpruned CART classifier on Gini impurity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GiniTree {
    nodes: Vec<TreeNode>,
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&k| (k as f64 / t).powi(2)).sum::<f64>()
}

/// Midpoint of `lo < hi` that still routes `hi` to the right.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

impl GiniTree {
    fn fit(ds: &Dataset, max_depth: Option<usize>) -> Self {
        let c = ds.n_classes();
        let mut nodes: Vec<TreeNode> = Vec::new();
        // (slot, members, depth); slot is the node index to fill
        nodes.push(TreeNode::Leaf { counts: Vec::new() });
        let mut stack = vec![(0usize, (0..ds.n_samples()).collect::<Vec<_>>(), 0usize)];
        while let Some((slot, members, depth)) = stack.pop() {
            let mut counts = vec![0usize; c];
            for &i in &members {
                counts[ds.label(i)] += 1;
            }
            let pure = counts.iter().filter(|&&k| k > 0).count() <= 1;
            let split = if pure || members.len() < 2 || max_depth.is_some_and(|d| depth >= d) {
                None
            } else {
                Self::best_split(ds, &members, &counts)
            };
            match split {
                None => nodes[slot] = TreeNode::Leaf { counts },
                Some((feature, threshold)) => {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        members.iter().partition(|&&i| ds.value(i, feature) <= threshold);
                    let left = nodes.len();
                    nodes.push(TreeNode::Leaf { counts: Vec::new() });
                    let right = nodes.len();
                    nodes.push(TreeNode::Leaf { counts: Vec::new() });
                    nodes[slot] = TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    };
                    stack.push((right, r, depth + 1));
                    stack.push((left, l, depth + 1));
                }
            }
        }
        GiniTree { nodes }
    }

    fn best_split(ds: &Dataset, members: &[usize], counts: &[usize]) -> Option<(usize, f64)> {
        let n = members.len();
        let parent = gini(counts, n);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = members.to_vec();
        for feature in 0..ds.n_features() {
            order.sort_by(|&a, &b| ds.value(a, feature).total_cmp(&ds.value(b, feature)));
            let mut left = vec![0usize; counts.len()];
            for pos in 0..n - 1 {
                left[ds.label(order[pos])] += 1;
                let lo = ds.value(order[pos], feature);
                let hi = ds.value(order[pos + 1], feature);
                if lo == hi {
                    continue;
                }
                let nl = pos + 1;
                let right: Vec<usize> = counts.iter().zip(&left).map(|(t, l)| t - l).collect();
                let child = (nl as f64 * gini(&left, nl) + (n - nl) as f64 * gini(&right, n - nl)) / n as f64;
                let gain = parent - child;
                if best.is_none_or(|(g, _, _)| gain > g + 1e-12) {
                    best = Some((gain, feature, midpoint(lo, hi)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn proba(&self, x: &[f64]) -> Vec<f64> {
        let mut node = 0;
        loop {
            match &self.nodes[node] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { *left } else { *right },
                TreeNode::Leaf { counts } => {
                    let total: usize = counts.iter().sum();
                    return counts.iter().map(|&k| k as f64 / total as f64).collect();
                }
            }
        }
    }
}

/// One-vs-rest averaged perceptron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Perceptron {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl Perceptron {
    fn fit(ds: &Dataset, epochs: usize, learning_rate: f64, seed: u64) -> Self {
        let (f, c) = (ds.n_features(), ds.n_classes());
        let mut w = vec![vec![0.0; f]; c];
        let mut b = vec![0.0; c];
        let mut w_sum = vec![vec![0.0; f]; c];
        let mut b_sum = vec![0.0; c];
        let mut steps = 0usize;
        let mut order: Vec<usize> = (0..ds.n_samples()).collect();
        for epoch in 0..epochs {
            order.shuffle(&mut rng::stream(seed, Stream::Perceptron, epoch as u64));
            for &i in &order {
                let x = ds.row(i);
                for class in 0..c {
                    let target = if ds.label(i) == class { 1.0 } else { -1.0 };
                    let score: f64 = w[class].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b[class];
                    if target * score <= 0.0 {
                        for (wj, xj) in w[class].iter_mut().zip(x) {
                            *wj += learning_rate * target * xj;
                        }
                        b[class] += learning_rate * target;
                    }
                    for (s, wj) in w_sum[class].iter_mut().zip(&w[class]) {
                        *s += wj;
                    }
                    b_sum[class] += b[class];
                }
                steps += 1;
            }
        }
        let steps = steps.max(1) as f64;
        Perceptron {
            weights: w_sum
                .into_iter()
                .map(|row| row.into_iter().map(|v| v / steps).collect())
                .collect(),
            bias: b_sum.into_iter().map(|v| v / steps).collect(),
        }
    }

    fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b)
            .collect()
    }
}

/// Predictions produced outside this crate, keyed by original row index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalPredictions {
    n_classes: usize,
    rows: BTreeMap<usize, (usize, Option<Vec<f64>>)>,
}

impl ExternalPredictions {
    /// Reads `sample_index,predicted_class[,p_0,...,p_{C-1}]`. When
    /// `required` is given, every listed index must be present.
    pub fn load(path: &Path, n_classes: usize, required: Option<&[usize]>) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(file, n_classes, required)
    }

    pub fn read<R: std::io::Read>(reader: R, n_classes: usize, required: Option<&[usize]>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let idx_col = col("sample_index")?;
        let pred_col = col("predicted_class")?;
        let proba_cols: Vec<usize> = (0..headers.len()).filter(|&j| j != idx_col && j != pred_col).collect();
        if !proba_cols.is_empty() && proba_cols.len() != n_classes {
            return Err(Error::Config(format!(
                "external predictions carry {} probability columns for {} classes",
                proba_cols.len(),
                n_classes
            )));
        }
        let parse = |row: usize, column: &str, cell: &str| -> Result<f64> {
            cell.parse::<f64>().map_err(|_| Error::NonNumeric {
                row,
                column: column.to_string(),
                value: cell.to_string(),
            })
        };
        let mut rows = BTreeMap::new();
        for (r, record) in rdr.records().enumerate() {
            let record = record?;
            let index = parse(r, "sample_index", &record[idx_col])? as usize;
            let label = parse(r, "predicted_class", &record[pred_col])? as usize;
            if label >= n_classes {
                return Err(Error::InvalidDataset(format!(
                    "external prediction for sample {index}: class {label} out of range"
                )));
            }
            let proba = if proba_cols.is_empty() {
                None
            } else {
                let p = proba_cols
                    .iter()
                    .map(|&j| parse(r, &headers[j], &record[j]))
                    .collect::<Result<Vec<f64>>>()?;
                let sum: f64 = p.iter().sum();
                if (sum - 1.0).abs() > 1e-6 || p.iter().any(|&v| v < 0.0) {
                    return Err(Error::BadProbabilities { index, sum });
                }
                Some(p)
            };
            rows.insert(index, (label, proba));
        }
        if let Some(required) = required {
            if let Some(&missing) = required.iter().find(|i| !rows.contains_key(i)) {
                return Err(Error::MissingPrediction(missing));
            }
        }
        Ok(ExternalPredictions { n_classes, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, index: usize) -> Result<(usize, Vec<f64>)> {
        let (label, proba) = self.rows.get(&index).ok_or(Error::MissingPrediction(index))?;
        let proba = proba.clone().unwrap_or_else(|| {
            let mut p = vec![0.0; self.n_classes];
            p[*label] = 1.0;
            p
        });
        Ok((*label, proba))
    }
}

/// Loads an external prediction file and checks it covers every train and
/// test row of `split` (indices are row ids of the loaded dataset).
pub fn load_external_predictions(
    path: impl AsRef<Path>,
    split: &crate::dataset::SplitPlan,
    n_classes: usize,
) -> Result<ExternalPredictions> {
    let mut required: Vec<usize> = split.train_indices.iter().chain(&split.test_indices).copied().collect();
    required.sort_unstable();
    ExternalPredictions::load(path.as_ref(), n_classes, Some(&required))
}
