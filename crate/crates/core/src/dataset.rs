//! Tabular data, stratified splits and folds, and correctness matrices.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::classifiers::{ClassifierSpec, TrainedClassifier};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Numeric feature matrix with integer class labels.
///
/// Rows are stored row-major. `row_ids` records, for every row, its index in
/// the file the data was loaded from; subsets keep those ids so externally
/// computed predictions can be matched back to rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<f64>,
    n_features: usize,
    labels: Vec<usize>,
    feature_names: Vec<String>,
    class_names: Vec<String>,
    row_ids: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset from row vectors, checking every invariant.
    pub fn new(
        rows: Vec<Vec<f64>>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let n_features = feature_names.len();
        if rows.is_empty() {
            return Err(Error::EmptyFile);
        }
        if n_features == 0 {
            return Err(Error::InvalidDataset("no feature columns".into()));
        }
        if class_names.len() < 2 {
            return Err(Error::SingleClass(class_names.first().cloned().unwrap_or_default()));
        }
        if rows.len() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let mut features = Vec::with_capacity(rows.len() * n_features);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_features {
                return Err(Error::DimensionMismatch {
                    expected: n_features,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        row: i,
                        column: feature_names[j].clone(),
                    });
                }
            }
            features.extend_from_slice(row);
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::InvalidDataset(format!(
                "label {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        let row_ids = (0..labels.len()).collect();
        Ok(Dataset {
            features,
            n_features,
            labels,
            feature_names,
            class_names,
            row_ids,
        })
    }

    /// Convenience constructor with generated names (`f0`, `f1`, ... and `0`, `1`, ...).
    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let n_features = rows.first().map_or(0, Vec::len);
        let feature_names = (0..n_features).map(|j| format!("f{j}")).collect();
        let class_names = (0..n_classes).map(|c| c.to_string()).collect();
        Dataset::new(rows, labels, feature_names, class_names)
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.n_features)
    }

    pub fn value(&self, i: usize, feature: usize) -> f64 {
        self.features[i * self.n_features + feature]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order. Class names are kept even when a
    /// class has no rows in the subset.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            n_features: self.n_features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
            row_ids: indices.iter().map(|&i| self.row_ids[i]).collect(),
        }
    }

    /// Copy of the dataset with every feature mapped through `standardizer`.
    pub fn standardized(&self, standardizer: &Standardizer) -> Dataset {
        let mut out = self.clone();
        for row in out.features.chunks_exact_mut(self.n_features) {
            standardizer.transform_in_place(row);
        }
        out
    }

    pub fn check_dims(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Loads a CSV file with a header row. Labels are encoded `0..C` in order of
/// first appearance.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, label_column)
}

pub fn read_csv<R: Read>(reader: R, label_column: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::EmptyFile);
    }
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingColumn(label_column.to_string()))?;
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&j| j != label_idx).collect();
    let feature_names: Vec<String> = feature_cols.iter().map(|&j| headers[j].to_string()).collect();

    let mut class_index: HashMap<String, usize> = HashMap::new();
    let mut class_names = Vec::new();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (row_no, record) in rdr.records().enumerate() {
        let record = record?;
        let raw_label = record.get(label_idx).unwrap_or("").to_string();
        let next = class_names.len();
        let label = *class_index.entry(raw_label.clone()).or_insert_with(|| {
            class_names.push(raw_label);
            next
        });
        let mut row = Vec::with_capacity(feature_cols.len());
        for (&j, name) in feature_cols.iter().zip(&feature_names) {
            let cell = record.get(j).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                row: row_no,
                column: name.clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: row_no,
                    column: name.clone(),
                });
            }
            row.push(v);
        }
        rows.push(row);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile);
    }
    if feature_names.is_empty() {
        return Err(Error::InvalidDataset("no feature columns".into()));
    }
    Dataset::new(rows, labels, feature_names, class_names)
}

/// Writes a dataset back out as CSV with the label column last.
pub fn write_csv<W: Write>(ds: &Dataset, label_column: &str, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = ds.feature_names.iter().map(String::as_str).collect();
    header.push(label_column);
    w.write_record(&header)?;
    for i in 0..ds.n_samples() {
        let mut rec: Vec<String> = ds.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(ds.class_names[ds.labels[i]].clone());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Per-feature zero-mean / unit-variance scaling fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(ds: &Dataset) -> Self {
        let n = ds.n_samples() as f64;
        let f = ds.n_features();
        let mut mean = vec![0.0; f];
        for row in ds.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; f];
        for row in ds.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        // constant features keep unit scale
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn transform_in_place(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) / s;
        }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        self.transform_in_place(&mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Base classifiers on one half of the training data, the selector on the other.
    Split50,
    /// Three-fold cross-validated correctness over the whole training set.
    Cv3,
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "split50" => Ok(Protocol::Split50),
            "cv3" => Ok(Protocol::Cv3),
            other => Err(Error::Config(format!("unknown protocol `{other}`"))),
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Protocol::Split50 => "split50",
            Protocol::Cv3 => "cv3",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub protocol: Protocol,
    pub seed: u64,
}

/// Splits `indices` so that each class contributes its share of
/// `round(len · fraction)` taken rows (largest-remainder apportionment,
/// leftover seats to the lowest class index on equal remainders).
/// Returns `(kept, taken)`, both sorted.
pub fn stratified_partition(
    labels: &[usize],
    indices: &[usize],
    n_classes: usize,
    fraction: f64,
    rng: &mut rng::Rng,
) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for &i in indices {
        by_class[labels[i]].push(i);
    }
    let total = (indices.len() as f64 * fraction).round() as usize;
    let exact: Vec<f64> = by_class.iter().map(|m| m.len() as f64 * fraction).collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = quota.iter().sum();
    let mut order: Vec<usize> = (0..n_classes).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut leftover = total.saturating_sub(assigned);
    for &c in order.iter().cycle().take(n_classes * 2) {
        if leftover == 0 {
            break;
        }
        if quota[c] < by_class[c].len() {
            quota[c] += 1;
            leftover -= 1;
        }
    }

    let mut kept = Vec::new();
    let mut taken = Vec::new();
    for (members, &q) in by_class.iter_mut().zip(&quota) {
        members.shuffle(rng);
        taken.extend_from_slice(&members[..q]);
        kept.extend_from_slice(&members[q..]);
    }
    kept.sort_unstable();
    taken.sort_unstable();
    (kept, taken)
}

/// Stratified train/test split, deterministic under `seed`.
pub fn make_split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<SplitPlan> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidFraction(test_fraction));
    }
    for (class, &count) in ds.class_counts().iter().enumerate() {
        if count > 0 && count < 2 {
            return Err(Error::ClassTooSmall {
                class,
                count,
                required: 2,
            });
        }
    }
    let all: Vec<usize> = (0..ds.n_samples()).collect();
    let mut rng = rng::stream(seed, Stream::Split, 0);
    let (train, test) = stratified_partition(ds.labels(), &all, ds.n_classes(), test_fraction, &mut rng);
    if train.is_empty() {
        return Err(Error::EmptyPartition("train"));
    }
    if test.is_empty() {
        return Err(Error::EmptyPartition("test"));
    }
    Ok(SplitPlan {
        train_indices: train,
        test_indices: test,
        protocol: Protocol::Split50,
        seed,
    })
}

/// Stratified halves of a training set: `(a, b)` where `a` trains the base
/// classifiers and `b` trains the selector.
pub fn split_halves(ds: &Dataset, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let all: Vec<usize> = (0..ds.n_samples()).collect();
    let mut rng = rng::stream(seed, Stream::Halves, 0);
    let (a, b) = stratified_partition(ds.labels(), &all, ds.n_classes(), 0.5, &mut rng);
    if a.is_empty() {
        return Err(Error::EmptyPartition("half A"));
    }
    if b.is_empty() {
        return Err(Error::EmptyPartition("half B"));
    }
    Ok((a, b))
}

/// Assigns each row a fold in `0..k`, dealing every class round-robin
/// (continuing the deal across classes) after a seeded shuffle.
pub fn stratified_folds(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<usize>> {
    for (class, &count) in ds.class_counts().iter().enumerate() {
        if count > 0 && count < k {
            return Err(Error::ClassTooSmall {
                class,
                count,
                required: k,
            });
        }
    }
    let mut rng = rng::stream(seed, Stream::Folds, k as u64);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes()];
    for i in 0..ds.n_samples() {
        by_class[ds.label(i)].push(i);
    }
    let mut folds = vec![0; ds.n_samples()];
    let mut next = 0usize;
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            folds[i] = next % k;
            next += 1;
        }
    }
    Ok(folds)
}

/// Writes `(sample_index, role, fold)` rows for audit. `sample_index` is the
/// row id in the original file; `fold` is empty for test rows.
pub fn write_assignments<W: Write>(
    ds: &Dataset,
    plan: &SplitPlan,
    folds: Option<&[usize]>,
    halves: Option<(&[usize], &[usize])>,
    writer: W,
) -> Result<()> {
    let mut rows: Vec<(usize, &str, String)> = Vec::new();
    for (pos, &i) in plan.train_indices.iter().enumerate() {
        let role = match halves {
            Some((a, _)) if a.binary_search(&pos).is_ok() => "train_base",
            Some(_) => "train_selector",
            None => "train",
        };
        let fold = folds.map(|f| f[pos].to_string()).unwrap_or_default();
        rows.push((ds.row_ids()[i], role, fold));
    }
    for &i in &plan.test_indices {
        rows.push((ds.row_ids()[i], "test", String::new()));
    }
    rows.sort_by_key(|r| r.0);
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["sample_index", "role", "fold"])?;
    for (idx, role, fold) in rows {
        w.write_record([idx.to_string(), role.to_string(), fold])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Per-sample, per-classifier predictions and their correctness.
///
/// Row `i` describes sample `sample_indices[i]` of the dataset the selector is
/// trained on. `truth_proba[i][a]` is the probability classifier `a` assigned
/// to the true class of row `i` (one-hot when only hard labels are known).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectnessMatrix {
    n_classifiers: usize,
    n_classes: usize,
    predicted: Vec<usize>,
    correct: Vec<bool>,
    truth: Vec<usize>,
    truth_proba: Vec<f64>,
    sample_indices: Vec<usize>,
}

impl CorrectnessMatrix {
    /// Builds the matrix from hard labels; `truth_proba` becomes one-hot.
    pub fn from_predictions(predicted: Vec<Vec<usize>>, truth: Vec<usize>, n_classes: usize) -> Result<Self> {
        let n = predicted.first().map_or(0, Vec::len);
        let proba = predicted
            .iter()
            .zip(&truth)
            .map(|(row, &y)| row.iter().map(|&p| if p == y { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::with_truth_proba(predicted, truth, proba, n_classes, n)
    }

    pub fn with_truth_proba(
        predicted: Vec<Vec<usize>>,
        truth: Vec<usize>,
        truth_proba: Vec<Vec<f64>>,
        n_classes: usize,
        n_classifiers: usize,
    ) -> Result<Self> {
        if predicted.len() != truth.len() || truth_proba.len() != truth.len() {
            return Err(Error::InvalidDataset("correctness matrix rows disagree".into()));
        }
        let mut flat_pred = Vec::with_capacity(truth.len() * n_classifiers);
        let mut flat_correct = Vec::with_capacity(truth.len() * n_classifiers);
        let mut flat_proba = Vec::with_capacity(truth.len() * n_classifiers);
        for ((row, &y), prow) in predicted.iter().zip(&truth).zip(&truth_proba) {
            if row.len() != n_classifiers || prow.len() != n_classifiers {
                return Err(Error::DimensionMismatch {
                    expected: n_classifiers,
                    got: row.len(),
                });
            }
            if y >= n_classes || row.iter().any(|&p| p >= n_classes) {
                return Err(Error::InvalidDataset("class index out of range".into()));
            }
            for (&p, &q) in row.iter().zip(prow) {
                flat_pred.push(p);
                flat_correct.push(p == y);
                flat_proba.push(q);
            }
        }
        Ok(CorrectnessMatrix {
            n_classifiers,
            n_classes,
            predicted: flat_pred,
            correct: flat_correct,
            sample_indices: (0..truth.len()).collect(),
            truth,
            truth_proba: flat_proba,
        })
    }

    pub fn with_sample_indices(mut self, indices: Vec<usize>) -> Self {
        assert_eq!(indices.len(), self.truth.len());
        self.sample_indices = indices;
        self
    }

    pub fn n_samples(&self) -> usize {
        self.truth.len()
    }

    pub fn n_classifiers(&self) -> usize {
        self.n_classifiers
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn predicted(&self, i: usize, a: usize) -> usize {
        self.predicted[i * self.n_classifiers + a]
    }

    pub fn predicted_row(&self, i: usize) -> &[usize] {
        &self.predicted[i * self.n_classifiers..(i + 1) * self.n_classifiers]
    }

    pub fn is_correct(&self, i: usize, a: usize) -> bool {
        self.correct[i * self.n_classifiers + a]
    }

    pub fn correct_row(&self, i: usize) -> &[bool] {
        &self.correct[i * self.n_classifiers..(i + 1) * self.n_classifiers]
    }

    pub fn truth(&self, i: usize) -> usize {
        self.truth[i]
    }

    pub fn truths(&self) -> &[usize] {
        &self.truth
    }

    pub fn truth_proba(&self, i: usize, a: usize) -> f64 {
        self.truth_proba[i * self.n_classifiers + a]
    }

    pub fn sample_indices(&self) -> &[usize] {
        &self.sample_indices
    }

    /// Fraction of rows classifier `a` gets right.
    pub fn accuracy(&self, a: usize) -> f64 {
        if self.n_samples() == 0 {
            return 0.0;
        }
        let hits = (0..self.n_samples()).filter(|&i| self.is_correct(i, a)).count();
        hits as f64 / self.n_samples() as f64
    }

    pub fn accuracies(&self) -> Vec<f64> {
        (0..self.n_classifiers).map(|a| self.accuracy(a)).collect()
    }

    /// Recomputes every correctness bit from the stored labels.
    pub fn is_consistent(&self) -> bool {
        (0..self.n_samples())
            .all(|i| (0..self.n_classifiers).all(|a| self.is_correct(i, a) == (self.predicted(i, a) == self.truth[i])))
    }
}

/// A correctness matrix together with the classifiers to use at test time.
#[derive(Debug, Clone)]
pub struct CorrectnessProduct {
    pub matrix: CorrectnessMatrix,
    /// Models used at test time (retrained on all rows for cross-validation).
    pub models: Vec<TrainedClassifier>,
    /// Fold of every row; empty for the holdout protocol.
    pub folds: Vec<usize>,
}

fn predictions_for(model: &TrainedClassifier, ds: &Dataset, fold: usize) -> Result<Vec<(usize, f64)>> {
    let preds = model.predict_dataset(ds).map_err(|e| Error::Training {
        name: model.spec().name.clone(),
        fold,
        message: e.to_string(),
    })?;
    Ok(preds
        .into_iter()
        .enumerate()
        .map(|(i, p)| (p.label, p.proba[ds.label(i)]))
        .collect())
}

fn train_for(spec: &ClassifierSpec, ds: &Dataset, fold: usize) -> Result<TrainedClassifier> {
    crate::classifiers::train(spec, ds).map_err(|e| Error::Training {
        name: spec.name.clone(),
        fold,
        message: e.to_string(),
    })
}

/// Cross-validated correctness over `k` stratified folds: each classifier is
/// trained on `k - 1` folds and predicts the held-out one, so every row is
/// labelled by a model that never saw it.
pub fn build_correctness_cv(
    ds_train: &Dataset,
    pool: &[ClassifierSpec],
    k: usize,
    seed: u64,
) -> Result<CorrectnessProduct> {
    if pool.is_empty() {
        return Err(Error::Config("empty classifier pool".into()));
    }
    let folds = stratified_folds(ds_train, k, seed)?;
    let m = ds_train.n_samples();
    let n = pool.len();
    let mut predicted = vec![vec![0usize; n]; m];
    let mut proba = vec![vec![0.0f64; n]; m];
    for fold in 0..k {
        let train_idx: Vec<usize> = (0..m).filter(|&i| folds[i] != fold).collect();
        let held_idx: Vec<usize> = (0..m).filter(|&i| folds[i] == fold).collect();
        let train = ds_train.subset(&train_idx);
        let held = ds_train.subset(&held_idx);
        for (a, spec) in pool.iter().enumerate() {
            let model = train_for(spec, &train, fold)?;
            for (pos, (label, p)) in predictions_for(&model, &held, fold)?.into_iter().enumerate() {
                predicted[held_idx[pos]][a] = label;
                proba[held_idx[pos]][a] = p;
            }
        }
    }
    let matrix =
        CorrectnessMatrix::with_truth_proba(predicted, ds_train.labels().to_vec(), proba, ds_train.n_classes(), n)?;
    let models = pool
        .iter()
        .map(|spec| train_for(spec, ds_train, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(CorrectnessProduct { matrix, models, folds })
}

/// Three-fold variant used by the `cv3` protocol. Needs at least three rows
/// per class.
pub fn build_correctness_cv3(ds_train: &Dataset, pool: &[ClassifierSpec], seed: u64) -> Result<CorrectnessProduct> {
    build_correctness_cv(ds_train, pool, 3, seed)
}

/// Trains on `ds_a` and records correctness on `ds_b` only.
pub fn build_correctness_holdout(
    ds_a: &Dataset,
    ds_b: &Dataset,
    pool: &[ClassifierSpec],
) -> Result<CorrectnessProduct> {
    if ds_a.n_samples() == 0 {
        return Err(Error::EmptyPartition("half A"));
    }
    if ds_b.n_samples() == 0 {
        return Err(Error::EmptyPartition("half B"));
    }
    if pool.is_empty() {
        return Err(Error::Config("empty classifier pool".into()));
    }
    let models = pool
        .iter()
        .map(|spec| train_for(spec, ds_a, 0))
        .collect::<Result<Vec<_>>>()?;
    let m = ds_b.n_samples();
    let mut predicted = vec![vec![0usize; pool.len()]; m];
    let mut proba = vec![vec![0.0f64; pool.len()]; m];
    for (a, model) in models.iter().enumerate() {
        for (i, (label, p)) in predictions_for(model, ds_b, 0)?.into_iter().enumerate() {
            predicted[i][a] = label;
            proba[i][a] = p;
        }
    }
    let matrix =
        CorrectnessMatrix::with_truth_proba(predicted, ds_b.labels().to_vec(), proba, ds_b.n_classes(), pool.len())?;
    Ok(CorrectnessProduct {
        matrix,
        models,
        folds: Vec::new(),
    })
}
