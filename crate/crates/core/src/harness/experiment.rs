//! End-to-end runs: split, build selector material once per dataset, then
//! evaluate every method on the same test predictions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineSelector, RegionOfCompetence};
use crate::classifiers::{ClassifierSpec, TrainedClassifier};
use crate::dataset::{
    build_correctness_cv3, build_correctness_holdout, load_csv, make_split, split_halves, CorrectnessMatrix, Dataset,
    Protocol, SplitPlan,
};
use crate::error::{Error, Result};
use crate::forest::{build_forest, Forest};
use crate::harness::config::{ExperimentConfig, MethodId};
use crate::harness::metrics::oracle_accuracy;
use crate::selection::{CshcSelector, SelectionOutcome, Selector, StrategySelector};

/// Everything the methods of one dataset share, built once.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub name: String,
    pub plan: SplitPlan,
    /// Full training split.
    pub train: Dataset,
    pub test: Dataset,
    /// `test_labels[sample][classifier]`.
    pub test_labels: Vec<Vec<usize>>,
    pub test_cm: CorrectnessMatrix,
    /// Rows the selectors learn from, with their correctness.
    pub selector_train: Dataset,
    pub selector_cm: CorrectnessMatrix,
    pub models: Vec<TrainedClassifier>,
    pub forest: Forest,
    pub roc: RegionOfCompetence,
}

impl PreparedDataset {
    pub fn classifier_names(&self) -> Vec<String> {
        self.models.iter().map(|m| m.spec().name.clone()).collect()
    }

    pub fn classifier_accuracy(&self) -> Vec<f64> {
        self.test_cm.accuracies().into_iter().map(|a| 100.0 * a).collect()
    }

    pub fn cshc_selector(&self, cfg: &ExperimentConfig) -> CshcSelector<'_> {
        let mut sel = CshcSelector::new(&self.forest, &self.selector_cm);
        sel.gamma = cfg.selection.gamma;
        sel.rho = cfg.selection.rho;
        sel.seed = cfg.seed;
        sel
    }
}

/// Splits `ds`, trains the pool and the selector material under the
/// configured protocol.
pub fn prepare(name: &str, ds: &Dataset, pool: &[ClassifierSpec], cfg: &ExperimentConfig) -> Result<PreparedDataset> {
    let mut plan = make_split(ds, cfg.test_fraction, cfg.seed)?;
    plan.protocol = cfg.protocol;
    let train = ds.subset(&plan.train_indices);
    let test = ds.subset(&plan.test_indices);
    let (selector_train, product) = match cfg.protocol {
        Protocol::Split50 => {
            let (a, b) = split_halves(&train, cfg.seed)?;
            let ds_a = train.subset(&a);
            let ds_b = train.subset(&b);
            let product = build_correctness_holdout(&ds_a, &ds_b, pool)?;
            (ds_b, product)
        }
        Protocol::Cv3 => {
            let product = build_correctness_cv3(&train, pool, cfg.seed)?;
            (train.clone(), product)
        }
    };
    let mut test_labels = vec![Vec::with_capacity(pool.len()); test.n_samples()];
    for model in &product.models {
        for (i, p) in model.predict_dataset(&test)?.into_iter().enumerate() {
            test_labels[i].push(p.label);
        }
    }
    let test_cm = CorrectnessMatrix::from_predictions(test_labels.clone(), test.labels().to_vec(), ds.n_classes())?;
    let forest_cfg = crate::forest::CshcConfig {
        seed: cfg.seed,
        ..cfg.forest.clone()
    };
    let forest = build_forest(&product.matrix, &selector_train, &forest_cfg)?;
    let roc = RegionOfCompetence::new(&selector_train, product.matrix.clone(), cfg.baselines.clone())?;
    Ok(PreparedDataset {
        name: name.to_string(),
        plan,
        train,
        test,
        test_labels,
        test_cm,
        selector_train,
        selector_cm: product.matrix,
        models: product.models,
        forest,
        roc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: MethodId,
    /// Percent correct on the test split; `None` when the method failed.
    pub accuracy: Option<f64>,
    /// Share of test samples that went past the first voting stage.
    pub recourse_rate: Option<f64>,
    pub error: Option<String>,
    #[serde(skip)]
    pub outcomes: Vec<SelectionOutcome>,
}

fn run_selector(sel: &dyn Selector, p: &PreparedDataset) -> Result<Vec<SelectionOutcome>> {
    (0..p.test.n_samples())
        .into_par_iter()
        .map(|i| sel.select(i, p.test.row(i), &p.test_labels[i]))
        .collect()
}

pub fn evaluate_method(method: MethodId, p: &PreparedDataset, cfg: &ExperimentConfig) -> MethodResult {
    let cshc = p.cshc_selector(cfg);
    let outcomes = match method {
        MethodId::Selection(strategy) => run_selector(&StrategySelector { inner: &cshc, strategy }, p),
        MethodId::Baseline(kind) => run_selector(&BaselineSelector { roc: &p.roc, kind }, p),
    };
    match outcomes {
        Ok(outcomes) => {
            let n = outcomes.len() as f64;
            let hits = outcomes
                .iter()
                .zip(p.test.labels())
                .filter(|(o, &y)| o.predicted_class == y)
                .count();
            let recourse = outcomes.iter().filter(|o| o.recourse_invoked).count();
            let is_lpr = method == MethodId::Selection(crate::selection::Strategy::Lpr);
            MethodResult {
                method,
                accuracy: Some(100.0 * hits as f64 / n),
                recourse_rate: is_lpr.then(|| recourse as f64 / n),
                error: None,
                outcomes,
            }
        }
        Err(e) => {
            log::error!("{} / {}: {e}", p.name, method);
            MethodResult {
                method,
                accuracy: None,
                recourse_rate: None,
                error: Some(e.to_string()),
                outcomes: Vec::new(),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetResult {
    pub name: String,
    pub n_test: usize,
    pub oracle: Option<f64>,
    pub classifier_names: Vec<String>,
    pub classifier_accuracy: Vec<f64>,
    pub methods: Vec<MethodResult>,
    /// Set when the shared material could not be built.
    pub error: Option<String>,
    #[serde(skip)]
    pub test_row_ids: Vec<usize>,
    #[serde(skip)]
    pub test_truth: Vec<usize>,
}

impl DatasetResult {
    fn failed(name: &str, methods: &[MethodId], err: &Error) -> Self {
        log::error!("{name}: {err}");
        let msg = err.to_string();
        DatasetResult {
            name: name.to_string(),
            n_test: 0,
            oracle: None,
            classifier_names: Vec::new(),
            classifier_accuracy: Vec::new(),
            methods: methods
                .iter()
                .map(|&method| MethodResult {
                    method,
                    accuracy: None,
                    recourse_rate: None,
                    error: Some(msg.clone()),
                    outcomes: Vec::new(),
                })
                .collect(),
            error: Some(msg),
            test_row_ids: Vec::new(),
            test_truth: Vec::new(),
        }
    }

    pub fn accuracy(&self, method: MethodId) -> Option<f64> {
        self.methods
            .iter()
            .find(|m| m.method == method)
            .and_then(|m| m.accuracy)
    }
}

/// Evaluates every configured method on prepared material.
pub fn evaluate_prepared(p: &PreparedDataset, cfg: &ExperimentConfig) -> DatasetResult {
    let methods: Vec<MethodResult> = cfg.methods.par_iter().map(|&m| evaluate_method(m, p, cfg)).collect();
    DatasetResult {
        name: p.name.clone(),
        n_test: p.test.n_samples(),
        oracle: Some(oracle_accuracy(&p.test_cm)),
        classifier_names: p.classifier_names(),
        classifier_accuracy: p.classifier_accuracy(),
        methods,
        error: None,
        test_row_ids: p.test.row_ids().to_vec(),
        test_truth: p.test.labels().to_vec(),
    }
}

/// Loads, prepares and evaluates one dataset; failures are captured in the
/// result rather than returned.
pub fn run_dataset(entry: &crate::harness::config::DatasetEntry, cfg: &ExperimentConfig) -> DatasetResult {
    let prepared =
        load_csv(&entry.path, &entry.label_column).and_then(|ds| prepare(&entry.name, &ds, cfg.pool_for(entry), cfg));
    match prepared {
        Ok(p) => evaluate_prepared(&p, cfg),
        Err(e) => DatasetResult::failed(&entry.name, &cfg.methods, &e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config_hash: String,
    pub seed: u64,
    pub protocol: Protocol,
    pub reference: MethodId,
    pub methods: Vec<MethodId>,
    pub datasets: Vec<DatasetResult>,
}

impl RunResult {
    pub fn is_partial(&self) -> bool {
        self.datasets
            .iter()
            .any(|d| d.error.is_some() || d.methods.iter().any(|m| m.error.is_some()))
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult> {
    cfg.validate()?;
    let datasets: Vec<DatasetResult> = cfg.datasets.par_iter().map(|d| run_dataset(d, cfg)).collect();
    Ok(RunResult {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        protocol: cfg.protocol,
        reference: cfg.reference,
        methods: cfg.methods.clone(),
        datasets,
    })
}
