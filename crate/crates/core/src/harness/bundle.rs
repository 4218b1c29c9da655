//! Trained pool plus selector material, persisted as JSON for later queries.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineConfig, BaselineSelector, RegionOfCompetence};
use crate::classifiers::{ClassifierSpec, TrainedClassifier};
use crate::dataset::{
    build_correctness_cv3, build_correctness_holdout, split_halves, CorrectnessMatrix, Dataset, Protocol,
};
use crate::error::{Error, Result};
use crate::forest::{build_forest, CshcConfig, Forest};
use crate::harness::config::{ExperimentConfig, MethodId, SelectionConfig};
use crate::selection::{CshcSelector, SelectionOutcome, Selector, StrategySelector};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    pub seed: u64,
    pub protocol: Protocol,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    pub classifiers: Vec<TrainedClassifier>,
    pub forest: Forest,
    pub selector_train: Dataset,
    pub selector_cm: CorrectnessMatrix,
    pub selection: SelectionConfig,
    pub baselines: BaselineConfig,
}

impl ModelBundle {
    /// Trains on all of `ds` under the configured protocol.
    pub fn train(ds: &Dataset, pool: &[ClassifierSpec], cfg: &ExperimentConfig) -> Result<Self> {
        let (selector_train, product) = match cfg.protocol {
            Protocol::Split50 => {
                let (a, b) = split_halves(ds, cfg.seed)?;
                let ds_b = ds.subset(&b);
                let product = build_correctness_holdout(&ds.subset(&a), &ds_b, pool)?;
                (ds_b, product)
            }
            Protocol::Cv3 => (ds.clone(), build_correctness_cv3(ds, pool, cfg.seed)?),
        };
        let forest_cfg = CshcConfig {
            seed: cfg.seed,
            ..cfg.forest.clone()
        };
        let forest = build_forest(&product.matrix, &selector_train, &forest_cfg)?;
        Ok(ModelBundle {
            format_version: BUNDLE_FORMAT_VERSION,
            seed: cfg.seed,
            protocol: cfg.protocol,
            feature_names: ds.feature_names().to_vec(),
            class_names: ds.class_names().to_vec(),
            classifiers: product.models,
            forest,
            selector_train,
            selector_cm: product.matrix,
            selection: cfg.selection.clone(),
            baselines: cfg.baselines.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bundle: ModelBundle = serde_json::from_str(text)?;
        if bundle.format_version != BUNDLE_FORMAT_VERSION {
            return Err(Error::FormatVersion(bundle.format_version));
        }
        Ok(bundle)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Pool predictions for one feature vector.
    pub fn pool_labels(&self, x: &[f64]) -> Result<Vec<usize>> {
        self.classifiers.iter().map(|c| c.predict(x)).collect()
    }

    /// Applies `method` to every row of `rows`.
    pub fn select_rows(&self, method: MethodId, rows: &[Vec<f64>]) -> Result<Vec<SelectionOutcome>> {
        let mut cshc = CshcSelector::new(&self.forest, &self.selector_cm);
        cshc.gamma = self.selection.gamma;
        cshc.rho = self.selection.rho;
        cshc.seed = self.seed;
        let roc;
        let selector: Box<dyn Selector + '_> = match method {
            MethodId::Selection(strategy) => Box::new(StrategySelector { inner: &cshc, strategy }),
            MethodId::Baseline(kind) => {
                roc = RegionOfCompetence::new(&self.selector_train, self.selector_cm.clone(), self.baselines.clone())?;
                Box::new(BaselineSelector { roc: &roc, kind })
            }
        };
        rows.iter()
            .enumerate()
            .map(|(i, x)| {
                let labels = self.pool_labels(x)?;
                selector.select(i, x, &labels)
            })
            .collect()
    }
}

/// Reads the columns named `feature_names` from a CSV; other columns (for
/// example a label) are ignored.
pub fn read_feature_rows(path: &Path, feature_names: &[String]) -> Result<Vec<Vec<f64>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers()?.clone();
    let cols: Vec<usize> = feature_names
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.clone()))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = cols
            .iter()
            .zip(feature_names)
            .map(|(&c, name)| {
                let v: f64 = record[c].parse().map_err(|_| Error::NonNumeric {
                    row: r,
                    column: name.clone(),
                    value: record[c].to_string(),
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFinite {
                        row: r,
                        column: name.clone(),
                    })
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}
