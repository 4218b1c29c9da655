//! Experiment configuration, stored as TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{BaselineConfig, BaselineKind};
use crate::classifiers::ClassifierSpec;
use crate::dataset::Protocol;
use crate::error::{Error, Result};
use crate::forest::CshcConfig;
use crate::lp::DEFAULT_GAMMA;
use crate::selection::{Strategy, DEFAULT_RHO};

/// A method the harness can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MethodId {
    Selection(Strategy),
    Baseline(BaselineKind),
}

impl MethodId {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodId::Selection(s) => s.as_str(),
            MethodId::Baseline(b) => b.as_str(),
        }
    }

    /// Methods reported by default; `apo` and `knora-e` are available on
    /// request.
    pub fn headline() -> Vec<MethodId> {
        let mut out: Vec<MethodId> = Strategy::ALL.into_iter().map(MethodId::Selection).collect();
        out.extend(
            [
                BaselineKind::Ola,
                BaselineKind::Lca,
                BaselineKind::Apriori,
                BaselineKind::Mcb,
                BaselineKind::KnoraU,
                BaselineKind::MajorityVote,
            ]
            .map(MethodId::Baseline),
        );
        out
    }
}

impl std::fmt::Display for MethodId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Ok(strategy) = s.parse::<Strategy>() {
            return Ok(MethodId::Selection(strategy));
        }
        s.parse::<BaselineKind>()
            .map(MethodId::Baseline)
            .map_err(|_| Error::Config(format!("unknown method `{s}`")))
    }
}

impl TryFrom<String> for MethodId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MethodId> for String {
    fn from(m: MethodId) -> String {
        m.as_str().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub name: String,
    pub path: PathBuf,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    /// Replaces the global pool for this dataset (external predictions are
    /// per dataset).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifiers: Option<Vec<ClassifierSpec>>,
}

fn default_label_column() -> String {
    "class".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// Confidence threshold on the support ratio.
    pub rho: f64,
    /// Target margin of the weighting program.
    pub gamma: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            rho: DEFAULT_RHO,
            gamma: DEFAULT_GAMMA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub protocol: Protocol,
    pub test_fraction: f64,
    pub output_dir: PathBuf,
    /// Method the others are compared against.
    pub reference: MethodId,
    pub methods: Vec<MethodId>,
    /// Write the per-sample trace file.
    pub trace: bool,
    pub datasets: Vec<DatasetEntry>,
    pub classifiers: Vec<ClassifierSpec>,
    pub forest: CshcConfig,
    pub selection: SelectionConfig,
    pub baselines: BaselineConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            protocol: Protocol::Split50,
            test_fraction: 1.0 / 3.0,
            output_dir: PathBuf::from("results"),
            reference: MethodId::Selection(Strategy::Lpr),
            methods: MethodId::headline(),
            trace: true,
            datasets: Vec::new(),
            classifiers: ClassifierSpec::default_pool(),
            forest: CshcConfig::default(),
            selection: SelectionConfig::default(),
            baselines: BaselineConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for d in &mut self.datasets {
            fix(&mut d.path);
            for spec in d.classifiers.iter_mut().flatten() {
                if let Some(p) = spec.predictions.as_mut() {
                    fix(p);
                }
            }
        }
        for spec in &mut self.classifiers {
            if let Some(p) = spec.predictions.as_mut() {
                fix(p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidFraction(self.test_fraction));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods configured".into()));
        }
        if !(0.0..=1.0).contains(&self.selection.rho) {
            return Err(Error::Config(format!("rho {} outside [0, 1]", self.selection.rho)));
        }
        if !(self.selection.gamma >= 0.0) {
            return Err(Error::Config("gamma must be non-negative".into()));
        }
        self.forest.validate()?;
        self.baselines.validate()?;
        let mut names: Vec<&str> = self.datasets.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate dataset name `{}`", w[0])));
        }
        for d in &self.datasets {
            if !d.path.exists() {
                return Err(Error::Config(format!("dataset file {} not found", d.path.display())));
            }
            let pool = self.pool_for(d);
            if pool.is_empty() {
                return Err(Error::Config(format!(
                    "dataset `{}` has an empty classifier pool",
                    d.name
                )));
            }
            for spec in pool {
                spec.validate()?;
                if let Some(p) = &spec.predictions {
                    if !p.exists() {
                        return Err(Error::Config(format!("predictions file {} not found", p.display())));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn pool_for<'a>(&'a self, d: &'a DatasetEntry) -> &'a [ClassifierSpec] {
        d.classifiers.as_deref().unwrap_or(&self.classifiers)
    }

    /// SHA-256 over the canonical JSON form, leaving out the output location
    /// so reruns elsewhere hash the same.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
