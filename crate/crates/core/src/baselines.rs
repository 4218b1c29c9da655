//! k-NN region-of-competence selectors used as comparison baselines.
//!
//! Every method looks at the `k` nearest DCS-training samples of a query
//! (Euclidean distance on standardized features) and scores classifiers on
//! them. Only training-side truth is consulted; the query contributes its
//! features and the pool's test-time labels.

use serde::{Deserialize, Serialize};

use crate::dataset::{CorrectnessMatrix, Dataset, Standardizer};
use crate::error::{Error, Result};
use crate::selection::{Method, SelectionOutcome, Selector, SupportProfile};

pub const DEFAULT_K: usize = 7;
pub const DEFAULT_MCB_THRESHOLD: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub k: usize,
    pub mcb_threshold: f64,
    /// Weight neighbors by inverse distance in the probabilistic methods.
    /// Off by default; not part of the reference description.
    pub distance_weighted: bool,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            k: DEFAULT_K,
            mcb_threshold: DEFAULT_MCB_THRESHOLD,
            distance_weighted: false,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("baseline k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.mcb_threshold) {
            return Err(Error::Config(format!(
                "mcb threshold {} outside [0, 1]",
                self.mcb_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselineKind {
    Ola,
    Lca,
    Apriori,
    Aposteriori,
    Mcb,
    KnoraE,
    KnoraU,
    MajorityVote,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 8] = [
        BaselineKind::Ola,
        BaselineKind::Lca,
        BaselineKind::Apriori,
        BaselineKind::Aposteriori,
        BaselineKind::Mcb,
        BaselineKind::KnoraE,
        BaselineKind::KnoraU,
        BaselineKind::MajorityVote,
    ];

    pub fn method(self) -> Method {
        match self {
            BaselineKind::Ola => Method::Ola,
            BaselineKind::Lca => Method::Lca,
            BaselineKind::Apriori => Method::Apriori,
            BaselineKind::Aposteriori => Method::Aposteriori,
            BaselineKind::Mcb => Method::Mcb,
            BaselineKind::KnoraE => Method::KnoraE,
            BaselineKind::KnoraU => Method::KnoraU,
            BaselineKind::MajorityVote => Method::MajorityVote,
        }
    }

    pub fn as_str(self) -> &'static str {
        self.method().as_str()
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.as_str() == lower)
            .ok_or_else(|| Error::Config(format!("unknown baseline `{s}`")))
    }
}

/// Nearest DCS-training samples, closest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub neighbors: Vec<usize>,
    pub distances: Vec<f64>,
}

impl Region {
    pub fn k(&self) -> usize {
        self.neighbors.len()
    }

    /// The `k` closest members.
    pub fn truncated(&self, k: usize) -> Region {
        Region {
            neighbors: self.neighbors[..k].to_vec(),
            distances: self.distances[..k].to_vec(),
        }
    }

    fn weights(&self, distance_weighted: bool) -> Vec<f64> {
        if distance_weighted {
            self.distances.iter().map(|&d| 1.0 / d.max(1e-12)).collect()
        } else {
            vec![1.0; self.k()]
        }
    }
}

/// Argmax over scores; ties go to the lower classifier index.
pub fn best_classifier(scores: &[f64]) -> usize {
    let mut best = 0;
    for (a, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = a;
        }
    }
    best
}

pub fn ola(region: &Region, cm: &CorrectnessMatrix) -> Vec<f64> {
    (0..cm.n_classifiers())
        .map(|a| {
            let hits = region.neighbors.iter().filter(|&&j| cm.is_correct(j, a)).count();
            hits as f64 / region.k() as f64
        })
        .collect()
}

pub fn lca(region: &Region, cm: &CorrectnessMatrix, query_labels: &[usize]) -> Vec<f64> {
    (0..cm.n_classifiers())
        .map(|a| {
            let c = query_labels[a];
            let same: Vec<usize> = region.neighbors.iter().copied().filter(|&j| cm.truth(j) == c).collect();
            if same.is_empty() {
                return 0.0;
            }
            same.iter().filter(|&&j| cm.is_correct(j, a)).count() as f64 / same.len() as f64
        })
        .collect()
}

fn weighted_mean(values: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (num, den) = values.fold((0.0, 0.0), |(n, d), (w, v)| (n + w * v, d + w));
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

pub fn apriori(region: &Region, cm: &CorrectnessMatrix, distance_weighted: bool) -> Vec<f64> {
    let w = region.weights(distance_weighted);
    (0..cm.n_classifiers())
        .map(|a| {
            weighted_mean(
                region
                    .neighbors
                    .iter()
                    .zip(&w)
                    .map(|(&j, &wj)| (wj, cm.truth_proba(j, a))),
            )
        })
        .collect()
}

pub fn aposteriori(
    region: &Region,
    cm: &CorrectnessMatrix,
    query_labels: &[usize],
    distance_weighted: bool,
) -> Vec<f64> {
    let w = region.weights(distance_weighted);
    (0..cm.n_classifiers())
        .map(|a| {
            let c = query_labels[a];
            weighted_mean(
                region
                    .neighbors
                    .iter()
                    .zip(&w)
                    .filter(|(&j, _)| cm.truth(j) == c)
                    .map(|(&j, &wj)| (wj, cm.truth_proba(j, a))),
            )
        })
        .collect()
}

/// Fraction of positions where two output profiles agree.
pub fn profile_similarity(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
}

pub fn mcb(region: &Region, cm: &CorrectnessMatrix, query_labels: &[usize], threshold: f64) -> Vec<f64> {
    let (neighbors, distances): (Vec<usize>, Vec<f64>) = region
        .neighbors
        .iter()
        .zip(&region.distances)
        .filter(|(&j, _)| profile_similarity(cm.predicted_row(j), query_labels) >= threshold)
        .map(|(&j, &d)| (j, d))
        .unzip();
    if neighbors.is_empty() {
        ola(region, cm)
    } else {
        ola(&Region { neighbors, distances }, cm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommitteeVote {
    pub profile: SupportProfile,
    /// Classifier reported as the selection.
    pub chosen_classifier: usize,
    pub committee: Vec<usize>,
}

/// Vote of `members` with `weights`; the reported classifier is the heaviest
/// voter for the winning class, ties to the lower index.
fn committee_vote(members: &[usize], weights: &[f64], labels: &[usize], n_classes: usize) -> CommitteeVote {
    let mut support = vec![0.0; n_classes];
    for (&a, &w) in members.iter().zip(weights) {
        support[labels[a]] += w;
    }
    let profile = SupportProfile::from_support(support);
    let mut chosen: Option<(usize, f64)> = None;
    for (&a, &w) in members.iter().zip(weights) {
        if labels[a] == profile.top_class && chosen.is_none_or(|(_, cw)| w > cw) {
            chosen = Some((a, w));
        }
    }
    CommitteeVote {
        chosen_classifier: chosen.map_or(members[0], |(a, _)| a),
        profile,
        committee: members.to_vec(),
    }
}

pub fn majority_vote(labels: &[usize], n_classes: usize) -> CommitteeVote {
    let all: Vec<usize> = (0..labels.len()).collect();
    committee_vote(&all, &vec![1.0; labels.len()], labels, n_classes)
}

pub fn knora_e(region: &Region, cm: &CorrectnessMatrix, query_labels: &[usize]) -> CommitteeVote {
    for kk in (1..=region.k()).rev() {
        let committee: Vec<usize> = (0..cm.n_classifiers())
            .filter(|&a| region.neighbors[..kk].iter().all(|&j| cm.is_correct(j, a)))
            .collect();
        if !committee.is_empty() {
            let ones = vec![1.0; committee.len()];
            return committee_vote(&committee, &ones, query_labels, cm.n_classes());
        }
    }
    majority_vote(query_labels, cm.n_classes())
}

pub fn knora_u(region: &Region, cm: &CorrectnessMatrix, query_labels: &[usize]) -> CommitteeVote {
    let weights: Vec<f64> = (0..cm.n_classifiers())
        .map(|a| region.neighbors.iter().filter(|&&j| cm.is_correct(j, a)).count() as f64)
        .collect();
    let voters: Vec<usize> = (0..cm.n_classifiers()).filter(|&a| weights[a] > 0.0).collect();
    if voters.is_empty() {
        return majority_vote(query_labels, cm.n_classes());
    }
    let w: Vec<f64> = voters.iter().map(|&a| weights[a]).collect();
    committee_vote(&voters, &w, query_labels, cm.n_classes())
}

/// DCS-training material for the neighborhood methods.
#[derive(Debug, Clone)]
pub struct RegionOfCompetence {
    standardizer: Standardizer,
    features: Dataset,
    cm: CorrectnessMatrix,
    config: BaselineConfig,
}

impl RegionOfCompetence {
    /// `train` and `cm` must describe the same samples in the same order.
    pub fn new(train: &Dataset, cm: CorrectnessMatrix, config: BaselineConfig) -> Result<Self> {
        config.validate()?;
        if train.n_samples() != cm.n_samples() {
            return Err(Error::DimensionMismatch {
                expected: train.n_samples(),
                got: cm.n_samples(),
            });
        }
        if train.n_samples() == 0 {
            return Err(Error::EmptyPartition("dcs training"));
        }
        let standardizer = Standardizer::fit(train);
        Ok(RegionOfCompetence {
            features: train.standardized(&standardizer),
            standardizer,
            cm,
            config,
        })
    }

    pub fn config(&self) -> &BaselineConfig {
        &self.config
    }

    pub fn correctness(&self) -> &CorrectnessMatrix {
        &self.cm
    }

    /// Exact `k` nearest neighbors of raw query `x`; distance ties go to the
    /// lower sample index. `k` larger than the training set is clamped.
    pub fn region_of(&self, x: &[f64], k: usize) -> Result<Region> {
        self.features.check_dims(x)?;
        let n = self.features.n_samples();
        let k = if k > n {
            log::warn!("region size {k} exceeds {n} training samples; clamping");
            n
        } else {
            k.max(1)
        };
        let q = self.standardizer.transform(x);
        let mut dist: Vec<(f64, usize)> = (0..n)
            .map(|j| {
                let d2: f64 = self
                    .features
                    .row(j)
                    .iter()
                    .zip(&q)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2, j)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < n {
            dist.select_nth_unstable_by(k - 1, cmp);
            dist.truncate(k);
        }
        dist.sort_by(cmp);
        Ok(Region {
            neighbors: dist.iter().map(|&(_, j)| j).collect(),
            distances: dist.iter().map(|&(d2, _)| d2.sqrt()).collect(),
        })
    }

    /// Per-classifier competence for the score-based methods.
    pub fn competence(&self, kind: BaselineKind, region: &Region, query_labels: &[usize]) -> Option<Vec<f64>> {
        let cm = &self.cm;
        let dw = self.config.distance_weighted;
        Some(match kind {
            BaselineKind::Ola => ola(region, cm),
            BaselineKind::Lca => lca(region, cm, query_labels),
            BaselineKind::Apriori => apriori(region, cm, dw),
            BaselineKind::Aposteriori => aposteriori(region, cm, query_labels, dw),
            BaselineKind::Mcb => mcb(region, cm, query_labels, self.config.mcb_threshold),
            BaselineKind::KnoraE | BaselineKind::KnoraU | BaselineKind::MajorityVote => return None,
        })
    }

    pub fn select(&self, kind: BaselineKind, x: &[f64], query_labels: &[usize]) -> Result<SelectionOutcome> {
        if query_labels.len() != self.cm.n_classifiers() {
            return Err(Error::DimensionMismatch {
                expected: self.cm.n_classifiers(),
                got: query_labels.len(),
            });
        }
        let method = kind.method();
        if kind == BaselineKind::MajorityVote {
            let v = majority_vote(query_labels, self.cm.n_classes());
            return Ok(SelectionOutcome::simple(
                v.chosen_classifier,
                v.profile.top_class,
                method,
                v.profile.ratio,
            ));
        }
        let region = self.region_of(x, self.config.k)?;
        if let Some(scores) = self.competence(kind, &region, query_labels) {
            let a = best_classifier(&scores);
            return Ok(SelectionOutcome::simple(a, query_labels[a], method, 0.0));
        }
        let v = match kind {
            BaselineKind::KnoraE => knora_e(&region, &self.cm, query_labels),
            _ => knora_u(&region, &self.cm, query_labels),
        };
        Ok(SelectionOutcome::simple(
            v.chosen_classifier,
            v.profile.top_class,
            method,
            v.profile.ratio,
        ))
    }
}

/// One baseline bound to its training material.
#[derive(Debug, Clone, Copy)]
pub struct BaselineSelector<'a> {
    pub roc: &'a RegionOfCompetence,
    pub kind: BaselineKind,
}

impl Selector for BaselineSelector<'_> {
    fn name(&self) -> &'static str {
        self.kind.as_str()
    }

    fn select(&self, _sample: usize, x: &[f64], test_labels: &[usize]) -> Result<SelectionOutcome> {
        self.roc.select(self.kind, x, test_labels)
    }
}
