//! Choosing a classifier from leaf statistics.
//!
//! Four strategies share one outcome type:
//!
//! * **cshc** picks the highest cumulative rank and only needs the chosen
//!   classifier to run.
//! * **rr** votes with cumulative ranks as weights over every classifier's
//!   test-time label.
//! * **lp** votes with weights from the per-query linear program.
//! * **lpr** runs rr, then lp, and falls back to agreement and
//!   dominant-class rules when neither is confident.
//!
//! Confidence is the ratio of the second-largest to the largest class
//! support; lower is more confident.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::CorrectnessMatrix;
use crate::error::{Error, Result};
use crate::forest::{leaf_ranks, Forest, LeafBundle};
use crate::lp;
use crate::rng::{self, Stream};

/// Weights within this distance count as tied.
const WEIGHT_TIE: f64 = 1e-9;

pub const DEFAULT_RHO: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "cshc")]
    Cshc,
    #[serde(rename = "rr")]
    Rr,
    #[serde(rename = "lp")]
    Lp,
    #[serde(rename = "lpr-agree")]
    LprAgree,
    #[serde(rename = "lpr-cshc-match")]
    LprCshcMatch,
    #[serde(rename = "lpr-dominant")]
    LprDominant,
    #[serde(rename = "lpr-fallback")]
    LprFallback,
    #[serde(rename = "ola")]
    Ola,
    #[serde(rename = "lca")]
    Lca,
    #[serde(rename = "apr")]
    Apriori,
    #[serde(rename = "apo")]
    Aposteriori,
    #[serde(rename = "mcb")]
    Mcb,
    #[serde(rename = "knora-e")]
    KnoraE,
    #[serde(rename = "knora-u")]
    KnoraU,
    #[serde(rename = "mv")]
    MajorityVote,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cshc => "cshc",
            Method::Rr => "rr",
            Method::Lp => "lp",
            Method::LprAgree => "lpr-agree",
            Method::LprCshcMatch => "lpr-cshc-match",
            Method::LprDominant => "lpr-dominant",
            Method::LprFallback => "lpr-fallback",
            Method::Ola => "ola",
            Method::Lca => "lca",
            Method::Apriori => "apr",
            Method::Aposteriori => "apo",
            Method::Mcb => "mcb",
            Method::KnoraE => "knora-e",
            Method::KnoraU => "knora-u",
            Method::MajorityVote => "mv",
        }
    }

    /// Exit points of the recourse chain past the first stage.
    pub fn is_recourse_exit(self) -> bool {
        matches!(
            self,
            Method::LprAgree | Method::LprCshcMatch | Method::LprDominant | Method::LprFallback
        )
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub chosen_classifier: usize,
    pub predicted_class: usize,
    pub method_used: Method,
    pub confidence_ratio: f64,
    pub recourse_invoked: bool,
    /// Stage ratios for traces; `None` when the stage did not run.
    pub rr_ratio: Option<f64>,
    pub lp_ratio: Option<f64>,
}

impl SelectionOutcome {
    pub fn simple(chosen: usize, predicted: usize, method: Method, ratio: f64) -> Self {
        SelectionOutcome {
            chosen_classifier: chosen,
            predicted_class: predicted,
            method_used: method,
            confidence_ratio: ratio,
            recourse_invoked: false,
            rr_ratio: None,
            lp_ratio: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportProfile {
    pub support: Vec<f64>,
    pub top_class: usize,
    pub second_class: Option<usize>,
    pub ratio: f64,
}

impl SupportProfile {
    /// Builds the profile; class ties go to the lower index.
    pub fn from_support(support: Vec<f64>) -> Self {
        let mut top = 0;
        for c in 1..support.len() {
            if support[c] > support[top] + WEIGHT_TIE {
                top = c;
            }
        }
        let mut second: Option<usize> = None;
        for c in (0..support.len()).filter(|&c| c != top) {
            if support[c] > 0.0 && second.is_none_or(|s| support[c] > support[s] + WEIGHT_TIE) {
                second = Some(c);
            }
        }
        let ratio = match second {
            Some(s) if support[top] > 0.0 => (support[s] / support[top]).min(1.0),
            _ => 0.0,
        };
        SupportProfile {
            support,
            top_class: top,
            second_class: second,
            ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vote {
    pub profile: SupportProfile,
    pub chosen_classifier: usize,
}

/// Weighted plurality vote. Among the classifiers voting for the winning
/// class, the largest weight is chosen and exact ties are drawn uniformly
/// from `rng`.
pub fn vote(weights: &[f64], labels: &[usize], n_classes: usize, rng: &mut rng::Rng) -> Result<Vote> {
    if weights.iter().all(|&w| w <= 0.0) {
        return Err(Error::ZeroWeights);
    }
    let mut support = vec![0.0; n_classes];
    for (&w, &l) in weights.iter().zip(labels) {
        support[l] += w;
    }
    let profile = SupportProfile::from_support(support);
    let voters: Vec<usize> = (0..labels.len()).filter(|&a| labels[a] == profile.top_class).collect();
    let max_w = voters.iter().map(|&a| weights[a]).fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = voters
        .into_iter()
        .filter(|&a| weights[a] >= max_w - WEIGHT_TIE)
        .collect();
    let chosen_classifier = if tied.len() == 1 {
        tied[0]
    } else {
        tied[rng.random_range(0..tied.len())]
    };
    Ok(Vote {
        profile,
        chosen_classifier,
    })
}

/// Highest cumulative rank; ties go to higher validation accuracy, then to
/// the lower index.
pub fn select_cshc_index(cumulative: &[f64], validation_accuracy: &[f64]) -> usize {
    let mut best = 0;
    for a in 1..cumulative.len() {
        let better = cumulative[a] > cumulative[best]
            || (cumulative[a] == cumulative[best] && validation_accuracy[a] > validation_accuracy[best]);
        if better {
            best = a;
        }
    }
    best
}

pub fn select_cshc(bundle: &LeafBundle, validation_accuracy: &[f64], test_labels: &[usize]) -> SelectionOutcome {
    let ranks = leaf_ranks(bundle);
    let chosen = select_cshc_index(&ranks.cumulative, validation_accuracy);
    SelectionOutcome::simple(chosen, test_labels[chosen], Method::Cshc, 0.0)
}

fn from_vote(v: Vote, labels: &[usize], method: Method) -> SelectionOutcome {
    SelectionOutcome::simple(
        v.chosen_classifier,
        labels[v.chosen_classifier],
        method,
        v.profile.ratio,
    )
}

pub fn select_rr(
    bundle: &LeafBundle,
    test_labels: &[usize],
    n_classes: usize,
    rng: &mut rng::Rng,
) -> Result<SelectionOutcome> {
    let ranks = leaf_ranks(bundle);
    let v = vote(&ranks.cumulative, test_labels, n_classes, rng)?;
    let mut out = from_vote(v, test_labels, Method::Rr);
    out.rr_ratio = Some(out.confidence_ratio);
    Ok(out)
}

pub fn select_lp(
    bundle: &LeafBundle,
    cm: &CorrectnessMatrix,
    test_labels: &[usize],
    gamma: f64,
    rng: &mut rng::Rng,
) -> Result<SelectionOutcome> {
    let inst = lp::build_instance(bundle, cm, gamma);
    let sol = lp::solve(&inst)?;
    let v = vote(&sol.weights, test_labels, cm.n_classes(), rng)?;
    let mut out = from_vote(v, test_labels, Method::Lp);
    out.lp_ratio = Some(out.confidence_ratio);
    Ok(out)
}

/// Recourse decisions after both weighted votes were computed.
pub fn resolve_recourse(
    rr: &SelectionOutcome,
    lp: &SelectionOutcome,
    cshc_classifier: usize,
    dominant_class: usize,
    test_labels: &[usize],
    rho: f64,
) -> SelectionOutcome {
    let (chosen, method, ratio) = if lp.confidence_ratio <= rho {
        (lp.chosen_classifier, Method::Lp, lp.confidence_ratio)
    } else if rr.predicted_class == lp.predicted_class {
        if rr.confidence_ratio < lp.confidence_ratio {
            (rr.chosen_classifier, Method::LprAgree, rr.confidence_ratio)
        } else {
            (lp.chosen_classifier, Method::LprAgree, lp.confidence_ratio)
        }
    } else {
        let cshc_label = test_labels[cshc_classifier];
        if cshc_label == rr.predicted_class || cshc_label == lp.predicted_class {
            (cshc_classifier, Method::LprCshcMatch, lp.confidence_ratio)
        } else if let Some(c) = [rr.chosen_classifier, lp.chosen_classifier, cshc_classifier]
            .into_iter()
            .find(|&a| test_labels[a] == dominant_class)
        {
            (c, Method::LprDominant, lp.confidence_ratio)
        } else {
            (lp.chosen_classifier, Method::LprFallback, lp.confidence_ratio)
        }
    };
    SelectionOutcome {
        chosen_classifier: chosen,
        predicted_class: test_labels[chosen],
        method_used: method,
        confidence_ratio: ratio,
        recourse_invoked: true,
        rr_ratio: Some(rr.confidence_ratio),
        lp_ratio: Some(lp.confidence_ratio),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn select_lpr(
    bundle: &LeafBundle,
    cm: &CorrectnessMatrix,
    validation_accuracy: &[f64],
    test_labels: &[usize],
    rho: f64,
    gamma: f64,
    rng: &mut rng::Rng,
) -> Result<SelectionOutcome> {
    let rr = select_rr(bundle, test_labels, cm.n_classes(), rng)?;
    if rr.confidence_ratio <= rho {
        return Ok(rr);
    }
    let lp = select_lp(bundle, cm, test_labels, gamma, rng)?;
    let ranks = leaf_ranks(bundle);
    let cshc = select_cshc_index(&ranks.cumulative, validation_accuracy);
    Ok(resolve_recourse(
        &rr,
        &lp,
        cshc,
        bundle.dominant_true_class,
        test_labels,
        rho,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Cshc,
    Rr,
    Lp,
    Lpr,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Cshc, Strategy::Rr, Strategy::Lp, Strategy::Lpr];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Cshc => "cshc",
            Strategy::Rr => "rr",
            Strategy::Lp => "lp",
            Strategy::Lpr => "lpr",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cshc" => Ok(Strategy::Cshc),
            "rr" => Ok(Strategy::Rr),
            "lp" => Ok(Strategy::Lp),
            "lpr" => Ok(Strategy::Lpr),
            other => Err(Error::Config(format!("unknown selection strategy `{other}`"))),
        }
    }
}

/// Common interface the harness drives every method through.
pub trait Selector: Sync {
    fn name(&self) -> &'static str;

    /// `sample` is the test-sample index, used only to derive tie-break streams.
    fn select(&self, sample: usize, x: &[f64], test_labels: &[usize]) -> Result<SelectionOutcome>;
}

/// A trained forest bundled with what the strategies need at query time.
#[derive(Debug, Clone)]
pub struct CshcSelector<'a> {
    pub forest: &'a Forest,
    pub cm: &'a CorrectnessMatrix,
    pub validation_accuracy: Vec<f64>,
    pub gamma: f64,
    pub rho: f64,
    pub seed: u64,
}

impl<'a> CshcSelector<'a> {
    pub fn new(forest: &'a Forest, cm: &'a CorrectnessMatrix) -> Self {
        CshcSelector {
            forest,
            cm,
            validation_accuracy: cm.accuracies(),
            gamma: lp::DEFAULT_GAMMA,
            rho: DEFAULT_RHO,
            seed: 0,
        }
    }

    /// The classifier vanilla CSHC would run for `x`.
    pub fn cshc_choice(&self, x: &[f64]) -> Result<usize> {
        let bundle = self.forest.query(x)?;
        Ok(select_cshc_index(
            &leaf_ranks(&bundle).cumulative,
            &self.validation_accuracy,
        ))
    }

    /// Selection for test sample `sample` (used to derive its tie-break stream).
    pub fn select(
        &self,
        strategy: Strategy,
        sample: usize,
        x: &[f64],
        test_labels: &[usize],
    ) -> Result<SelectionOutcome> {
        let bundle = self.forest.query(x)?;
        let mut rng = rng::stream(self.seed, Stream::Selection, sample as u64);
        let c = self.cm.n_classes();
        match strategy {
            Strategy::Cshc => Ok(select_cshc(&bundle, &self.validation_accuracy, test_labels)),
            Strategy::Rr => select_rr(&bundle, test_labels, c, &mut rng),
            Strategy::Lp => select_lp(&bundle, self.cm, test_labels, self.gamma, &mut rng),
            Strategy::Lpr => select_lpr(
                &bundle,
                self.cm,
                &self.validation_accuracy,
                test_labels,
                self.rho,
                self.gamma,
                &mut rng,
            ),
        }
    }
}

/// One strategy bound to a forest selector.
#[derive(Debug, Clone, Copy)]
pub struct StrategySelector<'s, 'a> {
    pub inner: &'s CshcSelector<'a>,
    pub strategy: Strategy,
}

impl Selector for StrategySelector<'_, '_> {
    fn name(&self) -> &'static str {
        self.strategy.as_str()
    }

    fn select(&self, sample: usize, x: &[f64], test_labels: &[usize]) -> Result<SelectionOutcome> {
        self.inner.select(self.strategy, sample, x, test_labels)
    }
}
