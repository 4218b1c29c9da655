//! Cost-sensitive hierarchical clustering (CSHC) for dynamic classifier selection.
//!
//! The crate is organised bottom-up:
//!
//! * [`dataset`] loads tabular data, produces stratified splits and folds, and
//!   builds the per-sample correctness matrices every selector trains on.
//! * [`classifiers`] holds the base-classifier pool (Gaussian naive Bayes,
//!   1-NN, an unpruned Gini tree, an averaged perceptron) plus ingestion of
//!   predictions computed elsewhere.
//! * [`forest`] grows the ensemble of cost-sensitive cluster trees and answers
//!   leaf queries.
//! * [`lp`] is a dense two-phase simplex solver together with the per-query
//!   weighting program.
//! * [`selection`] turns leaf statistics into a chosen classifier (cumulative
//!   rank, rank-weighted vote, LP-weighted vote, and the confidence-gated
//!   recourse chain).
//! * [`baselines`] implements the k-NN region-of-competence competitors.
//! * [`harness`] runs experiments end to end and computes comparison
//!   statistics.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod classifiers;
pub mod dataset;
pub mod error;
pub mod forest;
pub mod harness;
pub mod lp;
pub mod rng;
pub mod selection;
pub mod synthetic;

pub use baselines::{BaselineConfig, BaselineKind, Region, RegionOfCompetence};
pub use classifiers::{ClassifierKind, ClassifierSpec, TrainedClassifier};
pub use dataset::{CorrectnessMatrix, Dataset, Protocol, SplitPlan};
pub use error::{Error, Result};
pub use forest::{CshcConfig, Forest, LeafBundle, Ranks};
pub use lp::{LpInstance, LpSolution};
pub use selection::{Method, SelectionOutcome, SupportProfile};
