//! Cost-sensitive cluster trees.
//!
//! Each tree recursively splits a bootstrap multiset of selector-training
//! rows on a single `(feature, threshold)` pair. A split is scored by how many
//! rows are answered correctly when each side gets its own best classifier,
//! compared with the parent's single best classifier. Counts are weighted by
//! bootstrap multiplicity, so all scores are integers.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::midpoint;
use crate::dataset::{CorrectnessMatrix, Dataset};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CshcConfig {
    pub n_trees: usize,
    pub bootstrap_fraction: f64,
    /// Multiplier on `sqrt(F)` for the per-tree feature subset.
    pub feature_factor: f64,
    pub min_cluster_size: u64,
    pub max_depth: usize,
    /// Relative improvement below which a cluster is not split further.
    pub min_improvement: f64,
    pub seed: u64,
}

impl Default for CshcConfig {
    fn default() -> Self {
        CshcConfig {
            n_trees: 50,
            bootstrap_fraction: 0.8,
            feature_factor: 2.0,
            min_cluster_size: 2,
            max_depth: 15,
            min_improvement: 0.02,
            seed: 0,
        }
    }
}

impl CshcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.n_trees < 1 {
            return bad("n_trees must be at least 1");
        }
        if !(self.bootstrap_fraction > 0.0 && self.bootstrap_fraction <= 1.0) {
            return bad("bootstrap_fraction must lie in (0, 1]");
        }
        if self.min_cluster_size < 1 {
            return bad("min_cluster_size must be at least 1");
        }
        if self.max_depth < 1 {
            return bad("max_depth must be at least 1");
        }
        if !(0.0..1.0).contains(&self.min_improvement) {
            return bad("min_improvement must lie in [0, 1)");
        }
        if !(self.feature_factor > 0.0) {
            return bad("feature_factor must be positive");
        }
        Ok(())
    }

    /// `round(factor · sqrt(F))` (half rounds up), clamped to `1..=F`.
    pub fn feature_subset_size(&self, n_features: usize) -> usize {
        let raw = (self.feature_factor * (n_features as f64).sqrt() + 0.5).floor() as usize;
        raw.clamp(1, n_features.max(1))
    }

    /// Number of bootstrap draws for a selector set of `m` rows.
    pub fn bootstrap_draws(&self, m: usize) -> usize {
        ((self.bootstrap_fraction * m as f64 - 1e-9).ceil() as usize).max(1)
    }
}

/// Bootstrap multiset as `(row, multiplicity)` pairs sorted by row.
pub type Multiset = Vec<(usize, u64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub members: Multiset,
    pub correct_counts: Vec<u64>,
    pub size: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum ClusterNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: Box<ClusterNode>,
        right: Box<ClusterNode>,
    },
    Leaf(Leaf),
}

impl ClusterNode {
    pub fn leaves(&self) -> Vec<&Leaf> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            match node {
                ClusterNode::Leaf(leaf) => out.push(leaf),
                ClusterNode::Internal { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        out
    }

    pub fn depth(&self) -> usize {
        match self {
            ClusterNode::Leaf(_) => 0,
            ClusterNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn route(&self, x: &[f64]) -> &Leaf {
        let mut node = self;
        loop {
            match node {
                ClusterNode::Leaf(leaf) => return leaf,
                ClusterNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTree {
    /// Features this tree may split on, ascending.
    pub features: Vec<usize>,
    /// Raw bootstrap draws (row indices, in draw order).
    pub bootstrap: Vec<usize>,
    pub root: ClusterNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub format_version: u32,
    pub config: CshcConfig,
    pub n_features: usize,
    pub n_classifiers: usize,
    pub n_classes: usize,
    /// True class of every selector-training row.
    pub truth: Vec<usize>,
    pub trees: Vec<ClusterTree>,
}

/// Weighted correct counts per classifier over a multiset.
pub fn correct_counts(members: &[(usize, u64)], cm: &CorrectnessMatrix) -> Vec<u64> {
    let mut counts = vec![0u64; cm.n_classifiers()];
    for &(row, mult) in members {
        for (c, &ok) in counts.iter_mut().zip(cm.correct_row(row)) {
            if ok {
                *c += mult;
            }
        }
    }
    counts
}

fn best(counts: &[u64]) -> u64 {
    counts.iter().copied().max().unwrap_or(0)
}

/// Gain of splitting `members` at `value <= threshold`, or `None` when one
/// side would be empty.
pub fn split_gain(
    members: &[(usize, u64)],
    feature: usize,
    threshold: f64,
    cm: &CorrectnessMatrix,
    ds: &Dataset,
) -> Option<u64> {
    let (left, right): (Multiset, Multiset) = members
        .iter()
        .partition(|&&(row, _)| ds.value(row, feature) <= threshold);
    if left.is_empty() || right.is_empty() {
        return None;
    }
    let children = best(&correct_counts(&left, cm)) + best(&correct_counts(&right, cm));
    Some(children - best(&correct_counts(members, cm)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: u64,
}

/// Best split of `members` over `features` such that both sides keep a total
/// multiplicity of at least `min_size`. Ties: highest gain, then lowest
/// feature index, then lowest threshold.
pub fn best_split(
    members: &[(usize, u64)],
    features: &[usize],
    min_size: u64,
    cm: &CorrectnessMatrix,
    ds: &Dataset,
) -> Option<SplitCandidate> {
    let n = cm.n_classifiers();
    let total = correct_counts(members, cm);
    let parent = best(&total);
    let size: u64 = members.iter().map(|m| m.1).sum();
    let mut sorted_features = features.to_vec();
    sorted_features.sort_unstable();
    let mut order = members.to_vec();
    let mut found: Option<SplitCandidate> = None;
    for &feature in &sorted_features {
        order.sort_by(|a, b| ds.value(a.0, feature).total_cmp(&ds.value(b.0, feature)));
        let mut left = vec![0u64; n];
        let mut left_size = 0u64;
        for pos in 0..order.len().saturating_sub(1) {
            let (row, mult) = order[pos];
            left_size += mult;
            for (c, &ok) in left.iter_mut().zip(cm.correct_row(row)) {
                if ok {
                    *c += mult;
                }
            }
            let lo = ds.value(row, feature);
            let hi = ds.value(order[pos + 1].0, feature);
            if lo == hi || left_size < min_size || size - left_size < min_size {
                continue;
            }
            let right_best = total.iter().zip(&left).map(|(t, l)| t - l).max().unwrap_or(0);
            let gain = best(&left) + right_best - parent;
            if found.is_none_or(|f| gain > f.gain) {
                found = Some(SplitCandidate {
                    feature,
                    threshold: midpoint(lo, hi),
                    gain,
                });
            }
        }
    }
    found
}

struct Grower<'a> {
    cfg: &'a CshcConfig,
    cm: &'a CorrectnessMatrix,
    ds: &'a Dataset,
    features: &'a [usize],
}

impl Grower<'_> {
    fn grow(&self, members: Multiset, depth: usize) -> ClusterNode {
        let counts = correct_counts(&members, self.cm);
        let parent = best(&counts);
        let split = if depth >= self.cfg.max_depth {
            None
        } else {
            best_split(&members, self.features, self.cfg.min_cluster_size, self.cm, self.ds)
                .filter(|s| s.gain > 0 && s.gain as f64 >= self.cfg.min_improvement * parent as f64)
        };
        match split {
            None => {
                let size = members.iter().map(|m| m.1).sum();
                ClusterNode::Leaf(Leaf {
                    members,
                    correct_counts: counts,
                    size,
                })
            }
            Some(s) => {
                let (left, right): (Multiset, Multiset) = members
                    .into_iter()
                    .partition(|&(row, _)| self.ds.value(row, s.feature) <= s.threshold);
                ClusterNode::Internal {
                    feature: s.feature,
                    threshold: s.threshold,
                    left: Box::new(self.grow(left, depth + 1)),
                    right: Box::new(self.grow(right, depth + 1)),
                }
            }
        }
    }
}

/// Collapses raw draws into a sorted multiset.
pub fn to_multiset(draws: &[usize]) -> Multiset {
    let mut map: BTreeMap<usize, u64> = BTreeMap::new();
    for &d in draws {
        *map.entry(d).or_default() += 1;
    }
    map.into_iter().collect()
}

/// Grows one tree over `members` restricted to `features`.
pub fn grow_tree(
    members: Multiset,
    cfg: &CshcConfig,
    cm: &CorrectnessMatrix,
    ds: &Dataset,
    features: &[usize],
) -> ClusterNode {
    Grower { cfg, cm, ds, features }.grow(members, 0)
}

/// Builds the forest. `ds` row `i` must describe correctness-matrix row `i`.
pub fn build_forest(cm: &CorrectnessMatrix, ds: &Dataset, cfg: &CshcConfig) -> Result<Forest> {
    cfg.validate()?;
    let m = cm.n_samples();
    if m == 0 {
        return Err(Error::EmptyPartition("selector training"));
    }
    if ds.n_samples() != m {
        return Err(Error::InvalidDataset(format!(
            "{} feature rows for {} correctness rows",
            ds.n_samples(),
            m
        )));
    }
    let f = ds.n_features();
    let n_sub = cfg.feature_subset_size(f);
    let draws = cfg.bootstrap_draws(m);
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(cfg.seed, Stream::Tree, t as u64);
            let mut features = index::sample(&mut rng, f, n_sub).into_vec();
            features.sort_unstable();
            let bootstrap: Vec<usize> = (0..draws).map(|_| rng.random_range(0..m)).collect();
            let root = grow_tree(to_multiset(&bootstrap), cfg, cm, ds, &features);
            ClusterTree {
                features,
                bootstrap,
                root,
            }
        })
        .collect();
    Ok(Forest {
        format_version: FOREST_FORMAT_VERSION,
        config: cfg.clone(),
        n_features: f,
        n_classifiers: cm.n_classifiers(),
        n_classes: cm.n_classes(),
        truth: cm.truths().to_vec(),
        trees,
    })
}

/// Per-tree leaf statistics for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafBundle {
    /// Correct counts of the leaf reached in each tree.
    pub leaf_counts: Vec<Vec<u64>>,
    /// Union of the reached leaves' multisets, multiplicities summed.
    pub multiset: Multiset,
    pub correct_counts: Vec<u64>,
    pub dominant_true_class: usize,
}

impl LeafBundle {
    pub fn n_classifiers(&self) -> usize {
        self.correct_counts.len()
    }
}

/// Average ranks of `counts`: worst gets 1, best gets `n`, ties share the
/// mean of the ranks they span.
pub fn rank_counts(counts: &[u64]) -> Vec<f64> {
    let n = counts.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&a| counts[a]);
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end + 1 < n && counts[order[end + 1]] == counts[order[start]] {
            end += 1;
        }
        let avg = (start + end) as f64 / 2.0 + 1.0;
        for &a in &order[start..=end] {
            ranks[a] = avg;
        }
        start = end + 1;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranks {
    pub per_tree: Vec<Vec<f64>>,
    pub cumulative: Vec<f64>,
}

pub fn leaf_ranks(bundle: &LeafBundle) -> Ranks {
    let per_tree: Vec<Vec<f64>> = bundle.leaf_counts.iter().map(|c| rank_counts(c)).collect();
    let mut cumulative = vec![0.0; bundle.n_classifiers()];
    for ranks in &per_tree {
        for (c, r) in cumulative.iter_mut().zip(ranks) {
            *c += r;
        }
    }
    Ranks { per_tree, cumulative }
}

impl Forest {
    pub fn query(&self, x: &[f64]) -> Result<LeafBundle> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let leaves: Vec<&Leaf> = self.trees.iter().map(|t| t.root.route(x)).collect();
        Ok(self.bundle(&leaves))
    }

    fn bundle(&self, leaves: &[&Leaf]) -> LeafBundle {
        let mut agg = vec![0u64; self.truth.len()];
        let mut correct = vec![0u64; self.n_classifiers];
        for leaf in leaves {
            for &(row, mult) in &leaf.members {
                agg[row] += mult;
            }
            for (c, v) in correct.iter_mut().zip(&leaf.correct_counts) {
                *c += v;
            }
        }
        let mut class_weight = vec![0u64; self.n_classes];
        let multiset: Multiset = agg.into_iter().enumerate().filter(|&(_, m)| m > 0).collect();
        for &(row, mult) in &multiset {
            class_weight[self.truth[row]] += mult;
        }
        let mut dominant = 0;
        for (c, &w) in class_weight.iter().enumerate() {
            if w > class_weight[dominant] {
                dominant = c;
            }
        }
        LeafBundle {
            leaf_counts: leaves.iter().map(|l| l.correct_counts.clone()).collect(),
            multiset,
            correct_counts: correct,
            dominant_true_class: dominant,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let forest: Forest = serde_json::from_str(text)?;
        if forest.format_version != FOREST_FORMAT_VERSION {
            return Err(Error::FormatVersion(forest.format_version));
        }
        Ok(forest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// 1-feature dataset plus correctness built from explicit bit rows.
    fn fixture(values: &[f64], correct: &[&[bool]]) -> (Dataset, CorrectnessMatrix) {
        let rows = values.iter().map(|&v| vec![v]).collect();
        let ds = Dataset::from_rows(rows, vec![0; values.len()], 2).unwrap();
        let predicted = correct
            .iter()
            .map(|bits| bits.iter().map(|&ok| usize::from(!ok)).collect())
            .collect();
        let cm = CorrectnessMatrix::from_predictions(predicted, vec![0; values.len()], 2).unwrap();
        (ds, cm)
    }

    #[test]
    fn subset_size_rule() {
        let cfg = CshcConfig::default();
        assert_eq!(cfg.feature_subset_size(100), 20);
        assert_eq!(cfg.feature_subset_size(4), 4);
        assert_eq!(cfg.feature_subset_size(1), 1);
        // 2·sqrt(9) = 6 exactly; 2·sqrt(2) = 2.83 -> 3 capped at 2
        assert_eq!(cfg.feature_subset_size(9), 6);
        assert_eq!(cfg.feature_subset_size(2), 2);
        assert_eq!(cfg.bootstrap_draws(10), 8);
        assert_eq!(cfg.bootstrap_draws(11), 9);
    }

    #[test]
    fn four_member_split_example() {
        // A correct on {1,2}, B correct on {3,4}
        let (ds, cm) = fixture(
            &[1.0, 2.0, 3.0, 4.0],
            &[&[true, false], &[true, false], &[false, true], &[false, true]],
        );
        let members: Multiset = (0..4).map(|i| (i, 1)).collect();
        let s = best_split(&members, &[0], 1, &cm, &ds).unwrap();
        assert_eq!(s.threshold, 2.5);
        assert_eq!(s.gain, 2);
        assert_eq!(split_gain(&members, 0, 2.5, &cm, &ds), Some(2));
        assert_eq!(split_gain(&members, 0, 10.0, &cm, &ds), None);
    }

    #[test]
    fn weighted_gain_uses_multiplicities() {
        let (ds, cm) = fixture(
            &[1.0, 2.0, 3.0, 4.0],
            &[&[true, false], &[true, false], &[false, true], &[false, true]],
        );
        // multiplicities (2,2,1,1): parent best = A with 4, children 4 + 2
        let members: Multiset = vec![(0, 2), (1, 2), (2, 1), (3, 1)];
        assert_eq!(split_gain(&members, 0, 2.5, &cm, &ds), Some(2));
    }

    #[test]
    fn uniformly_best_classifier_gives_leaf() {
        let (ds, cm) = fixture(
            &[1.0, 2.0, 3.0, 4.0],
            &[&[true, false], &[true, true], &[true, false], &[true, true]],
        );
        let members: Multiset = (0..4).map(|i| (i, 1)).collect();
        let s = best_split(&members, &[0], 1, &cm, &ds).unwrap();
        assert_eq!(s.gain, 0);
        let node = grow_tree(members, &CshcConfig::default(), &cm, &ds, &[0]);
        assert!(matches!(node, ClusterNode::Leaf(_)));
    }

    #[test]
    fn two_member_cluster_is_a_leaf() {
        let (ds, cm) = fixture(&[1.0, 2.0], &[&[true, false], &[false, true]]);
        let node = grow_tree(vec![(0, 1), (1, 1)], &CshcConfig::default(), &cm, &ds, &[0]);
        assert!(matches!(node, ClusterNode::Leaf(ref l) if l.size == 2));
    }

    #[test]
    fn ranks_average_ties_and_sum() {
        assert_eq!(rank_counts(&[3, 1, 2]), vec![3.0, 1.0, 2.0]);
        assert_eq!(rank_counts(&[2, 2, 0]), vec![2.5, 2.5, 1.0]);
        let bundle = LeafBundle {
            leaf_counts: vec![vec![3, 1, 2], vec![2, 1, 3]],
            multiset: vec![],
            correct_counts: vec![5, 2, 5],
            dominant_true_class: 0,
        };
        assert_eq!(leaf_ranks(&bundle).cumulative, vec![5.0, 2.0, 5.0]);
    }

    fn single_leaf_forest(trees: Vec<ClusterNode>, truth: Vec<usize>) -> Forest {
        Forest {
            format_version: FOREST_FORMAT_VERSION,
            config: CshcConfig::default(),
            n_features: 1,
            n_classifiers: 2,
            n_classes: 2,
            truth,
            trees: trees
                .into_iter()
                .map(|root| ClusterTree {
                    features: vec![0],
                    bootstrap: vec![],
                    root,
                })
                .collect(),
        }
    }

    fn leaf(members: Multiset) -> ClusterNode {
        let size = members.iter().map(|m| m.1).sum();
        ClusterNode::Leaf(Leaf {
            members,
            correct_counts: vec![1, 0],
            size,
        })
    }

    #[test]
    fn query_unions_multisets_and_routes_boundary_left() {
        let forest = single_leaf_forest(vec![leaf(vec![(0, 1), (4, 1)])], vec![0, 1, 1, 1, 1]);
        let b = forest.query(&[0.0]).unwrap();
        assert_eq!(b.multiset, vec![(0, 1), (4, 1)]);
        // class tie 1:1 -> lower index
        assert_eq!(b.dominant_true_class, 0);

        let forest = single_leaf_forest(vec![leaf(vec![(3, 1)]), leaf(vec![(3, 2), (1, 1)])], vec![0, 1, 1, 0]);
        let b = forest.query(&[0.0]).unwrap();
        assert_eq!(b.multiset, vec![(1, 1), (3, 3)]);
        assert_eq!(b.dominant_true_class, 0);

        let split = ClusterNode::Internal {
            feature: 0,
            threshold: 2.5,
            left: Box::new(leaf(vec![(0, 1)])),
            right: Box::new(leaf(vec![(1, 1)])),
        };
        let forest = single_leaf_forest(vec![split], vec![0, 1]);
        assert_eq!(forest.query(&[2.5]).unwrap().multiset, vec![(0, 1)]);
        assert_eq!(forest.query(&[2.6]).unwrap().multiset, vec![(1, 1)]);
        assert!(matches!(
            forest.query(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn random_problem(seed: u64, m: usize, f: usize, n: usize) -> (Dataset, CorrectnessMatrix) {
        let mut rng = rng::stream(seed, Stream::Synthetic, 0);
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..f).map(|_| f64::from(rng.random_range(0..6u8))).collect())
            .collect();
        let ds = Dataset::from_rows(rows, vec![0; m], 2).unwrap();
        let predicted = (0..m)
            .map(|_| (0..n).map(|_| usize::from(rng.random_bool(0.5))).collect())
            .collect();
        let cm = CorrectnessMatrix::from_predictions(predicted, vec![0; m], 2).unwrap();
        (ds, cm)
    }

    #[test]
    fn forest_invariants() {
        let (ds, cm) = random_problem(9, 60, 3, 3);
        let cfg = CshcConfig {
            n_trees: 8,
            seed: 4,
            ..CshcConfig::default()
        };
        let forest = build_forest(&cm, &ds, &cfg).unwrap();
        assert_eq!(forest.trees.len(), 8);
        for tree in &forest.trees {
            assert_eq!(tree.bootstrap.len(), 48);
            let mut union: BTreeMap<usize, u64> = BTreeMap::new();
            for l in tree.root.leaves() {
                assert!(l.size >= cfg.min_cluster_size);
                assert_eq!(l.correct_counts, correct_counts(&l.members, &cm));
                for &(r, m) in &l.members {
                    *union.entry(r).or_default() += m;
                }
            }
            assert_eq!(union.into_iter().collect::<Multiset>(), to_multiset(&tree.bootstrap));
            assert!(tree.root.depth() <= cfg.max_depth);
        }
        assert_eq!(forest, build_forest(&cm, &ds, &cfg).unwrap());
        let back = Forest::from_json(&forest.to_json().unwrap()).unwrap();
        assert_eq!(back, forest);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn cumulative_ranks_sum(seed in 0u64..1000, n in 1usize..5) {
            let (ds, cm) = random_problem(seed, 30, 2, n);
            let cfg = CshcConfig { n_trees: 5, seed, ..CshcConfig::default() };
            let forest = build_forest(&cm, &ds, &cfg).unwrap();
            let ranks = leaf_ranks(&forest.query(ds.row(0)).unwrap());
            let total: f64 = ranks.cumulative.iter().sum();
            prop_assert_eq!(total, 5.0 * (n * (n + 1)) as f64 / 2.0);
        }
    }
}
