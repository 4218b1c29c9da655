//! Per-query classifier weighting program.
//!
//! Given the unique rows `e_i` of a query's leaf multiset (multiplicity `m_i`,
//! true class `y_i`, validation labels `l_i^a`), find weights `w_a` in
//! `[0, 100]` summing to 100 and penalties `g_i, f_i >= 0` with, for every
//! `c != y_i`,
//!
//! ```text
//! g_i + S_i(y_i) - S_i(c) >= gamma
//! f_i + S_i(y_i) - S_i(c) >= 1
//! ```
//!
//! where `S_i(c)` is the total weight of classifiers labelling `e_i` as `c`,
//! minimising `sum_i m_i (g_i + 2 f_i)`.

mod simplex;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::CorrectnessMatrix;
use crate::error::{Error, Result};
use crate::forest::LeafBundle;

pub use simplex::{solve as solve_program, Failure, Op, Optimum, Program, Row};

pub const DEFAULT_GAMMA: f64 = 80.0;
pub const WEIGHT_TOTAL: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpInstance {
    pub n_classifiers: usize,
    pub n_classes: usize,
    pub gamma: f64,
    /// Selector-training row of every unique example (forensics only).
    pub sample_indices: Vec<usize>,
    pub multiplicities: Vec<u64>,
    pub truth: Vec<usize>,
    /// `labels[i][a]`: class classifier `a` assigned to example `i`.
    pub labels: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub weights: Vec<f64>,
    pub g: Vec<f64>,
    pub f: Vec<f64>,
    pub objective: f64,
}

/// Deduplicates the bundle's multiset (multiplicities are already summed
/// there) and pulls validation labels from `cm`.
pub fn build_instance(bundle: &LeafBundle, cm: &CorrectnessMatrix, gamma: f64) -> LpInstance {
    let k = bundle.multiset.len();
    let mut inst = LpInstance {
        n_classifiers: cm.n_classifiers(),
        n_classes: cm.n_classes(),
        gamma,
        sample_indices: Vec::with_capacity(k),
        multiplicities: Vec::with_capacity(k),
        truth: Vec::with_capacity(k),
        labels: Vec::with_capacity(k),
    };
    for &(row, mult) in &bundle.multiset {
        inst.sample_indices.push(row);
        inst.multiplicities.push(mult);
        inst.truth.push(cm.truth(row));
        inst.labels.push(cm.predicted_row(row).to_vec());
    }
    inst
}

impl LpInstance {
    pub fn n_examples(&self) -> usize {
        self.truth.len()
    }

    /// Number of penalty rows in the full formulation: two per example and
    /// wrong class.
    pub fn n_penalty_constraints(&self) -> usize {
        2 * self.n_examples() * self.n_classes.saturating_sub(1)
    }

    /// `S_i(y_i) - S_i(c)` as a coefficient vector over the weights.
    fn margin_coeffs(&self, i: usize, c: usize) -> Vec<f64> {
        self.labels[i]
            .iter()
            .map(|&l| {
                if l == self.truth[i] {
                    1.0
                } else if l == c {
                    -1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Smallest margin `S_i(y_i) - S_i(c)` over wrong classes `c` at weights `w`.
    pub fn worst_margin(&self, i: usize, w: &[f64]) -> f64 {
        (0..self.n_classes)
            .filter(|&c| c != self.truth[i])
            .map(|c| self.margin_coeffs(i, c).iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest violation of any constraint (0 when feasible).
    pub fn max_violation(&self, sol: &LpSolution) -> f64 {
        let w = &sol.weights;
        let mut worst = (w.iter().sum::<f64>() - WEIGHT_TOTAL).abs();
        for &v in w.iter().chain(&sol.g).chain(&sol.f) {
            worst = worst.max(-v);
        }
        for &v in w {
            worst = worst.max(v - WEIGHT_TOTAL);
        }
        for i in 0..self.n_examples() {
            let margin = self.worst_margin(i, w);
            worst = worst.max(self.gamma - (sol.g[i] + margin));
            worst = worst.max(1.0 - (sol.f[i] + margin));
        }
        worst.max(0.0)
    }

    pub fn objective_of(&self, g: &[f64], f: &[f64]) -> f64 {
        self.multiplicities
            .iter()
            .zip(g.iter().zip(f))
            .map(|(&m, (g, f))| m as f64 * (g + 2.0 * f))
            .sum()
    }

    /// Text dump used in failure reports and golden files.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "lp-instance v1");
        let _ = writeln!(out, "classifiers {}", self.n_classifiers);
        let _ = writeln!(out, "classes {}", self.n_classes);
        let _ = writeln!(out, "gamma {}", self.gamma);
        let _ = writeln!(out, "examples {}", self.n_examples());
        for i in 0..self.n_examples() {
            let labels: Vec<String> = self.labels[i].iter().map(|l| l.to_string()).collect();
            let _ = writeln!(
                out,
                "{} {} {} {}",
                self.sample_indices[i],
                self.multiplicities[i],
                self.truth[i],
                labels.join(" ")
            );
        }
        out
    }

    pub fn parse_dump(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Config(format!("bad LP dump: {msg}"));
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some("lp-instance v1") {
            return Err(bad("missing header"));
        }
        let mut field = |name: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad(name))?;
            line.strip_prefix(name)
                .map(|v| v.trim().to_string())
                .ok_or_else(|| bad(name))
        };
        let n_classifiers: usize = field("classifiers")?.parse().map_err(|_| bad("classifiers"))?;
        let n_classes: usize = field("classes")?.parse().map_err(|_| bad("classes"))?;
        let gamma: f64 = field("gamma")?.parse().map_err(|_| bad("gamma"))?;
        let k: usize = field("examples")?.parse().map_err(|_| bad("examples"))?;
        let mut inst = LpInstance {
            n_classifiers,
            n_classes,
            gamma,
            sample_indices: Vec::with_capacity(k),
            multiplicities: Vec::with_capacity(k),
            truth: Vec::with_capacity(k),
            labels: Vec::with_capacity(k),
        };
        for line in lines.take(k) {
            let nums: Vec<usize> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad("example row")))
                .collect::<Result<_>>()?;
            if nums.len() != 3 + n_classifiers {
                return Err(bad("example row width"));
            }
            inst.sample_indices.push(nums[0]);
            inst.multiplicities.push(nums[1] as u64);
            inst.truth.push(nums[2]);
            inst.labels.push(nums[3..].to_vec());
        }
        if inst.n_examples() != k {
            return Err(bad("truncated"));
        }
        Ok(inst)
    }
}

impl LpSolution {
    pub fn dump(&self) -> String {
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ");
        format!(
            "lp-solution v1\nobjective {}\nw {}\ng {}\nf {}\n",
            self.objective,
            fmt(&self.weights),
            fmt(&self.g),
            fmt(&self.f)
        )
    }
}

/// Examples sharing `(y_i, l_i)` have identical constraint rows, so the
/// solver works on these groups with summed multiplicity. Within a group only
/// wrong classes some classifier actually predicts are kept; a class nobody
/// predicts has `S_i(c) = 0` and its rows are implied by any other wrong
/// class's rows.
struct Reduced {
    group_of: Vec<usize>,
    groups: Vec<(usize, u64, Vec<usize>)>,
}

fn reduce(inst: &LpInstance) -> Reduced {
    let mut index: BTreeMap<(usize, &[usize]), usize> = BTreeMap::new();
    let mut groups: Vec<(usize, u64, Vec<usize>)> = Vec::new();
    let mut group_of = Vec::with_capacity(inst.n_examples());
    for i in 0..inst.n_examples() {
        let key = (inst.truth[i], inst.labels[i].as_slice());
        let g = *index.entry(key).or_insert_with(|| {
            let y = inst.truth[i];
            let mut classes: Vec<usize> = inst.labels[i].iter().copied().filter(|&l| l != y).collect();
            classes.sort_unstable();
            classes.dedup();
            if classes.is_empty() {
                if let Some(c) = (0..inst.n_classes).find(|&c| c != y) {
                    classes.push(c);
                }
            }
            groups.push((i, 0, classes));
            groups.len() - 1
        });
        groups[g].1 += inst.multiplicities[i];
        group_of.push(g);
    }
    Reduced { group_of, groups }
}

/// Solves the weighting program to optimality.
pub fn solve(inst: &LpInstance) -> Result<LpSolution> {
    let n = inst.n_classifiers;
    let fail = |reason: String| Error::Lp {
        reason,
        dump: inst.dump(),
    };
    if n == 0 {
        return Err(fail("no classifiers".into()));
    }
    let red = reduce(inst);
    let p = red.groups.len();
    // variables: w (n), g (p), f (p)
    let n_vars = n + 2 * p;
    let mut objective = vec![0.0; n_vars];
    let mut rows = Vec::new();
    let mut sum = vec![0.0; n_vars];
    sum[..n].iter_mut().for_each(|v| *v = 1.0);
    rows.push(Row {
        coeffs: sum,
        op: Op::Eq,
        rhs: WEIGHT_TOTAL,
    });
    for (gi, (rep, mult, classes)) in red.groups.iter().enumerate() {
        objective[n + gi] = *mult as f64;
        objective[n + p + gi] = 2.0 * *mult as f64;
        for &c in classes {
            let margin = inst.margin_coeffs(*rep, c);
            for (slot, rhs) in [(n + gi, inst.gamma), (n + p + gi, 1.0)] {
                let mut coeffs = vec![0.0; n_vars];
                coeffs[..n].copy_from_slice(&margin);
                coeffs[slot] = 1.0;
                rows.push(Row {
                    coeffs,
                    op: Op::Ge,
                    rhs,
                });
            }
        }
    }
    let program = Program {
        n_vars,
        objective,
        rows,
    };
    let opt = solve_program(&program).map_err(|e| fail(e.to_string()))?;

    let weights = opt.x[..n].to_vec();
    // penalties follow from w in closed form; recomputing them removes
    // pivoting noise without changing the optimum
    let mut g = Vec::with_capacity(inst.n_examples());
    let mut f = Vec::with_capacity(inst.n_examples());
    for i in 0..inst.n_examples() {
        let gi = red.group_of[i];
        let margin = inst.worst_margin(i, &weights);
        g.push(opt.x[n + gi].max((inst.gamma - margin).max(0.0)));
        f.push(opt.x[n + p + gi].max((1.0 - margin).max(0.0)));
    }
    let sol = LpSolution {
        objective: inst.objective_of(&g, &f),
        weights,
        g,
        f,
    };
    let violation = inst.max_violation(&sol);
    if violation > 1e-6 {
        return Err(fail(format!(
            "solution violates constraints by {violation:e}\n{}",
            sol.dump()
        )));
    }
    Ok(sol)
}
