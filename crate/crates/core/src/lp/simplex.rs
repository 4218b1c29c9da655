//! Dense two-phase tableau simplex with Bland's pivoting rule.
//!
//! Solves `min c·x` subject to linear rows and `x >= 0`. Meant for the small
//! per-query weighting programs, not for general large-scale use.

use std::fmt::Write as _;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub op: Op,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Program {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Infeasible(f64),
    Unbounded,
    IterationLimit(usize),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Infeasible(v) => write!(f, "infeasible (phase-one objective {v:e})"),
            Failure::Unbounded => f.write_str("unbounded"),
            Failure::IterationLimit(n) => write!(f, "iteration limit of {n} pivots exceeded"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimum {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

struct Tableau {
    /// `rows × (cols + 1)`, last column is the right-hand side.
    a: Vec<Vec<f64>>,
    cols: usize,
    basis: Vec<usize>,
    /// Reduced costs for the current phase, last entry is `-objective`.
    cost: Vec<f64>,
    pivots: usize,
    limit: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.a[r][c];
        for v in self.a[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.a[r].clone();
        for (i, row) in self.a.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let factor = row[c];
            if factor != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= factor * pv;
                }
                row[c] = 0.0;
            }
        }
        let factor = self.cost[c];
        if factor != 0.0 {
            for (v, pv) in self.cost.iter_mut().zip(&pivot_row) {
                *v -= factor * pv;
            }
            self.cost[c] = 0.0;
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Runs Bland's rule over columns `< allowed`.
    fn optimize(&mut self, allowed: usize) -> Result<(), Failure> {
        loop {
            let Some(enter) = (0..allowed).find(|&j| self.cost[j] < -EPS) else {
                return Ok(());
            };
            let rhs = self.cols;
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.a.iter().enumerate() {
                let coef = row[enter];
                if coef > EPS {
                    let ratio = row[rhs] / coef;
                    let better = match leave {
                        None => true,
                        Some((l, best)) => ratio < best - EPS || (ratio <= best + EPS && self.basis[i] < self.basis[l]),
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Err(Failure::Unbounded);
            };
            if self.pivots >= self.limit {
                return Err(Failure::IterationLimit(self.limit));
            }
            self.pivot(r, enter);
        }
    }

    fn set_cost(&mut self, c: &[f64]) {
        let rhs = self.cols;
        self.cost = vec![0.0; self.cols + 1];
        self.cost[..c.len()].copy_from_slice(c);
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = self.cost_of(c, b);
            if cb != 0.0 {
                for j in 0..=rhs {
                    self.cost[j] -= cb * self.a[i][j];
                }
            }
        }
    }

    fn cost_of(&self, c: &[f64], j: usize) -> f64 {
        c.get(j).copied().unwrap_or(0.0)
    }
}

pub fn solve(program: &Program) -> Result<Optimum, Failure> {
    let n = program.n_vars;
    let m = program.rows.len();
    // normalise to non-negative right-hand sides
    let rows: Vec<Row> = program
        .rows
        .iter()
        .map(|r| {
            if r.rhs < 0.0 {
                Row {
                    coeffs: r.coeffs.iter().map(|v| -v).collect(),
                    op: match r.op {
                        Op::Le => Op::Ge,
                        Op::Ge => Op::Le,
                        Op::Eq => Op::Eq,
                    },
                    rhs: -r.rhs,
                }
            } else {
                r.clone()
            }
        })
        .collect();
    let n_slack = rows.iter().filter(|r| r.op != Op::Eq).count();
    let n_art = rows.iter().filter(|r| r.op != Op::Le).count();
    let art_start = n + n_slack;
    let cols = art_start + n_art;

    let mut a = vec![vec![0.0; cols + 1]; m];
    let mut basis = vec![0; m];
    let (mut s, mut t) = (n, art_start);
    for (i, r) in rows.iter().enumerate() {
        a[i][..n].copy_from_slice(&r.coeffs);
        a[i][cols] = r.rhs;
        match r.op {
            Op::Le => {
                a[i][s] = 1.0;
                basis[i] = s;
                s += 1;
            }
            Op::Ge => {
                a[i][s] = -1.0;
                s += 1;
                a[i][t] = 1.0;
                basis[i] = t;
                t += 1;
            }
            Op::Eq => {
                a[i][t] = 1.0;
                basis[i] = t;
                t += 1;
            }
        }
    }
    let limit = 50 * (m + cols).max(100);
    let mut tab = Tableau {
        a,
        cols,
        basis,
        cost: Vec::new(),
        pivots: 0,
        limit,
    };

    // phase one: minimise the sum of artificials
    let mut phase1 = vec![0.0; cols];
    phase1[art_start..].iter_mut().for_each(|v| *v = 1.0);
    tab.set_cost(&phase1);
    tab.optimize(cols)?;
    let infeasibility = -tab.cost[cols];
    if infeasibility > 1e-7 * (1.0 + rows.iter().map(|r| r.rhs.abs()).sum::<f64>()) {
        return Err(Failure::Infeasible(infeasibility));
    }
    // drive zero-level artificials out of the basis where possible
    for i in 0..m {
        if tab.basis[i] >= art_start {
            if let Some(j) = (0..art_start).find(|&j| tab.a[i][j].abs() > EPS) {
                tab.pivot(i, j);
            }
        }
    }

    // phase two over structural and slack columns only
    tab.set_cost(&program.objective);
    tab.optimize(art_start)?;

    let mut x = vec![0.0; n];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < n {
            x[b] = tab.a[i][cols].max(0.0);
        }
    }
    let objective = program.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(Optimum {
        x,
        objective,
        pivots: tab.pivots,
    })
}

impl Program {
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "min {:?}", self.objective);
        for r in &self.rows {
            let op = match r.op {
                Op::Le => "<=",
                Op::Ge => ">=",
                Op::Eq => "=",
            };
            let _ = writeln!(out, "{:?} {op} {}", r.coeffs, r.rhs);
        }
        out
    }
}
