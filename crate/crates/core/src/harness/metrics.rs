//! Cross-benchmark comparison statistics.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::CorrectnessMatrix;
use crate::error::{Error, Result};

/// Percentage of samples on which at least one classifier is right.
pub fn oracle_accuracy(cm: &CorrectnessMatrix) -> f64 {
    if cm.n_samples() == 0 {
        return 0.0;
    }
    let covered = (0..cm.n_samples())
        .filter(|&i| cm.correct_row(i).iter().any(|&c| c))
        .count();
    100.0 * covered as f64 / cm.n_samples() as f64
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// Mean geometric improvement of `reference` over `method`, in percent:
/// `(GM(reference / method) - 1) * 100`.
pub fn mgi(reference: &[f64], method: &[f64]) -> Result<f64> {
    check_lengths(reference, method)?;
    if reference.is_empty() {
        return Err(Error::Metric("mgi of empty vectors".into()));
    }
    if let Some(v) = reference.iter().chain(method).find(|&&v| !(v > 0.0)) {
        return Err(Error::Metric(format!("mgi needs positive accuracies, got {v}")));
    }
    let mean_log = reference.iter().zip(method).map(|(r, m)| (r / m).ln()).sum::<f64>() / reference.len() as f64;
    Ok((mean_log.exp() - 1.0) * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinLoss {
    /// Benchmarks where the method beats the reference.
    pub wins: usize,
    /// Benchmarks where the reference beats the method.
    pub losses: usize,
    pub ties: usize,
}

/// Element-wise comparison at full precision.
pub fn wins_losses(reference: &[f64], method: &[f64]) -> Result<WinLoss> {
    check_lengths(reference, method)?;
    let mut out = WinLoss {
        wins: 0,
        losses: 0,
        ties: 0,
    };
    for (r, m) in reference.iter().zip(method) {
        if r > m {
            out.losses += 1;
        } else if m > r {
            out.wins += 1;
        } else {
            out.ties += 1;
        }
    }
    Ok(out)
}

/// `+1` where the reference is better, `-1` where the method is, `0` on ties.
pub fn sign_outcomes(reference: &[f64], method: &[f64]) -> Result<Vec<i8>> {
    check_lengths(reference, method)?;
    Ok(reference
        .iter()
        .zip(method)
        .map(|(r, m)| match r.partial_cmp(m) {
            Some(std::cmp::Ordering::Greater) => 1,
            Some(std::cmp::Ordering::Less) => -1,
            _ => 0,
        })
        .collect())
}

/// Mean rank of every column of `table[dataset][method]`; the best method on
/// a dataset gets rank `M`, ties share the average.
pub fn average_ranks(table: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = table.first().map_or(0, Vec::len);
    if table.is_empty() || m == 0 {
        return Err(Error::Metric("average ranks of an empty table".into()));
    }
    let mut sums = vec![0.0; m];
    for row in table {
        if row.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: row.len(),
            });
        }
        for (j, &v) in row.iter().enumerate() {
            let below = row.iter().filter(|&&o| o < v).count();
            let equal = row.iter().filter(|&&o| o == v).count();
            // positions below+1 ..= below+equal share their mean
            sums[j] += below as f64 + (equal as f64 + 1.0) / 2.0;
        }
    }
    Ok(sums.into_iter().map(|s| s / table.len() as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Two-sided one-sample t-test of the `{+1, -1, 0}` outcome vector against
/// mean zero with `N - 1` degrees of freedom.
pub fn paired_sign_ttest(outcomes: &[i8]) -> Result<TTest> {
    let n = outcomes.len();
    if n < 2 {
        return Err(Error::Metric(format!("t-test needs at least 2 outcomes, got {n}")));
    }
    let nf = n as f64;
    let mean = outcomes.iter().map(|&o| f64::from(o)).sum::<f64>() / nf;
    let var = outcomes.iter().map(|&o| (f64::from(o) - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let df = nf - 1.0;
    if var == 0.0 {
        if mean == 0.0 {
            log::warn!("t-test on identical outcomes; reporting p = 1");
            return Ok(TTest {
                t: 0.0,
                df,
                p_value: 1.0,
            });
        }
        return Ok(TTest {
            t: mean.signum() * f64::INFINITY,
            df,
            p_value: 0.0,
        });
    }
    let t = mean / (var / nf).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Metric(e.to_string()))?;
    let p_value = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(TTest { t, df, p_value })
}

/// Rounds to one decimal as printed tables do.
pub fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}
