//! Two-component PCA projection of per-sample selections for plotting.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::selection::SelectionOutcome;

/// Principal axes fitted on a training matrix.
#[derive(Debug, Clone)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit-length axes, strongest first.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
}

impl Pca {
    /// Fits up to `max_components` axes; axes with negligible variance are
    /// dropped with a warning.
    pub fn fit(ds: &Dataset, max_components: usize) -> Result<Self> {
        let (n, f) = (ds.n_samples(), ds.n_features());
        if n == 0 {
            return Err(Error::EmptyPartition("pca training"));
        }
        let mean: Vec<f64> = (0..f)
            .map(|j| (0..n).map(|i| ds.value(i, j)).sum::<f64>() / n as f64)
            .collect();
        let centered = DMatrix::from_fn(n, f, |i, j| ds.value(i, j) - mean[j]);
        let denom = (n.max(2) - 1) as f64;
        let cov = (centered.transpose() * &centered) / denom;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..f).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let top = eig.eigenvalues[order[0]].max(0.0);
        let wanted = max_components.min(f);
        let mut components = Vec::new();
        let mut explained_variance = Vec::new();
        for &k in order.iter().take(wanted) {
            let lambda = eig.eigenvalues[k];
            if !(lambda > 1e-12 * top.max(f64::MIN_POSITIVE)) {
                break;
            }
            let mut axis: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            // deterministic orientation: largest-magnitude entry positive
            let pivot = (0..f)
                .max_by(|&a, &b| axis[a].abs().total_cmp(&axis[b].abs()).then(b.cmp(&a)))
                .unwrap_or(0);
            if axis[pivot] < 0.0 {
                axis.iter_mut().for_each(|v| *v = -*v);
            }
            components.push(axis);
            explained_variance.push(lambda);
        }
        if components.len() < wanted {
            log::warn!(
                "data has rank {} < {wanted}; emitting {} component(s)",
                components.len(),
                components.len()
            );
        }
        Ok(Pca {
            mean,
            components,
            explained_variance,
        })
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|axis| axis.iter().zip(x).zip(&self.mean).map(|((a, v), m)| a * (v - m)).sum())
            .collect()
    }
}

/// Writes `sample_index, pc1[, pc2], chosen_classifier, predicted_class,
/// correct` for every test sample. PCA is fitted on `train`.
pub fn export_viz<W: Write>(train: &Dataset, test: &Dataset, outcomes: &[SelectionOutcome], writer: W) -> Result<Pca> {
    if train.n_features() < 2 {
        return Err(Error::InvalidDataset("projection needs at least two features".into()));
    }
    if outcomes.len() != test.n_samples() {
        return Err(Error::DimensionMismatch {
            expected: test.n_samples(),
            got: outcomes.len(),
        });
    }
    let pca = Pca::fit(train, 2)?;
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["sample_index".to_string()];
    header.extend((1..=pca.components.len()).map(|k| format!("pc{k}")));
    header.extend(["chosen_classifier", "predicted_class", "correct"].map(String::from));
    w.write_record(&header)?;
    for (i, o) in outcomes.iter().enumerate() {
        let mut row = vec![test.row_ids()[i].to_string()];
        row.extend(pca.project(test.row(i)).iter().map(f64::to_string));
        row.push(o.chosen_classifier.to_string());
        row.push(o.predicted_class.to_string());
        row.push(u8::from(o.predicted_class == test.label(i)).to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<viz>", e))?;
    Ok(pca)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::Method;

    fn ds(rows: Vec<Vec<f64>>) -> Dataset {
        let n = rows.len();
        Dataset::from_rows(rows, (0..n).map(|i| i % 2).collect(), 2).unwrap()
    }

    #[test]
    fn two_features_is_a_rotation() {
        let train = ds(vec![
            vec![0.0, 0.0],
            vec![2.0, 1.0],
            vec![4.0, 3.0],
            vec![1.0, 3.0],
            vec![-1.0, 2.0],
        ]);
        let pca = Pca::fit(&train, 2).unwrap();
        assert_eq!(pca.components.len(), 2);
        for i in 0..5 {
            for j in 0..5 {
                let a = pca.project(train.row(i));
                let b = pca.project(train.row(j));
                let d_proj = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                let d_raw: f64 = train
                    .row(i)
                    .iter()
                    .zip(train.row(j))
                    .map(|(x, y)| (x - y).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!((d_proj - d_raw).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_feature_has_zero_loading() {
        let train = ds(vec![
            vec![0.0, 5.0, 1.0],
            vec![1.0, 5.0, 3.0],
            vec![2.0, 5.0, 2.0],
            vec![3.0, 5.0, 7.0],
        ]);
        let pca = Pca::fit(&train, 2).unwrap();
        for axis in &pca.components {
            assert!(axis[1].abs() < 1e-9);
        }
    }

    #[test]
    fn rank_deficient_emits_fewer_columns() {
        let train = ds(vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]);
        let outcomes = vec![SelectionOutcome::simple(0, 0, Method::Cshc, 0.0); 4];
        let mut buf = Vec::new();
        let pca = export_viz(&train, &train, &outcomes, &mut buf).unwrap();
        assert_eq!(pca.components.len(), 1);
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("sample_index,pc1,chosen_classifier"));
    }
}
