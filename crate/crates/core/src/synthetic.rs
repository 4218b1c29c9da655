//! Seeded synthetic benchmarks with known selection structure.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::Rng as _;

use crate::classifiers::ClassifierSpec;
use crate::dataset::{write_csv, Dataset};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

pub const LABEL_COLUMN: &str = "class";

/// A dataset together with fixed per-row predictions of a simulated pool.
#[derive(Debug, Clone)]
pub struct SyntheticBenchmark {
    pub dataset: Dataset,
    pub classifier_names: Vec<String>,
    /// `predictions[a][row]`.
    pub predictions: Vec<Vec<usize>>,
}

impl SyntheticBenchmark {
    pub fn accuracy(&self, a: usize, rows: &[usize]) -> f64 {
        let hits = rows
            .iter()
            .filter(|&&i| self.predictions[a][i] == self.dataset.label(i))
            .count();
        hits as f64 / rows.len() as f64
    }

    pub fn oracle(&self, rows: &[usize]) -> f64 {
        let hits = rows
            .iter()
            .filter(|&&i| self.predictions.iter().any(|p| p[i] == self.dataset.label(i)))
            .count();
        hits as f64 / rows.len() as f64
    }

    /// Class indices as the CSV loader will assign them: order of first
    /// appearance in the label column, unseen classes last.
    fn loader_encoding(&self) -> Vec<usize> {
        let n_classes = self.dataset.n_classes();
        let mut order = Vec::with_capacity(n_classes);
        for &y in self.dataset.labels() {
            if !order.contains(&y) {
                order.push(y);
            }
        }
        order.extend((0..n_classes).filter(|c| !order.contains(c)).collect::<Vec<_>>());
        let mut encode = vec![0; n_classes];
        for (new, &old) in order.iter().enumerate() {
            encode[old] = new;
        }
        encode
    }

    /// Writes `<stem>.csv` plus one prediction file per classifier into
    /// `dir`, returning the dataset path and matching external specs.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, Vec<ClassifierSpec>)> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let data_path = dir.join(format!("{stem}.csv"));
        let file = File::create(&data_path).map_err(|e| Error::io(&data_path, e))?;
        write_csv(&self.dataset, LABEL_COLUMN, BufWriter::new(file))?;
        let encode = self.loader_encoding();
        let mut specs = Vec::new();
        for (name, preds) in self.classifier_names.iter().zip(&self.predictions) {
            let path = dir.join(format!("{stem}.{name}.csv"));
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = csv::Writer::from_writer(BufWriter::new(file));
            w.write_record(["sample_index", "predicted_class"])?;
            for (i, p) in preds.iter().enumerate() {
                w.write_record([i.to_string(), encode[*p].to_string()])?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            specs.push(ClassifierSpec::external(name.clone(), path));
        }
        Ok((data_path, specs))
    }
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Three vertical bands of the unit-height strip `[0,3) x [0,1)`, four
/// uniform classes. Classifier `a` is right with probability `inside` in band
/// `a` and `outside` elsewhere; wrong answers of different classifiers never
/// coincide.
pub fn region_benchmark(n: usize, inside: f64, outside: f64, seed: u64) -> Result<SyntheticBenchmark> {
    const REGIONS: usize = 3;
    const CLASSES: usize = 4;
    let mut rng = rng::stream(seed, Stream::Synthetic, 0);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut predictions = (0..REGIONS).map(|_| Vec::with_capacity(n)).collect::<Vec<_>>();
    for _ in 0..n {
        let x0: f64 = rng.random_range(0.0..REGIONS as f64);
        let x1: f64 = rng.random_range(0.0..1.0);
        let y = rng.random_range(0..CLASSES);
        let region = (x0 as usize).min(REGIONS - 1);
        for (a, preds) in predictions.iter_mut().enumerate() {
            let p = if a == region { inside } else { outside };
            let label = if rng.random_bool(p) { y } else { (y + 1 + a) % CLASSES };
            preds.push(label);
        }
        rows.push(vec![x0, x1]);
        labels.push(y);
    }
    Ok(SyntheticBenchmark {
        dataset: Dataset::new(rows, labels, names("x", 2), names("c", CLASSES))?,
        classifier_names: names("expert", REGIONS),
        predictions,
    })
}

/// Binary problem where classifier 0 is always right and the other two err
/// at `error_rate` on opposite halves of `x0`.
pub fn perfect_classifier_benchmark(n: usize, error_rate: f64, seed: u64) -> Result<SyntheticBenchmark> {
    let mut rng = rng::stream(seed, Stream::Synthetic, 1);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut predictions = (0..3).map(|_| Vec::with_capacity(n)).collect::<Vec<_>>();
    for _ in 0..n {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
        let y = usize::from(x[1] + 0.3 * x[2] > 0.65);
        let left = x[0] < 0.5;
        predictions[0].push(y);
        for (a, preds) in predictions.iter_mut().enumerate().skip(1) {
            let noisy = (a == 1) == left;
            let wrong = noisy && rng.random_bool(error_rate);
            preds.push(if wrong { 1 - y } else { y });
        }
        rows.push(x);
        labels.push(y);
    }
    Ok(SyntheticBenchmark {
        dataset: Dataset::new(rows, labels, names("x", 3), names("c", 2))?,
        classifier_names: vec!["perfect".into(), "noisy_left".into(), "noisy_right".into()],
        predictions,
    })
}

/// Gaussian blobs around random centers; `spread` scales the within-class
/// standard deviation. Used for native-classifier runs.
pub fn blobs(n: usize, n_features: usize, n_classes: usize, spread: f64, seed: u64) -> Result<Dataset> {
    let mut rng = rng::stream(seed, Stream::Synthetic, 2);
    let centers: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| (0..n_features).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % n_classes;
        let row = centers[y]
            .iter()
            .map(|&c| c + spread * standard_normal(&mut rng))
            .collect();
        rows.push(row);
        labels.push(y);
    }
    Dataset::new(rows, labels, names("x", n_features), names("c", n_classes))
}

fn standard_normal(rng: &mut rng::Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn region_benchmark_has_the_designed_structure() {
        let b = region_benchmark(3000, 0.99, 0.3, 5).unwrap();
        let all: Vec<usize> = (0..3000).collect();
        for a in 0..3 {
            let acc = b.accuracy(a, &all);
            assert!((0.45..0.62).contains(&acc), "{acc}");
        }
        assert!(b.oracle(&all) >= 0.98);
        // wrong labels never coincide
        for i in 0..3000 {
            let y = b.dataset.label(i);
            let wrong: Vec<usize> = (0..3).map(|a| b.predictions[a][i]).filter(|&p| p != y).collect();
            let mut dedup = wrong.clone();
            dedup.sort_unstable();
            dedup.dedup();
            assert_eq!(wrong.len(), dedup.len());
        }
    }

    #[test]
    fn perfect_benchmark() {
        let b = perfect_classifier_benchmark(400, 0.2, 1).unwrap();
        let all: Vec<usize> = (0..400).collect();
        assert_eq!(b.accuracy(0, &all), 1.0);
        assert!(b.accuracy(1, &all) < 1.0 && b.accuracy(2, &all) < 1.0);
    }

    #[test]
    fn written_predictions_follow_loader_encoding() {
        let b = region_benchmark(200, 0.9, 0.3, 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (path, specs) = b.write(dir.path(), "r").unwrap();
        let ds = crate::dataset::load_csv(&path, LABEL_COLUMN).unwrap();
        let all: Vec<usize> = (0..200).collect();
        for (a, spec) in specs.iter().enumerate() {
            let model = crate::classifiers::train(spec, &ds).unwrap();
            let hits = model
                .predict_dataset(&ds)
                .unwrap()
                .iter()
                .zip(ds.labels())
                .filter(|(p, &y)| p.label == y)
                .count();
            assert_eq!(hits as f64 / 200.0, b.accuracy(a, &all));
        }
    }

    #[test]
    fn blobs_are_reproducible() {
        let a = blobs(60, 3, 3, 1.0, 9).unwrap();
        let b = blobs(60, 3, 3, 1.0, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.class_counts(), vec![20, 20, 20]);
    }
}
