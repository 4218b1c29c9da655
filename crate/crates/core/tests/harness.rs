use std::fs::File;
use std::path::Path;

use cshc_core::dataset::{load_csv, write_csv};
use cshc_core::harness::experiment::evaluate_method;
use cshc_core::harness::report::read_ledger;
use cshc_core::harness::{prepare, run_experiment, write_outputs, DatasetEntry, ExperimentConfig, MethodId};
use cshc_core::selection::Strategy;
use cshc_core::synthetic::{blobs, LABEL_COLUMN};
use cshc_core::{BaselineKind, CshcConfig};

fn write_blobs(dir: &Path, name: &str, seed: u64) -> DatasetEntry {
    let path = dir.join(format!("{name}.csv"));
    write_csv(
        &blobs(150, 3, 3, 1.8, seed).unwrap(),
        LABEL_COLUMN,
        File::create(&path).unwrap(),
    )
    .unwrap();
    DatasetEntry {
        name: name.into(),
        path,
        label_column: LABEL_COLUMN.into(),
        classifiers: None,
    }
}

fn config(dir: &Path, datasets: Vec<DatasetEntry>) -> ExperimentConfig {
    let mut methods = MethodId::headline();
    methods.extend([
        MethodId::Baseline(BaselineKind::Aposteriori),
        MethodId::Baseline(BaselineKind::KnoraE),
    ]);
    ExperimentConfig {
        output_dir: dir.join("out"),
        methods,
        datasets,
        forest: CshcConfig {
            n_trees: 8,
            ..CshcConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

#[test]
fn a_broken_dataset_does_not_sink_the_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_blobs(dir.path(), "good", 1);
    let bad_path = dir.path().join("bad.csv");
    std::fs::write(&bad_path, "x0,x1,class\n1,2,a\n3,4,a\n5,6,a\n").unwrap();
    let bad = DatasetEntry {
        name: "bad".into(),
        path: bad_path,
        ..good.clone()
    };
    let cfg = config(dir.path(), vec![good, bad]);
    let run = run_experiment(&cfg).unwrap();
    assert!(run.is_partial());
    let by_name = |n: &str| run.datasets.iter().find(|d| d.name == n).unwrap();
    assert!(by_name("bad").error.is_some());
    let ok = by_name("good");
    assert!(ok.error.is_none());
    assert!(ok.methods.iter().all(|m| m.accuracy.is_some()));

    let files = write_outputs(&run, &cfg).unwrap();
    let table = std::fs::read_to_string(files.table).unwrap();
    assert!(table.contains("partial"));
    write_outputs(&run, &cfg).unwrap();
    let ledger = read_ledger(&files.ledger).unwrap();
    assert_eq!(ledger.len() % 2, 0);
    assert_eq!(ledger[..ledger.len() / 2], ledger[ledger.len() / 2..]);
    assert!(ledger.iter().all(|r| r.config_hash == cfg.hash()));
}

#[test]
fn outcomes_respect_oracle_and_chosen_labels() {
    let dir = tempfile::tempdir().unwrap();
    let entry = write_blobs(dir.path(), "d", 4);
    let cfg = config(dir.path(), vec![entry.clone()]);
    let ds = load_csv(&entry.path, LABEL_COLUMN).unwrap();
    let p = prepare("d", &ds, &cfg.classifiers, &cfg).unwrap();
    let oracle = cshc_core::harness::oracle_accuracy(&p.test_cm);
    for &method in &cfg.methods {
        let r = evaluate_method(method, &p, &cfg);
        let acc = r.accuracy.unwrap_or_else(|| panic!("{method}: {:?}", r.error));
        assert!((0.0..=oracle + 1e-9).contains(&acc), "{method}: {acc} > {oracle}");
        assert_eq!(r.outcomes.len(), p.test.n_samples());
        for (i, o) in r.outcomes.iter().enumerate() {
            assert_eq!(
                o.predicted_class, p.test_labels[i][o.chosen_classifier],
                "{method} sample {i}"
            );
        }
        if method == MethodId::Selection(Strategy::Lpr) {
            let invoked = r.outcomes.iter().filter(|o| o.recourse_invoked).count();
            assert_eq!(r.recourse_rate.unwrap(), invoked as f64 / r.outcomes.len() as f64);
        }
    }
}

#[test]
fn cv3_protocol_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let entry = write_blobs(dir.path(), "d", 6);
    let cfg = ExperimentConfig {
        protocol: cshc_core::Protocol::Cv3,
        ..config(dir.path(), vec![entry])
    };
    let run = run_experiment(&cfg).unwrap();
    assert!(!run.is_partial(), "{:?}", run.datasets[0].error);
    assert_eq!(run.datasets[0].n_test, 50);
}

#[test]
fn toml_config_resolves_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    write_blobs(dir.path(), "rel", 2);
    let text = "seed = 3\nprotocol = \"cv3\"\nmethods = [\"cshc\", \"mv\"]\n\n[[datasets]]\nname = \"rel\"\npath = \"rel.csv\"\n\n[forest]\nn_trees = 4\n";
    let path = dir.path().join("exp.toml");
    std::fs::write(&path, text).unwrap();
    let cfg = ExperimentConfig::load(&path).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.datasets[0].path, dir.path().join("rel.csv"));
    assert_eq!(cfg.forest.n_trees, 4);
    assert_eq!(cfg.selection.rho, 0.5);
    let run = run_experiment(&cfg).unwrap();
    assert_eq!(run.datasets[0].methods.len(), 2);
}
