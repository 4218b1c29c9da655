//! Result tables, comparison summaries and the files a run leaves behind.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, MethodId};
use crate::harness::experiment::RunResult;
use crate::harness::metrics::{average_ranks, mgi, paired_sign_ttest, round1, sign_outcomes, wins_losses};

type SummaryRow = (&'static str, fn(&MethodSummary) -> String);

/// Accuracies in percent, `accuracy[dataset][method]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub datasets: Vec<String>,
    pub methods: Vec<String>,
    pub accuracy: Vec<Vec<Option<f64>>>,
    pub oracle: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    /// Datasets where every method produced a number.
    pub n_datasets: usize,
    pub mean_accuracy: f64,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// Improvement of the reference over this method, percent.
    pub mgi: Option<f64>,
    pub average_rank: f64,
    pub t: Option<f64>,
    pub p_value: Option<f64>,
}

impl ResultTable {
    pub fn from_run(run: &RunResult) -> Self {
        ResultTable {
            datasets: run.datasets.iter().map(|d| d.name.clone()).collect(),
            methods: run.methods.iter().map(|m| m.to_string()).collect(),
            accuracy: run
                .datasets
                .iter()
                .map(|d| run.methods.iter().map(|&m| d.accuracy(m)).collect())
                .collect(),
            oracle: run.datasets.iter().map(|d| d.oracle).collect(),
        }
    }

    /// A fully populated table, e.g. transcribed from a report.
    pub fn from_columns(datasets: Vec<String>, methods: Vec<String>, columns: &[Vec<f64>]) -> Result<Self> {
        if columns.len() != methods.len() {
            return Err(Error::DimensionMismatch {
                expected: methods.len(),
                got: columns.len(),
            });
        }
        if let Some(c) = columns.iter().find(|c| c.len() != datasets.len()) {
            return Err(Error::DimensionMismatch {
                expected: datasets.len(),
                got: c.len(),
            });
        }
        let accuracy = (0..datasets.len())
            .map(|d| columns.iter().map(|c| Some(c[d])).collect())
            .collect();
        Ok(ResultTable {
            oracle: vec![None; datasets.len()],
            datasets,
            methods,
            accuracy,
        })
    }

    /// Reads a CSV whose first column names the dataset and whose remaining
    /// columns hold one method each.
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 {
            return Err(Error::InvalidDataset(
                "table needs a name column and at least one method".into(),
            ));
        }
        let methods: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut datasets = Vec::new();
        let mut columns = vec![Vec::new(); methods.len()];
        for (r, record) in rdr.records().enumerate() {
            let record = record?;
            datasets.push(record[0].to_string());
            for (j, col) in columns.iter_mut().enumerate() {
                let cell = &record[j + 1];
                col.push(cell.parse::<f64>().map_err(|_| Error::NonNumeric {
                    row: r,
                    column: methods[j].clone(),
                    value: cell.to_string(),
                })?);
            }
        }
        Self::from_columns(datasets, methods, &columns)
    }

    pub fn method_index(&self, name: &str) -> Result<usize> {
        self.methods
            .iter()
            .position(|m| m == name)
            .ok_or_else(|| Error::Config(format!("method `{name}` not in table")))
    }

    /// Column of `method` restricted to datasets where every method has a value.
    pub fn complete_rows(&self) -> Vec<usize> {
        (0..self.datasets.len())
            .filter(|&d| self.accuracy[d].iter().all(Option::is_some))
            .collect()
    }

    pub fn column(&self, method: usize, rows: &[usize]) -> Vec<f64> {
        rows.iter()
            .map(|&d| self.accuracy[d][method].expect("complete row"))
            .collect()
    }

    /// Comparison of every method against `reference` over complete rows.
    pub fn summarize(&self, reference: &str) -> Result<Vec<MethodSummary>> {
        let r = self.method_index(reference)?;
        let rows = self.complete_rows();
        if rows.is_empty() {
            return Err(Error::Metric("no dataset has results for every method".into()));
        }
        let table: Vec<Vec<f64>> = rows
            .iter()
            .map(|&d| self.accuracy[d].iter().map(|v| v.expect("complete row")).collect())
            .collect();
        let ranks = average_ranks(&table)?;
        let ref_col = self.column(r, &rows);
        self.methods
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let col = self.column(j, &rows);
                let wl = wins_losses(&ref_col, &col)?;
                let (t, p) = if j == r || rows.len() < 2 {
                    (None, None)
                } else {
                    let tt = paired_sign_ttest(&sign_outcomes(&ref_col, &col)?)?;
                    (Some(tt.t), Some(tt.p_value))
                };
                Ok(MethodSummary {
                    method: name.clone(),
                    n_datasets: rows.len(),
                    mean_accuracy: col.iter().sum::<f64>() / col.len() as f64,
                    wins: wl.wins,
                    losses: wl.losses,
                    ties: wl.ties,
                    mgi: mgi(&ref_col, &col).ok(),
                    average_rank: ranks[j],
                    t,
                    p_value: p,
                })
            })
            .collect()
    }

    /// Fixed-width text rendering with accuracies rounded to one decimal.
    pub fn render(&self, summary: Option<&[MethodSummary]>) -> String {
        let width = self.methods.iter().map(String::len).max().unwrap_or(0).max(7) + 1;
        let name_w = self.datasets.iter().map(String::len).max().unwrap_or(0).max(10) + 1;
        let mut out = String::new();
        let cell = |s: &str| format!("{s:>width$}");
        out.push_str(&format!("{:<name_w$}", "dataset"));
        for m in &self.methods {
            out.push_str(&cell(m));
        }
        out.push_str(&cell("oracle"));
        out.push('\n');
        for (d, name) in self.datasets.iter().enumerate() {
            out.push_str(&format!("{name:<name_w$}"));
            for v in self.accuracy[d].iter().chain(std::iter::once(&self.oracle[d])) {
                out.push_str(&cell(&v.map_or("-".to_string(), |v| format!("{:.1}", round1(v)))));
            }
            out.push('\n');
        }
        if let Some(summary) = summary {
            let rows: [SummaryRow; 5] = [
                ("losses", |s| s.losses.to_string()),
                ("wins", |s| s.wins.to_string()),
                ("mgi [%]", |s| s.mgi.map_or("-".into(), |v| format!("{v:.1}"))),
                ("rank", |s| format!("{:.1}", s.average_rank)),
                ("p-value", |s| s.p_value.map_or("-".into(), |v| format!("{v:.4}"))),
            ];
            for (label, f) in rows {
                out.push_str(&format!("{label:<name_w$}"));
                for s in summary {
                    out.push_str(&cell(&f(s)));
                }
                out.push('\n');
            }
        }
        out
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

pub fn write_results_csv<W: Write>(run: &RunResult, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["dataset", "method", "accuracy", "recourse_rate", "error"])?;
    for d in &run.datasets {
        for m in &d.methods {
            w.write_record([
                d.name.clone(),
                m.method.to_string(),
                opt(m.accuracy),
                opt(m.recourse_rate),
                m.error.clone().unwrap_or_default(),
            ])?;
        }
        w.write_record([
            d.name.clone(),
            "oracle".into(),
            opt(d.oracle),
            String::new(),
            String::new(),
        ])?;
        for (name, acc) in d.classifier_names.iter().zip(&d.classifier_accuracy) {
            w.write_record([
                d.name.clone(),
                format!("base:{name}"),
                acc.to_string(),
                String::new(),
                String::new(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<results>", e))?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(summary: &[MethodSummary], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "method",
        "n_datasets",
        "mean_accuracy",
        "wins",
        "losses",
        "ties",
        "mgi",
        "average_rank",
        "t",
        "p_value",
    ])?;
    for s in summary {
        w.write_record([
            s.method.clone(),
            s.n_datasets.to_string(),
            s.mean_accuracy.to_string(),
            s.wins.to_string(),
            s.losses.to_string(),
            s.ties.to_string(),
            opt(s.mgi),
            s.average_rank.to_string(),
            opt(s.t),
            opt(s.p_value),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<summary>", e))?;
    Ok(())
}

/// One row per (dataset, method, test sample).
pub fn write_trace_csv<W: Write>(run: &RunResult, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "dataset",
        "method",
        "sample_index",
        "truth",
        "chosen_classifier",
        "predicted_class",
        "correct",
        "method_used",
        "confidence_ratio",
        "rr_ratio",
        "lp_ratio",
        "recourse_invoked",
    ])?;
    for d in &run.datasets {
        for m in &d.methods {
            for (i, o) in m.outcomes.iter().enumerate() {
                w.write_record([
                    d.name.clone(),
                    m.method.to_string(),
                    d.test_row_ids[i].to_string(),
                    d.test_truth[i].to_string(),
                    o.chosen_classifier.to_string(),
                    o.predicted_class.to_string(),
                    u8::from(o.predicted_class == d.test_truth[i]).to_string(),
                    o.method_used.to_string(),
                    o.confidence_ratio.to_string(),
                    opt(o.rr_ratio),
                    opt(o.lp_ratio),
                    u8::from(o.recourse_invoked).to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<trace>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub config_hash: String,
    pub seed: u64,
    pub dataset: String,
    pub method: String,
    pub accuracy: Option<f64>,
    pub recourse_rate: Option<f64>,
    pub error: Option<String>,
}

/// Appends one JSON line per (dataset, method) cell.
pub fn append_ledger(path: &Path, run: &RunResult) -> Result<()> {
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for d in &run.datasets {
        for m in &d.methods {
            let rec = LedgerRecord {
                config_hash: run.config_hash.clone(),
                seed: run.seed,
                dataset: d.name.clone(),
                method: m.method.to_string(),
                accuracy: m.accuracy,
                recourse_rate: m.recourse_rate,
                error: m.error.clone(),
            };
            writeln!(w, "{}", serde_json::to_string(&rec)?).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_ledger(path: &Path) -> Result<Vec<LedgerRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Paths written by [`write_outputs`].
#[derive(Debug, Clone)]
pub struct OutputFiles {
    pub results: PathBuf,
    pub summary: Option<PathBuf>,
    pub table: PathBuf,
    pub trace: Option<PathBuf>,
    pub ledger: PathBuf,
}

pub fn write_outputs(run: &RunResult, cfg: &ExperimentConfig) -> Result<OutputFiles> {
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let results = dir.join("results.csv");
    write_results_csv(run, create(&results)?)?;

    let table = ResultTable::from_run(run);
    let summary = match table.summarize(&cfg.reference.to_string()) {
        Ok(s) => Some(s),
        Err(e) => {
            log::warn!("no summary: {e}");
            None
        }
    };
    let summary_path = match &summary {
        Some(s) => {
            let p = dir.join("summary.csv");
            write_summary_csv(s, create(&p)?)?;
            Some(p)
        }
        None => None,
    };
    let table_path = dir.join("table.txt");
    let mut text = table.render(summary.as_deref());
    if run.is_partial() {
        text.push_str("partial: some cells failed, see results.csv\n");
    }
    std::fs::write(&table_path, text).map_err(|e| Error::io(&table_path, e))?;

    let trace = if cfg.trace {
        let p = dir.join("trace.csv");
        write_trace_csv(run, create(&p)?)?;
        Some(p)
    } else {
        None
    };
    let ledger = dir.join("ledger.jsonl");
    append_ledger(&ledger, run)?;
    Ok(OutputFiles {
        results,
        summary: summary_path,
        table: table_path,
        trace,
        ledger,
    })
}

/// Methods named in `table` that the harness knows, in table order.
pub fn known_methods(table: &ResultTable) -> Vec<MethodId> {
    table.methods.iter().filter_map(|m| m.parse().ok()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_table_and_summary() {
        let text = "dataset,a,b\nd1,90,80\nd2,70,75\nd3,60,60\n";
        let t = ResultTable::read_csv(text.as_bytes()).unwrap();
        let s = t.summarize("a").unwrap();
        assert_eq!((s[1].wins, s[1].losses, s[1].ties), (1, 1, 1));
        assert_eq!(s[0].p_value, None);
        assert_eq!(s[0].average_rank, (2.0 + 1.0 + 1.5) / 3.0);
        let rendered = t.render(Some(&s));
        assert!(rendered.contains("90.0"));
        assert!(ResultTable::read_csv("dataset,a\nd1,x\n".as_bytes()).is_err());
    }

    #[test]
    fn incomplete_rows_are_skipped() {
        let t = ResultTable {
            datasets: vec!["x".into(), "y".into()],
            methods: vec!["a".into(), "b".into()],
            accuracy: vec![vec![Some(1.0), None], vec![Some(2.0), Some(1.0)]],
            oracle: vec![None, None],
        };
        assert_eq!(t.complete_rows(), vec![1]);
        assert_eq!(t.summarize("a").unwrap()[1].n_datasets, 1);
    }
}
