use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use cshc_core::dataset::load_csv;
use cshc_core::harness::experiment::evaluate_method;
use cshc_core::harness::{
    export_viz, prepare, read_feature_rows, run_experiment, write_outputs, DatasetEntry, ExperimentConfig, MethodId,
    ModelBundle, ResultTable,
};
use cshc_core::{Protocol, SelectionOutcome};

#[derive(Parser)]
#[command(
    name = "cshc",
    version,
    about = "Dynamic classifier selection with cost-sensitive clustering forests"
)]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the pool and the forest on a dataset and save them as a bundle.
    Train {
        #[command(flatten)]
        opts: ConfigOpts,
        #[command(flatten)]
        data: DataOpts,
        /// Bundle file to write.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Classify the rows of a feature CSV with a saved bundle.
    Select {
        #[arg(long)]
        bundle: PathBuf,
        /// CSV containing the bundle's feature columns.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "lpr")]
        method: MethodId,
        /// Output CSV; stdout when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run every configured method on one dataset.
    Evaluate {
        #[command(flatten)]
        opts: ConfigOpts,
        #[command(flatten)]
        data: DataOpts,
    },
    /// Run all configured datasets, or summarize an existing accuracy table.
    Compare {
        #[command(flatten)]
        opts: ConfigOpts,
        /// Accuracy table (first column dataset names, one column per method)
        /// to summarize instead of running experiments.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Write a two-component projection of the test split with one method's choices.
    ExportViz {
        #[command(flatten)]
        opts: ConfigOpts,
        #[command(flatten)]
        data: DataOpts,
        #[arg(long, default_value = "lpr")]
        method: MethodId,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Print the effective configuration as TOML.
    Config {
        #[command(flatten)]
        opts: ConfigOpts,
    },
}

#[derive(Args)]
struct DataOpts {
    /// Dataset CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    label_column: Option<String>,
    /// Name used in reports; defaults to the file stem.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args, Default)]
struct ConfigOpts {
    /// TOML configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// split50 or cv3.
    #[arg(long)]
    protocol: Option<Protocol>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Comma-separated method list.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<MethodId>,
    #[arg(long)]
    reference: Option<MethodId>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Neighbourhood size for the baselines.
    #[arg(long)]
    k: Option<usize>,
    /// Skip the per-sample trace file.
    #[arg(long)]
    no_trace: bool,
}

impl ConfigOpts {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.protocol {
            cfg.protocol = v;
        }
        if let Some(v) = self.test_fraction {
            cfg.test_fraction = v;
        }
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
        if !self.methods.is_empty() {
            cfg.methods = self.methods.clone();
        }
        if let Some(v) = self.reference {
            cfg.reference = v;
        }
        if let Some(v) = self.trees {
            cfg.forest.n_trees = v;
        }
        if let Some(v) = self.max_depth {
            cfg.forest.max_depth = v;
        }
        if let Some(v) = self.rho {
            cfg.selection.rho = v;
        }
        if let Some(v) = self.gamma {
            cfg.selection.gamma = v;
        }
        if let Some(v) = self.k {
            cfg.baselines.k = v;
        }
        if self.no_trace {
            cfg.trace = false;
        }
        Ok(cfg)
    }
}

impl DataOpts {
    fn entry(&self) -> DatasetEntry {
        let name = self.name.clone().unwrap_or_else(|| {
            self.data
                .file_stem()
                .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
        });
        DatasetEntry {
            name,
            path: self.data.clone(),
            label_column: self.label_column.clone().unwrap_or_else(|| "class".into()),
            classifiers: None,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn run_and_report(cfg: &ExperimentConfig) -> Result<ExitCode> {
    cfg.validate()?;
    info!("config hash {}", cfg.hash());
    let run = run_experiment(cfg)?;
    let files = write_outputs(&run, cfg)?;
    print!("{}", std::fs::read_to_string(&files.table)?);
    info!("results written to {}", cfg.output_dir.display());
    if run.is_partial() {
        warn!("some datasets or methods failed; see {}", files.results.display());
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn train(opts: &ConfigOpts, data: &DataOpts, out: &Path) -> Result<()> {
    let cfg = opts.resolve()?;
    let entry = data.entry();
    let ds = load_csv(&entry.path, &entry.label_column)?;
    let bundle = ModelBundle::train(&ds, cfg.pool_for(&entry), &cfg)?;
    bundle.save(out)?;
    info!(
        "bundle with {} classifiers and {} trees written to {}",
        bundle.classifiers.len(),
        bundle.forest.trees.len(),
        out.display()
    );
    Ok(())
}

fn select(bundle: &Path, input: &Path, method: MethodId, out: Option<&Path>) -> Result<()> {
    let bundle = ModelBundle::load(bundle)?;
    let rows = read_feature_rows(input, &bundle.feature_names)?;
    let outcomes = bundle.select_rows(method, &rows)?;
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    write_selections(&bundle, &outcomes, sink)
}

fn write_selections(bundle: &ModelBundle, outcomes: &[SelectionOutcome], sink: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "row",
        "chosen_classifier",
        "classifier_name",
        "predicted_class",
        "method_used",
        "confidence_ratio",
        "recourse_invoked",
    ])?;
    for (i, o) in outcomes.iter().enumerate() {
        w.write_record([
            i.to_string(),
            o.chosen_classifier.to_string(),
            bundle.classifiers[o.chosen_classifier].spec().name.clone(),
            bundle.class_names[o.predicted_class].clone(),
            o.method_used.as_str().to_string(),
            o.confidence_ratio.to_string(),
            o.recourse_invoked.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn export(opts: &ConfigOpts, data: &DataOpts, method: MethodId, out: &Path) -> Result<()> {
    let cfg = opts.resolve()?;
    let entry = data.entry();
    let ds = load_csv(&entry.path, &entry.label_column)?;
    let prepared = prepare(&entry.name, &ds, cfg.pool_for(&entry), &cfg)?;
    let result = evaluate_method(method, &prepared, &cfg);
    if let Some(e) = result.error {
        bail!("{method} failed: {e}");
    }
    let pca = export_viz(&prepared.train, &prepared.test, &result.outcomes, create(out)?)?;
    info!(
        "{} test points projected onto {} components (variance {:?})",
        prepared.test.n_samples(),
        pca.components.len(),
        pca.explained_variance
    );
    Ok(())
}

fn compare(opts: &ConfigOpts, table: Option<&Path>) -> Result<ExitCode> {
    let cfg = opts.resolve()?;
    let Some(path) = table else {
        if cfg.datasets.is_empty() {
            bail!("no datasets configured; pass --config or --table");
        }
        return run_and_report(&cfg);
    };
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let table = ResultTable::read_csv(file)?;
    let reference = match opts.reference {
        Some(r) => r.to_string(),
        None => table.methods.last().cloned().context("table has no method columns")?,
    };
    let summary = table.summarize(&reference)?;
    print!("{}", table.render(Some(&summary)));
    Ok(ExitCode::SUCCESS)
}

/// The error chain, skipping causes whose text a previous message already
/// carries.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !msg.contains(&text) {
            msg.push_str(": ");
            msg.push_str(&text);
        }
    }
    msg
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Train { opts, data, out } => train(opts, data, out).map(|()| ExitCode::SUCCESS),
        Command::Select {
            bundle,
            input,
            method,
            out,
        } => select(bundle, input, *method, out.as_deref()).map(|()| ExitCode::SUCCESS),
        Command::Evaluate { opts, data } => opts.resolve().and_then(|mut cfg| {
            cfg.datasets = vec![data.entry()];
            run_and_report(&cfg)
        }),
        Command::Compare { opts, table } => compare(opts, table.as_deref()),
        Command::ExportViz {
            opts,
            data,
            method,
            out,
        } => export(opts, data, *method, out).map(|()| ExitCode::SUCCESS),
        Command::Config { opts } => opts.resolve().and_then(|cfg| {
            print!("{}", cfg.to_toml()?);
            Ok(ExitCode::SUCCESS)
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}
