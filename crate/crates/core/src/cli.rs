//! `hsom` command line: `train`, `predict` and `bench`.
//!
//! Every failure prints one line `error[CODE]: message` to stderr and exits
//! with 2 (config or input), 3 (io) or 4 (training failure).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{load_feature_rows, normalize_rows};
use crate::error::{HsomError, Result};
use crate::experiment::{
    prepare_data, rep_seed, run_bench_on, train_and_evaluate, ExperimentConfig, Mode, ReportFormat,
    TrainSummary, WORKERS_ENV,
};
use crate::eval::EvalReport;
use crate::persist::{load_model, save_model};

#[derive(Debug, Parser)]
#[command(name = "hsom", version, about = "Hierarchical SOM intrusion detection: train, predict, bench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model and score it on the held-out split.
    Train(ExperimentArgs),
    /// Label every row of a CSV with a saved model.
    Predict(PredictArgs),
    /// Compare sequential and parallel training across grid sizes.
    Bench(ExperimentArgs),
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// TOML experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Synthetic data, e.g. `blobs4:n=200000,p=20,sep=10`.
    #[arg(long)]
    synthetic: Option<String>,
    /// Grid sizes, e.g. `3x3` or `2x2,3x3,4x4,5x5`.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<String>>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    split: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long)]
    delimiter: Option<char>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Input CSV with a header row.
    #[arg(long)]
    dataset: PathBuf,
    /// Predictions file, one label per line; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = ",")]
    delimiter: char,
}

impl ExperimentArgs {
    fn into_config(self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_toml_file(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(d) = self.dataset {
            cfg.dataset = Some(d);
            cfg.synthetic = None;
        }
        if let Some(s) = self.synthetic {
            cfg.synthetic = Some(s);
            cfg.dataset = None;
        }
        if let Some(g) = self.grid {
            cfg.grids = g;
        }
        if let Some(m) = self.mode {
            cfg.mode = m.parse()?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.reps {
            cfg.reps = r;
        }
        if let Some(t) = self.tau {
            cfg.tau = t;
        }
        if let Some(d) = self.max_depth {
            cfg.max_depth = d;
        }
        if let Some(s) = self.split {
            cfg.split = s;
        }
        if let Some(i) = self.iterations {
            cfg.iterations = Some(i);
        }
        if let Some(l) = self.label_column {
            cfg.label_column = Some(l);
        }
        if let Some(d) = self.delimiter {
            cfg.delimiter = d;
        }
        if let Some(o) = self.out {
            cfg.out = o;
        }
        if let Some(f) = self.format {
            cfg.format = f.parse()?;
        }
        let env = std::env::var(WORKERS_ENV).ok();
        cfg.override_workers(self.workers, env.as_deref())?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Runs the CLI and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[E_CONFIG]: {}", first.trim_start_matches("error: "));
            return 2;
        }
    };
    let result = match cli.command {
        Command::Train(a) => a.into_config().and_then(|c| cmd_train(&c)),
        Command::Bench(a) => a.into_config().and_then(|c| cmd_bench(&c)),
        Command::Predict(a) => cmd_predict(&a.model, &a.dataset, a.out.as_deref(), a.delimiter),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.code());
            e.exit_code()
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| HsomError::io(path, e))
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| HsomError::invalid(e.to_string()))
}

/// Trains on the first configured grid and writes `model.json` plus
/// `report.json` (or `report.csv`) into the output directory.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<()> {
    let data = prepare_data(cfg)?;
    let grid = cfg.grid_dims()?[0];
    let workers = cfg.resolved_workers()?;
    let growth = cfg.growth(grid, rep_seed(cfg.seed, 0));
    let (model, report) = train_and_evaluate(&data, &growth, cfg.mode, workers)?;

    fs::create_dir_all(&cfg.out).map_err(|e| HsomError::io(&cfg.out, e))?;
    save_model(cfg.out.join("model.json"), &model, &data.preprocessing)?;
    let summary = TrainSummary {
        source: data.source.clone(),
        grid: grid.to_string(),
        mode: cfg.mode,
        workers: if cfg.mode == Mode::Parallel { workers } else { 1 },
        seed: cfg.seed,
        train_rows: data.split.train.len(),
        test_rows: data.split.test.len(),
        dropped_rows: data.dropped_rows,
        depth: model.depth,
        node_count: model.node_count,
        report: report.to_table(),
    };
    match cfg.format {
        ReportFormat::Json => write_file(&cfg.out.join("report.json"), &to_json(&summary)?)?,
        ReportFormat::Csv => write_file(
            &cfg.out.join("report.csv"),
            &format!("{}\n{}\n", EvalReport::CSV_HEADER, report.csv_row()),
        )?,
    }
    println!(
        "trained {grid} {:?} model: depth {}, {} nodes, accuracy {:.4}, fpr {:.5}, tt {:.3}s -> {}",
        cfg.mode,
        model.depth,
        model.node_count,
        report.accuracy,
        report.fpr,
        report.tt_s,
        cfg.out.display()
    );
    Ok(())
}

/// Writes `bench.json` (or `bench.csv`) and `speedup_series.csv` into the
/// output directory.
pub fn cmd_bench(cfg: &ExperimentConfig) -> Result<()> {
    let data = prepare_data(cfg)?;
    let bench = run_bench_on(cfg, &data)?;
    fs::create_dir_all(&cfg.out).map_err(|e| HsomError::io(&cfg.out, e))?;
    match cfg.format {
        ReportFormat::Json => write_file(&cfg.out.join("bench.json"), &to_json(&bench)?)?,
        ReportFormat::Csv => write_file(&cfg.out.join("bench.csv"), &bench.to_csv())?,
    }
    let mut series = String::from("grid,speedup\n");
    for (grid, s) in bench.speedup_series() {
        series.push_str(&format!("{grid},{s}\n"));
        println!("{grid}: speedup {s:.3}");
    }
    write_file(&cfg.out.join("speedup_series.csv"), &series)
}

pub fn cmd_predict(model: &Path, input: &Path, out: Option<&Path>, delimiter: char) -> Result<()> {
    let (model, prep) = load_model(model)?;
    if !delimiter.is_ascii() {
        return Err(HsomError::Config("delimiter must be a single ASCII character".into()));
    }
    let mut rows = load_feature_rows(
        input,
        delimiter as u8,
        model.feature_dim(),
        prep.feature_names.as_deref(),
    )?;
    if prep.l2_normalize {
        normalize_rows(&mut rows);
    }
    let labels = model.predict_batch(&rows)?;
    let mut text = String::with_capacity(labels.len() * 2);
    for l in labels {
        text.push(if l == 1 { '1' } else { '0' });
        text.push('\n');
    }
    match out {
        Some(p) => write_file(p, &text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| HsomError::io("<stdout>", e)),
    }
}
