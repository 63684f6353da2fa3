//! Experiment protocol: load or synthesize data, normalize, split once with a
//! fixed seed, then train and score sequential and parallel models on the
//! identical split.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    load_csv, normalize_l2, split_train_test, CsvOptions, LabelMapping, LabeledDataset, SplitPair,
    SyntheticSpec,
};
use crate::error::{HsomError, Result};
use crate::eval::{
    aggregate, confusion, report, speedup, time_prediction, time_training, EvalReport, ReportTable,
    RunAggregate,
};
use crate::hierarchy::{train_sequential, GrowthConfig, HsomModel, DEFAULT_MAX_DEPTH};
use crate::parallel::{default_workers, train_parallel, ParallelConfig};
use crate::persist::Preprocessing;
use crate::som::{GridDim, ScheduleParams};

/// Environment variable consulted for the worker count when no flag is given.
pub const WORKERS_ENV: &str = "HSOM_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Sequential,
    Parallel,
}

impl std::str::FromStr for Mode {
    type Err = HsomError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(Mode::Sequential),
            "parallel" => Ok(Mode::Parallel),
            other => Err(HsomError::Config(format!(
                "mode must be 'sequential' or 'parallel', got '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = HsomError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(HsomError::Config(format!(
                "format must be 'json' or 'csv', got '{other}'"
            ))),
        }
    }
}

/// Everything needed to run `train` or `bench`. Deserializable from TOML;
/// every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: Option<PathBuf>,
    /// Synthetic blob spec such as `blobs4:n=200000,p=20,sep=10`.
    pub synthetic: Option<String>,
    pub delimiter: char,
    pub label_column: Option<String>,
    /// Custom label vocabulary; when set, unmatched labels go to
    /// `label_default` or are rejected.
    pub label_map: Option<BTreeMap<String, u8>>,
    pub label_default: Option<u8>,
    pub normalize: bool,
    pub split: f64,
    pub seed: u64,
    pub grids: Vec<String>,
    pub alpha0: f64,
    pub delta0: Option<f64>,
    pub delta_min: f64,
    pub iterations: Option<usize>,
    pub max_iterations: usize,
    pub tau: f64,
    pub max_depth: usize,
    pub mode: Mode,
    pub workers: Option<usize>,
    pub reps: usize,
    pub out: PathBuf,
    pub format: ReportFormat,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let sched = ScheduleParams::default();
        ExperimentConfig {
            dataset: None,
            synthetic: None,
            delimiter: ',',
            label_column: None,
            label_map: None,
            label_default: None,
            normalize: true,
            split: 0.8,
            seed: 0,
            grids: vec!["3x3".to_string()],
            alpha0: sched.alpha0,
            delta0: sched.delta0,
            delta_min: sched.delta_min,
            iterations: sched.iterations,
            max_iterations: sched.max_iterations,
            tau: 1.0,
            max_depth: DEFAULT_MAX_DEPTH,
            mode: Mode::Sequential,
            workers: None,
            reps: 1,
            out: PathBuf::from("hsom-out"),
            format: ReportFormat::Json,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HsomError::io(path, e))?;
        toml::from_str(&text)
            .map_err(|e| HsomError::Config(format!("{}: {}", path.display(), e.message())))
    }

    pub fn grid_dims(&self) -> Result<Vec<GridDim>> {
        if self.grids.is_empty() {
            return Err(HsomError::Config("at least one grid size is required".into()));
        }
        self.grids
            .iter()
            .map(|g| g.parse().map_err(|e: HsomError| HsomError::Config(e.to_string())))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(HsomError::Config("reps must be at least 1".into()));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(HsomError::Config(format!("split must lie in (0, 1), got {}", self.split)));
        }
        if self.dataset.is_some() == self.synthetic.is_some() {
            return Err(HsomError::Config(
                "exactly one of dataset or synthetic must be given".into(),
            ));
        }
        if self.workers == Some(0) {
            return Err(HsomError::Config("workers must be at least 1".into()));
        }
        if !self.delimiter.is_ascii() {
            return Err(HsomError::Config("delimiter must be a single ASCII character".into()));
        }
        for grid in self.grid_dims()? {
            self.growth(grid, self.seed)
                .validate()
                .map_err(|e| HsomError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn schedule(&self) -> ScheduleParams {
        ScheduleParams {
            alpha0: self.alpha0,
            delta0: self.delta0,
            delta_min: self.delta_min,
            iterations: self.iterations,
            max_iterations: self.max_iterations,
            ..ScheduleParams::default()
        }
    }

    pub fn growth(&self, grid: GridDim, seed: u64) -> GrowthConfig {
        GrowthConfig {
            grid,
            tau: self.tau,
            max_depth: self.max_depth,
            schedule: self.schedule(),
            seed,
        }
    }

    /// Configured worker count, else one per logical core.
    pub fn resolved_workers(&self) -> Result<usize> {
        match self.workers {
            Some(0) => Err(HsomError::Config("workers must be at least 1".into())),
            Some(w) => Ok(w),
            None => Ok(default_workers()),
        }
    }

    /// Applies the worker count from a flag, falling back to the
    /// environment variable, on top of whatever the config file said.
    pub fn override_workers(&mut self, flag: Option<usize>, env: Option<&str>) -> Result<()> {
        if let Some(w) = flag {
            self.workers = Some(w);
        } else if let Some(v) = env {
            let w = v
                .trim()
                .parse::<usize>()
                .ok()
                .filter(|&w| w >= 1)
                .ok_or_else(|| HsomError::Config(format!("{WORKERS_ENV}='{v}' is not a positive integer")))?;
            self.workers = Some(w);
        }
        Ok(())
    }

    fn csv_options(&self) -> CsvOptions {
        let labels = match &self.label_map {
            Some(values) => LabelMapping {
                values: values.clone(),
                default: self.label_default,
            },
            None => LabelMapping {
                default: self.label_default.or(Some(1)),
                ..LabelMapping::default()
            },
        };
        CsvOptions {
            delimiter: self.delimiter as u8,
            label_column: self.label_column.clone(),
            labels,
        }
    }
}

/// Prepared data shared by every training of one experiment.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub source: String,
    pub split: SplitPair,
    pub preprocessing: Preprocessing,
    pub dropped_rows: usize,
    pub skipped_columns: Vec<String>,
}

pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let (source, raw, dropped_rows, skipped_columns) = match (&cfg.dataset, &cfg.synthetic) {
        (Some(path), None) => {
            let load = load_csv(path, &cfg.csv_options())?;
            (
                path.display().to_string(),
                load.dataset,
                load.dropped_rows,
                load.skipped_columns,
            )
        }
        (None, Some(spec)) => {
            let spec: SyntheticSpec = spec.parse()?;
            (format!("synthetic:{}", cfg.synthetic.as_deref().unwrap_or_default()), spec.generate(cfg.seed)?, 0, Vec::new())
        }
        _ => {
            return Err(HsomError::Config(
                "exactly one of dataset or synthetic must be given".into(),
            ))
        }
    };
    let feature_names = raw.feature_names().map(<[String]>::to_vec);
    let ds = if cfg.normalize { normalize_l2(&raw) } else { raw };
    let split = split_train_test(&ds, cfg.split, cfg.seed)?;
    Ok(PreparedData {
        source,
        split,
        preprocessing: Preprocessing {
            l2_normalize: cfg.normalize,
            feature_names,
        },
        dropped_rows,
        skipped_columns,
    })
}

pub fn train_model(
    train: &LabeledDataset,
    growth: &GrowthConfig,
    mode: Mode,
    workers: usize,
) -> Result<HsomModel> {
    match mode {
        Mode::Sequential => train_sequential(train, growth),
        Mode::Parallel => train_parallel(train, &ParallelConfig::new(workers, *growth)?),
    }
}

/// Trains once and scores on the held-out split. TT covers the training call
/// only.
pub fn train_and_evaluate(
    data: &PreparedData,
    growth: &GrowthConfig,
    mode: Mode,
    workers: usize,
) -> Result<(HsomModel, EvalReport)> {
    let (mut model, tt_s) =
        time_training(|| train_model(&data.split.train, growth, mode, workers))?;
    model.training_time_s = tt_s;
    let (preds, pt_ms) = time_prediction(&model, &data.split.test)?;
    let cm = confusion(&preds, data.split.test.labels())?;
    Ok((model, report(&cm, tt_s, pt_ms)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub source: String,
    pub grid: String,
    pub mode: Mode,
    pub workers: usize,
    pub seed: u64,
    pub train_rows: usize,
    pub test_rows: usize,
    pub dropped_rows: usize,
    pub depth: usize,
    pub node_count: usize,
    pub report: ReportTable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateTable {
    pub runs: usize,
    pub mean: ReportTable,
    pub per_run: Vec<ReportTable>,
}

impl From<&RunAggregate> for AggregateTable {
    fn from(a: &RunAggregate) -> Self {
        AggregateTable {
            runs: a.runs,
            mean: a.mean.to_table(),
            per_run: a.reports.iter().map(EvalReport::to_table).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub grid: String,
    pub sequential: AggregateTable,
    pub parallel: AggregateTable,
    /// Mean sequential TT over mean parallel TT.
    pub speedup: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub source: String,
    pub workers: usize,
    pub reps: usize,
    pub seed: u64,
    pub train_rows: usize,
    pub test_rows: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    /// `(grid, speedup)` pairs in sweep order, for plotting.
    pub fn speedup_series(&self) -> Vec<(String, f64)> {
        self.rows.iter().map(|r| (r.grid.clone(), r.speedup)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("grid,mode,runs,{},speedup\n", EvalReport::CSV_HEADER);
        for row in &self.rows {
            for (mode, agg) in [("sequential", &row.sequential), ("parallel", &row.parallel)] {
                let m = &agg.mean;
                let vals = [
                    m.precision.benign,
                    m.precision.malicious,
                    m.recall.benign,
                    m.recall.malicious,
                    m.f1.benign,
                    m.f1.malicious,
                    m.accuracy,
                    m.fpr,
                    m.fnr,
                    m.tt_s,
                    m.pt_ms,
                ]
                .map(|v| v.to_string())
                .join(",");
                out.push_str(&format!("{},{mode},{},{vals},{}\n", row.grid, agg.runs, row.speedup));
            }
        }
        out
    }
}

/// Seed of repetition `rep`; repetition 0 uses the experiment seed itself.
pub fn rep_seed(seed: u64, rep: usize) -> u64 {
    seed.wrapping_add(rep as u64)
}

/// For every grid: `reps` sequential and parallel trainings on the same
/// split, averaged, with the speedup of the mean training times.
pub fn run_bench(cfg: &ExperimentConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let data = prepare_data(cfg)?;
    run_bench_on(cfg, &data)
}

pub fn run_bench_on(cfg: &ExperimentConfig, data: &PreparedData) -> Result<BenchReport> {
    let workers = cfg.resolved_workers()?;
    let mut rows = Vec::new();
    for grid in cfg.grid_dims()? {
        let mut seq = Vec::with_capacity(cfg.reps);
        let mut par = Vec::with_capacity(cfg.reps);
        for rep in 0..cfg.reps {
            let growth = cfg.growth(grid, rep_seed(cfg.seed, rep));
            seq.push(train_and_evaluate(data, &growth, Mode::Sequential, workers)?.1);
            par.push(train_and_evaluate(data, &growth, Mode::Parallel, workers)?.1);
        }
        let seq = aggregate(&seq)?;
        let par = aggregate(&par)?;
        rows.push(BenchRow {
            grid: grid.to_string(),
            speedup: speedup(seq.mean.tt_s, par.mean.tt_s)?,
            sequential: (&seq).into(),
            parallel: (&par).into(),
        });
    }
    Ok(BenchReport {
        source: data.source.clone(),
        workers,
        reps: cfg.reps,
        seed: cfg.seed,
        train_rows: data.split.train.len(),
        test_rows: data.split.test.len(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            synthetic: Some("blobs2:n=400,p=3".into()),
            grids: vec!["2x2".into(), "3x3".into()],
            workers: Some(2),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(small().validate().is_ok());
        let mut c = small();
        c.reps = 0;
        assert!(matches!(c.validate(), Err(HsomError::Config(_))));
        let mut c = small();
        c.grids.clear();
        assert!(c.validate().is_err());
        let mut c = small();
        c.split = 1.0;
        assert!(c.validate().is_err());
        let mut c = small();
        c.dataset = Some("x.csv".into());
        assert!(c.validate().is_err());
    }

    #[test]
    fn worker_precedence() {
        let mut c = ExperimentConfig {
            workers: Some(3),
            ..small()
        };
        c.override_workers(None, None).unwrap();
        assert_eq!(c.resolved_workers().unwrap(), 3);
        c.override_workers(None, Some("5")).unwrap();
        assert_eq!(c.resolved_workers().unwrap(), 5);
        c.override_workers(Some(7), Some("5")).unwrap();
        assert_eq!(c.resolved_workers().unwrap(), 7);
        assert!(c.override_workers(None, Some("zero")).is_err());
        c.workers = None;
        assert_eq!(c.resolved_workers().unwrap(), default_workers());
    }

    #[test]
    fn toml_config() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(
            &p,
            "synthetic = \"blobs4\"\ngrids = [\"2x2\", \"5x5\"]\nreps = 3\ntau = 1.5\n[label_map]\nBENIGN = 0\n",
        )
        .unwrap();
        let c = ExperimentConfig::from_toml_file(&p).unwrap();
        assert_eq!(c.reps, 3);
        assert_eq!(c.grid_dims().unwrap()[1], GridDim::square(5).unwrap());
        assert_eq!(c.label_map.unwrap()["BENIGN"], 0);
        std::fs::write(&p, "bogus_key = 1\n").unwrap();
        assert!(matches!(
            ExperimentConfig::from_toml_file(&p),
            Err(HsomError::Config(_))
        ));
    }

    #[test]
    fn bench_has_both_modes_per_grid() {
        let r = run_bench(&small()).unwrap();
        assert_eq!(r.rows.len(), 2);
        for row in &r.rows {
            assert_eq!(row.sequential.runs, 1);
            assert_eq!(row.parallel.runs, 1);
            assert!(row.speedup > 0.0);
        }
        assert_eq!(r.speedup_series().len(), 2);
        assert_eq!(r.to_csv().lines().count(), 1 + 4);
    }
}
