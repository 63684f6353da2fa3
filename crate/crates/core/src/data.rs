//! Dataset ingestion, per-sample normalization, seeded splitting and the
//! synthetic Gaussian-blob generator used for desk-scale experiments.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{HsomError, Result};
use crate::matrix::Matrix;

/// Feature matrix plus binary labels (0 = benign, 1 = malicious).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Matrix,
    labels: Vec<u8>,
    feature_names: Option<Vec<String>>,
}

impl LabeledDataset {
    pub fn new(features: Matrix, labels: Vec<u8>) -> Result<Self> {
        Self::with_names(features, labels, None)
    }

    pub fn with_names(
        features: Matrix,
        labels: Vec<u8>,
        feature_names: Option<Vec<String>>,
    ) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(HsomError::invalid("dataset has no rows"));
        }
        if features.ncols() == 0 {
            return Err(HsomError::invalid("dataset has no feature columns"));
        }
        if labels.len() != features.nrows() {
            return Err(HsomError::invalid(format!(
                "{} labels for {} rows",
                labels.len(),
                features.nrows()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(HsomError::invalid(format!("label {bad} is not 0 or 1")));
        }
        if !features.all_finite() {
            return Err(HsomError::invalid("dataset contains non-finite features"));
        }
        if let Some(names) = &feature_names {
            if names.len() != features.ncols() {
                return Err(HsomError::invalid(format!(
                    "{} feature names for {} columns",
                    names.len(),
                    features.ncols()
                )));
            }
        }
        Ok(LabeledDataset {
            features,
            labels,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Fraction of malicious (label 1) rows.
    pub fn contamination(&self) -> f64 {
        self.labels.iter().filter(|&&l| l == 1).count() as f64 / self.len() as f64
    }

    /// Rows at `indices`, in order. Panics on out-of-range indices; an empty
    /// index list is rejected because datasets are never empty.
    pub fn subset(&self, indices: &[usize]) -> Result<LabeledDataset> {
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        LabeledDataset::with_names(
            self.features.select_rows(indices),
            labels,
            self.feature_names.clone(),
        )
    }
}

/// Scales every nonzero row to unit Euclidean norm. Zero rows are left as-is.
pub fn normalize_l2(ds: &LabeledDataset) -> LabeledDataset {
    let mut out = ds.clone();
    normalize_rows(&mut out.features);
    out
}

pub fn normalize_rows(m: &mut Matrix) {
    for i in 0..m.nrows() {
        let row = m.row_mut(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
}

#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
    pub ratio: f64,
}

/// Seeded, non-stratified shuffle split: the first `floor(ratio * N)` shuffled
/// rows go to training, the rest to test.
pub fn split_train_test(ds: &LabeledDataset, ratio: f64, seed: u64) -> Result<SplitPair> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(HsomError::invalid(format!(
            "split ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let n = ds.len();
    let n_train = (ratio * n as f64).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(HsomError::invalid(format!(
            "split ratio {ratio} on {n} rows leaves one side empty"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test_indices = idx.split_off(n_train);
    Ok(SplitPair {
        train: ds.subset(&idx)?,
        test: ds.subset(&test_indices)?,
        train_indices: idx,
        test_indices,
        seed,
        ratio,
    })
}

/// Maps raw label strings to {0, 1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMapping {
    /// Exact (then case-insensitive) matches.
    pub values: BTreeMap<String, u8>,
    /// Label for unmatched non-empty values; `None` makes them an error.
    pub default: Option<u8>,
}

impl Default for LabelMapping {
    fn default() -> Self {
        let values = [("0", 0), ("benign", 0), ("normal", 0), ("1", 1)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        LabelMapping {
            values,
            default: Some(1),
        }
    }
}

impl LabelMapping {
    pub fn map(&self, raw: &str) -> Result<u8> {
        let v = raw.trim();
        if v.is_empty() {
            return Err(HsomError::invalid("empty label value"));
        }
        let hit = self.values.get(v).copied().or_else(|| {
            self.values
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case(v))
                .map(|(_, &l)| l)
        });
        match hit.or(self.default) {
            Some(l) if l <= 1 => Ok(l),
            Some(l) => Err(HsomError::invalid(format!(
                "label mapping sends '{v}' to {l}, expected 0 or 1"
            ))),
            None => Err(HsomError::invalid(format!("unmappable label value '{v}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub delimiter: u8,
    /// Label column name; `None` uses the last column.
    pub label_column: Option<String>,
    pub labels: LabelMapping,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            delimiter: b',',
            label_column: None,
            labels: LabelMapping::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CsvLoad {
    pub dataset: LabeledDataset,
    /// Rows dropped because a feature was missing or non-finite.
    pub dropped_rows: usize,
    /// Columns excluded because they hold non-numeric values.
    pub skipped_columns: Vec<String>,
}

fn open_csv(path: &Path, delimiter: u8) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| HsomError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(false)
        .from_reader(file))
}

fn csv_err(path: &Path, e: csv::Error) -> HsomError {
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => HsomError::io(path, io),
            _ => unreachable!(),
        },
        _ => HsomError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        },
    }
}

fn parse_cell(cell: &str) -> Option<f64> {
    let c = cell.trim();
    if c.is_empty() {
        Some(f64::NAN)
    } else {
        c.parse::<f64>().ok()
    }
}

/// Loads a headed CSV. Numeric columns become features, the label column is
/// mapped through `opts.labels`, and rows with missing or non-finite features
/// are dropped and counted.
pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<CsvLoad> {
    let path = path.as_ref();
    let mut rdr = open_csv(path, opts.delimiter)?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.is_empty() {
        return Err(HsomError::invalid(format!("{} has no header", path.display())));
    }
    let label_idx = match &opts.label_column {
        Some(name) => header.iter().position(|h| h == name).ok_or_else(|| {
            HsomError::invalid(format!(
                "label column '{name}' not found in {}",
                path.display()
            ))
        })?,
        None => header.len() - 1,
    };

    let mut records = Vec::new();
    for rec in rdr.records() {
        records.push(rec.map_err(|e| csv_err(path, e))?);
    }
    if records.is_empty() {
        return Err(HsomError::invalid(format!("{} has no data rows", path.display())));
    }

    let candidate: Vec<usize> = (0..header.len()).filter(|&c| c != label_idx).collect();
    let mut numeric = Vec::new();
    let mut skipped_columns = Vec::new();
    for &c in &candidate {
        if records.iter().all(|r| parse_cell(&r[c]).is_some()) {
            numeric.push(c);
        } else {
            skipped_columns.push(header[c].clone());
        }
    }
    if numeric.is_empty() {
        return Err(HsomError::invalid(format!(
            "{} has no numeric feature columns",
            path.display()
        )));
    }

    let mut data = Vec::with_capacity(records.len() * numeric.len());
    let mut labels = Vec::with_capacity(records.len());
    let mut dropped_rows = 0;
    let mut row = Vec::with_capacity(numeric.len());
    for rec in &records {
        row.clear();
        row.extend(numeric.iter().map(|&c| parse_cell(&rec[c]).unwrap_or(f64::NAN)));
        if row.iter().any(|v| !v.is_finite()) {
            dropped_rows += 1;
            continue;
        }
        labels.push(opts.labels.map(&rec[label_idx])?);
        data.extend_from_slice(&row);
    }
    if labels.is_empty() {
        return Err(HsomError::invalid(format!(
            "every row of {} has non-finite features",
            path.display()
        )));
    }
    let features = Matrix::from_vec(labels.len(), numeric.len(), data)?;
    let names = numeric.iter().map(|&c| header[c].clone()).collect();
    Ok(CsvLoad {
        dataset: LabeledDataset::with_names(features, labels, Some(names))?,
        dropped_rows,
        skipped_columns,
    })
}

/// Reads unlabeled feature rows for prediction, preserving row order.
///
/// Columns are chosen by `feature_names` when the header contains all of them;
/// otherwise the file must hold exactly `expected` columns, or `expected + 1`
/// with the label in the last position. Zero-byte and header-only files give
/// an empty matrix.
pub fn load_feature_rows(
    path: impl AsRef<Path>,
    delimiter: u8,
    expected: usize,
    feature_names: Option<&[String]>,
) -> Result<Matrix> {
    let path = path.as_ref();
    let meta = std::fs::metadata(path).map_err(|e| HsomError::io(path, e))?;
    if meta.len() == 0 {
        return Ok(Matrix::zeros(0, expected));
    }
    let mut rdr = open_csv(path, delimiter)?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let by_name = feature_names.and_then(|names| {
        names
            .iter()
            .map(|n| header.iter().position(|h| h == n))
            .collect::<Option<Vec<usize>>>()
    });
    let columns: Vec<usize> = match by_name {
        Some(cols) => cols,
        None if header.len() == expected => (0..expected).collect(),
        None if header.len() == expected + 1 => (0..expected).collect(),
        None => {
            return Err(HsomError::invalid(format!(
                "feature dimension mismatch: expected P={expected}, found {} columns in {}",
                header.len(),
                path.display()
            )))
        }
    };

    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        for &c in &columns {
            let v = parse_cell(&rec[c]).filter(|v| v.is_finite()).ok_or_else(|| {
                HsomError::invalid(format!(
                    "row {} column '{}' of {} is not a finite number",
                    i + 1,
                    header[c],
                    path.display()
                ))
            })?;
            data.push(v);
        }
        rows += 1;
    }
    Matrix::from_vec(rows, expected, data)
}

/// Writes a dataset as a headed CSV with a trailing `label` column. Floats use
/// the shortest representation that parses back to the same value.
pub fn write_csv(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| HsomError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let names: Vec<String> = match ds.feature_names() {
        Some(n) => n.to_vec(),
        None => (0..ds.feature_dim()).map(|j| format!("f{j}")).collect(),
    };
    let io = |e| HsomError::io(path, e);
    writeln!(w, "{},label", names.join(",")).map_err(io)?;
    for (row, label) in ds.features().rows().zip(ds.labels()) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{},{label}", cells.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// One Gaussian component of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub center: Vec<f64>,
    pub sigma: f64,
    pub label: u8,
}

/// Isotropic Gaussian samples assigned round-robin across `blobs`.
pub fn synth_blobs(n: usize, blobs: &[BlobSpec], seed: u64) -> Result<LabeledDataset> {
    if blobs.is_empty() {
        return Err(HsomError::invalid("at least one blob is required"));
    }
    if n < blobs.len() {
        return Err(HsomError::invalid(format!(
            "{n} samples cannot cover {} blobs",
            blobs.len()
        )));
    }
    let p = blobs[0].center.len();
    for b in blobs {
        if !(b.sigma > 0.0 && b.sigma.is_finite()) {
            return Err(HsomError::invalid(format!(
                "blob sigma must be positive, got {}",
                b.sigma
            )));
        }
        if b.center.len() != p || p == 0 {
            return Err(HsomError::invalid("blob centers must share a positive dimension"));
        }
        if b.label > 1 {
            return Err(HsomError::invalid(format!("blob label {} is not 0 or 1", b.label)));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * p);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let blob = &blobs[i % blobs.len()];
        for c in &blob.center {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(c + blob.sigma * z);
        }
        labels.push(blob.label);
    }
    LabeledDataset::new(Matrix::from_vec(n, p, data)?, labels)
}

/// Compact description of a synthetic blob dataset, parsed from strings such
/// as `blobs4`, `blobs2:n=5000` or `blobs4:n=200000,p=20,sep=10`.
///
/// Blob `k` is centered on axis `k mod p` (positive for `k < p`, negative
/// after), scaled so neighboring centers are `sep` standard deviations apart.
/// Labels alternate 0, 1, 0, ...
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub blobs: usize,
    pub n: usize,
    pub p: usize,
    pub separation: f64,
    pub sigma: f64,
}

impl SyntheticSpec {
    pub fn new(blobs: usize, n: usize, p: usize, separation: f64) -> Result<Self> {
        let s = SyntheticSpec {
            blobs,
            n,
            p,
            separation,
            sigma: 1.0,
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if self.blobs == 0 || self.blobs > 2 * self.p {
            return Err(HsomError::invalid(format!(
                "synthetic spec needs 1 <= blobs <= 2p, got blobs={} p={}",
                self.blobs, self.p
            )));
        }
        if !(self.separation > 0.0 && self.sigma > 0.0) {
            return Err(HsomError::invalid("synthetic separation and sigma must be positive"));
        }
        if self.n < self.blobs {
            return Err(HsomError::invalid("synthetic n must cover every blob"));
        }
        Ok(())
    }

    pub fn blob_specs(&self) -> Vec<BlobSpec> {
        let radius = self.separation * self.sigma / std::f64::consts::SQRT_2;
        (0..self.blobs)
            .map(|k| {
                let mut center = vec![0.0; self.p];
                center[k % self.p] = if k < self.p { radius } else { -radius };
                BlobSpec {
                    center,
                    sigma: self.sigma,
                    label: (k % 2) as u8,
                }
            })
            .collect()
    }

    pub fn generate(&self, seed: u64) -> Result<LabeledDataset> {
        synth_blobs(self.n, &self.blob_specs(), seed)
    }
}

impl std::str::FromStr for SyntheticSpec {
    type Err = HsomError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: &str| HsomError::Config(format!("synthetic spec '{s}': {m}"));
        let (head, params) = s.trim().split_once(':').unwrap_or((s.trim(), ""));
        let blobs: usize = head
            .strip_prefix("blobs")
            .and_then(|k| k.parse().ok())
            .ok_or_else(|| bad("expected blobsK"))?;
        let mut spec = SyntheticSpec {
            blobs,
            n: 5000,
            p: blobs.max(2),
            separation: 10.0,
            sigma: 1.0,
        };
        for kv in params.split(',').filter(|kv| !kv.trim().is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            let num = || v.trim().parse::<f64>().map_err(|_| bad("non-numeric value"));
            match k.trim() {
                "n" => spec.n = num()? as usize,
                "p" => spec.p = num()? as usize,
                "sep" => spec.separation = num()?,
                "sigma" => spec.sigma = num()?,
                other => return Err(bad(&format!("unknown key '{other}'"))),
            }
        }
        spec.validate().map_err(|e| bad(&e.to_string()))?;
        Ok(spec)
    }
}
