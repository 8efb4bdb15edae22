//! Labeled datasets, CSV ingestion and export, input normalization,
//! stratified folds and the synthetic toy problems.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::seed;
use crate::similarity::Point;

pub const DEFAULT_LABEL_COLUMN: &str = "label";

/// Inputs with binary labels, stored majority block (label 0) first and
/// minority block (label 1) second.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    inputs: Vec<Point>,
    n_majority: usize,
    /// Row index in the source each point came from.
    origin: Vec<usize>,
    feature_names: Vec<String>,
    label_name: String,
}

impl LabeledDataset {
    /// Builds a dataset in canonical order. Relative order within each class
    /// is preserved.
    pub fn new(inputs: Vec<Point>, labels: Vec<u8>) -> Result<Self> {
        let origin = (0..inputs.len()).collect();
        Self::with_origin(inputs, labels, origin)
    }

    pub(crate) fn with_origin(
        inputs: Vec<Point>,
        labels: Vec<u8>,
        origin: Vec<usize>,
    ) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidValue("dataset has no points".into()));
        }
        if inputs.len() != labels.len() || inputs.len() != origin.len() {
            return Err(Error::Contract(format!(
                "{} inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        let p = inputs[0].dim();
        if p == 0 {
            return Err(Error::InvalidValue("points have no coordinates".into()));
        }
        if let Some(bad) = inputs.iter().find(|x| x.dim() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: bad.dim(),
            });
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(Error::InvalidValue(format!(
                "label {} at position {i} is not 0 or 1",
                labels[i]
            )));
        }
        let mut majority = Vec::new();
        let mut minority = Vec::new();
        for ((x, y), o) in inputs.into_iter().zip(labels).zip(origin) {
            if y == 0 {
                majority.push((x, o));
            } else {
                minority.push((x, o));
            }
        }
        let n_majority = majority.len();
        let (inputs, origin) = majority.into_iter().chain(minority).unzip();
        Ok(LabeledDataset {
            inputs,
            n_majority,
            origin,
            feature_names: (1..=p).map(|j| format!("x{j}")).collect(),
            label_name: DEFAULT_LABEL_COLUMN.to_string(),
        })
    }

    pub fn from_blocks(majority: Vec<Point>, minority: Vec<Point>) -> Result<Self> {
        let labels = std::iter::repeat_n(0, majority.len())
            .chain(std::iter::repeat_n(1, minority.len()))
            .collect();
        Self::new(majority.into_iter().chain(minority).collect(), labels)
    }

    pub fn with_names(mut self, feature_names: Vec<String>, label_name: String) -> Result<Self> {
        if feature_names.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: feature_names.len(),
            });
        }
        self.feature_names = feature_names;
        self.label_name = label_name;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].dim()
    }

    pub fn input(&self, i: usize) -> &Point {
        &self.inputs[i]
    }

    pub fn inputs(&self) -> &[Point] {
        &self.inputs
    }

    pub fn label(&self, i: usize) -> u8 {
        u8::from(i >= self.n_majority)
    }

    pub fn labels(&self) -> Vec<u8> {
        (0..self.len()).map(|i| self.label(i)).collect()
    }

    pub fn is_minority(&self, i: usize) -> bool {
        i >= self.n_majority
    }

    pub fn n_majority(&self) -> usize {
        self.n_majority
    }

    pub fn n_minority(&self) -> usize {
        self.len() - self.n_majority
    }

    pub fn majority(&self) -> &[Point] {
        &self.inputs[..self.n_majority]
    }

    pub fn minority(&self) -> &[Point] {
        &self.inputs[self.n_majority..]
    }

    pub fn minority_prior(&self) -> f64 {
        self.n_minority() as f64 / self.len() as f64
    }

    /// True when only one class is present. Such files load but cannot be
    /// trained on.
    pub fn is_single_class(&self) -> bool {
        self.n_majority == 0 || self.n_majority == self.len()
    }

    pub fn origin(&self, i: usize) -> usize {
        self.origin[i]
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn label_name(&self) -> &str {
        &self.label_name
    }

    /// The points at `indices` (canonical positions), re-canonicalized.
    /// Source-row indices carry over.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let inputs = indices.iter().map(|&i| self.inputs[i].clone()).collect();
        let labels = indices.iter().map(|&i| self.label(i)).collect();
        let origin = indices.iter().map(|&i| self.origin[i]).collect();
        let mut out = Self::with_origin(inputs, labels, origin)?;
        out.feature_names = self.feature_names.clone();
        out.label_name = self.label_name.clone();
        Ok(out)
    }

    /// Every input multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        LabeledDataset {
            inputs: self.inputs.iter().map(|x| x.scaled(factor)).collect(),
            ..self.clone()
        }
    }

    /// Hex digest identifying the inputs and labels (not names or origins).
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.len() as u64).to_le_bytes());
        hasher.update((self.dim() as u64).to_le_bytes());
        hasher.update((self.n_majority as u64).to_le_bytes());
        for x in &self.inputs {
            for c in x.as_slice() {
                hasher.update(c.to_bits().to_le_bytes());
            }
        }
        hasher
            .finalize()
            .iter()
            .take(16)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    Ok(text)
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        message: format!("`{raw}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            column: column.to_string(),
            message: format!("`{raw}` is not finite"),
        });
    }
    Ok(v)
}

struct Table {
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

fn read_table(path: &Path) -> Result<Table> {
    let text = read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect::<Vec<_>>();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Format(format!("{}: missing header row", path.display())));
    }
    let mut rows = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            row: r + 1,
            column: String::new(),
            message: e.to_string(),
        })?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != header.len() {
            return Err(Error::Parse {
                row: r + 1,
                column: String::new(),
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        rows.push(rec);
    }
    Ok(Table { header, rows })
}

/// Loads a comma-separated file with a header row. `label_column` must hold
/// 0/1 values; every other column must be numeric. Rows are reported
/// 1-based, counting data rows only.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let table = read_table(path)?;
    let label_idx = table
        .header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| {
            Error::InvalidValue(format!(
                "{}: no label column `{label_column}`; available columns: {}",
                path.display(),
                table.header.join(", ")
            ))
        })?;
    if table.rows.is_empty() {
        return Err(Error::Format(format!("{}: no data rows", path.display())));
    }
    if table.header.len() < 2 {
        return Err(Error::Format(format!(
            "{}: no feature columns besides `{label_column}`",
            path.display()
        )));
    }
    let mut inputs = Vec::with_capacity(table.rows.len());
    let mut labels = Vec::with_capacity(table.rows.len());
    for (r, rec) in table.rows.iter().enumerate() {
        let row = r + 1;
        let raw = &rec[label_idx];
        let label = match raw.trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Parse {
                    row,
                    column: label_column.to_string(),
                    message: format!("label `{other}` is not 0 or 1"),
                })
            }
        };
        let mut coords = Vec::with_capacity(table.header.len() - 1);
        for (c, name) in table.header.iter().enumerate() {
            if c != label_idx {
                coords.push(parse_cell(&rec[c], row, name)?);
            }
        }
        inputs.push(Point::new(coords)?);
        labels.push(label);
    }
    let names = table
        .header
        .iter()
        .enumerate()
        .filter(|(c, _)| *c != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    LabeledDataset::new(inputs, labels)?.with_names(names, label_column.to_string())
}

/// Reads feature rows for prediction. The label column, if present, is
/// dropped. An empty data section yields no points.
pub fn load_features(path: impl AsRef<Path>, label_column: &str) -> Result<Vec<Point>> {
    let path = path.as_ref();
    if read_to_string(path)?.trim().is_empty() {
        return Ok(Vec::new());
    }
    let table = read_table(path)?;
    let label_idx = table.header.iter().position(|h| h == label_column);
    table
        .rows
        .iter()
        .enumerate()
        .map(|(r, rec)| {
            let coords = table
                .header
                .iter()
                .enumerate()
                .filter(|(c, _)| Some(*c) != label_idx)
                .map(|(c, name)| parse_cell(&rec[c], r + 1, name))
                .collect::<Result<Vec<_>>>()?;
            Point::new(coords)
        })
        .collect()
}

/// Canonical CSV text: feature columns in stored order, then the label
/// column; rows in canonical (majority first) order; floats in shortest
/// round-trip form.
pub fn to_csv_string(data: &LabeledDataset) -> String {
    let mut out = String::new();
    out.push_str(&data.feature_names.join(","));
    out.push(',');
    out.push_str(&data.label_name);
    out.push('\n');
    for i in 0..data.len() {
        for c in data.input(i).as_slice() {
            out.push_str(&format!("{c},"));
        }
        out.push_str(&format!("{}\n", data.label(i)));
    }
    out
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: impl AsRef<Path>, contents: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidValue(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    let write = || -> std::io::Result<()> {
        let mut f = BufWriter::new(File::create(&tmp)?);
        f.write_all(contents)?;
        f.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn write_csv(data: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, to_csv_string(data).as_bytes())
}

/// Divides every input by the largest Euclidean norm so that the largest
/// squared norm becomes 1. Returns the dataset and the applied factor.
/// An all-zero dataset is returned unchanged with factor 1.
pub fn normalize(data: &LabeledDataset) -> (LabeledDataset, f64) {
    let max_norm = data
        .inputs()
        .iter()
        .map(|x| x.as_slice().iter().map(|c| c * c).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    if max_norm == 0.0 {
        return (data.clone(), 1.0);
    }
    let scale = 1.0 / max_norm;
    (data.scaled(scale), scale)
}

/// Splits canonical indices into `k` disjoint folds. Each class is shuffled
/// with the seed and dealt round-robin, so per-class fold counts differ by
/// at most one.
pub fn stratified_folds(data: &LabeledDataset, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let limit = data.n_majority().min(data.n_minority());
    if k < 1 || k > limit {
        return Err(Error::Contract(format!(
            "cannot make {k} stratified folds with {} majority and {} minority points",
            data.n_majority(),
            data.n_minority()
        )));
    }
    let mut rng = seed::rng(seed);
    let mut majority: Vec<usize> = (0..data.n_majority()).collect();
    let mut minority: Vec<usize> = (data.n_majority()..data.len()).collect();
    majority.shuffle(&mut rng);
    minority.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (pos, &i) in majority.iter().chain(&minority).enumerate() {
        folds[pos % k].push(i);
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// A multivariate normal from which toy points are drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    /// Row-major `p x p` covariance.
    pub covariance: Vec<f64>,
    pub count: usize,
}

impl GaussianSpec {
    /// Lower-triangular Cholesky factor `L` with `L L^T = covariance`.
    pub fn cholesky(&self) -> Result<DMatrix<f64>> {
        let p = self.mean.len();
        if self.covariance.len() != p * p {
            return Err(Error::DimensionMismatch {
                expected: p * p,
                found: self.covariance.len(),
            });
        }
        let cov = DMatrix::from_row_slice(p, p, &self.covariance);
        if (&cov - cov.transpose()).amax() > 0.0 {
            return Err(Error::InvalidValue("covariance is not symmetric".into()));
        }
        cov.cholesky()
            .map(|c| c.l())
            .ok_or_else(|| Error::InvalidValue("covariance is not positive definite".into()))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<Point>> {
        let l = self.cholesky()?;
        let p = self.mean.len();
        let mean = DVector::from_column_slice(&self.mean);
        (0..self.count)
            .map(|_| {
                let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
                Point::new((&mean + &l * z).iter().copied().collect())
            })
            .collect()
    }
}

/// The three two-dimensional toy problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Toy {
    /// Well separated classes.
    One,
    /// Overlapping classes.
    Two,
    /// Overlapping classes with only five minority points.
    Three,
}

impl Toy {
    pub fn from_index(which: u8) -> Result<Self> {
        match which {
            1 => Ok(Toy::One),
            2 => Ok(Toy::Two),
            3 => Ok(Toy::Three),
            other => Err(Error::InvalidValue(format!(
                "toy dataset must be 1, 2 or 3, got {other}"
            ))),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Toy::One => 1,
            Toy::Two => 2,
            Toy::Three => 3,
        }
    }

    pub fn majority_spec() -> GaussianSpec {
        GaussianSpec {
            mean: vec![-1.0, -2.0],
            covariance: vec![1.1, 0.1, 0.1, 1.2],
            count: 100,
        }
    }

    pub fn majority_retained(self) -> usize {
        match self {
            Toy::One | Toy::Two => 50,
            Toy::Three => 70,
        }
    }

    pub fn minority_spec(self) -> GaussianSpec {
        let (mean, count) = match self {
            Toy::One => (vec![2.0, 1.0], 20),
            Toy::Two => (vec![1.0, 1.0], 20),
            Toy::Three => (vec![0.0, 0.0], 5),
        };
        GaussianSpec {
            mean,
            covariance: vec![0.6, -0.1, -0.1, 1.7],
            count,
        }
    }
}

/// Draws a toy dataset. The 100 majority draws come first from the seeded
/// stream and the leading 50 (or 70) are retained; the minority draws follow.
pub fn generate_toy(which: Toy, seed: u64) -> LabeledDataset {
    let mut rng = seed::rng(seed);
    let mut majority = Toy::majority_spec()
        .sample(&mut rng)
        .expect("toy covariance is positive definite");
    majority.truncate(which.majority_retained());
    let minority = which
        .minority_spec()
        .sample(&mut rng)
        .expect("toy covariance is positive definite");
    LabeledDataset::from_blocks(majority, minority).expect("toy dataset is well formed")
}
