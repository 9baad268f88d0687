//! Labeled data: CSV ingestion, ±1 label encoding and seeded synthetic
//! generators.
//!
//! All randomness comes from `ChaCha8Rng` seeded with `seed_from_u64`, and
//! normal draws use the `rand_distr` ziggurat sampler. Matrices are filled
//! in row-major order, so a seed pins the result on every platform.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector};

/// Mean difference, in noise standard deviations, of a planted signal
/// feature between its class and the rest.
pub const DEFAULT_PLANTED_GAP: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    /// Features × samples.
    pub x: DenseMatrix,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub feature_names: Option<Vec<String>>,
    /// Original label text, indexed by class id, when loaded from a file.
    pub class_names: Option<Vec<String>>,
}

impl LabeledDataset {
    pub fn new(x: DenseMatrix, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let ds = Self { x, labels, class_count, feature_names: None, class_names: None };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.x.ncols() {
            return Err(Error::Shape(format!(
                "{} labels for {} samples",
                self.labels.len(),
                self.x.ncols()
            )));
        }
        if self.labels.len() < 2 {
            return Err(Error::InvalidParameter("a dataset needs at least two samples".into()));
        }
        if let Some(bad) = self.labels.iter().find(|l| **l >= self.class_count) {
            return Err(Error::Encoding(format!(
                "label {bad} out of range for {} classes",
                self.class_count
            )));
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("dataset has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_features(&self) -> usize {
        self.x.nrows()
    }

    /// Samples by index, in the given order.
    pub fn subset(&self, samples: &[usize]) -> LabeledDataset {
        LabeledDataset {
            x: self.x.select_columns(samples),
            labels: samples.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        }
    }

    /// Features by index, in the given order.
    pub fn select_features(&self, features: &[usize]) -> LabeledDataset {
        LabeledDataset {
            x: self.x.select_rows(features),
            labels: self.labels.clone(),
            class_count: self.class_count,
            feature_names: self
                .feature_names
                .as_ref()
                .map(|names| features.iter().map(|&i| names[i].clone()).collect()),
            class_names: self.class_names.clone(),
        }
    }

    /// Per-class sample counts.
    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.class_count];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Per-feature mean and standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: DenseVector,
    pub scale: DenseVector,
}

impl Standardizer {
    /// Statistics of the rows of `x` (features × samples). Constant features
    /// get scale 1.
    pub fn fit(x: &DenseMatrix) -> Self {
        let n = x.ncols().max(1) as f64;
        let mean = DenseVector::from_iterator(x.nrows(), x.row_iter().map(|r| r.sum() / n));
        let scale = DenseVector::from_iterator(
            x.nrows(),
            x.row_iter().zip(mean.iter()).map(|(r, m)| {
                let var = r.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            }),
        );
        Self { mean, scale }
    }

    pub fn apply(&self, x: &DenseMatrix) -> DenseMatrix {
        let mut out = x.clone();
        for (i, mut row) in out.row_iter_mut().enumerate() {
            row.add_scalar_mut(-self.mean[i]);
            row /= self.scale[i];
        }
        out
    }
}

/// How the label column of a CSV file is chosen.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelColumn {
    Name(String),
    /// Zero-based; negative values count from the end (`-1` is the last).
    Index(isize),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<isize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

/// Loads a comma-separated file with one sample per line.
pub fn load_csv(
    path: impl AsRef<Path>,
    label: &LabelColumn,
    has_header: bool,
    standardize: bool,
) -> Result<LabeledDataset> {
    let file = std::fs::File::open(path)?;
    load_csv_reader(file, label, has_header, standardize)
}

/// [`load_csv`] over any reader.
pub fn load_csv_reader<R: Read>(
    reader: R,
    label: &LabelColumn,
    has_header: bool,
    standardize: bool,
) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut records = rdr.records();
    let mut header: Option<Vec<String>> = None;
    if has_header {
        match records.next() {
            Some(rec) => header = Some(rec?.iter().map(str::to_string).collect()),
            None => return Err(Error::Encoding("file is empty".into())),
        }
    }

    let mut width: Option<usize> = header.as_ref().map(Vec::len);
    let mut label_idx: Option<usize> = None;
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();

    for rec in records {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(Error::Parse {
                line,
                column: rec.len().min(w) + 1,
                message: format!("expected {w} fields, found {}", rec.len()),
            });
        }
        let li = match label_idx {
            Some(i) => i,
            None => {
                let i = resolve_label(label, header.as_deref(), w)?;
                columns = vec![Vec::new(); w - 1];
                label_idx = Some(i);
                i
            }
        };
        let mut feature = 0;
        for (col, field) in rec.iter().enumerate() {
            if col == li {
                raw_labels.push(field.to_string());
                continue;
            }
            let value: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                column: col + 1,
                message: format!("non-numeric feature value {field:?}"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    line,
                    column: col + 1,
                    message: format!("non-finite feature value {field:?}"),
                });
            }
            columns[feature].push(value);
            feature += 1;
        }
    }

    let li = label_idx.ok_or_else(|| Error::Encoding("file has no data rows".into()))?;
    let mut class_of: HashMap<&str, usize> = HashMap::new();
    let mut class_names = Vec::new();
    let labels: Vec<usize> = raw_labels
        .iter()
        .map(|l| {
            *class_of.entry(l.as_str()).or_insert_with(|| {
                class_names.push(l.clone());
                class_names.len() - 1
            })
        })
        .collect();
    if class_names.len() < 2 {
        return Err(Error::Encoding(format!(
            "need at least two classes, found {}",
            class_names.len()
        )));
    }

    let n = labels.len();
    let d = columns.len();
    let mut x = DenseMatrix::from_fn(d, n, |i, j| columns[i][j]);
    if standardize {
        x = Standardizer::fit(&x).apply(&x);
    }
    let feature_names = header.map(|h| {
        h.into_iter()
            .enumerate()
            .filter(|(i, _)| *i != li)
            .map(|(_, s)| s)
            .collect()
    });
    let ds = LabeledDataset {
        x,
        labels,
        class_count: class_names.len(),
        feature_names,
        class_names: Some(class_names),
    };
    ds.validate()?;
    Ok(ds)
}

fn resolve_label(label: &LabelColumn, header: Option<&[String]>, width: usize) -> Result<usize> {
    if width < 2 {
        return Err(Error::Shape("need at least one feature column and a label column".into()));
    }
    match label {
        LabelColumn::Index(i) => {
            let idx = if *i < 0 { width as isize + i } else { *i };
            if idx < 0 || idx as usize >= width {
                return Err(Error::InvalidParameter(format!(
                    "label column {i} out of range for {width} columns"
                )));
            }
            Ok(idx as usize)
        }
        LabelColumn::Name(name) => {
            let header = header.ok_or_else(|| {
                Error::InvalidParameter("label column given by name but file has no header".into())
            })?;
            header.iter().position(|h| h == name).ok_or_else(|| {
                Error::InvalidParameter(format!("no column named {name:?} in header"))
            })
        }
    }
}

/// `n × c` matrix with `+1` at each sample's class and `−1` elsewhere.
pub fn encode_labels(labels: &[usize], class_count: usize) -> Result<DenseMatrix> {
    if let Some(bad) = labels.iter().find(|l| **l >= class_count) {
        return Err(Error::Encoding(format!(
            "label {bad} out of range for {class_count} classes"
        )));
    }
    Ok(DenseMatrix::from_fn(labels.len(), class_count, |k, j| {
        if labels[k] == j {
            1.0
        } else {
            -1.0
        }
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distribution {
    StandardGaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub distribution: Distribution,
}

impl SyntheticSpec {
    pub fn gaussian(rows: usize, cols: usize, seed: u64) -> Self {
        Self { rows, cols, seed, distribution: Distribution::StandardGaussian }
    }
}

/// Seeded matrix of independent draws.
pub fn gaussian_matrix(spec: &SyntheticSpec) -> Result<DenseMatrix> {
    if spec.rows == 0 || spec.cols == 0 {
        return Err(Error::InvalidParameter(format!(
            "synthetic matrix needs rows, cols >= 1, got {}x{}",
            spec.rows, spec.cols
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let entries: Vec<f64> = match spec.distribution {
        Distribution::StandardGaussian => {
            (0..spec.rows * spec.cols).map(|_| rng.sample(StandardNormal)).collect()
        }
    };
    Ok(DenseMatrix::from_row_slice(spec.rows, spec.cols, &entries))
}

/// Inputs `(A, Y, B, Z)` of the example problem with shapes `n1×d`, `n1×c`,
/// `n2×d` and `n2×c`, each drawn from its own stream (`seed`, `seed+1`, …).
pub fn synthetic_example_inputs(
    d: usize,
    n1: usize,
    n2: usize,
    c: usize,
    seed: u64,
) -> Result<(DenseMatrix, DenseMatrix, DenseMatrix, DenseMatrix)> {
    let draw = |rows, cols, k: u64| gaussian_matrix(&SyntheticSpec::gaussian(rows, cols, seed.wrapping_add(k)));
    Ok((draw(n1, d, 0)?, draw(n1, c, 1)?, draw(n2, d, 2)?, draw(n2, c, 3)?))
}

/// Planted feature-selection instance and its ground truth.
#[derive(Clone, Debug)]
pub struct PlantedInstance {
    pub dataset: LabeledDataset,
    /// Indices of the informative features, ascending.
    pub signal: Vec<usize>,
}

/// [`planted_fs_instance_with_gap`] with [`DEFAULT_PLANTED_GAP`].
pub fn planted_fs_instance(
    d: usize,
    n: usize,
    c: usize,
    signal_features: usize,
    seed: u64,
) -> Result<PlantedInstance> {
    planted_fs_instance_with_gap(d, n, c, signal_features, DEFAULT_PLANTED_GAP, seed)
}

/// `d` standard-normal features over `n` samples with balanced labels
/// `k mod c`. The `t`-th signal feature has its mean raised by `gap` for
/// class `t mod c`; the remaining features are pure noise. Signal positions
/// are drawn from the same seed.
pub fn planted_fs_instance_with_gap(
    d: usize,
    n: usize,
    c: usize,
    signal_features: usize,
    gap: f64,
    seed: u64,
) -> Result<PlantedInstance> {
    if signal_features > d {
        return Err(Error::InvalidParameter(format!(
            "{signal_features} signal features requested but only {d} features"
        )));
    }
    if c == 0 || n < 2 {
        return Err(Error::InvalidParameter(format!(
            "need c >= 1 and n >= 2, got c={c}, n={n}"
        )));
    }
    let mut x = gaussian_matrix(&SyntheticSpec::gaussian(d, n, seed))?;
    let labels: Vec<usize> = (0..n).map(|k| k % c).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(&mut rng);
    let mut signal: Vec<usize> = order[..signal_features].to_vec();
    signal.sort_unstable();

    for (t, &feature) in signal.iter().enumerate() {
        let class = t % c;
        for (k, &l) in labels.iter().enumerate() {
            if l == class {
                x[(feature, k)] += gap;
            }
        }
    }
    Ok(PlantedInstance { dataset: LabeledDataset::new(x, labels, c)?, signal })
}
