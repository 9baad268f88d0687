//! Feature ranking and cross-validated evaluation of selected subsets.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::{encode_labels, LabeledDataset, Standardizer};
use crate::engine::IrwConfig;
use crate::error::{Error, Result};
use crate::linalg::{auto_delta, DenseMatrix, NormKind, SmoothedNormSpec};
use crate::problems::featsel::{argmax, fs_fit, fs_predict};

/// Features ordered by descending score; `scores[k]` belongs to feature `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedFeatures {
    pub indices: Vec<usize>,
    pub scores: Vec<f64>,
}

impl RankedFeatures {
    /// Stable descending sort, so equal scores keep the lower index first.
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let mut indices: Vec<usize> = (0..scores.len()).collect();
        indices.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        Self { indices, scores }
    }

    pub fn top(&self, k: usize) -> &[usize] {
        &self.indices[..k.min(self.indices.len())]
    }
}

/// Ranks features by the Euclidean norm of their row of `W`.
pub fn rank_by_row_norm(w: &DenseMatrix) -> RankedFeatures {
    RankedFeatures::from_scores(w.row_iter().map(|r| r.norm()).collect())
}

/// Between-class over within-class variance, per feature.
pub fn fisher_score(ds: &LabeledDataset) -> Result<RankedFeatures> {
    let sizes = ds.class_sizes();
    if let Some((class, &count)) = sizes.iter().enumerate().find(|(_, n)| **n < 2) {
        return Err(Error::DegenerateClass { class, count });
    }
    let n = ds.n_samples() as f64;
    let scores = ds
        .x
        .row_iter()
        .map(|row| {
            let mean = row.sum() / n;
            let mut sums = vec![0.0; ds.class_count];
            for (k, &l) in ds.labels.iter().enumerate() {
                sums[l] += row[k];
            }
            let class_means: Vec<f64> =
                sums.iter().zip(&sizes).map(|(s, &c)| s / c as f64).collect();
            // n_c σ²_c summed over classes is the within-class sum of squares.
            let within: f64 = ds
                .labels
                .iter()
                .enumerate()
                .map(|(k, &l)| (row[k] - class_means[l]).powi(2))
                .sum();
            let between: f64 = class_means
                .iter()
                .zip(&sizes)
                .map(|(m, &c)| c as f64 * (m - mean).powi(2))
                .sum();
            between / (within + 1e-12)
        })
        .collect();
    Ok(RankedFeatures::from_scores(scores))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    IrwFs { p: f64, gamma: f64 },
    Fisher,
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::IrwFs { p, .. } => format!("irw-fs(p={p})"),
            Method::Fisher => "fisher".to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classifier {
    NearestCentroid,
    /// Argmax of a feature-selection model refitted on the chosen features,
    /// using the method's `(p, γ)`, or `(1, 1)` for Fisher.
    ModelLinear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub seed: u64,
    /// Independent reshuffles; per-fold accuracies of all repeats are pooled.
    pub repeats: usize,
    /// Standardize with training-fold statistics before fitting.
    pub standardize: bool,
    /// Iteration cap for every feature-selection fit.
    pub iters: usize,
    pub classifier: Classifier,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            seed: 0,
            repeats: 1,
            standardize: true,
            iters: 30,
            classifier: Classifier::NearestCentroid,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub method: String,
    pub p: Option<f64>,
    pub gamma: Option<f64>,
    pub classifier: Classifier,
    pub feature_counts: Vec<usize>,
    pub mean_accuracy: Vec<f64>,
    /// `fold_accuracies[i][f]` is fold `f`'s accuracy at `feature_counts[i]`.
    pub fold_accuracies: Vec<Vec<f64>>,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl CvReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn accuracy_at(&self, count: usize) -> Option<f64> {
        self.feature_counts
            .iter()
            .position(|&c| c == count)
            .map(|i| self.mean_accuracy[i])
    }
}

/// One row per feature count, one column per report.
pub fn write_reports_csv<W: Write>(reports: &[CvReport], out: W) -> Result<()> {
    let Some(first) = reports.first() else {
        return Err(Error::InvalidParameter("no reports to write".into()));
    };
    if reports.iter().any(|r| r.feature_counts != first.feature_counts) {
        return Err(Error::Shape("reports use different feature counts".into()));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["count".to_string()];
    header.extend(reports.iter().map(|r| r.method.clone()));
    w.write_record(&header)?;
    for (i, count) in first.feature_counts.iter().enumerate() {
        let mut row = vec![count.to_string()];
        row.extend(reports.iter().map(|r| r.mean_accuracy[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Fold index of every sample. Each class is shuffled and dealt round-robin,
/// continuing the deal across classes so fold sizes differ by at most one.
pub fn stratified_folds(labels: &[usize], class_count: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for class in 0..class_count {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&k| labels[k] == class).collect();
        members.shuffle(&mut rng);
        for k in members {
            assignment[k] = next % folds;
            next += 1;
        }
    }
    assignment
}

fn prepare(ds: &LabeledDataset, train: &[usize], standardize: bool) -> (LabeledDataset, Option<Standardizer>) {
    let mut train_ds = ds.subset(train);
    if standardize {
        let s = Standardizer::fit(&train_ds.x);
        train_ds.x = s.apply(&train_ds.x);
        (train_ds, Some(s))
    } else {
        (train_ds, None)
    }
}

fn fs_config(iters: usize) -> IrwConfig {
    IrwConfig { check_majorization: false, ..IrwConfig::default().with_max_iters(iters) }
}

fn fit_fs(ds: &LabeledDataset, p: f64, gamma: f64, iters: usize) -> Result<crate::problems::FsModel> {
    let y = encode_labels(&ds.labels, ds.class_count)?;
    let spec = SmoothedNormSpec::new(p, auto_delta(&[&ds.x]), NormKind::Rowwise)?;
    fs_fit(&ds.x, &y, gamma, spec, &fs_config(iters)).map(|(model, _)| model)
}

/// Ranks features using only the samples in `train`.
pub fn fit_ranking(
    ds: &LabeledDataset,
    train: &[usize],
    method: Method,
    options: &CvOptions,
) -> Result<RankedFeatures> {
    let (train_ds, _) = prepare(ds, train, options.standardize);
    match method {
        Method::Fisher => fisher_score(&train_ds),
        Method::IrwFs { p, gamma } => {
            fit_fs(&train_ds, p, gamma, options.iters).map(|m| rank_by_row_norm(&m.w))
        }
    }
}

fn nearest_centroid(train: &LabeledDataset, test: &DenseMatrix) -> Vec<usize> {
    let sizes = train.class_sizes();
    let mut centroids = DenseMatrix::zeros(train.n_features(), train.class_count);
    for (k, &l) in train.labels.iter().enumerate() {
        let mut c = centroids.column_mut(l);
        c += train.x.column(k) / sizes[l] as f64;
    }
    test.column_iter()
        .map(|s| {
            argmax((0..train.class_count).map(|c| {
                if sizes[c] == 0 {
                    f64::NEG_INFINITY
                } else {
                    -(s - centroids.column(c)).norm_squared()
                }
            }))
        })
        .collect()
}

fn evaluate(
    train: &LabeledDataset,
    test: &LabeledDataset,
    features: &[usize],
    method: Method,
    options: &CvOptions,
) -> Result<f64> {
    let train = train.select_features(features);
    let test = test.select_features(features);
    let predicted = match options.classifier {
        Classifier::NearestCentroid => nearest_centroid(&train, &test.x),
        Classifier::ModelLinear => {
            let (p, gamma) = match method {
                Method::IrwFs { p, gamma } => (p, gamma),
                Method::Fisher => (1.0, 1.0),
            };
            fs_predict(&fit_fs(&train, p, gamma, options.iters)?, &test.x)?
        }
    };
    let correct = predicted.iter().zip(&test.labels).filter(|(a, b)| a == b).count();
    Ok(correct as f64 / test.labels.len() as f64)
}

/// Stratified k-fold accuracy of `method` at each feature count. The ranking,
/// standardization and classifier all see the training folds only.
pub fn cross_validate(
    ds: &LabeledDataset,
    method: Method,
    feature_counts: &[usize],
    options: &CvOptions,
) -> Result<CvReport> {
    if options.folds < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 folds, got {}", options.folds)));
    }
    if options.folds > ds.n_samples() {
        return Err(Error::InvalidParameter(format!(
            "{} folds for {} samples",
            options.folds,
            ds.n_samples()
        )));
    }
    if options.repeats == 0 || options.iters == 0 {
        return Err(Error::InvalidParameter("repeats and iters must be positive".into()));
    }
    if feature_counts.is_empty() {
        return Err(Error::InvalidParameter("no feature counts given".into()));
    }
    if let Some(&bad) = feature_counts.iter().find(|&&k| k == 0 || k > ds.n_features()) {
        return Err(Error::InvalidParameter(format!(
            "feature count {bad} outside 1..={}",
            ds.n_features()
        )));
    }

    let mut fold_accuracies = vec![Vec::new(); feature_counts.len()];
    for repeat in 0..options.repeats {
        let seed = options.seed.wrapping_add(repeat as u64);
        let assignment = stratified_folds(&ds.labels, ds.class_count, options.folds, seed);
        for fold in 0..options.folds {
            let (test_idx, train_idx): (Vec<usize>, Vec<usize>) =
                (0..ds.n_samples()).partition(|&k| assignment[k] == fold);
            let ranking = fit_ranking(ds, &train_idx, method, options)?;
            let (train, scaler) = prepare(ds, &train_idx, options.standardize);
            let mut test = ds.subset(&test_idx);
            if let Some(s) = scaler {
                test.x = s.apply(&test.x);
            }
            for (i, &k) in feature_counts.iter().enumerate() {
                fold_accuracies[i].push(evaluate(&train, &test, ranking.top(k), method, options)?);
            }
        }
    }

    let mean_accuracy = fold_accuracies
        .iter()
        .map(|a| a.iter().sum::<f64>() / a.len() as f64)
        .collect();
    let (p, gamma) = match method {
        Method::IrwFs { p, gamma } => (Some(p), Some(gamma)),
        Method::Fisher => (None, None),
    };
    Ok(CvReport {
        method: method.name(),
        p,
        gamma,
        classifier: options.classifier,
        feature_counts: feature_counts.to_vec(),
        mean_accuracy,
        fold_accuracies,
        folds: options.folds,
        repeats: options.repeats,
        seed: options.seed,
    })
}
