//! Baseline and perturbation distributions.
//!
//! Baselines are reference rows an explainer marginalizes removed features
//! over; perturbations are the replacement draws that destroy feature
//! information during ablation. The two roles are not interchangeable:
//! constant-median serves both, marginal and max-distance are
//! perturbation-only, training / opposite-class / nearest-neighbors are
//! baseline-only. Categorical features are always perturbed to a valid
//! category of the training distribution.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1};
use rand::Rng;
use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, EncodedView, Encoder, FeatureKind, Group, Scaler};
use crate::model::{Model, ModelError};
use crate::rng;

const TAG_BASELINE: u64 = 0x201;
const TAG_PERTURB: u64 = 0x202;

pub const DEFAULT_NEIGHBORS: usize = 5;
pub const DEFAULT_BASELINE_SAMPLE_SIZE: usize = 50;

#[derive(Debug, Error)]
pub enum DistributionError {
    #[error("training set is empty")]
    EmptyTrain,
    #[error("training data has no rows with class opposite to the prediction")]
    NoOppositeClassRows,
    #[error("feature `{0}` has a single category; max-distance is undefined")]
    SingleCategoryFeature(String),
    #[error("feature index {0} out of range")]
    InvalidFeature(usize),
    #[error("invalid sample size: {0}")]
    InvalidSampleSize(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Reference distributions for explainers (Table 1 baseline column).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum BaselineKind {
    ConstantMedian,
    Training,
    OppositeClass,
    NearestNeighbors { k: usize },
}

impl BaselineKind {
    pub fn nearest_neighbors() -> Self {
        BaselineKind::NearestNeighbors { k: DEFAULT_NEIGHBORS }
    }

    pub fn label(&self) -> &'static str {
        match self {
            BaselineKind::ConstantMedian => "constant_median",
            BaselineKind::Training => "training",
            BaselineKind::OppositeClass => "opposite_class",
            BaselineKind::NearestNeighbors { .. } => "nearest_neighbors",
        }
    }
}

/// Replacement distributions for ablation (Table 1 perturbation column).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    ConstantMedian,
    Marginal,
    MaxDistance,
}

impl PerturbationKind {
    pub fn label(&self) -> &'static str {
        match self {
            PerturbationKind::ConstantMedian => "constant_median",
            PerturbationKind::Marginal => "marginal",
            PerturbationKind::MaxDistance => "max_distance",
        }
    }
}

#[derive(Debug, Clone)]
enum BaselineRows {
    /// One reference set shared by every explained sample.
    Shared(Array2<f64>),
    /// One reference set per explained sample.
    PerSample(Vec<Array2<f64>>),
}

/// Reference rows in encoded space, per explained sample.
#[derive(Debug, Clone)]
pub struct BaselineSet {
    pub kind: BaselineKind,
    pub sample_size: usize,
    rows: BaselineRows,
}

impl BaselineSet {
    pub fn from_shared(kind: BaselineKind, rows: Array2<f64>) -> Self {
        let sample_size = rows.nrows();
        Self { kind, sample_size, rows: BaselineRows::Shared(rows) }
    }

    /// Reference rows for explained sample `i`.
    pub fn rows_for(&self, i: usize) -> ArrayView2<'_, f64> {
        match &self.rows {
            BaselineRows::Shared(m) => m.view(),
            BaselineRows::PerSample(sets) => sets[i].view(),
        }
    }

    pub fn is_shared(&self) -> bool {
        matches!(self.rows, BaselineRows::Shared(_))
    }
}

/// Build the baseline reference set for every row of `x_explain`.
///
/// * constant median: single row of per-column medians, categorical groups
///   one-hot at the most common category.
/// * training: uniform subsample of the training rows (without replacement
///   when possible), shared across samples.
/// * opposite class: per sample, training rows whose observed label differs
///   from the model's predicted class for that sample.
/// * nearest neighbors: per sample, the `k` training rows closest in L2
///   over the standardized encoded space, ties broken by row index.
pub fn build_baseline(
    kind: BaselineKind,
    train: &EncodedView,
    train_labels: &[u8],
    model: &Model,
    x_explain: &Array2<f64>,
    sample_size: usize,
    seed: u64,
) -> Result<BaselineSet, DistributionError> {
    let n_train = train.matrix.nrows();
    if n_train == 0 {
        return Err(DistributionError::EmptyTrain);
    }
    if sample_size == 0 {
        return Err(DistributionError::InvalidSampleSize("sample_size must be at least 1".into()));
    }
    let mut rng = rng::stream(seed, &[TAG_BASELINE]);
    match kind {
        BaselineKind::ConstantMedian => {
            let row = median_mode_row(train);
            Ok(BaselineSet {
                kind,
                sample_size: 1,
                rows: BaselineRows::Shared(row.insert_axis(ndarray::Axis(0))),
            })
        }
        BaselineKind::Training => {
            let picks = sample_indices(&mut rng, n_train, sample_size);
            Ok(BaselineSet {
                kind,
                sample_size,
                rows: BaselineRows::Shared(gather_rows(&train.matrix, &picks)),
            })
        }
        BaselineKind::OppositeClass => {
            if train_labels.iter().all(|&y| y == 0) || train_labels.iter().all(|&y| y == 1) {
                return Err(DistributionError::NoOppositeClassRows);
            }
            let probs = model.predict(x_explain)?;
            let by_class: [Vec<usize>; 2] = {
                let mut c = [Vec::new(), Vec::new()];
                for (i, &y) in train_labels.iter().enumerate() {
                    c[usize::from(y)].push(i);
                }
                c
            };
            let mut sets = Vec::with_capacity(x_explain.nrows());
            for &p in &probs {
                let predicted = usize::from(p > 0.5);
                let pool = &by_class[1 - predicted];
                let picks = sample_from_pool(&mut rng, pool, sample_size);
                sets.push(gather_rows(&train.matrix, &picks));
            }
            Ok(BaselineSet { kind, sample_size, rows: BaselineRows::PerSample(sets) })
        }
        BaselineKind::NearestNeighbors { k } => {
            if k == 0 {
                return Err(DistributionError::InvalidSampleSize("k must be at least 1".into()));
            }
            let k = k.min(n_train);
            let mut sets = Vec::with_capacity(x_explain.nrows());
            for x in x_explain.rows() {
                let mut dist: Vec<(f64, usize)> = train
                    .matrix
                    .rows()
                    .into_iter()
                    .enumerate()
                    .map(|(i, row)| {
                        let d2 = row.iter().zip(x.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                        (d2, i)
                    })
                    .collect();
                dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let picks: Vec<usize> = dist[..k].iter().map(|&(_, i)| i).collect();
                sets.push(gather_rows(&train.matrix, &picks));
            }
            Ok(BaselineSet { kind, sample_size: k, rows: BaselineRows::PerSample(sets) })
        }
    }
}

/// Per-column medians for numeric features, one-hot mode for categoricals.
fn median_mode_row(train: &EncodedView) -> Array1<f64> {
    let encoder = train.encoder();
    let mut row = Array1::zeros(train.d_enc());
    for (j, group) in encoder.group_map().iter().enumerate() {
        if encoder.scaler()[j].is_some() {
            let mut col: Vec<f64> = train.matrix.column(group.start).to_vec();
            row[group.start] = median(&mut col);
        } else {
            let mut best = 0usize;
            let mut best_count = -1.0;
            for (offset, col) in group.cols().enumerate() {
                let count = train.matrix.column(col).sum();
                if count > best_count {
                    best_count = count;
                    best = offset;
                }
            }
            row[group.start + best] = 1.0;
        }
    }
    row
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 { values[n / 2] } else { (values[n / 2 - 1] + values[n / 2]) / 2.0 }
}

fn gather_rows(matrix: &Array2<f64>, picks: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((picks.len(), matrix.ncols()));
    for (o, &i) in picks.iter().enumerate() {
        out.row_mut(o).assign(&matrix.row(i));
    }
    out
}

/// Uniform sample of `count` indices out of `n`, without replacement when
/// `n >= count`, with replacement otherwise.
fn sample_indices(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<usize> {
    if count <= n {
        index::sample(rng, n, count).into_vec()
    } else {
        (0..count).map(|_| rng.random_range(0..n)).collect()
    }
}

fn sample_from_pool(rng: &mut ChaCha8Rng, pool: &[usize], count: usize) -> Vec<usize> {
    sample_indices(rng, pool.len(), count).into_iter().map(|i| pool[i]).collect()
}

#[derive(Debug, Clone)]
enum FeatureState {
    Numeric { median: f64, min: f64, max: f64, pool: Vec<f64> },
    Categorical { mode: usize, n_levels: usize, pool: Vec<usize> },
}

/// Per-feature replacement sampler fitted on training data in logical space.
///
/// Draws consume substreams derived per `(trial, sample)`, so concurrent
/// ablation workers reproduce the same values regardless of scheduling.
#[derive(Debug, Clone)]
pub struct PerturbationSampler {
    pub kind: PerturbationKind,
    features: Vec<FeatureState>,
    names: Vec<String>,
    seed: u64,
}

impl PerturbationSampler {
    pub fn fit(kind: PerturbationKind, train: &Dataset, seed: u64) -> Result<Self, DistributionError> {
        if train.n() == 0 {
            return Err(DistributionError::EmptyTrain);
        }
        let mut features = Vec::with_capacity(train.d());
        for (j, spec) in train.schema().iter().enumerate() {
            let col = train.rows().column(j);
            match &spec.kind {
                FeatureKind::Numeric => {
                    let pool: Vec<f64> = col.to_vec();
                    let min = pool.iter().copied().fold(f64::INFINITY, f64::min);
                    let max = pool.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let median = median(&mut pool.clone());
                    features.push(FeatureState::Numeric { median, min, max, pool });
                }
                FeatureKind::Categorical { categories } => {
                    let pool: Vec<usize> = col.iter().map(|&v| v as usize).collect();
                    let mut counts = vec![0usize; categories.len()];
                    for &c in &pool {
                        counts[c] += 1;
                    }
                    let mode = counts
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                        .map(|(i, _)| i)
                        .unwrap_or(0);
                    features.push(FeatureState::Categorical { mode, n_levels: categories.len(), pool });
                }
            }
        }
        Ok(Self {
            kind,
            features,
            names: train.schema().iter().map(|s| s.name.clone()).collect(),
            seed,
        })
    }

    pub fn d(&self) -> usize {
        self.features.len()
    }

    /// Independent draw stream for one `(trial, sample)` pair.
    pub fn stream_for(&self, trial: u64, sample: u64) -> ChaCha8Rng {
        rng::stream(self.seed, &[TAG_PERTURB, trial, sample])
    }

    /// Replacement value for feature `j` of the logical row `x`.
    ///
    /// Numeric: median / marginal pool draw / farther of the training
    /// endpoints. Categorical: mode / frequency-weighted draw / uniform over
    /// the other categories.
    pub fn perturb(
        &self,
        x: ArrayView1<f64>,
        j: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64, DistributionError> {
        let state = self.features.get(j).ok_or(DistributionError::InvalidFeature(j))?;
        match (state, self.kind) {
            (FeatureState::Numeric { median, .. }, PerturbationKind::ConstantMedian) => Ok(*median),
            (FeatureState::Numeric { pool, .. }, PerturbationKind::Marginal) => {
                Ok(pool[rng.random_range(0..pool.len())])
            }
            (FeatureState::Numeric { min, max, .. }, PerturbationKind::MaxDistance) => {
                // farther endpoint of the observed training range; the
                // comparison is scale-invariant so raw units suffice
                let v = x[j];
                Ok(if (v - min).abs() >= (v - max).abs() { *min } else { *max })
            }
            (FeatureState::Categorical { mode, .. }, PerturbationKind::ConstantMedian) => Ok(*mode as f64),
            (FeatureState::Categorical { pool, .. }, PerturbationKind::Marginal) => {
                Ok(pool[rng.random_range(0..pool.len())] as f64)
            }
            (FeatureState::Categorical { n_levels, .. }, PerturbationKind::MaxDistance) => {
                if *n_levels < 2 {
                    return Err(DistributionError::SingleCategoryFeature(self.names[j].clone()));
                }
                let current = x[j] as usize;
                let draw = rng.random_range(0..n_levels - 1);
                Ok(if draw >= current { draw + 1 } else { draw } as f64)
            }
        }
    }
}

/// Write a logical-space replacement into an encoded row: numeric columns
/// are standardized in place, categorical groups are re-one-hotted.
pub fn apply_replacement_encoded(encoder: &Encoder, mut row: ArrayViewMut1<f64>, j: usize, replacement: f64) {
    let group: Group = encoder.group_map()[j];
    match encoder.scaler()[j] {
        Some(Scaler { .. }) => {
            row[group.start] = crate::data::standardize_cell(encoder, j, replacement);
        }
        None => {
            for col in group.cols() {
                row[col] = 0.0;
            }
            row[group.start + replacement as usize] = 1.0;
        }
    }
}

/// Pure variant of [`apply_replacement_encoded`] returning the updated row.
pub fn perturb_row_in_encoded(
    encoder: &Encoder,
    enc_row: ArrayView1<f64>,
    j: usize,
    replacement: f64,
) -> Array1<f64> {
    let mut out = enc_row.to_owned();
    apply_replacement_encoded(encoder, out.view_mut(), j, replacement);
    out
}
