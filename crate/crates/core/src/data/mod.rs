//! Tabular datasets: schema, logical storage, one-hot encoding, splits.
//!
//! Logical space keeps categorical cells as category indices; the encoded
//! view expands them to one-hot columns and standardizes numeric columns
//! with statistics fitted on a caller-chosen row subset (normally the
//! training split). All distance computations elsewhere in the crate happen
//! in this standardized encoded space.

mod csv_io;
mod synthetic;

pub use csv_io::{export_csv, load_csv, load_schema, save_schema};
pub use synthetic::{GroundTruth, SyntheticSpec, synthesize, synthesize_with_coefficients};

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

const TAG_AUGMENT: u64 = 0x41;
const TAG_SPLIT: u64 = 0x53;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: unknown category `{value}` for feature `{feature}`")]
    UnknownCategory { row: usize, feature: String, value: String },
    #[error("label column `{column}` must be binary 0/1, got `{value}` at row {row}")]
    NonBinaryLabel { column: String, row: usize, value: String },
    #[error("row {row}: {message}")]
    ParseFailure { row: usize, message: String },
    #[error("fit row set is empty")]
    EmptyFitSet,
    #[error("split produced an empty partition")]
    DegenerateSplit,
    #[error("invalid split fractions: {0}")]
    InvalidFractions(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("invalid dataset: {0}")]
    InvalidData(String),
    #[error("schema mismatch: dataset does not match the fitted encoder")]
    SchemaMismatch,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Feature type: real-valued or categorical over a fixed ordered category set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Categorical { categories: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: FeatureKind::Numeric }
    }

    pub fn categorical<I, S>(name: impl Into<String>, categories: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical {
                categories: categories.into_iter().map(Into::into).collect(),
            },
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, FeatureKind::Categorical { .. })
    }

    /// Number of categories; 0 for numeric features.
    pub fn n_categories(&self) -> usize {
        match &self.kind {
            FeatureKind::Numeric => 0,
            FeatureKind::Categorical { categories } => categories.len(),
        }
    }

    /// Width of the feature in encoded space.
    pub fn encoded_width(&self) -> usize {
        match &self.kind {
            FeatureKind::Numeric => 1,
            FeatureKind::Categorical { categories } => categories.len(),
        }
    }
}

/// Checks name uniqueness, category multiplicity and category uniqueness.
pub fn validate_schema(schema: &[FeatureSpec]) -> Result<(), DataError> {
    if schema.is_empty() {
        return Err(DataError::InvalidSchema("schema has no features".into()));
    }
    let mut names = std::collections::HashSet::new();
    for spec in schema {
        if !names.insert(spec.name.as_str()) {
            return Err(DataError::InvalidSchema(format!("duplicate feature name `{}`", spec.name)));
        }
        if let FeatureKind::Categorical { categories } = &spec.kind {
            if categories.len() < 2 {
                return Err(DataError::InvalidSchema(format!(
                    "categorical feature `{}` needs at least 2 categories",
                    spec.name
                )));
            }
            let distinct: std::collections::HashSet<_> = categories.iter().collect();
            if distinct.len() != categories.len() {
                return Err(DataError::InvalidSchema(format!(
                    "categorical feature `{}` has repeated categories",
                    spec.name
                )));
            }
        }
    }
    Ok(())
}

/// Stable 64-bit hash of a schema, used to pair checkpoints and encoders
/// with the datasets they were fitted on.
pub fn schema_hash(schema: &[FeatureSpec]) -> u64 {
    // FNV-1a over a canonical rendering.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
    };
    for spec in schema {
        eat(spec.name.as_bytes());
        match &spec.kind {
            FeatureKind::Numeric => eat(b"|num;"),
            FeatureKind::Categorical { categories } => {
                eat(b"|cat:");
                for c in categories {
                    eat(c.as_bytes());
                    eat(b",");
                }
                eat(b";");
            }
        }
    }
    h
}

/// Whether a feature is part of the original data or was appended as an
/// uninformative random control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureRole {
    Original,
    RandomGuardrail,
}

/// Tabular data in logical space with binary labels.
///
/// Numeric cells hold reals; categorical cells hold category indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Vec<FeatureSpec>,
    rows: Array2<f64>,
    labels: Vec<u8>,
    roles: Vec<FeatureRole>,
}

impl Dataset {
    pub fn new(schema: Vec<FeatureSpec>, rows: Array2<f64>, labels: Vec<u8>) -> Result<Self, DataError> {
        let roles = vec![FeatureRole::Original; schema.len()];
        Self::with_roles(schema, rows, labels, roles)
    }

    pub fn with_roles(
        schema: Vec<FeatureSpec>,
        rows: Array2<f64>,
        labels: Vec<u8>,
        roles: Vec<FeatureRole>,
    ) -> Result<Self, DataError> {
        validate_schema(&schema)?;
        if rows.nrows() == 0 {
            return Err(DataError::InvalidData("dataset needs at least one row".into()));
        }
        if rows.ncols() != schema.len() {
            return Err(DataError::InvalidData(format!(
                "row width {} does not match schema width {}",
                rows.ncols(),
                schema.len()
            )));
        }
        if labels.len() != rows.nrows() {
            return Err(DataError::InvalidData("label count does not match row count".into()));
        }
        if roles.len() != schema.len() {
            return Err(DataError::InvalidData("role count does not match schema width".into()));
        }
        if let Some(bad) = labels.iter().find(|&&y| y > 1) {
            return Err(DataError::InvalidData(format!("label {bad} is not binary")));
        }
        for (j, spec) in schema.iter().enumerate() {
            if let FeatureKind::Categorical { categories } = &spec.kind {
                for (i, &cell) in rows.column(j).iter().enumerate() {
                    if cell.fract() != 0.0 || cell < 0.0 || cell >= categories.len() as f64 {
                        return Err(DataError::InvalidData(format!(
                            "row {i}: cell {cell} is not a valid category index for `{}`",
                            spec.name
                        )));
                    }
                }
            } else if let Some((i, _)) = rows.column(j).iter().enumerate().find(|(_, c)| !c.is_finite()) {
                return Err(DataError::InvalidData(format!(
                    "row {i}: non-finite value in numeric feature `{}`",
                    spec.name
                )));
            }
        }
        Ok(Self { schema, rows, labels, roles })
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    /// Logical feature count.
    pub fn d(&self) -> usize {
        self.schema.len()
    }

    pub fn schema(&self) -> &[FeatureSpec] {
        &self.schema
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn roles(&self) -> &[FeatureRole] {
        &self.roles
    }

    /// Indices of features appended by [`augment_random_features`].
    pub fn random_feature_indices(&self) -> Vec<usize> {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == FeatureRole::RandomGuardrail)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn positive_rate(&self) -> f64 {
        self.labels.iter().map(|&y| f64::from(y)).sum::<f64>() / self.n() as f64
    }

    /// Majority-class rate, the accuracy of the best constant predictor.
    pub fn majority_rate(&self) -> f64 {
        let p = self.positive_rate();
        p.max(1.0 - p)
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self, DataError> {
        if indices.is_empty() {
            return Err(DataError::DegenerateSplit);
        }
        let mut rows = Array2::zeros((indices.len(), self.d()));
        let mut labels = Vec::with_capacity(indices.len());
        for (out, &i) in indices.iter().enumerate() {
            rows.row_mut(out).assign(&self.rows.row(i));
            labels.push(self.labels[i]);
        }
        Ok(Self { schema: self.schema.clone(), rows, labels, roles: self.roles.clone() })
    }

    pub fn schema_hash(&self) -> u64 {
        schema_hash(&self.schema)
    }
}

/// Append `count` i.i.d. standard-normal features flagged as random
/// guardrails. `count == 0` returns the dataset unchanged.
pub fn augment_random_features(ds: &Dataset, count: usize, seed: u64) -> Dataset {
    if count == 0 {
        return ds.clone();
    }
    let n = ds.n();
    let d = ds.d();
    let mut rng = rng::stream(seed, &[TAG_AUGMENT]);
    let mut rows = Array2::zeros((n, d + count));
    rows.slice_mut(ndarray::s![.., ..d]).assign(ds.rows());
    for c in 0..count {
        for i in 0..n {
            rows[[i, d + c]] = StandardNormal.sample(&mut rng);
        }
    }
    let mut schema = ds.schema.to_vec();
    let mut roles = ds.roles.clone();
    let taken: std::collections::HashSet<String> = schema.iter().map(|s| s.name.clone()).collect();
    let mut next = 0usize;
    for _ in 0..count {
        let name = loop {
            let candidate = format!("random_{next}");
            next += 1;
            if !taken.contains(&candidate) {
                break candidate;
            }
        };
        schema.push(FeatureSpec::numeric(name));
        roles.push(FeatureRole::RandomGuardrail);
    }
    Dataset { schema, rows, labels: ds.labels.clone(), roles }
}

/// Split into train/val/test partitions covering all rows exactly once.
///
/// Stratified splits allocate each class by largest remainder, keeping the
/// class ratio of every partition within one sample of the parent's.
pub fn split(
    ds: &Dataset,
    fractions: (f64, f64, f64),
    seed: u64,
    stratified: bool,
) -> Result<(Dataset, Dataset, Dataset), DataError> {
    let (a, b, c) = fractions;
    if !(a > 0.0 && b > 0.0 && c > 0.0) {
        return Err(DataError::InvalidFractions("all fractions must be positive".into()));
    }
    if (a + b + c - 1.0).abs() > 1e-9 {
        return Err(DataError::InvalidFractions(format!("fractions sum to {}", a + b + c)));
    }
    let mut rng = rng::stream(seed, &[TAG_SPLIT]);
    let mut parts: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    if stratified {
        for class in [0u8, 1u8] {
            let mut idx: Vec<usize> =
                (0..ds.n()).filter(|&i| ds.labels[i] == class).collect();
            idx.shuffle(&mut rng);
            let counts = largest_remainder(idx.len(), &[a, b, c]);
            let mut cursor = 0usize;
            for (part, &take) in parts.iter_mut().zip(&counts) {
                part.extend_from_slice(&idx[cursor..cursor + take]);
                cursor += take;
            }
        }
    } else {
        let mut idx: Vec<usize> = (0..ds.n()).collect();
        idx.shuffle(&mut rng);
        let counts = largest_remainder(idx.len(), &[a, b, c]);
        let mut cursor = 0usize;
        for (part, &take) in parts.iter_mut().zip(&counts) {
            part.extend_from_slice(&idx[cursor..cursor + take]);
            cursor += take;
        }
    }
    if parts.iter().any(Vec::is_empty) {
        return Err(DataError::DegenerateSplit);
    }
    let [train, val, test] = parts;
    Ok((ds.subset(&train)?, ds.subset(&val)?, ds.subset(&test)?))
}

/// Integer allocation of `n` by `fractions` with the largest-remainder rule.
fn largest_remainder(n: usize, fractions: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&i, &j| {
        let ri = exact[i] - exact[i].floor();
        let rj = exact[j] - exact[j].floor();
        rj.total_cmp(&ri).then(i.cmp(&j))
    });
    for k in 0..(n - assigned) {
        counts[order[k % order.len()]] += 1;
    }
    counts
}

/// Contiguous encoded-column range of one logical feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub start: usize,
    pub width: usize,
}

impl Group {
    pub fn cols(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.width
    }
}

/// Per-column standardization statistics fitted on training rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: f64,
    pub std: f64,
}

/// Fitted logical-to-encoded transform: one-hot expansion plus z-scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    schema: Vec<FeatureSpec>,
    schema_hash: u64,
    group_map: Vec<Group>,
    scaler: Vec<Option<Scaler>>,
    constant_numeric: Vec<usize>,
    d_enc: usize,
}

impl Encoder {
    /// Fit scalers on `fit_rows` of `ds`; the group map comes from the schema.
    pub fn fit(ds: &Dataset, fit_rows: &[usize]) -> Result<Self, DataError> {
        if fit_rows.is_empty() {
            return Err(DataError::EmptyFitSet);
        }
        if let Some(&bad) = fit_rows.iter().find(|&&i| i >= ds.n()) {
            return Err(DataError::InvalidData(format!("fit row {bad} out of range")));
        }
        let mut group_map = Vec::with_capacity(ds.d());
        let mut scaler = Vec::with_capacity(ds.d());
        let mut constant_numeric = Vec::new();
        let mut start = 0usize;
        for (j, spec) in ds.schema.iter().enumerate() {
            let width = spec.encoded_width();
            group_map.push(Group { start, width });
            start += width;
            if spec.is_categorical() {
                scaler.push(None);
            } else {
                let col = ds.rows.column(j);
                let m = fit_rows.len() as f64;
                let mean = fit_rows.iter().map(|&i| col[i]).sum::<f64>() / m;
                let var = fit_rows.iter().map(|&i| (col[i] - mean).powi(2)).sum::<f64>() / m;
                let std = var.sqrt();
                let std = if std > 0.0 {
                    std
                } else {
                    constant_numeric.push(j);
                    1.0
                };
                scaler.push(Some(Scaler { mean, std }));
            }
        }
        Ok(Self {
            schema: ds.schema.clone(),
            schema_hash: ds.schema_hash(),
            group_map,
            scaler,
            constant_numeric,
            d_enc: start,
        })
    }

    pub fn transform(&self, ds: &Dataset) -> Result<EncodedView, DataError> {
        if ds.schema_hash() != self.schema_hash {
            return Err(DataError::SchemaMismatch);
        }
        let mut matrix = Array2::zeros((ds.n(), self.d_enc));
        for (j, group) in self.group_map.iter().enumerate() {
            match self.scaler[j] {
                Some(Scaler { mean, std }) => {
                    for (i, &v) in ds.rows.column(j).iter().enumerate() {
                        matrix[[i, group.start]] = (v - mean) / std;
                    }
                }
                None => {
                    for (i, &v) in ds.rows.column(j).iter().enumerate() {
                        matrix[[i, group.start + v as usize]] = 1.0;
                    }
                }
            }
        }
        Ok(EncodedView { matrix, encoder: self.clone() })
    }

    /// Map an encoded row back to logical space: numeric columns are
    /// unstandardized, categorical groups collapse to their argmax index.
    pub fn decode_row(&self, enc_row: ArrayView1<f64>) -> Vec<f64> {
        assert_eq!(enc_row.len(), self.d_enc);
        self.group_map
            .iter()
            .zip(&self.scaler)
            .map(|(group, scaler)| match scaler {
                Some(Scaler { mean, std }) => enc_row[group.start] * std + mean,
                None => {
                    let mut best = 0usize;
                    for k in 1..group.width {
                        if enc_row[group.start + k] > enc_row[group.start + best] {
                            best = k;
                        }
                    }
                    best as f64
                }
            })
            .collect()
    }

    pub fn d_enc(&self) -> usize {
        self.d_enc
    }

    pub fn group_map(&self) -> &[Group] {
        &self.group_map
    }

    pub fn scaler(&self) -> &[Option<Scaler>] {
        &self.scaler
    }

    /// Numeric features whose fit rows were constant (std forced to 1).
    pub fn constant_numeric(&self) -> &[usize] {
        &self.constant_numeric
    }

    pub fn schema(&self) -> &[FeatureSpec] {
        &self.schema
    }

    pub fn schema_hash(&self) -> u64 {
        self.schema_hash
    }
}

/// Encoded matrix together with the transform that produced it.
#[derive(Debug, Clone)]
pub struct EncodedView {
    pub matrix: Array2<f64>,
    encoder: Encoder,
}

impl EncodedView {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn d_enc(&self) -> usize {
        self.encoder.d_enc
    }

    pub fn group_map(&self) -> &[Group] {
        self.encoder.group_map()
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    /// Restrict to a subset of rows, keeping the fitted transform.
    pub fn subset_rows(&self, indices: &[usize]) -> Self {
        let mut matrix = Array2::zeros((indices.len(), self.matrix.ncols()));
        for (out, &i) in indices.iter().enumerate() {
            matrix.row_mut(out).assign(&self.matrix.row(i));
        }
        Self { matrix, encoder: self.encoder.clone() }
    }
}

/// Fit on `fit_rows` and transform all rows of `ds` in one step.
pub fn encode(ds: &Dataset, fit_rows: &[usize]) -> Result<EncodedView, DataError> {
    Encoder::fit(ds, fit_rows)?.transform(ds)
}

/// Standardize one logical numeric value with the feature's fitted scaler.
pub(crate) fn standardize_cell(encoder: &Encoder, j: usize, value: f64) -> f64 {
    let Scaler { mean, std } = encoder.scaler[j].expect("numeric feature");
    (value - mean) / std
}

#[allow(unused)]
pub(crate) fn all_rows(ds: &Dataset) -> Vec<usize> {
    (0..ds.n()).collect()
}

impl Dataset {
    /// Pearson correlation between feature `j` and the labels.
    pub fn feature_label_correlation(&self, j: usize) -> f64 {
        let x = self.rows.column(j);
        let y: Array1<f64> = self.labels.iter().map(|&v| f64::from(v)).collect();
        let n = self.n() as f64;
        let mx = x.sum() / n;
        let my = y.sum() / n;
        let mut cov = 0.0;
        let mut vx = 0.0;
        let mut vy = 0.0;
        for i in 0..self.n() {
            let dx = x[i] - mx;
            let dy = y[i] - my;
            cov += dx * dy;
            vx += dx * dx;
            vy += dy * dy;
        }
        if vx == 0.0 || vy == 0.0 { 0.0 } else { cov / (vx * vy).sqrt() }
    }
}
