//! Classifiers under test: a two-layer rectifier MLP trained with early
//! stopping, and a logistic-regression model whose coefficients serve as
//! analytic ground truth on the synthetic benchmark.
//!
//! Both models expose probability predictions and exact input gradients;
//! training is deterministic given the config seed.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset, Encoder};
use crate::rng;

const TAG_INIT: u64 = 0x101;
const TAG_EPOCH: u64 = 0x102;
const TAG_SHUFFLE_LABELS: u64 = 0x103;

/// Predictions stay strictly inside (0, 1) even for saturating logits.
const P_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;
const P_FLOOR: f64 = 1e-300;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training diverged: non-finite loss")]
    Divergence,
    #[error("schema mismatch between datasets and encoder")]
    SchemaMismatch,
    #[error("dimension mismatch: expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("AUROC undefined: labels contain a single class")]
    SingleClassAuroc,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("empty evaluation set")]
    EmptyEval,
    #[error("checkpoint schema hash {found:#x} does not match expected {expected:#x}")]
    CheckpointSchemaMismatch { expected: u64, found: u64 },
    #[error("unsupported checkpoint version {0}")]
    CheckpointVersion(u32),
    #[error("non-finite model parameters")]
    NonFiniteParameters,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("checkpoint parse: {0}")]
    Parse(String),
}

/// Which model output an explanation attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExplainTarget {
    #[default]
    Probability,
    Logit,
}

/// Scalar capability score tracked along ablation curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CapabilityMetric {
    #[default]
    Accuracy,
    Auroc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Hidden width is `max(16, round(hidden_factor * d_enc))`.
    pub hidden_factor: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Permute training labels before fitting (worst-case control model).
    pub shuffle_labels: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_factor: 2.0,
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 200,
            patience: 10,
            seed: 0,
            shuffle_labels: false,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), ModelError> {
        if !(self.hidden_factor > 0.0) || !(self.learning_rate > 0.0) {
            return Err(ModelError::InvalidConfig("rates must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(ModelError::InvalidConfig("counts must be positive".into()));
        }
        if self.patience >= self.max_epochs {
            return Err(ModelError::InvalidConfig("patience must be below max_epochs".into()));
        }
        Ok(())
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(P_FLOOR, P_CEIL)
}

/// Two-layer rectifier network with a single logistic output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array1<f64>,
    b2: f64,
}

impl MlpModel {
    pub fn new(w1: Array2<f64>, b1: Array1<f64>, w2: Array1<f64>, b2: f64) -> Result<Self, ModelError> {
        let h = w1.nrows();
        if b1.len() != h || w2.len() != h || h == 0 {
            return Err(ModelError::DimensionMismatch { expected: h, got: b1.len().min(w2.len()) });
        }
        let finite = w1.iter().chain(b1.iter()).chain(w2.iter()).all(|v| v.is_finite()) && b2.is_finite();
        if !finite {
            return Err(ModelError::NonFiniteParameters);
        }
        Ok(Self { w1, b1, w2, b2 })
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub(crate) fn w1(&self) -> &Array2<f64> {
        &self.w1
    }

    pub(crate) fn w2(&self) -> &Array1<f64> {
        &self.w2
    }

    /// Pre-activation of the hidden layer for a batch of rows.
    pub(crate) fn preactivations(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w1.t()) + &self.b1
    }

    fn logits_from_z1(&self, z1: &Array2<f64>) -> Array1<f64> {
        z1.mapv(|z| z.max(0.0)).dot(&self.w2) + self.b2
    }

    pub fn logits(&self, x: &Array2<f64>) -> Result<Array1<f64>, ModelError> {
        check_width(self.input_dim(), x.ncols())?;
        Ok(self.logits_from_z1(&self.preactivations(x)))
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Array1<f64>, ModelError> {
        Ok(self.logits(x)?.mapv(sigmoid))
    }

    pub fn input_gradient(&self, x: ArrayView1<f64>, target: ExplainTarget) -> Array1<f64> {
        let batch = x.insert_axis(Axis(0)).to_owned();
        self.input_gradient_batch(&batch, target).row(0).to_owned()
    }

    /// Gradient of the chosen output w.r.t. every input, one row per sample.
    /// The rectifier uses subgradient 0 at exactly 0.
    pub fn input_gradient_batch(&self, x: &Array2<f64>, target: ExplainTarget) -> Array2<f64> {
        let z1 = self.preactivations(x);
        let mut v = z1.mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
        v *= &self.w2;
        let mut g = v.dot(&self.w1);
        if target == ExplainTarget::Probability {
            let z2 = self.logits_from_z1(&z1);
            for (mut row, &z) in g.rows_mut().into_iter().zip(z2.iter()) {
                let p = sigmoid(z);
                row *= p * (1.0 - p);
            }
        }
        g
    }
}

/// Logistic regression over encoded columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    w: Array1<f64>,
    b: f64,
}

impl LinearModel {
    pub fn new(w: Array1<f64>, b: f64) -> Result<Self, ModelError> {
        if !w.iter().all(|v| v.is_finite()) || !b.is_finite() {
            return Err(ModelError::NonFiniteParameters);
        }
        Ok(Self { w, b })
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.w
    }

    pub fn intercept(&self) -> f64 {
        self.b
    }

    pub fn input_dim(&self) -> usize {
        self.w.len()
    }

    pub fn logits(&self, x: &Array2<f64>) -> Result<Array1<f64>, ModelError> {
        check_width(self.input_dim(), x.ncols())?;
        Ok(x.dot(&self.w) + self.b)
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Array1<f64>, ModelError> {
        Ok(self.logits(x)?.mapv(sigmoid))
    }

    pub fn input_gradient(&self, x: ArrayView1<f64>, target: ExplainTarget) -> Array1<f64> {
        match target {
            ExplainTarget::Logit => self.w.clone(),
            ExplainTarget::Probability => {
                let p = sigmoid(x.dot(&self.w) + self.b);
                &self.w * (p * (1.0 - p))
            }
        }
    }

    pub fn input_gradient_batch(&self, x: &Array2<f64>, target: ExplainTarget) -> Array2<f64> {
        let mut g = Array2::zeros((x.nrows(), self.input_dim()));
        for (mut row, xr) in g.rows_mut().into_iter().zip(x.rows()) {
            row.assign(&self.input_gradient(xr, target));
        }
        g
    }
}

/// Either classifier behind one interface; what checkpoints store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Mlp(MlpModel),
    Linear(LinearModel),
}

impl Model {
    pub fn input_dim(&self) -> usize {
        match self {
            Model::Mlp(m) => m.input_dim(),
            Model::Linear(m) => m.input_dim(),
        }
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Array1<f64>, ModelError> {
        match self {
            Model::Mlp(m) => m.predict(x),
            Model::Linear(m) => m.predict(x),
        }
    }

    pub fn logits(&self, x: &Array2<f64>) -> Result<Array1<f64>, ModelError> {
        match self {
            Model::Mlp(m) => m.logits(x),
            Model::Linear(m) => m.logits(x),
        }
    }

    /// Model output under the chosen explanation target.
    pub fn output(&self, x: &Array2<f64>, target: ExplainTarget) -> Result<Array1<f64>, ModelError> {
        match target {
            ExplainTarget::Probability => self.predict(x),
            ExplainTarget::Logit => self.logits(x),
        }
    }

    pub fn input_gradient(&self, x: ArrayView1<f64>, target: ExplainTarget) -> Array1<f64> {
        match self {
            Model::Mlp(m) => m.input_gradient(x, target),
            Model::Linear(m) => m.input_gradient(x, target),
        }
    }

    pub fn input_gradient_batch(&self, x: &Array2<f64>, target: ExplainTarget) -> Array2<f64> {
        match self {
            Model::Mlp(m) => m.input_gradient_batch(x, target),
            Model::Linear(m) => m.input_gradient_batch(x, target),
        }
    }
}

impl From<MlpModel> for Model {
    fn from(m: MlpModel) -> Self {
        Model::Mlp(m)
    }
}

impl From<LinearModel> for Model {
    fn from(m: LinearModel) -> Self {
        Model::Linear(m)
    }
}

fn check_width(expected: usize, got: usize) -> Result<(), ModelError> {
    if expected == got { Ok(()) } else { Err(ModelError::DimensionMismatch { expected, got }) }
}

fn bce(p: &Array1<f64>, y: &[u8]) -> f64 {
    let mut loss = 0.0;
    for (&pi, &yi) in p.iter().zip(y) {
        loss -= if yi == 1 { pi.ln() } else { (1.0 - pi).ln() };
    }
    loss / y.len() as f64
}

struct Adam {
    lr: f64,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(lr: f64) -> Self {
        Self { lr, t: 0 }
    }

    fn tick(&mut self) {
        self.t += 1;
    }

    fn step<D: ndarray::Dimension>(
        &self,
        param: &mut ndarray::Array<f64, D>,
        grad: &ndarray::Array<f64, D>,
        m: &mut ndarray::Array<f64, D>,
        v: &mut ndarray::Array<f64, D>,
    ) {
        let bc1 = 1.0 - Self::B1.powi(self.t);
        let bc2 = 1.0 - Self::B2.powi(self.t);
        ndarray::Zip::from(param).and(grad).and(m).and(v).for_each(|p, &g, m, v| {
            *m = Self::B1 * *m + (1.0 - Self::B1) * g;
            *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
            *p -= self.lr * (*m / bc1) / ((*v / bc2).sqrt() + Self::EPS);
        });
    }

    fn step_scalar(&self, param: &mut f64, grad: f64, m: &mut f64, v: &mut f64) {
        let bc1 = 1.0 - Self::B1.powi(self.t);
        let bc2 = 1.0 - Self::B2.powi(self.t);
        *m = Self::B1 * *m + (1.0 - Self::B1) * grad;
        *v = Self::B2 * *v + (1.0 - Self::B2) * grad * grad;
        *param -= self.lr * (*m / bc1) / ((*v / bc2).sqrt() + Self::EPS);
    }
}

/// Train the two-layer MLP with mini-batch Adam, returning the parameters
/// from the epoch with the best validation loss. Training stops after
/// `patience` epochs without improvement.
pub fn train_mlp(
    train: &Dataset,
    val: &Dataset,
    encoder: &Encoder,
    cfg: &TrainConfig,
) -> Result<MlpModel, ModelError> {
    cfg.validate()?;
    if train.schema_hash() != val.schema_hash() || train.schema_hash() != encoder.schema_hash() {
        return Err(ModelError::SchemaMismatch);
    }
    let x_train = encoder.transform(train)?.matrix;
    let x_val = encoder.transform(val)?.matrix;
    let mut y_train: Vec<u8> = train.labels().to_vec();
    if cfg.shuffle_labels {
        let mut rng = rng::stream(cfg.seed, &[TAG_SHUFFLE_LABELS]);
        y_train.shuffle(&mut rng);
    }
    let y_val = val.labels();

    let d = encoder.d_enc();
    let h = ((cfg.hidden_factor * d as f64).round() as usize).max(16);
    let mut init_rng = rng::stream(cfg.seed, &[TAG_INIT]);
    let lim1 = (6.0 / (d + h) as f64).sqrt();
    let lim2 = (6.0 / (h + 1) as f64).sqrt();
    let mut w1 = Array2::from_shape_fn((h, d), |_| init_rng.random_range(-lim1..lim1));
    let mut b1 = Array1::zeros(h);
    let mut w2 = Array1::from_shape_fn(h, |_| init_rng.random_range(-lim2..lim2));
    let mut b2 = 0.0f64;

    let mut opt = Adam::new(cfg.learning_rate);
    let (mut m_w1, mut v_w1) = (Array2::zeros((h, d)), Array2::zeros((h, d)));
    let (mut m_b1, mut v_b1) = (Array1::zeros(h), Array1::zeros(h));
    let (mut m_w2, mut v_w2) = (Array1::zeros(h), Array1::zeros(h));
    let (mut m_b2, mut v_b2) = (0.0f64, 0.0f64);

    let n = x_train.nrows();
    let mut best_loss = f64::INFINITY;
    let mut best = (w1.clone(), b1.clone(), w2.clone(), b2);
    let mut stale = 0usize;

    for epoch in 0..cfg.max_epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(cfg.seed, &[TAG_EPOCH, epoch as u64]));
        for chunk in order.chunks(cfg.batch_size) {
            let m = chunk.len();
            let mut xb = Array2::zeros((m, d));
            let mut yb = Array1::zeros(m);
            for (out, &i) in chunk.iter().enumerate() {
                xb.row_mut(out).assign(&x_train.row(i));
                yb[out] = f64::from(y_train[i]);
            }
            let z1 = xb.dot(&w1.t()) + &b1;
            let a = z1.mapv(|z| z.max(0.0));
            let z2 = a.dot(&w2) + b2;
            let p = z2.mapv(sigmoid);
            let dz2 = (&p - &yb) / m as f64;
            let dw2 = a.t().dot(&dz2);
            let db2 = dz2.sum();
            let mut dz1 = z1.mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
            dz1 *= &w2;
            for (mut row, &g) in dz1.rows_mut().into_iter().zip(dz2.iter()) {
                row *= g;
            }
            let dw1 = dz1.t().dot(&xb);
            let db1 = dz1.sum_axis(Axis(0));

            opt.tick();
            opt.step(&mut w1, &dw1, &mut m_w1, &mut v_w1);
            opt.step(&mut b1, &db1, &mut m_b1, &mut v_b1);
            opt.step(&mut w2, &dw2, &mut m_w2, &mut v_w2);
            opt.step_scalar(&mut b2, db2, &mut m_b2, &mut v_b2);
        }

        let candidate = MlpModel { w1: w1.clone(), b1: b1.clone(), w2: w2.clone(), b2 };
        let val_loss = bce(&candidate.predict(&x_val)?, y_val);
        if !val_loss.is_finite() {
            return Err(ModelError::Divergence);
        }
        if val_loss < best_loss {
            best_loss = val_loss;
            best = (w1.clone(), b1.clone(), w2.clone(), b2);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
        let _ = epoch;
    }
    MlpModel::new(best.0, best.1, best.2, best.3)
}

/// Fit logistic regression by full-batch adaptive gradient descent,
/// stopping when the gradient max-norm drops below 1e-6 or after the
/// iteration cap.
pub fn fit_logistic(x: &Array2<f64>, y: &[u8]) -> Result<LinearModel, ModelError> {
    if x.nrows() == 0 || x.nrows() != y.len() {
        return Err(ModelError::DimensionMismatch { expected: x.nrows(), got: y.len() });
    }
    let n = x.nrows() as f64;
    let d = x.ncols();
    let yf: Array1<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let mut w = Array1::zeros(d);
    let mut b = 0.0f64;
    let mut opt = Adam::new(0.1);
    let (mut m_w, mut v_w) = (Array1::zeros(d), Array1::zeros(d));
    let (mut m_b, mut v_b) = (0.0f64, 0.0f64);
    for _ in 0..2000 {
        let p = (x.dot(&w) + b).mapv(sigmoid);
        let resid = (&p - &yf) / n;
        let gw = x.t().dot(&resid);
        let gb = resid.sum();
        if !gw.iter().all(|v| v.is_finite()) || !gb.is_finite() {
            return Err(ModelError::Divergence);
        }
        let gnorm = gw.iter().fold(gb.abs(), |m, v| m.max(v.abs()));
        if gnorm < 1e-6 {
            break;
        }
        opt.tick();
        opt.step(&mut w, &gw, &mut m_w, &mut v_w);
        opt.step_scalar(&mut b, gb, &mut m_b, &mut v_b);
    }
    LinearModel::new(w, b)
}

/// Fit logistic regression on a dataset's encoded form.
pub fn train_linear(train: &Dataset, encoder: &Encoder) -> Result<LinearModel, ModelError> {
    if train.schema_hash() != encoder.schema_hash() {
        return Err(ModelError::SchemaMismatch);
    }
    let x = encoder.transform(train)?.matrix;
    fit_logistic(&x, train.labels())
}

/// Score predicted probabilities against labels.
pub fn score_predictions(probs: &Array1<f64>, y: &[u8], metric: CapabilityMetric) -> Result<f64, ModelError> {
    if probs.is_empty() || probs.len() != y.len() {
        return Err(ModelError::EmptyEval);
    }
    match metric {
        CapabilityMetric::Accuracy => {
            let hits = probs.iter().zip(y).filter(|&(&p, &yi)| u8::from(p > 0.5) == yi).count();
            Ok(hits as f64 / y.len() as f64)
        }
        CapabilityMetric::Auroc => auroc(probs, y),
    }
}

/// Evaluate a model on encoded rows with the chosen capability metric.
pub fn evaluate(model: &Model, x: &Array2<f64>, y: &[u8], metric: CapabilityMetric) -> Result<f64, ModelError> {
    score_predictions(&model.predict(x)?, y, metric)
}

/// Mann-Whitney AUROC with tie-averaged ranks.
fn auroc(probs: &Array1<f64>, y: &[u8]) -> Result<f64, ModelError> {
    let n = y.len();
    let n_pos = y.iter().filter(|&&v| v == 1).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(ModelError::SingleClassAuroc);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| probs[i].total_cmp(&probs[j]).then(i.cmp(&j)));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && probs[order[j + 1]] == probs[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if y[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    Ok((rank_sum_pos - n_pos as f64 * (n_pos as f64 + 1.0) / 2.0) / (n_pos as f64 * n_neg as f64))
}

const CHECKPOINT_VERSION: u32 = 1;

/// Versioned model checkpoint bound to the schema it was trained on.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub schema_hash: u64,
    pub model: Model,
}

pub fn save_checkpoint(model: &Model, schema_hash: u64, path: &std::path::Path) -> Result<(), ModelError> {
    let cp = Checkpoint { version: CHECKPOINT_VERSION, schema_hash, model: model.clone() };
    let json = serde_json::to_string(&cp).map_err(|e| ModelError::Parse(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Load a checkpoint, rejecting schema-hash or version mismatches.
pub fn load_checkpoint(path: &std::path::Path, expected_schema_hash: u64) -> Result<Model, ModelError> {
    let raw = std::fs::read_to_string(path)?;
    let cp: Checkpoint = serde_json::from_str(&raw).map_err(|e| ModelError::Parse(e.to_string()))?;
    if cp.version != CHECKPOINT_VERSION {
        return Err(ModelError::CheckpointVersion(cp.version));
    }
    if cp.schema_hash != expected_schema_hash {
        return Err(ModelError::CheckpointSchemaMismatch {
            expected: expected_schema_hash,
            found: cp.schema_hash,
        });
    }
    Ok(cp.model)
}

#[cfg(test)]
pub(crate) fn random_mlp(d: usize, h: usize, seed: u64) -> MlpModel {
    let mut rng = rng::stream(seed, &[0xBEEF]);
    let w1 = Array2::from_shape_fn((h, d), |_| rng.random_range(-1.0..1.0));
    let b1 = Array1::from_shape_fn(h, |_| rng.random_range(-0.5..0.5));
    let w2 = Array1::from_shape_fn(h, |_| rng.random_range(-1.0..1.0));
    let b2 = rng.random_range(-0.5..0.5);
    MlpModel::new(w1, b1, w2, b2).unwrap()
}
