//! Local attribution methods and their aggregation to rankings.
//!
//! Three explainers share one contract: given a sample in encoded space and
//! a set of baseline rows, produce per-feature credit for the model output
//! such that the credits sum to `f(x) - mean_b f(b)` (completeness).
//! Integrated Gradients and Deep SHAP attribute encoded columns and are
//! aggregated to logical features by summing one-hot groups; Kernel SHAP
//! builds its coalitions over logical features directly, so categorical
//! groups toggle as a unit and mixed rows stay valid one-hot encodings.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Group;
use crate::distributions::{BaselineKind, BaselineSet};
use crate::linalg;
use crate::model::{ExplainTarget, Model, ModelError, sigmoid};
use crate::rng;

const TAG_COALITIONS: u64 = 0x301;

/// Rescale-rule fallback threshold: below this delta the secant slope is
/// replaced by the exact (sub)derivative at the explained point.
const RESCALE_EPS: f64 = 1e-7;

pub const DEFAULT_IG_STEPS: usize = 64;
pub const MAX_SAMPLED_COALITIONS: usize = 2048;
/// Exact enumeration bound: all 2^d coalitions whenever d is at most this.
pub const EXACT_COALITION_LIMIT: usize = 12;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("kernel SHAP needs at least d + 2 = {need} coalitions, got {got}")]
    TooFewCoalitions { got: usize, need: usize },
    #[error("exact coalition enumeration infeasible for {0} features")]
    ExactInfeasible(usize),
    #[error("singular kernel SHAP system")]
    SingularSystem,
    #[error("integrated gradients needs at least 2 steps")]
    TooFewSteps,
    #[error("empty baseline set")]
    EmptyBaselines,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Explanation method with its estimator parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum MethodSpec {
    IntegratedGradients { steps: usize },
    KernelShap { coalitions: CoalitionSpec },
    DeepShap,
}

impl MethodSpec {
    pub fn integrated_gradients() -> Self {
        MethodSpec::IntegratedGradients { steps: DEFAULT_IG_STEPS }
    }

    pub fn kernel_shap() -> Self {
        MethodSpec::KernelShap { coalitions: CoalitionSpec::Auto }
    }

    pub fn kind(&self) -> MethodKind {
        match self {
            MethodSpec::IntegratedGradients { .. } => MethodKind::IntegratedGradients,
            MethodSpec::KernelShap { .. } => MethodKind::KernelShap,
            MethodSpec::DeepShap => MethodKind::DeepShap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    IntegratedGradients,
    KernelShap,
    DeepShap,
}

impl MethodKind {
    pub fn label(&self) -> &'static str {
        match self {
            MethodKind::IntegratedGradients => "integrated_gradients",
            MethodKind::KernelShap => "kernel_shap",
            MethodKind::DeepShap => "deep_shap",
        }
    }
}

/// Kernel SHAP coalition budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoalitionSpec {
    /// Exact when `d <= EXACT_COALITION_LIMIT`, otherwise sampled with the
    /// default budget.
    Auto,
    Exact,
    Sampled(usize),
}

/// Per-sample, per-logical-feature attributions.
#[derive(Debug, Clone)]
pub struct AttributionSet {
    /// n x d matrix in logical feature space (one-hot groups aggregated).
    pub values: Array2<f64>,
    pub method: MethodKind,
    pub baseline: BaselineKind,
    /// Pre-aggregation encoded attributions for gradient-based methods.
    pub encoded_values: Option<Array2<f64>>,
}

/// Integrated Gradients along the straight path from each baseline row,
/// midpoint rule, averaged over the baseline set. Returns encoded-space
/// attributions.
pub fn integrated_gradients(
    model: &Model,
    x: ArrayView1<f64>,
    baselines: ArrayView2<f64>,
    steps: usize,
    target: ExplainTarget,
) -> Result<Array1<f64>, ExplainError> {
    if steps < 2 {
        return Err(ExplainError::TooFewSteps);
    }
    let m = baselines.nrows();
    if m == 0 {
        return Err(ExplainError::EmptyBaselines);
    }
    let d = x.len();
    let mut points = Array2::zeros((m * steps, d));
    for (bi, b) in baselines.rows().into_iter().enumerate() {
        for s in 0..steps {
            let t = (s as f64 + 0.5) / steps as f64;
            let mut row = points.row_mut(bi * steps + s);
            for j in 0..d {
                row[j] = b[j] + t * (x[j] - b[j]);
            }
        }
    }
    let grads = model.input_gradient_batch(&points, target);
    let mut attr = Array1::zeros(d);
    for (bi, b) in baselines.rows().into_iter().enumerate() {
        let block = grads.slice(ndarray::s![bi * steps..(bi + 1) * steps, ..]);
        let mean_grad = block.mean_axis(Axis(0)).expect("steps >= 2");
        for j in 0..d {
            attr[j] += (x[j] - b[j]) * mean_grad[j];
        }
    }
    Ok(attr / m as f64)
}

/// Deep SHAP: DeepLIFT rescale multipliers propagated layer by layer and
/// averaged over the baseline set. Linear layers pass delta-weighted
/// contributions; the rectifier and the output sigmoid use secant-slope
/// multipliers with a derivative fallback for vanishing deltas. Exactly
/// complete per baseline. Returns encoded-space attributions.
pub fn deep_shap(
    model: &Model,
    x: ArrayView1<f64>,
    baselines: ArrayView2<f64>,
    target: ExplainTarget,
) -> Result<Array1<f64>, ExplainError> {
    let m = baselines.nrows();
    if m == 0 {
        return Err(ExplainError::EmptyBaselines);
    }
    let d = x.len();
    let mut attr = Array1::zeros(d);
    match model {
        Model::Linear(lin) => {
            let zx = x.dot(lin.weights()) + lin.intercept();
            for b in baselines.rows() {
                let zb = b.dot(lin.weights()) + lin.intercept();
                let scale = output_multiplier(zx, zb, target);
                for j in 0..d {
                    attr[j] += (x[j] - b[j]) * lin.weights()[j] * scale;
                }
            }
        }
        Model::Mlp(mlp) => {
            let xb = x.insert_axis(Axis(0)).to_owned();
            let z1x = mlp.preactivations(&xb).row(0).to_owned();
            let ax = z1x.mapv(|z| z.max(0.0));
            let z2x = ax.dot(mlp.w2()) + mlp_b2(mlp);
            let z1b = mlp.preactivations(&baselines.to_owned());
            let h = z1x.len();
            for (bi, b) in baselines.rows().into_iter().enumerate() {
                // hidden rescale multipliers folded into the output weights
                let mut v = Array1::zeros(h);
                let mut z2b = mlp_b2(mlp);
                for i in 0..h {
                    let zi_x = z1x[i];
                    let zi_b = z1b[[bi, i]];
                    z2b += mlp.w2()[i] * zi_b.max(0.0);
                    let mult = if (zi_x - zi_b).abs() < RESCALE_EPS {
                        if zi_x > 0.0 { 1.0 } else { 0.0 }
                    } else {
                        (zi_x.max(0.0) - zi_b.max(0.0)) / (zi_x - zi_b)
                    };
                    v[i] = mlp.w2()[i] * mult;
                }
                let contrib = v.dot(mlp.w1());
                let scale = output_multiplier(z2x, z2b, target);
                for j in 0..d {
                    attr[j] += (x[j] - b[j]) * contrib[j] * scale;
                }
            }
        }
    }
    Ok(attr / m as f64)
}

fn mlp_b2(mlp: &crate::model::MlpModel) -> f64 {
    // logit of the zero hidden activation vector
    let zero = Array2::zeros((1, mlp.input_dim()));
    let z = mlp.logits(&zero).expect("dims match");
    let z1 = mlp.preactivations(&zero);
    let a = z1.mapv(|v: f64| v.max(0.0));
    z[0] - a.row(0).dot(mlp.w2())
}

fn output_multiplier(zx: f64, zb: f64, target: ExplainTarget) -> f64 {
    match target {
        ExplainTarget::Logit => 1.0,
        ExplainTarget::Probability => {
            if (zx - zb).abs() < RESCALE_EPS {
                let p = sigmoid(zx);
                p * (1.0 - p)
            } else {
                (sigmoid(zx) - sigmoid(zb)) / (zx - zb)
            }
        }
    }
}

/// Shapley kernel weight for an interior coalition of size `s` out of `d`.
fn shapley_kernel(d: usize, s: usize) -> f64 {
    let c = binomial(d, s);
    (d as f64 - 1.0) / (c * s as f64 * (d - s) as f64)
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Kernel SHAP over logical feature groups.
///
/// Coalitions toggle whole one-hot groups; absent groups take the baseline
/// rows' values and predictions are averaged over the baseline set. The
/// weighted least squares solve carries the efficiency constraint
/// `sum(phi) = f(x) - mean_b f(b)` exactly. A singular system falls back to
/// a tiny ridge with a warning on stderr.
pub fn kernel_shap(
    model: &Model,
    x: ArrayView1<f64>,
    baselines: ArrayView2<f64>,
    coalitions: CoalitionSpec,
    group_map: &[Group],
    target: ExplainTarget,
    rng: &mut ChaCha8Rng,
) -> Result<Array1<f64>, ExplainError> {
    if baselines.nrows() == 0 {
        return Err(ExplainError::EmptyBaselines);
    }
    let d = group_map.len();
    let v_full = {
        let xm = x.insert_axis(Axis(0)).to_owned();
        model.output(&xm, target)?[0]
    };
    let v_zero = model.output(&baselines.to_owned(), target)?.mean().expect("nonempty");
    let delta = v_full - v_zero;
    if d == 1 {
        return Ok(Array1::from_vec(vec![delta]));
    }

    let exact = match coalitions {
        CoalitionSpec::Auto => d <= EXACT_COALITION_LIMIT,
        CoalitionSpec::Exact => {
            if d > 20 {
                return Err(ExplainError::ExactInfeasible(d));
            }
            true
        }
        CoalitionSpec::Sampled(_) => false,
    };

    // interior coalitions (0 < |S| < d) with weights; endpoints are carried
    // by the efficiency constraint
    let (masks, weights) = if exact {
        if d > 20 {
            return Err(ExplainError::ExactInfeasible(d));
        }
        let full = (1u64 << d) - 1;
        let mut masks = Vec::with_capacity((1usize << d) - 2);
        let mut weights = Vec::with_capacity(masks.capacity());
        for mask in 1..full {
            masks.push(mask);
            weights.push(shapley_kernel(d, mask.count_ones() as usize));
        }
        (masks, weights)
    } else {
        let budget = match coalitions {
            CoalitionSpec::Sampled(n) => n,
            _ => MAX_SAMPLED_COALITIONS.min(1usize << d.min(40)),
        };
        if budget < d + 2 {
            return Err(ExplainError::TooFewCoalitions { got: budget, need: d + 2 });
        }
        sample_coalitions(d, budget, rng)
    };

    let ys = coalition_values(model, x, baselines, group_map, &masks, target)?;

    // Reduced WLS with the constraint substituted: estimate phi_0..d-2 on
    // features (z_j - z_last), response (y - v0 - z_last * delta). All
    // nonzero design entries of one row share a sign, so each row adds a
    // rank-one block of +w.
    let dm1 = d - 1;
    let mut a = Array2::zeros((dm1, dm1));
    let mut rhs = Array1::zeros(dm1);
    let mut nz: Vec<usize> = Vec::with_capacity(d);
    for ((&mask, &w), &vy) in masks.iter().zip(&weights).zip(&ys) {
        let z_last = (mask >> (d - 1)) & 1 == 1;
        nz.clear();
        for j in 0..dm1 {
            let z_j = (mask >> j) & 1 == 1;
            if z_j != z_last {
                nz.push(j);
            }
        }
        let sign = if z_last { -1.0 } else { 1.0 };
        let y_adj = vy - v_zero - if z_last { delta } else { 0.0 };
        for &u in &nz {
            for &v in &nz {
                a[[u, v]] += w;
            }
            rhs[u] += w * y_adj * sign;
        }
    }
    let (psi, ridged) = linalg::solve_with_ridge(&a, &rhs).ok_or(ExplainError::SingularSystem)?;
    if ridged {
        eprintln!("kernel_shap: singular system, solved with ridge regularization");
    }
    let mut phi = Array1::zeros(d);
    phi.slice_mut(ndarray::s![..dm1]).assign(&psi);
    phi[d - 1] = delta - psi.sum();
    Ok(phi)
}

/// Draw interior coalitions in antithetic pairs: subset sizes follow the
/// kernel-weight mass per size, subsets are uniform within a size, and each
/// draw is paired with its complement. Duplicate masks accumulate count
/// weight.
fn sample_coalitions(d: usize, budget: usize, rng: &mut ChaCha8Rng) -> (Vec<u64>, Vec<f64>) {
    // P(s) proportional to C(d, s) * kernel(d, s) = (d-1) / (s (d-s))
    let sizes: Vec<f64> = (1..d).map(|s| 1.0 / (s as f64 * (d - s) as f64)).collect();
    let total: f64 = sizes.iter().sum();
    let mut counts: HashMap<u64, f64> = HashMap::new();
    let full = (1u64 << d) - 1;
    let pairs = budget.div_ceil(2);
    for _ in 0..pairs {
        let mut u = rng.random::<f64>() * total;
        let mut s = 1usize;
        for (i, &mass) in sizes.iter().enumerate() {
            if u < mass {
                s = i + 1;
                break;
            }
            u -= mass;
            s = i + 1;
        }
        let mut mask = 0u64;
        for j in index::sample(rng, d, s) {
            mask |= 1 << j;
        }
        *counts.entry(mask).or_insert(0.0) += 1.0;
        *counts.entry(full & !mask).or_insert(0.0) += 1.0;
    }
    let mut masks: Vec<u64> = counts.keys().copied().collect();
    masks.sort_unstable();
    let weights = masks.iter().map(|m| counts[m]).collect();
    (masks, weights)
}

/// Mean model output over baseline-mixed rows for each coalition mask.
fn coalition_values(
    model: &Model,
    x: ArrayView1<f64>,
    baselines: ArrayView2<f64>,
    group_map: &[Group],
    masks: &[u64],
    target: ExplainTarget,
) -> Result<Vec<f64>, ExplainError> {
    let m = baselines.nrows();
    let d_enc = x.len();
    let chunk = (8192 / m).max(1);
    let mut values = Vec::with_capacity(masks.len());
    let mut batch = Array2::zeros((chunk * m, d_enc));
    for block in masks.chunks(chunk) {
        let rows = block.len() * m;
        for (ci, &mask) in block.iter().enumerate() {
            for (bi, b) in baselines.rows().into_iter().enumerate() {
                let mut row = batch.row_mut(ci * m + bi);
                row.assign(&x);
                for (j, group) in group_map.iter().enumerate() {
                    if (mask >> j) & 1 == 0 {
                        for c in group.cols() {
                            row[c] = b[c];
                        }
                    }
                }
            }
        }
        let slice = batch.slice(ndarray::s![..rows, ..]).to_owned();
        let out = model.output(&slice, target)?;
        for ci in 0..block.len() {
            let mut acc = 0.0;
            for bi in 0..m {
                acc += out[ci * m + bi];
            }
            values.push(acc / m as f64);
        }
    }
    Ok(values)
}

/// Collapse encoded attributions to logical features: numeric columns copy
/// through, one-hot groups sum.
pub fn aggregate_categorical(encoded: ArrayView1<f64>, group_map: &[Group]) -> Array1<f64> {
    group_map
        .iter()
        .map(|g| g.cols().map(|c| encoded[c]).sum())
        .collect()
}

/// Global importance: mean absolute local attribution per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalImportance {
    pub scores: Vec<f64>,
}

pub fn global_importance(attrs: &AttributionSet) -> GlobalImportance {
    let n = attrs.values.nrows() as f64;
    let scores = (0..attrs.values.ncols())
        .map(|j| attrs.values.column(j).iter().map(|v| v.abs()).sum::<f64>() / n)
        .collect();
    GlobalImportance { scores }
}

/// Whether ablations follow per-sample rankings or one shared ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankScope {
    Local,
    Global,
}

impl RankScope {
    pub fn label(&self) -> &'static str {
        match self {
            RankScope::Local => "local",
            RankScope::Global => "global",
        }
    }
}

/// Feature orderings by decreasing value, ties broken by feature index.
///
/// `orders[i][k]` is the 0-based feature index ranked k-th for sample `i`;
/// ordinal positions are 1-based. Global rankings hold a single shared
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub scope: RankScope,
    orders: Vec<Vec<usize>>,
    ordinals: Vec<Vec<usize>>,
}

impl Ranking {
    pub fn d(&self) -> usize {
        self.orders[0].len()
    }

    /// Ranked feature order for sample `i`.
    pub fn order_for(&self, i: usize) -> &[usize] {
        match self.scope {
            RankScope::Global => &self.orders[0],
            RankScope::Local => &self.orders[i],
        }
    }

    /// 1-based rank position of feature `j` for sample `i`.
    pub fn ordinal(&self, i: usize, j: usize) -> usize {
        match self.scope {
            RankScope::Global => self.ordinals[0][j],
            RankScope::Local => self.ordinals[i][j],
        }
    }

    /// Number of per-sample orders (1 for global scope).
    pub fn n_orders(&self) -> usize {
        self.orders.len()
    }

    /// Mean 1-based ordinal of feature `j` over all samples.
    pub fn mean_ordinal(&self, j: usize) -> f64 {
        let total: usize = self.ordinals.iter().map(|o| o[j]).sum();
        total as f64 / self.ordinals.len() as f64
    }
}

/// Decreasing argsort with index tie-breaks; returns (order, 1-based ordinals).
pub fn rank_values_desc(values: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut ordinals = vec![0usize; values.len()];
    for (pos, &j) in order.iter().enumerate() {
        ordinals[j] = pos + 1;
    }
    (order, ordinals)
}

/// Rank every row of a value matrix independently (local scope).
pub fn rank_matrix_local(values: &Array2<f64>) -> Ranking {
    let mut orders = Vec::with_capacity(values.nrows());
    let mut ordinals = Vec::with_capacity(values.nrows());
    for row in values.rows() {
        let (o, r) = rank_values_desc(row.as_slice().expect("contiguous row"));
        orders.push(o);
        ordinals.push(r);
    }
    Ranking { scope: RankScope::Local, orders, ordinals }
}

/// Rank one shared score vector (global scope).
pub fn rank_global_scores(scores: &[f64]) -> Ranking {
    let (o, r) = rank_values_desc(scores);
    Ranking { scope: RankScope::Global, orders: vec![o], ordinals: vec![r] }
}

/// Rank an attribution set: local scope ranks each sample's signed values,
/// global scope ranks mean-absolute importance.
pub fn rank(attrs: &AttributionSet, scope: RankScope) -> Ranking {
    match scope {
        RankScope::Local => rank_matrix_local(&attrs.values),
        RankScope::Global => rank_global_scores(&global_importance(attrs).scores),
    }
}

/// Explain every row of `x` with the chosen method. Kernel SHAP sampling
/// derives an independent substream per sample from `seed`.
pub fn explain_dataset(
    model: &Model,
    x: &Array2<f64>,
    baselines: &BaselineSet,
    method: MethodSpec,
    target: ExplainTarget,
    group_map: &[Group],
    seed: u64,
) -> Result<AttributionSet, ExplainError> {
    let n = x.nrows();
    let d = group_map.len();
    let mut values = Array2::zeros((n, d));
    let mut encoded_values = match method {
        MethodSpec::KernelShap { .. } => None,
        _ => Some(Array2::zeros((n, x.ncols()))),
    };
    for i in 0..n {
        let row = x.row(i);
        let refs = baselines.rows_for(i);
        match method {
            MethodSpec::IntegratedGradients { steps } => {
                let enc = integrated_gradients(model, row, refs, steps, target)?;
                values.row_mut(i).assign(&aggregate_categorical(enc.view(), group_map));
                encoded_values.as_mut().expect("allocated").row_mut(i).assign(&enc);
            }
            MethodSpec::DeepShap => {
                let enc = deep_shap(model, row, refs, target)?;
                values.row_mut(i).assign(&aggregate_categorical(enc.view(), group_map));
                encoded_values.as_mut().expect("allocated").row_mut(i).assign(&enc);
            }
            MethodSpec::KernelShap { coalitions } => {
                let mut rng = rng::stream(seed, &[TAG_COALITIONS, i as u64]);
                let phi = kernel_shap(model, row, refs, coalitions, group_map, target, &mut rng)?;
                values.row_mut(i).assign(&phi);
            }
        }
    }
    Ok(AttributionSet { values, method: method.kind(), baseline: baselines.kind, encoded_values })
}
