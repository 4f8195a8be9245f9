//! Guardrails, area measures, rank correlation, and the baseline
//! sample-size sweep.
//!
//! The three guardrails bound what an ablation curve can legitimately show:
//! a horizontal capability floor from a shuffled-label model, a vertical
//! line at the rank of the best uninformative random feature, and the
//! random-order ablation curve. Quadrant III is the region left of the
//! vertical and below the horizontal guardrail; area accrued there signals
//! out-of-distribution degradation rather than explanation quality.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::EncodedView;
use crate::distributions::{BaselineKind, BaselineSet};
use crate::explain::{MethodSpec, Ranking, explain_dataset, global_importance};
use crate::model::{CapabilityMetric, ExplainTarget, MlpModel, Model, ModelError, score_predictions};
use crate::rng;

const TAG_SWEEP: u64 = 0x501;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("rank vectors have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("rank correlation needs at least 2 entries")]
    TooShort,
    #[error("rank correlation undefined: an input is completely tied")]
    DegenerateRanking,
    #[error("no random guardrail features present")]
    NoRandomFeatures,
    #[error("curves live on different grids: {0} vs {1} points")]
    GridMismatch(usize, usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Explain(#[from] crate::explain::ExplainError),
}

/// Sanity-check overlays for one ablation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardrailSet {
    /// Capability of the shuffled-label model on unperturbed data.
    pub horizontal: f64,
    /// 1-based rank position of the best random feature.
    pub vertical_rank: usize,
    /// `vertical_rank / d`, the vertical guardrail on the fraction axis.
    pub vertical_fraction: f64,
    /// Mean curve of the random-order control.
    pub random_curve: Vec<f64>,
}

/// Area diagnostics for one ablation curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaReport {
    pub quadrant3_area: f64,
    pub area_between_random: f64,
}

/// Horizontal guardrail: the worst-case model's capability on unperturbed
/// evaluation data.
pub fn horizontal_guardrail(
    worst_model: &MlpModel,
    eval: &EncodedView,
    labels: &[u8],
    metric: CapabilityMetric,
) -> Result<f64, MetricError> {
    Ok(score_predictions(&worst_model.predict(&eval.matrix)?, labels, metric)?)
}

/// Vertical guardrail: rank position of the best random feature.
///
/// Local rankings take the floor of the smallest per-feature mean ordinal
/// over samples; global rankings read the shared order directly.
pub fn vertical_guardrail(ranking: &Ranking, random_features: &[usize]) -> Result<usize, MetricError> {
    if random_features.is_empty() {
        return Err(MetricError::NoRandomFeatures);
    }
    let best = random_features
        .iter()
        .map(|&j| ranking.mean_ordinal(j))
        .fold(f64::INFINITY, f64::min);
    Ok((best.floor() as usize).max(1))
}

/// Area above the curve, below the horizontal guardrail, left of the
/// vertical guardrail: the trapezoidal integral over [0, vertical_fraction]
/// of max(0, horizontal - curve(x)), with exact handling of segments that
/// cross the guardrail. The curve lives on the uniform k/d grid.
pub fn quadrant3_area(curve: &[f64], horizontal: f64, vertical_fraction: f64) -> f64 {
    debug_assert!(curve.len() >= 2);
    let d = curve.len() - 1;
    let dx = 1.0 / d as f64;
    let right = vertical_fraction.clamp(0.0, 1.0);
    let mut area = 0.0;
    for k in 0..d {
        let x0 = k as f64 * dx;
        if x0 >= right {
            break;
        }
        let x1 = ((k + 1) as f64 * dx).min(right);
        let frac = (x1 - x0) / dx;
        let g0 = horizontal - curve[k];
        let g1_full = horizontal - curve[k + 1];
        let g1 = g0 + (g1_full - g0) * frac;
        area += clipped_trapezoid(g0, g1, x1 - x0);
    }
    area
}

/// Integral of max(0, g(x)) over a width-w interval with g linear between
/// endpoint values g0 and g1.
fn clipped_trapezoid(g0: f64, g1: f64, w: f64) -> f64 {
    if g0 <= 0.0 && g1 <= 0.0 {
        return 0.0;
    }
    if g0 >= 0.0 && g1 >= 0.0 {
        return 0.5 * (g0 + g1) * w;
    }
    // one sign change: triangle on the positive side of the root
    let root = g0 / (g0 - g1);
    if g0 > 0.0 {
        0.5 * g0 * root * w
    } else {
        0.5 * g1 * (1.0 - root) * w
    }
}

/// Signed area between the random-order control and the curve over the full
/// fraction axis; positive when explanations beat random ordering.
pub fn area_between_random(curve: &[f64], random_curve: &[f64]) -> Result<f64, MetricError> {
    if curve.len() != random_curve.len() {
        return Err(MetricError::GridMismatch(curve.len(), random_curve.len()));
    }
    if curve.len() < 2 {
        return Err(MetricError::TooShort);
    }
    let d = curve.len() - 1;
    let dx = 1.0 / d as f64;
    let mut area = 0.0;
    for k in 0..d {
        let a = random_curve[k] - curve[k];
        let b = random_curve[k + 1] - curve[k + 1];
        area += 0.5 * (a + b) * dx;
    }
    Ok(area)
}

/// Kendall's tau-b with tie correction, computed by merge-sort swap
/// counting. Inputs are paired score or rank vectors; the statistic is
/// invariant under strictly increasing relabelings.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(MetricError::TooShort);
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[i].total_cmp(&a[j]).then(b[i].total_cmp(&b[j])));

    // joint ties and ties in a
    let mut tied_a = 0usize;
    let mut tied_ab = 0usize;
    let mut run_a = 1usize;
    let mut run_ab = 1usize;
    for w in 1..n {
        if a[idx[w]] == a[idx[w - 1]] {
            run_a += 1;
            if b[idx[w]] == b[idx[w - 1]] {
                run_ab += 1;
            } else {
                tied_ab += pairs(run_ab);
                run_ab = 1;
            }
        } else {
            tied_a += pairs(run_a);
            run_a = 1;
            tied_ab += pairs(run_ab);
            run_ab = 1;
        }
    }
    tied_a += pairs(run_a);
    tied_ab += pairs(run_ab);

    // swaps needed to sort by b once sorted by a = discordant pairs
    let mut keys: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
    let mut buffer = vec![0.0f64; n];
    let swaps = merge_count(&mut keys, &mut buffer);

    let mut tied_b = 0usize;
    let mut run_b = 1usize;
    for w in 1..n {
        if keys[w] == keys[w - 1] {
            run_b += 1;
        } else {
            tied_b += pairs(run_b);
            run_b = 1;
        }
    }
    tied_b += pairs(run_b);

    let total = pairs(n) as f64;
    let t_a = tied_a as f64;
    let t_b = tied_b as f64;
    if total == t_a || total == t_b {
        return Err(MetricError::DegenerateRanking);
    }
    let concordant_minus_discordant = total - t_a - t_b + tied_ab as f64 - 2.0 * swaps as f64;
    let tau = concordant_minus_discordant / ((total - t_a) * (total - t_b)).sqrt();
    Ok(tau.clamp(-1.0, 1.0))
}

fn pairs(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Bottom-up merge sort counting the inversions it removes.
fn merge_count(keys: &mut [f64], buffer: &mut [f64]) -> u64 {
    let n = keys.len();
    let mut swaps = 0u64;
    let mut width = 1usize;
    while width < n {
        let mut lo = 0usize;
        while lo < n {
            let mid = (lo + width).min(n);
            let hi = (lo + 2 * width).min(n);
            if mid < hi {
                let (mut i, mut j, mut out) = (lo, mid, lo);
                while i < mid || j < hi {
                    if j >= hi || (i < mid && keys[i] <= keys[j]) {
                        buffer[out] = keys[i];
                        i += 1;
                    } else {
                        swaps += (mid - i) as u64;
                        buffer[out] = keys[j];
                        j += 1;
                    }
                    out += 1;
                }
                keys[lo..hi].copy_from_slice(&buffer[lo..hi]);
            }
            lo += 2 * width;
        }
        width *= 2;
    }
    swaps
}

/// One point of the baseline sample-size sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub size: usize,
    pub mean_tau: f64,
    pub std_tau: f64,
}

/// Rank-stability sweep over baseline sample sizes: for each size, build a
/// training baseline of that size, compute the global ranking of `x_explain`,
/// and report Kendall's tau against the full-training-baseline reference,
/// averaged over `repeats` resampling seeds.
#[allow(clippy::too_many_arguments)]
pub fn sample_size_sweep(
    model: &Model,
    train_view: &EncodedView,
    x_explain: &Array2<f64>,
    method: MethodSpec,
    target: ExplainTarget,
    sizes: &[usize],
    repeats: usize,
    seed: u64,
) -> Result<Vec<SweepPoint>, MetricError> {
    let group_map = train_view.group_map().to_vec();
    let full = BaselineSet::from_shared(BaselineKind::Training, train_view.matrix.clone());
    let reference = global_importance(&explain_dataset(
        model,
        x_explain,
        &full,
        method,
        target,
        &group_map,
        rng::derive_seed(seed, &[TAG_SWEEP, 0]),
    )?)
    .scores;
    let n_train = train_view.matrix.nrows();
    let mut points = Vec::with_capacity(sizes.len());
    for (si, &size) in sizes.iter().enumerate() {
        let mut taus = Vec::with_capacity(repeats);
        for r in 0..repeats {
            let sub_seed = rng::derive_seed(seed, &[TAG_SWEEP, 1 + si as u64, r as u64]);
            let baseline = crate::distributions::build_baseline(
                BaselineKind::Training,
                train_view,
                &vec![0u8; n_train],
                model,
                x_explain,
                size,
                sub_seed,
            )
            .expect("training baseline construction cannot fail on nonempty train");
            let scores = global_importance(&explain_dataset(
                model,
                x_explain,
                &baseline,
                method,
                target,
                &group_map,
                sub_seed,
            )?)
            .scores;
            taus.push(kendall_tau(&scores, &reference)?);
        }
        let mean = taus.iter().sum::<f64>() / taus.len() as f64;
        let var = taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / taus.len() as f64;
        points.push(SweepPoint { size, mean_tau: mean, std_tau: var.sqrt() });
    }
    Ok(points)
}
