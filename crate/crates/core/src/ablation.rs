//! Sequential-perturbation ablation: explain, rank, then cumulatively
//! replace features in rank order while tracking the capability metric.
//!
//! Each trial resamples the baseline and its perturbation stream, recomputes
//! attributions and rankings, scores the untouched data at step 0, then
//! perturbs every sample's k-th ranked feature at step k. Perturbations
//! persist for the remainder of the trial, so rows are fully replaced at
//! step d. Trials never mutate the caller's data.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, EncodedView, Encoder, GroundTruth};
use crate::distributions::{
    BaselineKind, DistributionError, PerturbationKind, PerturbationSampler, build_baseline,
};
use crate::explain::{
    AttributionSet, ExplainError, MethodSpec, RankScope, Ranking, explain_dataset, rank,
};
use crate::metrics::GuardrailSet;
use crate::model::{CapabilityMetric, ExplainTarget, Model, ModelError, score_predictions};
use crate::rng;

const TAG_TRIAL_BASELINE: u64 = 0x401;
const TAG_TRIAL_EXPLAIN: u64 = 0x402;
const TAG_TRIAL_PERTURB: u64 = 0x403;
const TAG_RANDOM_ORDER: u64 = 0x404;

#[derive(Debug, Error)]
pub enum AblationError {
    #[error("evaluation data is empty")]
    EmptyEval,
    #[error("model expects {expected} encoded columns, data has {got}")]
    IncompatibleModel { expected: usize, got: usize },
    #[error("trials must be at least 1")]
    NoTrials,
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One grid cell: which explainer, reference and replacement distributions,
/// ranking scope, and estimator budget to run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub method: MethodSpec,
    pub baseline: BaselineKind,
    pub perturbation: PerturbationKind,
    pub mode: RankScope,
    pub trials: usize,
    pub metric: CapabilityMetric,
    pub baseline_sample_size: usize,
    pub target: ExplainTarget,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            method: MethodSpec::DeepShap,
            baseline: BaselineKind::Training,
            perturbation: PerturbationKind::ConstantMedian,
            mode: RankScope::Global,
            trials: 3,
            metric: CapabilityMetric::Accuracy,
            baseline_sample_size: crate::distributions::DEFAULT_BASELINE_SAMPLE_SIZE,
            target: ExplainTarget::Probability,
            seed: 0,
        }
    }
}

/// Provenance of a curve: a configured experiment or the random-order control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "curve", rename_all = "snake_case")]
pub enum CurveConfig {
    Experiment(ExperimentConfig),
    RandomOrder {
        perturbation: PerturbationKind,
        trials: usize,
        metric: CapabilityMetric,
        seed: u64,
    },
}

/// Capability scores over ablation steps: `scores[(t, k)]` after perturbing
/// each sample's top-k features in trial t. Curves live on the normalized
/// fraction axis k/d.
#[derive(Debug, Clone)]
pub struct AblationResult {
    pub scores: Array2<f64>,
    pub mean_curve: Vec<f64>,
    pub std_curve: Vec<f64>,
    pub d: usize,
    pub n_eval: usize,
    pub config: CurveConfig,
    /// Ranking used by each trial (empty for the random-order control).
    pub rankings: Vec<Ranking>,
    /// Attributions from the first trial, kept for guardrail diagnostics.
    pub first_trial_attributions: Option<AttributionSet>,
    /// Filled by the metrics layer once guardrails are computed.
    pub guardrails: Option<GuardrailSet>,
}

impl AblationResult {
    fn from_scores(
        scores: Array2<f64>,
        d: usize,
        n_eval: usize,
        config: CurveConfig,
        rankings: Vec<Ranking>,
        first_trial_attributions: Option<AttributionSet>,
    ) -> Self {
        let t = scores.nrows();
        let mut mean_curve = Vec::with_capacity(d + 1);
        let mut std_curve = Vec::with_capacity(d + 1);
        for k in 0..=d {
            let col = scores.column(k);
            let mean = col.sum() / t as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64;
            mean_curve.push(mean);
            std_curve.push(var.sqrt());
        }
        Self {
            scores,
            mean_curve,
            std_curve,
            d,
            n_eval,
            config,
            rankings,
            first_trial_attributions,
            guardrails: None,
        }
    }

    /// Normalized x-axis positions k/d for each curve point.
    pub fn fractions(&self) -> Vec<f64> {
        (0..=self.d).map(|k| k as f64 / self.d as f64).collect()
    }
}

/// Training-side context the ablation loop samples from.
pub struct TrainContext<'a> {
    pub train: &'a Dataset,
    pub train_view: &'a EncodedView,
}

impl<'a> TrainContext<'a> {
    pub fn encoder(&self) -> &Encoder {
        self.train_view.encoder()
    }
}

/// Run the ablation study for one experiment configuration.
pub fn run_ablation(
    model: &Model,
    eval: &Dataset,
    eval_view: &EncodedView,
    cfg: &ExperimentConfig,
    ctx: &TrainContext<'_>,
) -> Result<AblationResult, AblationError> {
    validate_inputs(model, eval, eval_view, cfg.trials)?;
    let d = eval.d();
    let n = eval.n();
    let sampler = PerturbationSampler::fit(
        cfg.perturbation,
        ctx.train,
        rng::derive_seed(cfg.seed, &[TAG_TRIAL_PERTURB]),
    )?;
    let mut scores = Array2::zeros((cfg.trials, d + 1));
    let mut rankings = Vec::with_capacity(cfg.trials);
    let mut first_attrs = None;
    for t in 0..cfg.trials {
        let baseline = build_baseline(
            cfg.baseline,
            ctx.train_view,
            ctx.train.labels(),
            model,
            &eval_view.matrix,
            cfg.baseline_sample_size,
            rng::derive_seed(cfg.seed, &[TAG_TRIAL_BASELINE, t as u64]),
        )?;
        let attrs = explain_dataset(
            model,
            &eval_view.matrix,
            &baseline,
            cfg.method,
            cfg.target,
            eval_view.group_map(),
            rng::derive_seed(cfg.seed, &[TAG_TRIAL_EXPLAIN, t as u64]),
        )?;
        let ranking = rank(&attrs, cfg.mode);
        let row_scores = ablate_with_order(
            model,
            eval,
            eval_view,
            &sampler,
            cfg.metric,
            t as u64,
            |i, k| ranking.order_for(i)[k],
        )?;
        scores.row_mut(t).assign(&Array1::from_vec(row_scores));
        rankings.push(ranking);
        if t == 0 {
            first_attrs = Some(attrs);
        }
    }
    Ok(AblationResult::from_scores(
        scores,
        d,
        n,
        CurveConfig::Experiment(cfg.clone()),
        rankings,
        first_attrs,
    ))
}

/// Random-explanation control: the same loop with every sample's ranking
/// replaced by an independent uniform permutation per trial.
pub fn random_explanation_curve(
    model: &Model,
    eval: &Dataset,
    eval_view: &EncodedView,
    perturbation: PerturbationKind,
    trials: usize,
    metric: CapabilityMetric,
    seed: u64,
    ctx: &TrainContext<'_>,
) -> Result<AblationResult, AblationError> {
    validate_inputs(model, eval, eval_view, trials)?;
    let d = eval.d();
    let n = eval.n();
    let sampler =
        PerturbationSampler::fit(perturbation, ctx.train, rng::derive_seed(seed, &[TAG_TRIAL_PERTURB]))?;
    let mut scores = Array2::zeros((trials, d + 1));
    for t in 0..trials {
        let mut orders: Vec<Vec<usize>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut order: Vec<usize> = (0..d).collect();
            let mut stream = rng::stream(seed, &[TAG_RANDOM_ORDER, t as u64, i as u64]);
            // Fisher-Yates from the per-(trial, sample) stream
            for k in (1..d).rev() {
                let swap = stream.random_range(0..=k);
                order.swap(k, swap);
            }
            orders.push(order);
        }
        let row_scores =
            ablate_with_order(model, eval, eval_view, &sampler, metric, t as u64, |i, k| orders[i][k])?;
        scores.row_mut(t).assign(&Array1::from_vec(row_scores));
    }
    Ok(AblationResult::from_scores(
        scores,
        d,
        n,
        CurveConfig::RandomOrder { perturbation, trials, metric, seed },
        Vec::new(),
        None,
    ))
}

fn validate_inputs(
    model: &Model,
    eval: &Dataset,
    eval_view: &EncodedView,
    trials: usize,
) -> Result<(), AblationError> {
    if eval.n() == 0 {
        return Err(AblationError::EmptyEval);
    }
    if trials == 0 {
        return Err(AblationError::NoTrials);
    }
    if model.input_dim() != eval_view.d_enc() {
        return Err(AblationError::IncompatibleModel {
            expected: model.input_dim(),
            got: eval_view.d_enc(),
        });
    }
    Ok(())
}

/// Shared inner loop: score at k = 0, then cumulatively perturb the k-th
/// ranked feature of every sample and re-score. Each (trial, sample) pair
/// draws from its own perturbation substream.
fn ablate_with_order(
    model: &Model,
    eval: &Dataset,
    eval_view: &EncodedView,
    sampler: &PerturbationSampler,
    metric: CapabilityMetric,
    trial: u64,
    order: impl Fn(usize, usize) -> usize,
) -> Result<Vec<f64>, AblationError> {
    let d = eval.d();
    let n = eval.n();
    let encoder = eval_view.encoder();
    let mut logical = eval.rows().clone();
    let mut encoded = eval_view.matrix.clone();
    let mut streams: Vec<_> = (0..n).map(|i| sampler.stream_for(trial, i as u64)).collect();
    let mut curve = Vec::with_capacity(d + 1);
    curve.push(score_predictions(&model.predict(&encoded)?, eval.labels(), metric)?);
    for k in 0..d {
        for i in 0..n {
            let j = order(i, k);
            let replacement = sampler.perturb(logical.row(i), j, &mut streams[i])?;
            logical[[i, j]] = replacement;
            crate::distributions::apply_replacement_encoded(encoder, encoded.row_mut(i), j, replacement);
        }
        curve.push(score_predictions(&model.predict(&encoded)?, eval.labels(), metric)?);
    }
    Ok(curve)
}

/// Theoretical information-decay curve of the synthetic generator: the
/// share of total |coefficient| mass remaining after removing the k largest,
/// k = 0..d_enc. Monotone from 1 to 0.
pub fn theoretical_decay(gt: &GroundTruth) -> Vec<f64> {
    let mut magnitudes: Vec<f64> = gt.coefficients.iter().map(|c| c.abs()).collect();
    magnitudes.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = magnitudes.iter().sum();
    let mut curve = Vec::with_capacity(magnitudes.len() + 1);
    let mut remaining = total;
    curve.push(1.0);
    for m in &magnitudes {
        remaining -= m;
        curve.push(if total > 0.0 { (remaining / total).max(0.0) } else { 0.0 });
    }
    curve
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureSpec, SyntheticSpec, encode, split, synthesize};
    use crate::explain::CoalitionSpec;
    use crate::model::LinearModel;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn toy_context() -> (Dataset, EncodedView) {
        let schema = vec![FeatureSpec::numeric("a")];
        let rows = array![[2.0], [-1.0], [0.5], [-2.0]];
        let ds = Dataset::new(schema, rows, vec![1, 0, 1, 0]).unwrap();
        let enc = encode(&ds, &[0, 1, 2, 3]).unwrap();
        (ds, enc)
    }

    #[test]
    fn single_feature_curve_has_two_points() {
        let (ds, enc) = toy_context();
        let model: Model = LinearModel::new(array![2.0], 0.0).unwrap().into();
        let ctx = TrainContext { train: &ds, train_view: &enc };
        let cfg = ExperimentConfig {
            method: MethodSpec::kernel_shap(),
            baseline: BaselineKind::ConstantMedian,
            perturbation: PerturbationKind::ConstantMedian,
            mode: RankScope::Local,
            trials: 2,
            ..Default::default()
        };
        let result = run_ablation(&model, &ds, &enc, &cfg, &ctx).unwrap();
        assert_eq!(result.mean_curve.len(), 2);
        // fully perturbed at k = 1: every row at the median -> constant
        // prediction, accuracy = majority rate
        assert_abs_diff_eq!(result.mean_curve[1], ds.majority_rate(), epsilon = 1e-12);
        assert_eq!(result.fractions(), vec![0.0, 1.0]);
    }

    #[test]
    fn identical_seeds_reproduce_scores_exactly() {
        let (ds, _) = synthesize(&SyntheticSpec { n_samples: 120, seed: 3, ..Default::default() }).unwrap();
        let (train, _, test) = split(&ds, (0.6, 0.2, 0.2), 1, true).unwrap();
        let encoder = crate::data::Encoder::fit(&train, &(0..train.n()).collect::<Vec<_>>()).unwrap();
        let train_view = encoder.transform(&train).unwrap();
        let test_view = encoder.transform(&test).unwrap();
        let model: Model = crate::model::train_linear(&train, &encoder).unwrap().into();
        let ctx = TrainContext { train: &train, train_view: &train_view };
        let cfg = ExperimentConfig {
            method: MethodSpec::DeepShap,
            baseline: BaselineKind::Training,
            perturbation: PerturbationKind::Marginal,
            mode: RankScope::Local,
            trials: 2,
            baseline_sample_size: 20,
            seed: 99,
            ..Default::default()
        };
        let a = run_ablation(&model, &test, &test_view, &cfg, &ctx).unwrap();
        let b = run_ablation(&model, &test, &test_view, &cfg, &ctx).unwrap();
        assert_eq!(a.scores, b.scores);
        // the eval inputs were not mutated
        assert_eq!(test_view.matrix, encoder.transform(&test).unwrap().matrix);
    }

    #[test]
    fn step_zero_score_is_method_independent() {
        let (ds, _) = synthesize(&SyntheticSpec { n_samples: 100, seed: 5, ..Default::default() }).unwrap();
        let enc = encode(&ds, &(0..ds.n()).collect::<Vec<_>>()).unwrap();
        let model: Model = crate::model::fit_logistic(&enc.matrix, ds.labels()).unwrap().into();
        let ctx = TrainContext { train: &ds, train_view: &enc };
        let mut k0 = Vec::new();
        for method in [
            MethodSpec::DeepShap,
            MethodSpec::IntegratedGradients { steps: 16 },
            MethodSpec::KernelShap { coalitions: CoalitionSpec::Sampled(26) },
        ] {
            let cfg = ExperimentConfig {
                method,
                baseline: BaselineKind::Training,
                perturbation: PerturbationKind::ConstantMedian,
                mode: RankScope::Global,
                trials: 1,
                baseline_sample_size: 10,
                seed: 4,
                ..Default::default()
            };
            let r = run_ablation(&model, &ds, &enc, &cfg, &ctx).unwrap();
            k0.push(r.scores[[0, 0]]);
        }
        assert!(k0.windows(2).all(|w| w[0] == w[1]), "{k0:?}");
    }

    #[test]
    fn cumulative_perturbation_replaces_exactly_k_features() {
        // marginal perturbation from a distinct-valued pool: count cells
        // that differ from the originals after each step
        let schema = vec![
            FeatureSpec::numeric("a"),
            FeatureSpec::numeric("b"),
            FeatureSpec::categorical("c", ["u", "v", "w"]),
        ];
        let rows = array![
            [100.0, -100.0, 0.0],
            [200.0, -200.0, 1.0],
            [300.0, -300.0, 2.0],
        ];
        let train = Dataset::new(schema, rows, vec![0, 1, 0]).unwrap();
        let train_view = encode(&train, &[0, 1, 2]).unwrap();
        // eval rows far outside the training pools so every replacement differs
        let eval_rows = array![[1.0, 1.0, 0.0], [2.0, 2.0, 1.0]];
        let eval = Dataset::new(train.schema().to_vec(), eval_rows, vec![1, 0]).unwrap();
        let eval_view = train_view.encoder().transform(&eval).unwrap();
        let sampler = PerturbationSampler::fit(PerturbationKind::MaxDistance, &train, 8).unwrap();
        let model: Model = LinearModel::new(Array1::zeros(eval_view.d_enc()), 0.0).unwrap().into();

        // replicate the loop with instrumentation
        let mut logical = eval.rows().clone();
        let mut streams: Vec<_> = (0..eval.n()).map(|i| sampler.stream_for(0, i as u64)).collect();
        let order = [[0usize, 2, 1], [2usize, 1, 0]];
        for k in 0..eval.d() {
            for i in 0..eval.n() {
                let j = order[i][k];
                let replacement = sampler.perturb(logical.row(i), j, &mut streams[i]).unwrap();
                logical[[i, j]] = replacement;
            }
            for i in 0..eval.n() {
                let changed = (0..eval.d()).filter(|&j| logical[[i, j]] != eval.rows()[[i, j]]).count();
                assert_eq!(changed, k + 1, "sample {i} at step {}", k + 1);
            }
        }
        let _ = model;
    }

    #[test]
    fn random_curve_k0_matches_explained_k0_and_declines() {
        let (ds, _) = synthesize(&SyntheticSpec { n_samples: 400, seed: 11, ..Default::default() }).unwrap();
        let (train, _, test) = split(&ds, (0.6, 0.2, 0.2), 2, true).unwrap();
        let encoder = crate::data::Encoder::fit(&train, &(0..train.n()).collect::<Vec<_>>()).unwrap();
        let train_view = encoder.transform(&train).unwrap();
        let test_view = encoder.transform(&test).unwrap();
        let model: Model = crate::model::train_linear(&train, &encoder).unwrap().into();
        let ctx = TrainContext { train: &train, train_view: &train_view };
        let random = random_explanation_curve(
            &model,
            &test,
            &test_view,
            PerturbationKind::Marginal,
            3,
            CapabilityMetric::Accuracy,
            21,
            &ctx,
        )
        .unwrap();
        let cfg = ExperimentConfig {
            method: MethodSpec::DeepShap,
            baseline: BaselineKind::Training,
            perturbation: PerturbationKind::Marginal,
            trials: 1,
            baseline_sample_size: 20,
            seed: 21,
            ..Default::default()
        };
        let explained = run_ablation(&model, &test, &test_view, &cfg, &ctx).unwrap();
        assert_eq!(random.scores[[0, 0]], explained.scores[[0, 0]]);
        // steady decline: negative mean slope over the feature range
        let first = random.mean_curve[0];
        let last = *random.mean_curve.last().unwrap();
        assert!(last < first, "random curve should decline: {first} -> {last}");
    }

    #[test]
    fn two_feature_random_curve_matches_exact_expectation() {
        // symmetric two-feature model; enumerate both ablation orders exactly
        let schema = vec![FeatureSpec::numeric("a"), FeatureSpec::numeric("b")];
        let n = 200;
        let mut rng = rng::stream(17, &[0xD]);
        let mut rows = Array2::zeros((n, 2));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            rows[[i, 0]] = a;
            rows[[i, 1]] = b;
            labels.push(u8::from(a + b > 0.0));
        }
        let ds = Dataset::new(schema, rows, labels).unwrap();
        let enc = encode(&ds, &(0..n).collect::<Vec<_>>()).unwrap();
        let model: Model = crate::model::fit_logistic(&enc.matrix, ds.labels()).unwrap().into();
        let ctx = TrainContext { train: &ds, train_view: &enc };
        // constant-median perturbation is deterministic, so the exact
        // expectation at k=1 is the mean of the two single-feature ablations
        let sampler = PerturbationSampler::fit(PerturbationKind::ConstantMedian, &ds, 0).unwrap();
        let mut expected_k1 = 0.0;
        for feature in 0..2 {
            let mut encoded = enc.matrix.clone();
            for i in 0..n {
                let repl = sampler
                    .perturb(ds.rows().row(i), feature, &mut sampler.stream_for(0, i as u64))
                    .unwrap();
                crate::distributions::apply_replacement_encoded(
                    enc.encoder(),
                    encoded.row_mut(i),
                    feature,
                    repl,
                );
            }
            expected_k1 += score_predictions(
                &model.predict(&encoded).unwrap(),
                ds.labels(),
                CapabilityMetric::Accuracy,
            )
            .unwrap();
        }
        expected_k1 /= 2.0;
        let random = random_explanation_curve(
            &model,
            &ds,
            &enc,
            PerturbationKind::ConstantMedian,
            40,
            CapabilityMetric::Accuracy,
            5,
            &ctx,
        )
        .unwrap();
        // 40 trials of n=200 coin flips between the two orders
        assert_abs_diff_eq!(random.mean_curve[1], expected_k1, epsilon = 0.01);
    }

    #[test]
    fn decay_curve_examples() {
        let gt = GroundTruth { coefficients: vec![3.0, -1.0] };
        let curve = theoretical_decay(&gt);
        assert_eq!(curve, vec![1.0, 0.25, 0.0]);
        let flat = GroundTruth { coefficients: vec![1.0; 4] };
        assert_eq!(theoretical_decay(&flat), vec![1.0, 0.75, 0.5, 0.25, 0.0]);
        let (ds, gt) = synthesize(&SyntheticSpec { n_samples: 10, seed: 0, ..Default::default() }).unwrap();
        let curve = theoretical_decay(&gt);
        assert_eq!(curve.len(), 46);
        assert_eq!(curve[0], 1.0);
        assert_abs_diff_eq!(curve[45], 0.0, epsilon = 1e-12);
        assert!(curve.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        let _ = ds;
    }
}
