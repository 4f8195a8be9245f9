//! Synthetic benchmark generator with known linear ground truth.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, FeatureSpec};
use crate::rng;

const TAG_COEF: u64 = 0xC0;
const TAG_FEATURES: u64 = 0xF0;
const TAG_LABELS: u64 = 0x1A;

/// Shape of the synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_continuous: usize,
    pub n_categorical: usize,
    pub n_levels: usize,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { n_continuous: 15, n_categorical: 5, n_levels: 6, n_samples: 1000, seed: 0 }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<(), DataError> {
        if self.n_samples == 0 {
            return Err(DataError::InvalidSpec("n_samples must be at least 1".into()));
        }
        if self.n_continuous + self.n_categorical == 0 {
            return Err(DataError::InvalidSpec("at least one feature required".into()));
        }
        if self.n_categorical > 0 && self.n_levels < 2 {
            return Err(DataError::InvalidSpec("categorical features need at least 2 levels".into()));
        }
        Ok(())
    }

    /// Width of the one-hot encoded representation.
    pub fn d_enc(&self) -> usize {
        self.n_continuous + self.n_categorical * self.n_levels
    }
}

/// The generator's coefficient vector over encoded columns (no intercept).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub coefficients: Vec<f64>,
}

/// Generate continuous N(0,1) features, uniform categorical features, and
/// labels drawn `y ~ Bernoulli(sigmoid(c . x_enc))` with `c ~ N(0,1)` per
/// encoded column. Coefficients, features, and label noise come from
/// independent streams of `spec.seed`.
pub fn synthesize(spec: &SyntheticSpec) -> Result<(Dataset, GroundTruth), DataError> {
    spec.validate()?;
    let mut coef_rng = rng::stream(spec.seed, &[TAG_COEF]);
    let coefficients: Vec<f64> = (0..spec.d_enc()).map(|_| StandardNormal.sample(&mut coef_rng)).collect();
    synthesize_with_coefficients(spec, &coefficients)
}

/// Test hook: synthesize with a caller-supplied coefficient vector.
pub fn synthesize_with_coefficients(
    spec: &SyntheticSpec,
    coefficients: &[f64],
) -> Result<(Dataset, GroundTruth), DataError> {
    spec.validate()?;
    if coefficients.len() != spec.d_enc() {
        return Err(DataError::InvalidSpec(format!(
            "expected {} coefficients, got {}",
            spec.d_enc(),
            coefficients.len()
        )));
    }
    let mut schema: Vec<FeatureSpec> =
        (0..spec.n_continuous).map(|j| FeatureSpec::numeric(format!("num_{j:02}"))).collect();
    for j in 0..spec.n_categorical {
        schema.push(FeatureSpec::categorical(
            format!("cat_{j:02}"),
            (0..spec.n_levels).map(|l| format!("level_{l}")),
        ));
    }

    let mut feat_rng = rng::stream(spec.seed, &[TAG_FEATURES]);
    let mut label_rng = rng::stream(spec.seed, &[TAG_LABELS]);
    let d = spec.n_continuous + spec.n_categorical;
    let mut rows = Array2::zeros((spec.n_samples, d));
    let mut labels = Vec::with_capacity(spec.n_samples);
    for i in 0..spec.n_samples {
        let mut logit = 0.0;
        for j in 0..spec.n_continuous {
            let v: f64 = StandardNormal.sample(&mut feat_rng);
            rows[[i, j]] = v;
            logit += coefficients[j] * v;
        }
        for j in 0..spec.n_categorical {
            let level = feat_rng.random_range(0..spec.n_levels);
            rows[[i, spec.n_continuous + j]] = level as f64;
            logit += coefficients[spec.n_continuous + j * spec.n_levels + level];
        }
        let p = 1.0 / (1.0 + (-logit).exp());
        labels.push(u8::from(label_rng.random::<f64>() < p));
    }
    let ds = Dataset::new(schema, rows, labels)?;
    Ok((ds, GroundTruth { coefficients: coefficients.to_vec() }))
}
