//! Declarative grid configuration: TOML schema, role validation, and the
//! canonical config hash that drives caching.

use std::path::{Path, PathBuf};

use ablate_core::data::SyntheticSpec;
use ablate_core::distributions::{BaselineKind, PerturbationKind};
use ablate_core::explain::{CoalitionSpec, MethodSpec, RankScope};
use ablate_core::model::{CapabilityMetric, ExplainTarget, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unsupported config version {0} (expected {CONFIG_VERSION})")]
    Version(u32),
    #[error(
        "`{name}` cannot be used as a {role}: the distribution table marks it \
         {allowed}-only"
    )]
    RoleViolation { name: String, role: &'static str, allowed: &'static str },
    #[error("unknown {what} `{name}`")]
    Unknown { what: &'static str, name: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub datasets: Vec<DatasetConfig>,
    #[serde(default)]
    pub model: ModelConfig,
    pub grid: GridAxes,
    #[serde(default)]
    pub experiment: ExperimentSettings,
    #[serde(default)]
    pub sweep: SweepSettings,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum DatasetConfig {
    Synthetic {
        name: String,
        #[serde(default = "default_n_continuous")]
        n_continuous: usize,
        #[serde(default = "default_n_categorical")]
        n_categorical: usize,
        #[serde(default = "default_n_levels")]
        n_levels: usize,
        #[serde(default = "default_n_samples")]
        n_samples: usize,
    },
    Csv {
        name: String,
        path: PathBuf,
        schema: PathBuf,
        label: String,
    },
}

fn default_n_continuous() -> usize {
    15
}
fn default_n_categorical() -> usize {
    5
}
fn default_n_levels() -> usize {
    6
}
fn default_n_samples() -> usize {
    1000
}

impl DatasetConfig {
    pub fn name(&self) -> &str {
        match self {
            DatasetConfig::Synthetic { name, .. } | DatasetConfig::Csv { name, .. } => name,
        }
    }

    pub fn synthetic_spec(&self, seed: u64) -> Option<SyntheticSpec> {
        match *self {
            DatasetConfig::Synthetic { n_continuous, n_categorical, n_levels, n_samples, .. } => {
                Some(SyntheticSpec { n_continuous, n_categorical, n_levels, n_samples, seed })
            }
            DatasetConfig::Csv { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden_factor: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            hidden_factor: t.hidden_factor,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
        }
    }
}

impl ModelConfig {
    pub fn train_config(&self, seed: u64, shuffle_labels: bool) -> TrainConfig {
        TrainConfig {
            hidden_factor: self.hidden_factor,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
            shuffle_labels,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxes {
    pub methods: Vec<String>,
    pub baselines: Vec<String>,
    pub perturbations: Vec<String>,
    pub modes: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSettings {
    pub trials: usize,
    pub metric: String,
    pub baseline_sample_size: usize,
    pub augment_random: usize,
    /// Cap on evaluation rows taken from the test split (0 = no cap).
    pub eval_max: usize,
    pub ig_steps: usize,
    pub ks_coalitions: usize,
    pub nn_k: usize,
    pub target: String,
    pub split: [f64; 3],
    pub stratified: bool,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            trials: 3,
            metric: "accuracy".into(),
            baseline_sample_size: 50,
            augment_random: 4,
            eval_max: 128,
            ig_steps: 32,
            ks_coalitions: 128,
            nn_k: 5,
            target: "probability".into(),
            split: [0.6, 0.2, 0.2],
            stratified: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSettings {
    pub sizes: Vec<usize>,
    pub repeats: usize,
    pub method: String,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self { sizes: vec![5, 10, 25, 50, 100], repeats: 5, method: "deep_shap".into() }
    }
}

/// Axes resolved into typed core values.
#[derive(Debug, Clone)]
pub struct ResolvedGrid {
    pub methods: Vec<MethodSpec>,
    pub baselines: Vec<BaselineKind>,
    pub perturbations: Vec<PerturbationKind>,
    pub modes: Vec<RankScope>,
    pub metric: CapabilityMetric,
    pub target: ExplainTarget,
}

impl GridConfig {
    pub fn from_str(raw: &str) -> Result<Self, ConfigError> {
        let cfg: GridConfig = toml::from_str(raw).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        Self::from_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != CONFIG_VERSION {
            return Err(ConfigError::Version(self.version));
        }
        if self.datasets.is_empty() {
            return Err(ConfigError::Invalid("at least one dataset required".into()));
        }
        let mut names = std::collections::HashSet::new();
        for ds in &self.datasets {
            if !names.insert(ds.name().to_string()) {
                return Err(ConfigError::Invalid(format!("duplicate dataset name `{}`", ds.name())));
            }
        }
        if self.experiment.trials == 0 {
            return Err(ConfigError::Invalid("trials must be at least 1".into()));
        }
        let s: f64 = self.experiment.split.iter().sum();
        if (s - 1.0).abs() > 1e-9 || self.experiment.split.iter().any(|&f| f <= 0.0) {
            return Err(ConfigError::Invalid("split fractions must be positive and sum to 1".into()));
        }
        self.resolve_grid()?;
        Ok(())
    }

    /// Map the string axes onto core types, enforcing the distribution role
    /// table: baseline-only kinds cannot perturb and vice versa.
    pub fn resolve_grid(&self) -> Result<ResolvedGrid, ConfigError> {
        let methods = self
            .grid
            .methods
            .iter()
            .map(|m| self.resolve_method(m))
            .collect::<Result<Vec<_>, _>>()?;
        let baselines = self
            .grid
            .baselines
            .iter()
            .map(|b| self.resolve_baseline(b))
            .collect::<Result<Vec<_>, _>>()?;
        let perturbations = self
            .grid
            .perturbations
            .iter()
            .map(|p| resolve_perturbation(p))
            .collect::<Result<Vec<_>, _>>()?;
        let modes = self
            .grid
            .modes
            .iter()
            .map(|m| match m.as_str() {
                "local" => Ok(RankScope::Local),
                "global" => Ok(RankScope::Global),
                other => Err(ConfigError::Unknown { what: "mode", name: other.into() }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let metric = match self.experiment.metric.as_str() {
            "accuracy" => CapabilityMetric::Accuracy,
            "auroc" => CapabilityMetric::Auroc,
            other => return Err(ConfigError::Unknown { what: "metric", name: other.into() }),
        };
        let target = match self.experiment.target.as_str() {
            "probability" => ExplainTarget::Probability,
            "logit" => ExplainTarget::Logit,
            other => return Err(ConfigError::Unknown { what: "target", name: other.into() }),
        };
        if methods.is_empty() || baselines.is_empty() || perturbations.is_empty() || modes.is_empty() {
            return Err(ConfigError::Invalid("every grid axis needs at least one entry".into()));
        }
        Ok(ResolvedGrid { methods, baselines, perturbations, modes, metric, target })
    }

    fn resolve_method(&self, name: &str) -> Result<MethodSpec, ConfigError> {
        match name {
            "integrated_gradients" => {
                Ok(MethodSpec::IntegratedGradients { steps: self.experiment.ig_steps })
            }
            "kernel_shap" => Ok(MethodSpec::KernelShap {
                coalitions: CoalitionSpec::Sampled(self.experiment.ks_coalitions),
            }),
            "kernel_shap_exact" => Ok(MethodSpec::KernelShap { coalitions: CoalitionSpec::Auto }),
            "deep_shap" => Ok(MethodSpec::DeepShap),
            other => Err(ConfigError::Unknown { what: "method", name: other.into() }),
        }
    }

    fn resolve_baseline(&self, name: &str) -> Result<BaselineKind, ConfigError> {
        match name {
            "constant_median" => Ok(BaselineKind::ConstantMedian),
            "training" => Ok(BaselineKind::Training),
            "opposite_class" => Ok(BaselineKind::OppositeClass),
            "nearest_neighbors" => Ok(BaselineKind::NearestNeighbors { k: self.experiment.nn_k }),
            "marginal" | "max_distance" => Err(ConfigError::RoleViolation {
                name: name.into(),
                role: "baseline",
                allowed: "perturbation",
            }),
            other => Err(ConfigError::Unknown { what: "baseline", name: other.into() }),
        }
    }

    /// Canonical hash over the semantic content: whitespace, comments, and
    /// key order do not matter.
    pub fn config_hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = serde_json::to_string(&value).expect("canonical form");
        hex_digest(canonical.as_bytes())
    }
}

fn resolve_perturbation(name: &str) -> Result<PerturbationKind, ConfigError> {
    match name {
        "constant_median" => Ok(PerturbationKind::ConstantMedian),
        "marginal" => Ok(PerturbationKind::Marginal),
        "max_distance" => Ok(PerturbationKind::MaxDistance),
        "training" | "opposite_class" | "nearest_neighbors" => Err(ConfigError::RoleViolation {
            name: name.into(),
            role: "perturbation",
            allowed: "baseline",
        }),
        other => Err(ConfigError::Unknown { what: "perturbation", name: other.into() }),
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"
version = 1
seed = 7

[[datasets]]
kind = "synthetic"
name = "synthetic"
n_samples = 200

[grid]
methods = ["deep_shap"]
baselines = ["training"]
perturbations = ["constant_median"]
modes = ["global"]
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = GridConfig::from_str(MINIMAL).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.experiment.trials, 3);
        assert_eq!(cfg.experiment.baseline_sample_size, 50);
        let grid = cfg.resolve_grid().unwrap();
        assert_eq!(grid.methods.len(), 1);
        assert_eq!(grid.metric, CapabilityMetric::Accuracy);
    }

    #[test]
    fn marginal_as_baseline_is_a_role_violation() {
        let bad = MINIMAL.replace("baselines = [\"training\"]", "baselines = [\"marginal\"]");
        match GridConfig::from_str(&bad) {
            Err(ConfigError::RoleViolation { name, role, .. }) => {
                assert_eq!(name, "marginal");
                assert_eq!(role, "baseline");
            }
            other => panic!("expected role violation, got {other:?}"),
        }
    }

    #[test]
    fn training_as_perturbation_is_a_role_violation() {
        let bad =
            MINIMAL.replace("perturbations = [\"constant_median\"]", "perturbations = [\"training\"]");
        assert!(matches!(GridConfig::from_str(&bad), Err(ConfigError::RoleViolation { .. })));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad = MINIMAL.replace("seed = 7", "seed = \"x\"");
        match GridConfig::from_str(&bad) {
            Err(ConfigError::Parse(msg)) => assert!(msg.contains("line"), "message: {msg}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn hash_ignores_formatting_but_not_semantics() {
        let cfg = GridConfig::from_str(MINIMAL).unwrap();
        let spaced = MINIMAL.replace("seed = 7", "seed   =   7   # comment");
        assert_eq!(cfg.config_hash(), GridConfig::from_str(&spaced).unwrap().config_hash());
        let changed = MINIMAL.replace("seed = 7", "seed = 8");
        assert_ne!(cfg.config_hash(), GridConfig::from_str(&changed).unwrap().config_hash());
    }

    #[test]
    fn version_gate() {
        let bad = MINIMAL.replace("version = 1", "version = 99");
        assert!(matches!(GridConfig::from_str(&bad), Err(ConfigError::Version(99))));
    }
}
