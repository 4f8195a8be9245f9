//! End-to-end grid execution: prepare datasets and models once, run every
//! (dataset, method, baseline, perturbation, mode) cell with its guardrails
//! and area measures, and leave a manifest tying all artifacts together.
//!
//! Cells are cached by a per-cell config hash: rerunning an unchanged
//! config recomputes nothing, and a forced rerun reproduces byte-identical
//! result files from the same seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ablate_core::ablation::{
    AblationResult, ExperimentConfig, TrainContext, random_explanation_curve, run_ablation,
};
use ablate_core::data::{
    Dataset, EncodedView, Encoder, GroundTruth, augment_random_features, export_csv, load_csv,
    load_schema, split, synthesize,
};
use ablate_core::distributions::{BaselineKind, PerturbationKind};
use ablate_core::explain::{MethodSpec, RankScope};
use ablate_core::metrics::{
    AreaReport, GuardrailSet, SweepPoint, area_between_random, horizontal_guardrail,
    quadrant3_area, sample_size_sweep, vertical_guardrail,
};
use ablate_core::model::{
    CapabilityMetric, MlpModel, Model, load_checkpoint, save_checkpoint, train_mlp,
};
use ablate_core::rng::derive_seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, DatasetConfig, GridConfig, ResolvedGrid};
use crate::manifest::{CellEntry, CellStatus, DatasetEntry, RunManifest};
use crate::plot::{CurveSeries, PlotSpec, write_plot};
use crate::tables::{TableError, report_tables, write_tables};

const TAG_DATASET: u64 = 0x601;
const TAG_AUGMENT: u64 = 0x602;
const TAG_SPLIT: u64 = 0x603;
const TAG_MODEL: u64 = 0x604;
const TAG_WORST: u64 = 0x605;
const TAG_RANDOM_CURVE: u64 = 0x606;
const TAG_CELL: u64 = 0x607;
const TAG_SWEEP: u64 = 0x608;

#[derive(Debug, Error)]
pub enum GridError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] ablate_core::data::DataError),
    #[error(transparent)]
    Model(#[from] ablate_core::model::ModelError),
    #[error(transparent)]
    Ablation(#[from] ablate_core::ablation::AblationError),
    #[error(transparent)]
    Metric(#[from] ablate_core::metrics::MetricError),
    #[error(transparent)]
    Plot(#[from] crate::plot::PlotError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Manifest(#[from] crate::manifest::ManifestError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GridOptions {
    pub jobs: Option<usize>,
    pub force: bool,
    pub seed_override: Option<u64>,
}

/// Everything a grid cell needs about one dataset, computed once.
pub struct PreparedDataset {
    pub name: String,
    pub fingerprint: String,
    pub train: Dataset,
    pub val: Dataset,
    pub eval: Dataset,
    pub encoder: Encoder,
    pub train_view: EncodedView,
    pub eval_view: EncodedView,
    pub ground_truth: Option<GroundTruth>,
    pub model: Model,
    pub worst: MlpModel,
    pub horizontal: f64,
    pub random_curves: BTreeMap<String, AblationResult>,
    pub model_path: PathBuf,
    pub worst_path: PathBuf,
}

fn fnv64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

fn dataset_fingerprint(ds: &Dataset) -> String {
    let mut h = ds.schema_hash();
    for v in ds.rows() {
        h = h.rotate_left(5) ^ fnv64(&v.to_bits().to_le_bytes());
    }
    h = h.rotate_left(5) ^ fnv64(ds.labels());
    format!("{h:016x}")
}

/// Load or synthesize one dataset, augment, split, encode, and train (or
/// load cached) models.
pub fn prepare_dataset(
    cfg: &GridConfig,
    ds_cfg: &DatasetConfig,
    grid: &ResolvedGrid,
    seed: u64,
    out: &Path,
) -> Result<PreparedDataset, GridError> {
    let name = ds_cfg.name().to_string();
    let name_tag = fnv64(name.as_bytes());
    let base = match ds_cfg {
        DatasetConfig::Synthetic { .. } => {
            let spec = ds_cfg
                .synthetic_spec(derive_seed(seed, &[TAG_DATASET, name_tag]))
                .expect("synthetic config");
            let (ds, gt) = synthesize(&spec)?;
            (ds, Some(gt))
        }
        DatasetConfig::Csv { path, schema, label, .. } => {
            let schema = load_schema(schema)?;
            (load_csv(path, &schema, label)?, None)
        }
    };
    let (ds, ground_truth) = base;
    let ds = augment_random_features(
        &ds,
        cfg.experiment.augment_random,
        derive_seed(seed, &[TAG_AUGMENT, name_tag]),
    );
    let fingerprint = dataset_fingerprint(&ds);
    let [f_train, f_val, f_test] = cfg.experiment.split;
    let (train, val, test) = split(
        &ds,
        (f_train, f_val, f_test),
        derive_seed(seed, &[TAG_SPLIT, name_tag]),
        cfg.experiment.stratified,
    )?;
    let eval = if cfg.experiment.eval_max > 0 && test.n() > cfg.experiment.eval_max {
        test.subset(&(0..cfg.experiment.eval_max).collect::<Vec<_>>())?
    } else {
        test
    };
    let encoder = Encoder::fit(&train, &(0..train.n()).collect::<Vec<_>>())?;
    let train_view = encoder.transform(&train)?;
    let eval_view = encoder.transform(&eval)?;

    let models_dir = out.join("models");
    std::fs::create_dir_all(&models_dir)?;
    let model_cfg_tag = fnv64(
        serde_json::to_string(&cfg.model).map_err(|e| GridError::Json(e.to_string()))?.as_bytes(),
    );
    let model_path = models_dir.join(format!("{fingerprint}-{model_cfg_tag:08x}-mlp.json"));
    let worst_path = models_dir.join(format!("{fingerprint}-{model_cfg_tag:08x}-worst.json"));
    let model_seed = derive_seed(seed, &[TAG_MODEL, name_tag]);
    let worst_seed = derive_seed(seed, &[TAG_WORST, name_tag]);
    let model: Model = match load_checkpoint(&model_path, ds.schema_hash()) {
        Ok(m) => m,
        Err(_) => {
            let m: Model =
                train_mlp(&train, &val, &encoder, &cfg.model.train_config(model_seed, false))?.into();
            save_checkpoint(&m, ds.schema_hash(), &model_path)?;
            m
        }
    };
    let worst = match load_checkpoint(&worst_path, ds.schema_hash()) {
        Ok(Model::Mlp(m)) => m,
        _ => {
            let m = train_mlp(&train, &val, &encoder, &cfg.model.train_config(worst_seed, true))?;
            save_checkpoint(&Model::Mlp(m.clone()), ds.schema_hash(), &worst_path)?;
            m
        }
    };
    let horizontal = horizontal_guardrail(&worst, &eval_view, eval.labels(), grid.metric)?;

    let mut random_curves = BTreeMap::new();
    {
        let ctx = TrainContext { train: &train, train_view: &train_view };
        for (pi, &perturbation) in grid.perturbations.iter().enumerate() {
            let curve = random_explanation_curve(
                &model,
                &eval,
                &eval_view,
                perturbation,
                cfg.experiment.trials,
                grid.metric,
                derive_seed(seed, &[TAG_RANDOM_CURVE, name_tag, pi as u64]),
                &ctx,
            )?;
            random_curves.insert(perturbation.label().to_string(), curve);
        }
    }

    Ok(PreparedDataset {
        name,
        fingerprint,
        train,
        val,
        eval,
        encoder,
        train_view,
        eval_view,
        ground_truth,
        model,
        worst,
        horizontal,
        random_curves,
        model_path,
        worst_path,
    })
}

/// The persisted per-cell record (`cells/<id>/result.json`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub cell_id: String,
    pub dataset: String,
    pub config_hash: String,
    pub experiment: ExperimentConfig,
    pub d: usize,
    pub n_eval: usize,
    pub fractions: Vec<f64>,
    pub scores: Vec<Vec<f64>>,
    pub mean_curve: Vec<f64>,
    pub std_curve: Vec<f64>,
    pub guardrails: GuardrailSet,
    pub areas: AreaReport,
}

impl CellResult {
    pub fn method_label(&self) -> &'static str {
        self.experiment.method.kind().label()
    }

    pub fn baseline_label(&self) -> &'static str {
        self.experiment.baseline.label()
    }

    pub fn perturbation_label(&self) -> &'static str {
        self.experiment.perturbation.label()
    }

    pub fn mode_label(&self) -> &'static str {
        self.experiment.mode.label()
    }
}

struct CellSpec {
    id: String,
    dataset_index: usize,
    method: MethodSpec,
    baseline: BaselineKind,
    perturbation: PerturbationKind,
    mode: RankScope,
    seed: u64,
    cell_hash: String,
}

fn cell_id(ds: &str, method: MethodSpec, baseline: BaselineKind, perturbation: PerturbationKind, mode: RankScope) -> String {
    format!(
        "{ds}__{}__{}__{}__{}",
        method.kind().label(),
        baseline.label(),
        perturbation.label(),
        mode.label()
    )
}

fn enumerate_cells(cfg: &GridConfig, grid: &ResolvedGrid, bundles: &[PreparedDataset], seed: u64) -> Vec<CellSpec> {
    let global_hash = cfg.config_hash();
    let mut cells = Vec::new();
    for (di, bundle) in bundles.iter().enumerate() {
        for &method in &grid.methods {
            for &baseline in &grid.baselines {
                for &perturbation in &grid.perturbations {
                    for &mode in &grid.modes {
                        let id = cell_id(&bundle.name, method, baseline, perturbation, mode);
                        cells.push(CellSpec {
                            seed: derive_seed(seed, &[TAG_CELL, fnv64(id.as_bytes())]),
                            cell_hash: crate::config::hex_digest(
                                format!("{global_hash}:{id}:{}", bundle.fingerprint).as_bytes(),
                            ),
                            id,
                            dataset_index: di,
                            method,
                            baseline,
                            perturbation,
                            mode,
                        });
                    }
                }
            }
        }
    }
    cells
}

fn execute_cell(
    cfg: &GridConfig,
    grid: &ResolvedGrid,
    bundle: &PreparedDataset,
    spec: &CellSpec,
) -> Result<CellResult, String> {
    let experiment = ExperimentConfig {
        method: spec.method,
        baseline: spec.baseline,
        perturbation: spec.perturbation,
        mode: spec.mode,
        trials: cfg.experiment.trials,
        metric: grid.metric,
        baseline_sample_size: cfg.experiment.baseline_sample_size,
        target: grid.target,
        seed: spec.seed,
    };
    let ctx = TrainContext { train: &bundle.train, train_view: &bundle.train_view };
    let result = run_ablation(&bundle.model, &bundle.eval, &bundle.eval_view, &experiment, &ctx)
        .map_err(|e| e.to_string())?;
    let random = &bundle.random_curves[spec.perturbation.label()];
    let random_ids = bundle.eval.random_feature_indices();
    let vertical_rank = if random_ids.is_empty() {
        result.d
    } else {
        let mean: f64 = result
            .rankings
            .iter()
            .map(|r| vertical_guardrail(r, &random_ids).map(|k| k as f64))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?
            .iter()
            .sum::<f64>()
            / result.rankings.len() as f64;
        (mean.floor() as usize).clamp(1, result.d)
    };
    let vertical_fraction = vertical_rank as f64 / result.d as f64;
    let guardrails = GuardrailSet {
        horizontal: bundle.horizontal,
        vertical_rank,
        vertical_fraction,
        random_curve: random.mean_curve.clone(),
    };
    let areas = AreaReport {
        quadrant3_area: quadrant3_area(&result.mean_curve, guardrails.horizontal, vertical_fraction),
        area_between_random: area_between_random(&result.mean_curve, &random.mean_curve)
            .map_err(|e| e.to_string())?,
    };
    Ok(CellResult {
        cell_id: spec.id.clone(),
        dataset: bundle.name.clone(),
        config_hash: spec.cell_hash.clone(),
        experiment,
        d: result.d,
        n_eval: result.n_eval,
        fractions: result.fractions(),
        scores: result.scores.rows().into_iter().map(|r| r.to_vec()).collect(),
        mean_curve: result.mean_curve.clone(),
        std_curve: result.std_curve.clone(),
        guardrails,
        areas,
    })
}

fn write_cell(out: &Path, cell: &CellResult) -> Result<(PathBuf, PathBuf), GridError> {
    let dir = out.join("cells").join(&cell.cell_id);
    std::fs::create_dir_all(&dir)?;
    let result_path = dir.join("result.json");
    let json = serde_json::to_string_pretty(cell).map_err(|e| GridError::Json(e.to_string()))?;
    std::fs::write(&result_path, json)?;
    let curve_path = dir.join("curve.csv");
    let mut csv = String::from("trial,k,fraction,score\n");
    for (t, row) in cell.scores.iter().enumerate() {
        for (k, score) in row.iter().enumerate() {
            csv.push_str(&format!("{t},{k},{},{}\n", cell.fractions[k], score));
        }
    }
    std::fs::write(&curve_path, csv)?;
    Ok((result_path, curve_path))
}

fn load_cached_cell(out: &Path, spec: &CellSpec) -> Option<CellResult> {
    let path = out.join("cells").join(&spec.id).join("result.json");
    let raw = std::fs::read_to_string(path).ok()?;
    let cell: CellResult = serde_json::from_str(&raw).ok()?;
    (cell.config_hash == spec.cell_hash).then_some(cell)
}

/// Run the full grid described by `cfg`, reusing cached models and cell
/// results whose config hash is unchanged (unless `force`).
pub fn run_grid(cfg: &GridConfig, out: &Path, opts: &GridOptions) -> Result<RunManifest, GridError> {
    let started = Instant::now();
    let grid = cfg.resolve_grid()?;
    let seed = opts.seed_override.unwrap_or(cfg.seed);
    std::fs::create_dir_all(out)?;

    let bundles: Vec<PreparedDataset> = cfg
        .datasets
        .iter()
        .map(|ds| prepare_dataset(cfg, ds, &grid, seed, out))
        .collect::<Result<_, _>>()?;
    let specs = enumerate_cells(cfg, &grid, &bundles, seed);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.unwrap_or(0))
        .build()
        .expect("thread pool");
    let outcomes: Vec<(CellEntry, Option<CellResult>)> = pool.install(|| {
        specs
            .par_iter()
            .map(|spec| {
                let bundle = &bundles[spec.dataset_index];
                let cell_started = Instant::now();
                if !opts.force {
                    if let Some(cached) = load_cached_cell(out, spec) {
                        let entry = cell_entry(spec, bundle, CellStatus::Ok, true, 0, out);
                        return (entry, Some(cached));
                    }
                }
                match execute_cell(cfg, &grid, bundle, spec) {
                    Ok(cell) => match write_cell(out, &cell) {
                        Ok(_) => {
                            let entry = cell_entry(
                                spec,
                                bundle,
                                CellStatus::Ok,
                                false,
                                cell_started.elapsed().as_millis() as u64,
                                out,
                            );
                            (entry, Some(cell))
                        }
                        Err(e) => (
                            cell_entry(
                                spec,
                                bundle,
                                CellStatus::Failed { error: e.to_string() },
                                false,
                                cell_started.elapsed().as_millis() as u64,
                                out,
                            ),
                            None,
                        ),
                    },
                    Err(error) => (
                        cell_entry(
                            spec,
                            bundle,
                            CellStatus::Failed { error },
                            false,
                            cell_started.elapsed().as_millis() as u64,
                            out,
                        ),
                        None,
                    ),
                }
            })
            .collect()
    });

    let entries: Vec<CellEntry> = outcomes.iter().map(|(e, _)| e.clone()).collect();
    let results: Vec<CellResult> = outcomes.into_iter().filter_map(|(_, r)| r).collect();

    let plots = write_overlay_plots(&grid, &bundles, &results, out)?;

    let expected: Vec<String> = specs.iter().map(|s| s.id.clone()).collect();
    let mut table_paths = Vec::new();
    match report_tables(&expected, &results) {
        Ok(tables) => {
            for p in write_tables(&tables, &out.join("tables"))? {
                table_paths.push(rel(out, &p));
            }
        }
        Err(TableError::IncompleteGrid { .. }) => {} // partial grid: tables skipped
        Err(e) => return Err(e.into()),
    }

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.config_hash(),
        seed,
        datasets: bundles
            .iter()
            .map(|b| DatasetEntry {
                name: b.name.clone(),
                fingerprint: b.fingerprint.clone(),
                n: b.train.n() + b.val.n() + b.eval.n(),
                d: b.train.d(),
                d_enc: b.encoder.d_enc(),
                majority_rate: b.eval.majority_rate(),
                model_path: rel(out, &b.model_path),
                worst_model_path: rel(out, &b.worst_path),
            })
            .collect(),
        cells: entries,
        tables: table_paths,
        plots,
        total_wall_ms: started.elapsed().as_millis() as u64,
    };
    manifest.save(&out.join("manifest.json"))?;
    Ok(manifest)
}

fn cell_entry(
    spec: &CellSpec,
    bundle: &PreparedDataset,
    status: CellStatus,
    cached: bool,
    wall_ms: u64,
    out: &Path,
) -> CellEntry {
    let dir = out.join("cells").join(&spec.id);
    CellEntry {
        id: spec.id.clone(),
        dataset: bundle.name.clone(),
        method: spec.method.kind().label().to_string(),
        baseline: spec.baseline.label().to_string(),
        perturbation: spec.perturbation.label().to_string(),
        mode: spec.mode.label().to_string(),
        trials: 0,
        seed: spec.seed,
        status,
        result_path: rel(out, &dir.join("result.json")),
        curve_path: rel(out, &dir.join("curve.csv")),
        cached,
        wall_ms,
    }
}

fn rel(base: &Path, path: &Path) -> String {
    path.strip_prefix(base).unwrap_or(path).to_string_lossy().into_owned()
}

/// One overlay plot per (dataset, method, perturbation, mode): all baseline
/// curves plus the random-order control and both guardrails.
fn write_overlay_plots(
    grid: &ResolvedGrid,
    bundles: &[PreparedDataset],
    results: &[CellResult],
    out: &Path,
) -> Result<Vec<String>, GridError> {
    let dir = out.join("plots");
    std::fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    for bundle in bundles {
        for &method in &grid.methods {
            for &perturbation in &grid.perturbations {
                for &mode in &grid.modes {
                    let members: Vec<&CellResult> = results
                        .iter()
                        .filter(|c| {
                            c.dataset == bundle.name
                                && c.method_label() == method.kind().label()
                                && c.perturbation_label() == perturbation.label()
                                && c.mode_label() == mode.label()
                        })
                        .collect();
                    if members.is_empty() {
                        continue;
                    }
                    let mut spec = PlotSpec::new(format!(
                        "{} | {} | {} | {}",
                        bundle.name,
                        method.kind().label(),
                        perturbation.label(),
                        mode.label()
                    ));
                    for cell in &members {
                        spec.curves.push(CurveSeries {
                            label: cell.baseline_label().to_string(),
                            mean: cell.mean_curve.clone(),
                            band: Some(cell.std_curve.clone()),
                        });
                    }
                    let random = &bundle.random_curves[perturbation.label()];
                    spec.curves.push(CurveSeries {
                        label: "random order".to_string(),
                        mean: random.mean_curve.clone(),
                        band: Some(random.std_curve.clone()),
                    });
                    spec.horizontal = Some(bundle.horizontal);
                    spec.vertical = Some(
                        members.iter().map(|c| c.guardrails.vertical_fraction).sum::<f64>()
                            / members.len() as f64,
                    );
                    let name = format!(
                        "{}__{}__{}__{}.svg",
                        bundle.name,
                        method.kind().label(),
                        perturbation.label(),
                        mode.label()
                    );
                    let path = dir.join(&name);
                    write_plot(&spec, &path)?;
                    written.push(rel(out, &path));
                }
            }
        }
    }
    Ok(written)
}

/// Baseline sample-size sweep on the first configured dataset; writes
/// `sweep.csv` and `sweep.svg` under `out`.
pub fn run_sweep(cfg: &GridConfig, out: &Path, seed_override: Option<u64>) -> Result<Vec<SweepPoint>, GridError> {
    let grid = cfg.resolve_grid()?;
    let seed = seed_override.unwrap_or(cfg.seed);
    std::fs::create_dir_all(out)?;
    let bundle = prepare_dataset(cfg, &cfg.datasets[0], &grid, seed, out)?;
    let method = match cfg.sweep.method.as_str() {
        "deep_shap" => MethodSpec::DeepShap,
        "integrated_gradients" => MethodSpec::IntegratedGradients { steps: cfg.experiment.ig_steps },
        "kernel_shap" => MethodSpec::KernelShap {
            coalitions: ablate_core::explain::CoalitionSpec::Sampled(cfg.experiment.ks_coalitions),
        },
        other => return Err(ConfigError::Unknown { what: "sweep method", name: other.into() }.into()),
    };
    let mut sizes: Vec<usize> = cfg.sweep.sizes.iter().copied().filter(|&s| s > 0).collect();
    sizes.sort_unstable();
    sizes.dedup();
    sizes.retain(|&s| s < bundle.train.n());
    sizes.push(bundle.train.n());
    let points = sample_size_sweep(
        &bundle.model,
        &bundle.train_view,
        &bundle.eval_view.matrix,
        method,
        grid.target,
        &sizes,
        cfg.sweep.repeats,
        derive_seed(seed, &[TAG_SWEEP]),
    )?;
    let mut csv = String::from("size,mean_tau,std_tau\n");
    for p in &points {
        csv.push_str(&format!("{},{},{}\n", p.size, p.mean_tau, p.std_tau));
    }
    std::fs::write(out.join("sweep.csv"), csv)?;

    let mut spec = PlotSpec::new(format!("baseline sample-size sweep | {}", bundle.name));
    spec.x_label = "baseline sample size".into();
    spec.y_label = "Kendall tau vs full-training baseline".into();
    let denom = (points.len() - 1).max(1) as f64;
    spec.x_ticks = Some(
        points
            .iter()
            .enumerate()
            .map(|(i, p)| (i as f64 / denom, p.size.to_string()))
            .collect(),
    );
    spec.curves.push(CurveSeries {
        label: cfg.sweep.method.clone(),
        mean: points.iter().map(|p| p.mean_tau).collect(),
        band: Some(points.iter().map(|p| p.std_tau).collect()),
    });
    write_plot(&spec, &out.join("sweep.svg"))?;
    Ok(points)
}

/// Materialize synthetic datasets as CSV + schema sidecar + ground truth.
pub fn run_synth(cfg: &GridConfig, out: &Path, seed_override: Option<u64>) -> Result<Vec<PathBuf>, GridError> {
    let seed = seed_override.unwrap_or(cfg.seed);
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for ds_cfg in &cfg.datasets {
        let Some(spec) =
            ds_cfg.synthetic_spec(derive_seed(seed, &[TAG_DATASET, fnv64(ds_cfg.name().as_bytes())]))
        else {
            continue;
        };
        let (ds, gt) = synthesize(&spec)?;
        let csv_path = out.join(format!("{}.csv", ds_cfg.name()));
        let schema_path = out.join(format!("{}.schema.json", ds_cfg.name()));
        let gt_path = out.join(format!("{}.ground_truth.json", ds_cfg.name()));
        export_csv(&ds, &csv_path, &schema_path)?;
        std::fs::write(&gt_path, serde_json::to_string_pretty(&gt).map_err(|e| GridError::Json(e.to_string()))?)?;
        written.extend([csv_path, schema_path, gt_path]);
    }
    Ok(written)
}

/// Train and checkpoint models for every dataset without running cells.
pub fn run_train(cfg: &GridConfig, out: &Path, seed_override: Option<u64>) -> Result<Vec<(String, f64)>, GridError> {
    let grid = cfg.resolve_grid()?;
    let seed = seed_override.unwrap_or(cfg.seed);
    std::fs::create_dir_all(out)?;
    let mut report = Vec::new();
    for ds_cfg in &cfg.datasets {
        let bundle = prepare_dataset(cfg, ds_cfg, &grid, seed, out)?;
        let acc = ablate_core::model::evaluate(
            &bundle.model,
            &bundle.eval_view.matrix,
            bundle.eval.labels(),
            CapabilityMetric::Accuracy,
        )?;
        report.push((bundle.name.clone(), acc));
    }
    Ok(report)
}
