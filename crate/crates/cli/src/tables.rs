//! Summary tables over a completed grid: mean quadrant-III area by
//! perturbation and mean area-between-random by baseline, each split into
//! local and global columns.
//!
//! Averaging scopes: the perturbation table averages over datasets,
//! baselines, and methods; the baseline table averages over datasets,
//! perturbations, and methods.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::CellResult;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("grid incomplete; missing cells: {}", missing.join(", "))]
    IncompleteGrid { missing: Vec<String> },
    #[error("no cells to aggregate")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub name: String,
    pub local: f64,
    pub global: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tables {
    pub quadrant3_by_perturbation: Vec<TableRow>,
    pub area_between_by_baseline: Vec<TableRow>,
}

const PERTURBATION_ORDER: [&str; 3] = ["constant_median", "marginal", "max_distance"];
const BASELINE_ORDER: [&str; 4] = ["nearest_neighbors", "constant_median", "training", "opposite_class"];

/// Aggregate cell results into the two summary tables. Fails with the list
/// of missing cells when `expected` ids are absent from `cells`.
pub fn report_tables(expected: &[String], cells: &[CellResult]) -> Result<Tables, TableError> {
    let missing: Vec<String> = expected
        .iter()
        .filter(|id| !cells.iter().any(|c| &c.cell_id == *id))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(TableError::IncompleteGrid { missing });
    }
    if cells.is_empty() {
        return Err(TableError::Empty);
    }

    let mean = |f: &dyn Fn(&CellResult) -> bool, v: &dyn Fn(&CellResult) -> f64| -> Option<f64> {
        let selected: Vec<f64> = cells.iter().filter(|c| f(c)).map(|c| v(c)).collect();
        if selected.is_empty() { None } else { Some(selected.iter().sum::<f64>() / selected.len() as f64) }
    };

    let mut quadrant3 = Vec::new();
    for name in PERTURBATION_ORDER {
        let local = mean(
            &|c| c.perturbation_label() == name && c.mode_label() == "local",
            &|c| c.areas.quadrant3_area,
        );
        let global = mean(
            &|c| c.perturbation_label() == name && c.mode_label() == "global",
            &|c| c.areas.quadrant3_area,
        );
        if let (Some(local), Some(global)) = (local, global) {
            quadrant3.push(TableRow { name: name.into(), local, global });
        }
    }
    let mut between = Vec::new();
    for name in BASELINE_ORDER {
        let local = mean(
            &|c| c.baseline_label() == name && c.mode_label() == "local",
            &|c| c.areas.area_between_random,
        );
        let global = mean(
            &|c| c.baseline_label() == name && c.mode_label() == "global",
            &|c| c.areas.area_between_random,
        );
        if let (Some(local), Some(global)) = (local, global) {
            between.push(TableRow { name: name.into(), local, global });
        }
    }
    Ok(Tables { quadrant3_by_perturbation: quadrant3, area_between_by_baseline: between })
}

/// Write both tables as CSV; returns the written paths.
pub fn write_tables(tables: &Tables, dir: &Path) -> Result<Vec<PathBuf>, TableError> {
    std::fs::create_dir_all(dir)?;
    let q3 = dir.join("quadrant3_by_perturbation.csv");
    let mut out = String::from("perturbation,local,global\n");
    for row in &tables.quadrant3_by_perturbation {
        out.push_str(&format!("{},{},{}\n", row.name, row.local, row.global));
    }
    std::fs::write(&q3, out)?;
    let ab = dir.join("area_between_by_baseline.csv");
    let mut out = String::from("baseline,local,global\n");
    for row in &tables.area_between_by_baseline {
        out.push_str(&format!("{},{},{}\n", row.name, row.local, row.global));
    }
    std::fs::write(&ab, out)?;
    Ok(vec![q3, ab])
}
