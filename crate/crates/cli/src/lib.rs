//! Experiment orchestration on top of `ablate-core`: declarative grid
//! configs, cached end-to-end runs with a manifest, SVG curve plots, and
//! summary tables.

pub mod config;
pub mod grid;
pub mod manifest;
pub mod plot;
pub mod tables;
