//! Guardrailed ablation studies for tabular feature-attribution methods.
//!
//! The crate covers the full pipeline: tabular data handling with categorical
//! one-hot encoding ([`data`]), small differentiable classifiers ([`model`]),
//! baseline and perturbation distributions ([`distributions`]), local and
//! global attribution methods ([`explain`]), the sequential-perturbation
//! ablation loop with its random-order control ([`ablation`]), and the
//! guardrail / area / rank-correlation measures used to judge the resulting
//! curves ([`metrics`]).

pub mod ablation;
pub mod data;
pub mod distributions;
pub mod explain;
pub mod metrics;
pub mod model;
pub mod rng;

pub(crate) mod linalg;
