//! Deterministic SVG renderer for ablation curves.
//!
//! Curves are drawn as mean polylines with an optional shaded band of one
//! standard deviation; guardrails are dashed lines (horizontal capability
//! floor, vertical random-feature rank). Identical inputs produce
//! byte-identical SVG.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("plot spec has no curves")]
    EmptySpec,
    #[error("curve `{0}` is empty")]
    EmptyCurve(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveSeries {
    pub label: String,
    pub mean: Vec<f64>,
    /// Per-point standard deviation for the shaded band.
    pub band: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub curves: Vec<CurveSeries>,
    /// Horizontal dashed guardrail (worst-case model capability).
    pub horizontal: Option<f64>,
    /// Vertical dashed guardrail (best random-feature rank fraction).
    pub vertical: Option<f64>,
    /// Custom x tick positions and labels; defaults to 0..1 quarters.
    pub x_ticks: Option<Vec<(f64, String)>>,
}

impl PlotSpec {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: "fraction of features ablated".into(),
            y_label: "model capability".into(),
            curves: Vec::new(),
            horizontal: None,
            vertical: None,
            x_ticks: None,
        }
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 62.0;
const MARGIN_R: f64 = 170.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 54.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Render the spec to an SVG document string.
pub fn render_plot(spec: &PlotSpec) -> Result<String, PlotError> {
    if spec.curves.is_empty() {
        return Err(PlotError::EmptySpec);
    }
    for c in &spec.curves {
        if c.mean.is_empty() {
            return Err(PlotError::EmptyCurve(c.label.clone()));
        }
    }
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let x_of = |frac: f64| MARGIN_L + frac.clamp(0.0, 1.0) * plot_w;
    let y_of = |v: f64| MARGIN_T + (1.0 - v.clamp(0.0, 1.0)) * plot_h;

    let mut svg = String::with_capacity(16 * 1024);
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        fmt(MARGIN_L + plot_w / 2.0),
        escape(&spec.title)
    ));

    // frame and ticks
    svg.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
        fmt(MARGIN_L),
        fmt(MARGIN_T),
        fmt(plot_w),
        fmt(plot_h)
    ));
    let default_ticks: Vec<(f64, String)> =
        (0..=4).map(|i| (i as f64 / 4.0, format!("{:.2}", i as f64 / 4.0))).collect();
    let x_ticks = spec.x_ticks.clone().unwrap_or_else(|| default_ticks.clone());
    for (frac, label) in &x_ticks {
        let x = x_of(*frac);
        svg.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{y0}\" x2=\"{x}\" y2=\"{y1}\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
            x = fmt(x),
            y0 = fmt(MARGIN_T + plot_h),
            y1 = fmt(MARGIN_T + plot_h + 5.0)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            fmt(x),
            fmt(MARGIN_T + plot_h + 18.0),
            escape(label)
        ));
    }
    for (frac, label) in &default_ticks {
        let y = y_of(*frac);
        svg.push_str(&format!(
            "<line x1=\"{x0}\" y1=\"{y}\" x2=\"{x1}\" y2=\"{y}\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
            x0 = fmt(MARGIN_L - 5.0),
            x1 = fmt(MARGIN_L),
            y = fmt(y)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            fmt(MARGIN_L - 8.0),
            fmt(y + 4.0),
            escape(label)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
        fmt(MARGIN_L + plot_w / 2.0),
        fmt(HEIGHT - 14.0),
        escape(&spec.x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        fmt(MARGIN_T + plot_h / 2.0),
        fmt(MARGIN_T + plot_h / 2.0),
        escape(&spec.y_label)
    ));

    // shaded bands first so curves draw on top
    for (ci, curve) in spec.curves.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        if let Some(band) = &curve.band {
            let n = curve.mean.len();
            let mut points = Vec::with_capacity(2 * n);
            for (k, (&m, &s)) in curve.mean.iter().zip(band).enumerate() {
                let frac = k as f64 / (n - 1).max(1) as f64;
                points.push(format!("{},{}", fmt(x_of(frac)), fmt(y_of(m + s))));
            }
            for (k, (&m, &s)) in curve.mean.iter().zip(band).enumerate().rev() {
                let frac = k as f64 / (n - 1).max(1) as f64;
                points.push(format!("{},{}", fmt(x_of(frac)), fmt(y_of(m - s))));
            }
            svg.push_str(&format!(
                "<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"0.15\" stroke=\"none\"/>\n",
                points.join(" "),
                color
            ));
        }
    }
    for (ci, curve) in spec.curves.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        let n = curve.mean.len();
        let points: Vec<String> = curve
            .mean
            .iter()
            .enumerate()
            .map(|(k, &m)| {
                let frac = k as f64 / (n - 1).max(1) as f64;
                format!("{},{}", fmt(x_of(frac)), fmt(y_of(m)))
            })
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\"/>\n",
            points.join(" "),
            color
        ));
    }

    if let Some(h) = spec.horizontal {
        let y = y_of(h);
        svg.push_str(&format!(
            "<line x1=\"{x0}\" y1=\"{y}\" x2=\"{x1}\" y2=\"{y}\" stroke=\"#444444\" stroke-width=\"1.4\" stroke-dasharray=\"6 4\" class=\"guardrail-horizontal\"/>\n",
            x0 = fmt(MARGIN_L),
            x1 = fmt(MARGIN_L + plot_w),
            y = fmt(y)
        ));
    }
    if let Some(v) = spec.vertical {
        let x = x_of(v);
        svg.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{y0}\" x2=\"{x}\" y2=\"{y1}\" stroke=\"#444444\" stroke-width=\"1.4\" stroke-dasharray=\"6 4\" class=\"guardrail-vertical\"/>\n",
            x = fmt(x),
            y0 = fmt(MARGIN_T),
            y1 = fmt(MARGIN_T + plot_h)
        ));
    }

    // legend
    let legend_x = MARGIN_L + plot_w + 12.0;
    let mut legend_y = MARGIN_T + 10.0;
    for (ci, curve) in spec.curves.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        svg.push_str(&format!(
            "<line x1=\"{x0}\" y1=\"{y}\" x2=\"{x1}\" y2=\"{y}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            x0 = fmt(legend_x),
            x1 = fmt(legend_x + 18.0),
            y = fmt(legend_y - 4.0)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\">{}</text>\n",
            fmt(legend_x + 24.0),
            fmt(legend_y),
            escape(&curve.label)
        ));
        legend_y += 16.0;
    }
    if spec.horizontal.is_some() {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" fill=\"#444444\">-- capability floor</text>\n",
            fmt(legend_x),
            fmt(legend_y)
        ));
        legend_y += 14.0;
    }
    if spec.vertical.is_some() {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" fill=\"#444444\">-- random-feature rank</text>\n",
            fmt(legend_x),
            fmt(legend_y)
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn write_plot(spec: &PlotSpec, path: &Path) -> Result<(), PlotError> {
    std::fs::write(path, render_plot(spec)?)?;
    Ok(())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_spec() -> PlotSpec {
        let mut spec = PlotSpec::new("flat");
        spec.curves.push(CurveSeries { label: "c".into(), mean: vec![0.8; 5], band: None });
        spec.horizontal = Some(0.5);
        spec
    }

    #[test]
    fn empty_spec_is_rejected() {
        assert!(matches!(render_plot(&PlotSpec::new("x")), Err(PlotError::EmptySpec)));
    }

    #[test]
    fn horizontal_guardrail_renders_one_dashed_line_at_half() {
        let svg = render_plot(&flat_spec()).unwrap();
        let dashed: Vec<&str> = svg.lines().filter(|l| l.contains("stroke-dasharray")).collect();
        assert_eq!(dashed.len(), 1);
        // y mapping of 0.5 over the plot area
        let y = 40.0 + 0.5 * (440.0 - 40.0 - 54.0);
        assert!(dashed[0].contains(&format!("y1=\"{y:.2}\"")), "{}", dashed[0]);
        assert!(dashed[0].contains("guardrail-horizontal"));
    }

    #[test]
    fn rendering_is_byte_deterministic() {
        let mut spec = flat_spec();
        spec.curves.push(CurveSeries {
            label: "c2".into(),
            mean: vec![0.8; 5],
            band: Some(vec![0.05; 5]),
        });
        spec.vertical = Some(0.3);
        let a = render_plot(&spec).unwrap();
        let b = render_plot(&spec).unwrap();
        assert_eq!(a, b);
        // two identical curves produce two overlapping polylines
        assert_eq!(a.matches("<polyline").count(), 2);
    }

    #[test]
    fn multi_baseline_overlay_has_curves_and_two_guardrails() {
        let mut spec = PlotSpec::new("baseline comparison");
        for label in ["constant_median", "training", "opposite_class", "nearest_neighbors"] {
            spec.curves.push(CurveSeries {
                label: label.into(),
                mean: vec![0.9, 0.7, 0.55, 0.5],
                band: Some(vec![0.02; 4]),
            });
        }
        spec.horizontal = Some(0.52);
        spec.vertical = Some(0.6);
        let svg = render_plot(&spec).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert_eq!(svg.matches("stroke-dasharray").count(), 2);
        assert_eq!(svg.matches("<polygon").count(), 4);
    }
}
