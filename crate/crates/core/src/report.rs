//! End-to-end pipeline (directions, aggregation, three dispatch methods,
//! quality metrics) and its CSV, JSON and SVG outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::aggregation::{aggregate, sample_directions, VertexFlexibility};
use crate::dispatch::{
    peak_shave_centralized_with, peak_shave_vertex, uncontrolled_baseline, CentralizedOptions,
    DispatchResult,
};
use crate::error::Result;
use crate::oracle::{approximation_quality, QualityMetrics};
use crate::scenario::Scenario;
use crate::storage::{build_polytope, check_feasible, StorageDevice};
use crate::FORMAT_VERSION;

pub const CSV_HEADER: &str = "t,base_kw,uncontrolled_kw,vertex_kw,central_kw";

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub g: usize,
    pub seed: u64,
    /// Random directions used for the quality metrics; 0 skips them.
    pub quality_samples: usize,
    pub centralized: CentralizedOptions,
}

impl PipelineConfig {
    /// `g = d^2` directions.
    pub fn quadratic(d: usize, seed: u64) -> Self {
        Self {
            g: d * d,
            seed,
            quality_samples: 100,
            centralized: CentralizedOptions::default(),
        }
    }
}

/// Deterministic run summary; wall-clock times live in [`Timings`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub format_version: u32,
    pub d: usize,
    pub dt: f64,
    pub n_devices: usize,
    pub g: usize,
    pub columns: usize,
    pub seed: u64,
    pub peak_base: f64,
    pub peak_uncontrolled: f64,
    pub peak_vertex: f64,
    pub peak_centralized: f64,
    /// Peak reductions relative to uncontrolled charging, kW.
    pub reduction_vertex: f64,
    pub reduction_centralized: f64,
    pub reduction_vertex_pct: f64,
    pub reduction_centralized_pct: f64,
    /// `reduction_vertex / reduction_centralized` (1 when both are zero).
    pub reduction_ratio: f64,
    pub centralized_optimality_gap: Option<f64>,
    pub uncontrolled_infeasible_devices: Vec<usize>,
    pub vertex_infeasible_devices: Vec<usize>,
    pub quality: Option<QualityMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Timings {
    pub format_version: u32,
    pub aggregate_seconds: f64,
    pub vertex_solve_seconds: f64,
    pub centralized_solve_seconds: f64,
    pub quality_seconds: f64,
    pub total_seconds: f64,
}

pub struct PipelineOutcome {
    pub summary: Summary,
    pub timings: Timings,
    pub flex: VertexFlexibility<f64>,
    pub uncontrolled: DispatchResult<f64>,
    pub vertex: DispatchResult<f64>,
    pub centralized: DispatchResult<f64>,
}

fn infeasible_parts(devices: &[StorageDevice<f64>], r: &DispatchResult<f64>) -> Result<Vec<usize>> {
    let mut bad = Vec::new();
    if let Some(parts) = &r.per_device {
        for (i, (dev, p)) in devices.iter().zip(parts).enumerate() {
            let tol = build_polytope(dev).default_tolerance().max(1e-7);
            if !check_feasible(dev, p, tol)?.feasible {
                bad.push(i);
            }
        }
    }
    Ok(bad)
}

fn pct(part: f64, whole: f64) -> f64 {
    if whole == 0.0 {
        0.0
    } else {
        100.0 * part / whole
    }
}

pub fn run_pipeline(scenario: &Scenario<f64>, cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    let start = Instant::now();
    let devices = scenario.devices()?;
    let dirs = sample_directions(scenario.d, cfg.g, cfg.seed)?;

    let t0 = Instant::now();
    let flex = aggregate(&devices, &dirs)?;
    let aggregate_seconds = t0.elapsed().as_secs_f64();

    let uncontrolled = uncontrolled_baseline(scenario)?;
    let vertex = peak_shave_vertex(scenario, &flex)?;
    let centralized = peak_shave_centralized_with(scenario, &cfg.centralized)?;

    let t1 = Instant::now();
    let quality = if cfg.quality_samples > 0 && !devices.is_empty() {
        Some(approximation_quality(
            &devices,
            &flex,
            cfg.quality_samples,
            cfg.seed,
        )?)
    } else {
        None
    };
    let quality_seconds = t1.elapsed().as_secs_f64();

    let peak_base = scenario
        .base_load
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let reduction_vertex = uncontrolled.peak_kw - vertex.peak_kw;
    let reduction_centralized = uncontrolled.peak_kw - centralized.peak_kw;
    let reduction_ratio = if reduction_centralized.abs() <= 1e-12 {
        1.0
    } else {
        reduction_vertex / reduction_centralized
    };
    let summary = Summary {
        format_version: FORMAT_VERSION,
        d: scenario.d,
        dt: scenario.dt,
        n_devices: devices.len(),
        g: cfg.g,
        columns: flex.num_vertices(),
        seed: cfg.seed,
        peak_base,
        peak_uncontrolled: uncontrolled.peak_kw,
        peak_vertex: vertex.peak_kw,
        peak_centralized: centralized.peak_kw,
        reduction_vertex,
        reduction_centralized,
        reduction_vertex_pct: pct(reduction_vertex, uncontrolled.peak_kw),
        reduction_centralized_pct: pct(reduction_centralized, uncontrolled.peak_kw),
        reduction_ratio,
        centralized_optimality_gap: centralized.optimality_gap,
        uncontrolled_infeasible_devices: uncontrolled.infeasible_devices.clone(),
        vertex_infeasible_devices: infeasible_parts(&devices, &vertex)?,
        quality,
    };
    let timings = Timings {
        format_version: FORMAT_VERSION,
        aggregate_seconds,
        vertex_solve_seconds: vertex.solve_seconds,
        centralized_solve_seconds: centralized.solve_seconds,
        quality_seconds,
        total_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(PipelineOutcome {
        summary,
        timings,
        flex,
        uncontrolled,
        vertex,
        centralized,
    })
}

/// Total load per method, one row per period.
pub fn time_series_csv(
    base: &[f64],
    uncontrolled: &[f64],
    vertex: &[f64],
    central: &[f64],
) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for t in 0..base.len() {
        let _ = writeln!(
            out,
            "{t},{},{},{},{}",
            base[t],
            base[t] + uncontrolled[t],
            base[t] + vertex[t],
            base[t] + central[t]
        );
    }
    out
}

struct Series<'a> {
    label: &'a str,
    colour: &'a str,
    dash: Option<&'a str>,
    values: Vec<f64>,
}

/// Static line chart of the load curves, kW against period.
pub fn load_chart_svg(
    base: &[f64],
    uncontrolled: &[f64],
    vertex: &[f64],
    central: &[f64],
) -> String {
    let total = |x: &[f64]| base.iter().zip(x).map(|(b, v)| b + v).collect::<Vec<f64>>();
    let series = [
        Series {
            label: "base load",
            colour: "#888888",
            dash: Some("2,3"),
            values: base.to_vec(),
        },
        Series {
            label: "uncontrolled",
            colour: "#d62728",
            dash: None,
            values: total(uncontrolled),
        },
        Series {
            label: "vertex",
            colour: "#1f77b4",
            dash: None,
            values: total(vertex),
        },
        Series {
            label: "centralized",
            colour: "#2ca02c",
            dash: Some("6,4"),
            values: total(central),
        },
    ];
    let (w, h) = (900.0, 480.0);
    let (left, right, top, bottom) = (70.0, 170.0, 30.0, 60.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let d = base.len();
    let lo = series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let hi = series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    let lo = lo.min(0.0);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let x_at = |t: usize| left + pw * t as f64 / (d.max(2) - 1) as f64;
    let y_at = |v: f64| top + ph * (1.0 - (v - lo) / span);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        top + ph,
        left + pw,
        top + ph
    );
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{:.2}" stroke="black"/>"#,
        top + ph
    );
    for k in 0..=5 {
        let v = lo + span * k as f64 / 5.0;
        let y = y_at(v);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.0}</text>"##,
            left + pw,
            left - 6.0,
            y + 4.0
        );
    }
    let step = (d / 8).max(1);
    for t in (0..d).step_by(step) {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{t}</text>"#,
            x_at(t),
            top + ph + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">period</text>"#,
        left + pw / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">total load (kW)</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (k, ser) in series.iter().enumerate() {
        let pts: Vec<String> = ser
            .values
            .iter()
            .enumerate()
            .map(|(t, &v)| format!("{:.2},{:.2}", x_at(t), y_at(v)))
            .collect();
        let dash = ser
            .dash
            .map(|p| format!(r#" stroke-dasharray="{p}""#))
            .unwrap_or_default();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.8"{dash} points="{}"/>"#,
            ser.colour,
            pts.join(" ")
        );
        let ly = top + 20.0 * k as f64 + 10.0;
        let lx = left + pw + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{}" stroke-width="2"{dash}/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 25.0,
            ser.colour,
            lx + 32.0,
            ly + 4.0,
            ser.label
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `timeseries.csv`, `summary.json`, `timings.json` and `load.svg` into `dir`.
pub fn write_reports(
    outcome: &PipelineOutcome,
    scenario: &Scenario<f64>,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let base = &scenario.base_load;
    let u = &outcome.uncontrolled.aggregate_profile;
    let v = &outcome.vertex.aggregate_profile;
    let c = &outcome.centralized.aggregate_profile;
    let files = [
        ("timeseries.csv", time_series_csv(base, u, v, c)),
        (
            "summary.json",
            serde_json::to_string_pretty(&outcome.summary)? + "\n",
        ),
        (
            "timings.json",
            serde_json::to_string_pretty(&outcome.timings)? + "\n",
        ),
        ("load.svg", load_chart_svg(base, u, v, c)),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let p = dir.join(name);
        std::fs::write(&p, body)?;
        written.push(p);
    }
    Ok(written)
}
