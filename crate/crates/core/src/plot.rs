//! Deterministic SVG line charts of normalized cost against a swept parameter.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiments::{read_results_csv, ResultRow, NO_SWEEP};
use crate::metrics::OPT;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

type PointsByAlgorithm<'a> = BTreeMap<&'a str, Vec<(f64, f64)>>;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub algorithm: String,
    /// `(sweep value, cost / OPT cost)`, sorted by sweep value.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub sweep_param: String,
    pub series: Vec<Series>,
}

/// Groups rows into one chart per swept parameter. OPT is the normalizer and
/// gets no series; failed or unnormalizable rows are skipped.
pub fn sweep_charts(rows: &[ResultRow]) -> Vec<Chart> {
    let mut by_param: BTreeMap<&str, PointsByAlgorithm> = BTreeMap::new();
    let mut order: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in rows {
        if r.sweep_param == NO_SWEEP || r.algorithm == OPT {
            continue;
        }
        let (Some(x), Some(y)) = (r.sweep_value, r.cr_vs_opt) else {
            continue;
        };
        let series = by_param.entry(&r.sweep_param).or_default();
        if !series.contains_key(r.algorithm.as_str()) {
            order.entry(&r.sweep_param).or_default().push(&r.algorithm);
        }
        series.entry(&r.algorithm).or_default().push((x, y));
    }
    by_param
        .into_iter()
        .map(|(param, mut series)| Chart {
            sweep_param: param.to_string(),
            series: order[param]
                .iter()
                .map(|name| {
                    let mut points = series.remove(name).unwrap_or_default();
                    points.sort_by(|a, b| a.0.total_cmp(&b.0));
                    Series {
                        algorithm: name.to_string(),
                        points,
                    }
                })
                .collect(),
        })
        .collect()
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if hi - lo < 1e-12 {
        let pad = if lo.abs() > 1e-12 {
            lo.abs() * 0.05
        } else {
            1.0
        };
        (lo - pad, hi + pad)
    } else {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

pub fn render_svg(chart: &Chart) -> String {
    let pts = || chart.series.iter().flat_map(|s| s.points.iter());
    let (x_lo, x_hi) = nice_range(
        pts().map(|p| p.0).fold(f64::INFINITY, f64::min),
        pts().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
    );
    let (y_lo, y_hi) = nice_range(
        pts().map(|p| p.1).fold(f64::INFINITY, f64::min),
        pts().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
    );
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| MARGIN_TOP + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">normalized cost vs {}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        escape(&chart.sweep_param)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let fx = x_lo + (x_hi - x_lo) * i as f64 / 4.0;
        let fy = y_lo + (y_hi - y_lo) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{fx:.3}</text>"#,
            sx(fx),
            HEIGHT - MARGIN_BOTTOM + 18.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{fy:.3}</text>"#,
            MARGIN_LEFT - 6.0,
            sy(fy) + 4.0
        );
        let _ = writeln!(
            s,
            r##"<line x1="{MARGIN_LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            MARGIN_LEFT + plot_w,
            y = sy(fy)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 10.0,
        escape(&chart.sweep_param)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">cost / OPT</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );
    for (k, series) in chart.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = series
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-algorithm="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            escape(&series.algorithm),
            path.join(" ")
        );
        for &(x, y) in &series.points {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                sx(x),
                sy(y)
            );
        }
        let ly = MARGIN_TOP + 10.0 + 18.0 * k as f64;
        let lx = WIDTH - MARGIN_RIGHT + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 18.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 24.0,
            ly + 4.0,
            escape(&series.algorithm)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `<sweep_param>.svg` per chart into `output_dir`. Nothing is written
/// unless the CSV parses and contains at least one sweep point.
pub fn render_plots(results_csv: &Path, output_dir: &Path) -> Result<Vec<PathBuf>> {
    let file = File::open(results_csv).map_err(|e| Error::io(results_csv, e))?;
    let rows = read_results_csv(file, &results_csv.display().to_string())?;
    if rows.is_empty() {
        return Err(Error::Plot(format!(
            "{} has no rows",
            results_csv.display()
        )));
    }
    let charts = sweep_charts(&rows);
    if charts.is_empty() {
        return Err(Error::Plot(format!(
            "{} has no sweep points to plot",
            results_csv.display()
        )));
    }
    let rendered: Vec<(PathBuf, String)> = charts
        .iter()
        .map(|c| {
            (
                output_dir.join(format!("{}.svg", c.sweep_param)),
                render_svg(c),
            )
        })
        .collect();
    fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
    for (path, svg) in &rendered {
        fs::write(path, svg).map_err(|e| Error::io(path, e))?;
    }
    Ok(rendered.into_iter().map(|(p, _)| p).collect())
}
