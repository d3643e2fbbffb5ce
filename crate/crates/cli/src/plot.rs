//! `ksme plot`: two-panel SVG of per-σ minimum and mean gaps.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, CliResult, Status};
use crate::files::{read_text, write_text};
use crate::sweep::{read_sweep_csv, summarize, SigmaSummary, SWEEP_KINDS};

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 300.0;
const MARGIN: f64 = 60.0;
const TICKS: usize = 5;
const COLORS: [&str; 3] = ["#d62728", "#1f77b4", "#2ca02c"];

struct Panel<'a> {
    title: &'a str,
    left: f64,
    values: Vec<Vec<(f64, f64)>>,
}

fn extent(points: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = points.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn draw_panel(svg: &mut String, panel: &Panel, x_range: (f64, f64)) {
    let (y_lo, y_hi) = extent(panel.values.iter().flatten().map(|p| p.1));
    let top = MARGIN;
    let sx = |x: f64| panel.left + (x - x_range.0) / (x_range.1 - x_range.0) * PANEL_W;
    let sy = |y: f64| top + PANEL_H - (y - y_lo) / (y_hi - y_lo) * PANEL_H;

    let _ = writeln!(
        svg,
        r#"<rect x="{:.2}" y="{:.2}" width="{PANEL_W:.2}" height="{PANEL_H:.2}" fill="none" stroke="black"/>"#,
        panel.left, top
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="14">{}</text>"#,
        panel.left + PANEL_W / 2.0,
        top - 20.0,
        panel.title
    );
    for i in 0..TICKS {
        let t = i as f64 / (TICKS - 1) as f64;
        let (xv, yv) = (x_range.0 + t * (x_range.1 - x_range.0), y_lo + t * (y_hi - y_lo));
        let (px, py) = (sx(xv), sy(yv));
        let bottom = top + PANEL_H;
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{bottom:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle" font-size="10">{xv:.2}</text>"#,
            bottom + 5.0,
            bottom + 18.0
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end" font-size="10">{yv:.3}</text>"#,
            panel.left - 5.0,
            panel.left,
            panel.left - 8.0,
            py + 3.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">sigma</text>"#,
        panel.left + PANEL_W / 2.0,
        top + PANEL_H + 40.0
    );
    for (series, (kind, color)) in panel.values.iter().zip(SWEEP_KINDS.iter().zip(COLORS)) {
        let points: Vec<String> = series
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline data-kind="{kind}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        );
    }
}

/// Render per-σ summaries as an SVG document.
pub fn render_svg(summaries: &[SigmaSummary]) -> String {
    let x_range = extent(summaries.iter().map(|s| s.sigma));
    let series = |f: &dyn Fn(&SigmaSummary, usize) -> f64| -> Vec<Vec<(f64, f64)>> {
        (0..SWEEP_KINDS.len())
            .map(|k| {
                summaries
                    .iter()
                    .map(|s| (s.sigma, f(s, k)))
                    .filter(|p| p.1.is_finite())
                    .collect()
            })
            .collect()
    };
    let panels = [
        Panel {
            title: "minimum gap",
            left: MARGIN,
            values: series(&|s, k| s.min_gap[k]),
        },
        Panel {
            title: "mean gap",
            left: 2.0 * MARGIN + PANEL_W + MARGIN,
            values: series(&|s, k| s.mean_gap[k]),
        },
    ];
    let width = 2.0 * PANEL_W + 5.0 * MARGIN;
    let height = PANEL_H + 2.0 * MARGIN + 40.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for panel in &panels {
        draw_panel(&mut svg, panel, x_range);
    }
    for (i, (kind, color)) in SWEEP_KINDS.iter().zip(COLORS).enumerate() {
        let y = MARGIN + 15.0 * i as f64;
        let x = width - MARGIN - 30.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}" font-size="10">{kind}</text>"#,
            x - 20.0,
            x - 5.0,
            x,
            y + 3.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn emit_plot(sweep_csv: &Path, out_svg: &Path) -> CliResult<Status> {
    let rows = read_sweep_csv(&read_text(sweep_csv)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", sweep_csv.display())))?;
    write_text(out_svg, &render_svg(&summarize(&rows)))?;
    Ok(Status::Pass)
}
