//! Bare-bones SVG figures. Layout is fixed; no attempt at styling.

use std::fmt::Write;

use xalign::experiments::{AggregationCurve, LayerGrid};
use xalign::Direction;

const CELL: f64 = 28.0;
const MARGIN: f64 = 48.0;
const GAP: f64 = 40.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// White to dark blue over `[lo, hi]`.
fn shade(v: f64, lo: f64, hi: f64) -> String {
    let t = if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 };
    let ch = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", ch(247.0, 8.0), ch(251.0, 48.0), ch(255.0, 107.0))
}

fn direction_label(d: Direction, grid: &LayerGrid) -> String {
    match d {
        Direction::XToY => format!("{} \u{2192} {}", grid.x_model, grid.y_model),
        Direction::YToX => format!("{} \u{2192} {}", grid.y_model, grid.x_model),
    }
}

/// One panel per direction; rows are x layers, columns y layers.
pub fn heatmap(grid: &LayerGrid) -> String {
    let mut dirs: Vec<Direction> = Vec::new();
    for c in &grid.cells {
        if !dirs.contains(&c.direction) {
            dirs.push(c.direction);
        }
    }
    let scores = grid.cells.iter().map(|c| c.result.score);
    let lo = scores.clone().fold(f64::INFINITY, f64::min);
    let hi = scores.fold(f64::NEG_INFINITY, f64::max);
    let (nx, ny) = (grid.x_layers.len() as f64, grid.y_layers.len() as f64);
    let panel_w = ny * CELL;
    let width = MARGIN * 2.0 + dirs.len() as f64 * (panel_w + GAP);
    let height = MARGIN * 2.0 + nx * CELL + 20.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="16" font-size="12">{} (range {lo:.3} to {hi:.3})</text>"#,
        escape(&grid.pair)
    );
    for (p, &d) in dirs.iter().enumerate() {
        let x0 = MARGIN + p as f64 * (panel_w + GAP);
        let y0 = MARGIN;
        let _ = writeln!(s, r#"<text x="{x0}" y="{}">{}</text>"#, y0 - 8.0, escape(&direction_label(d, grid)));
        for (i, &xl) in grid.x_layers.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{xl}</text>"#,
                x0 - 4.0,
                y0 + (i as f64 + 0.65) * CELL
            );
            for (j, &yl) in grid.y_layers.iter().enumerate() {
                let Some(v) = grid.score(d, xl, yl) else { continue };
                let _ = writeln!(
                    s,
                    r#"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{}"><title>x{xl} y{yl}: {v}</title></rect>"#,
                    x0 + j as f64 * CELL,
                    y0 + i as f64 * CELL,
                    shade(v, lo, hi)
                );
            }
        }
        for (j, &yl) in grid.y_layers.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{yl}</text>"#,
                x0 + (j as f64 + 0.5) * CELL,
                y0 + nx * CELL + 12.0
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Mean score against k with a ±1 standard-error band, one line per
/// direction.
pub fn curve(curve: &AggregationCurve) -> String {
    let (w, h) = (480.0, 320.0);
    let (pw, ph) = (w - 2.0 * MARGIN, h - 2.0 * MARGIN);
    let band = |p: &xalign::experiments::CurvePoint| p.score_stderr.unwrap_or(0.0);
    let lo = curve.points.iter().map(|p| p.score_mean - band(p)).fold(f64::INFINITY, f64::min);
    let hi = curve.points.iter().map(|p| p.score_mean + band(p)).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let kmax = curve.k_max.max(2) as f64;
    let px = |k: usize| MARGIN + (k as f64 - 1.0) / (kmax - 1.0) * pw;
    let py = |v: f64| MARGIN + (hi - v) / (hi - lo) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(
        s,
        r#"<path d="M{MARGIN},{MARGIN} V{} H{}" fill="none" stroke="black"/>"#,
        MARGIN + ph,
        MARGIN + pw
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">k</text>"#, MARGIN + pw / 2.0, h - 10.0);
    let _ = writeln!(s, r#"<text x="4" y="{}">{hi:.3}</text>"#, MARGIN + 4.0);
    let _ = writeln!(s, r#"<text x="4" y="{}">{lo:.3}</text>"#, MARGIN + ph);
    for k in 1..=curve.k_max {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{k}</text>"#,
            px(k),
            MARGIN + ph + 14.0
        );
    }
    let colours = [("xy", "#1f77b4"), ("yx", "#d62728")];
    for (row, (dir, colour)) in colours.iter().enumerate() {
        let pts: Vec<_> = curve.points.iter().filter(|p| p.direction.to_string() == *dir).collect();
        if pts.is_empty() {
            continue;
        }
        let mut band_path = String::new();
        for (i, p) in pts.iter().enumerate() {
            let _ = write!(band_path, "{}{},{} ", if i == 0 { 'M' } else { 'L' }, px(p.k), py(p.score_mean + band(p)));
        }
        for p in pts.iter().rev() {
            let _ = write!(band_path, "L{},{} ", px(p.k), py(p.score_mean - band(p)));
        }
        let _ = writeln!(s, r#"<path d="{}Z" fill="{colour}" fill-opacity="0.2" stroke="none"/>"#, band_path);
        let line: Vec<String> = pts.iter().map(|p| format!("{},{}", px(p.k), py(p.score_mean))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            line.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{colour}">{dir}</text>"#,
            MARGIN + pw - 30.0,
            MARGIN + 12.0 + row as f64 * 14.0
        );
    }
    s.push_str("</svg>\n");
    s
}
