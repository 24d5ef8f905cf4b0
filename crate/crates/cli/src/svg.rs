//! Line charts as standalone SVG text: one panel per (p, s) cell, one line
//! per run inside a panel.

use std::fmt::Write;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// (round, value) pairs in round order.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub series: Vec<Series>,
}

const PANEL_W: f64 = 440.0;
const PANEL_H: f64 = 310.0;
const HEADER_H: f64 = 40.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 34.0;
const BOTTOM: f64 = 50.0;

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const DASHES: [&str; 4] = ["none", "7 4", "2 3", "9 3 2 3"];

/// Stroke color and dash pattern of the `i`-th series in a panel. Adjacent
/// indices differ in both.
pub fn stroke_style(i: usize) -> (&'static str, &'static str) {
    (COLORS[i % COLORS.len()], DASHES[i % DASHES.len()])
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

fn fmt_tick(v: f64, span: f64) -> String {
    let decimals = if span >= 10.0 {
        0
    } else if span >= 1.0 {
        1
    } else if span >= 0.1 {
        2
    } else {
        3
    };
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn value_range(panel: &Panel) -> (f64, f64) {
    let values = panel
        .series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .filter(|v| v.is_finite());
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = 0.05 * lo.abs().max(1.0);
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn round_range(panel: &Panel) -> (f64, f64) {
    let last = panel
        .series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .fold(1.0, f64::max);
    if last <= 1.0 {
        (0.5, 1.5)
    } else {
        (1.0, last)
    }
}

/// Renders `panels` on a grid `columns` wide under a document `title`.
pub fn emit_svg(title: &str, x_label: &str, y_label: &str, panels: &[Panel], columns: usize) -> String {
    let columns = columns.clamp(1, panels.len().max(1));
    let rows = panels.len().div_ceil(columns).max(1);
    let width = columns as f64 * PANEL_W;
    let height = HEADER_H + rows as f64 * PANEL_H;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="26" font-size="17" text-anchor="middle">{}</text>"#,
        width / 2.0,
        escape(title)
    );
    for (k, panel) in panels.iter().enumerate() {
        let ox = (k % columns) as f64 * PANEL_W;
        let oy = HEADER_H + (k / columns) as f64 * PANEL_H;
        draw_panel(&mut s, panel, ox, oy, x_label, y_label);
    }
    s.push_str("</svg>\n");
    s
}

fn draw_panel(s: &mut String, panel: &Panel, ox: f64, oy: f64, x_label: &str, y_label: &str) {
    let (x0, x1) = round_range(panel);
    let (y0, y1) = value_range(panel);
    let left = ox + LEFT;
    let right = ox + PANEL_W - RIGHT;
    let top = oy + TOP;
    let bottom = oy + PANEL_H - BOTTOM;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (right - left);
    let sy = |y: f64| bottom - (y - y0) / (y1 - y0) * (bottom - top);

    let _ = writeln!(s, "<g>");
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="14" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        oy + 22.0,
        escape(&panel.title)
    );
    let _ = writeln!(
        s,
        r##"<rect x="{left:.1}" y="{top:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#444" stroke-width="1"/>"##,
        right - left,
        bottom - top
    );

    // y ticks
    for i in 0..=4 {
        let v = y0 + (y1 - y0) * i as f64 / 4.0;
        let y = sy(v);
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{left:.1}" y2="{y:.1}" stroke="#444"/>"##,
            left - 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + 3.5,
            fmt_tick(v, y1 - y0)
        );
    }
    // x ticks on whole rounds
    let first = x0.ceil() as usize;
    let last = x1.floor() as usize;
    let step = (last - first + 1).div_ceil(10).max(1);
    for r in (first..=last).step_by(step) {
        let x = sx(r as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.1}" y1="{bottom:.1}" x2="{x:.1}" y2="{:.1}" stroke="#444"/>"##,
            bottom + 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" font-size="10" text-anchor="middle">{r}</text>"#,
            bottom + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        bottom + 36.0,
        escape(x_label)
    );
    let (lx, ly) = (ox + 16.0, (top + bottom) / 2.0);
    let _ = writeln!(
        s,
        r#"<text x="{lx:.1}" y="{ly:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 {lx:.1} {ly:.1})">{}</text>"#,
        escape(y_label)
    );

    for (i, series) in panel.series.iter().enumerate() {
        let (color, dash) = stroke_style(i);
        let pts: Vec<(f64, f64)> = series
            .points
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|&(x, y)| (sx(x), sy(y)))
            .collect();
        if pts.len() >= 2 {
            let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.6" stroke-dasharray="{dash}"/>"#,
                coords.join(" ")
            );
        }
        for (x, y) in &pts {
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.4" fill="{color}"/>"#);
        }
    }
    // legend, top right of the plot area, drawn over the lines
    if !panel.series.is_empty() {
        let ex = right - 120.0;
        let _ = writeln!(
            s,
            r##"<rect x="{:.1}" y="{:.1}" width="120" height="{:.1}" fill="white" fill-opacity="0.85" stroke="#bbb"/>"##,
            ex - 4.0,
            top + 4.0,
            15.0 * panel.series.len() as f64 + 6.0
        );
    }
    for (i, series) in panel.series.iter().enumerate() {
        let (color, dash) = stroke_style(i);
        let ey = top + 14.0 + 15.0 * i as f64;
        let ex = right - 120.0;
        let _ = writeln!(
            s,
            r#"<line x1="{ex:.1}" y1="{ey:.1}" x2="{:.1}" y2="{ey:.1}" stroke="{color}" stroke-width="1.6" stroke-dasharray="{dash}"/>"#,
            ex + 24.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="11">{}</text>"#,
            ex + 30.0,
            ey + 4.0,
            escape(&series.label)
        );
    }
    let _ = writeln!(s, "</g>");
}
