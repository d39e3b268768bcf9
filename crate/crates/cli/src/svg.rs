//! Standalone SVG with the per-step reward curves and activated-agent counts.

use std::fmt::Write as _;

use hrlfs_core::engine::{Phase, RunReport};

const WIDTH: f64 = 800.0;
const PANEL: f64 = 220.0;
const MARGIN: f64 = 50.0;

struct Panel<'a> {
    top: f64,
    title: &'a str,
    series: Vec<(&'a str, &'a str, Vec<f64>)>,
}

pub fn render(report: &RunReport) -> String {
    let steps = &report.steps;
    let rewards = Panel {
        top: MARGIN,
        title: "reward per step",
        series: vec![
            ("r_total", "#1f77b4", steps.iter().map(|s| s.r_total).collect()),
            ("r_perf", "#ff7f0e", steps.iter().map(|s| s.r_perf).collect()),
        ],
    };
    let active = Panel {
        top: 2.0 * MARGIN + PANEL,
        title: "activated agents per step",
        series: vec![(
            "activated",
            "#2ca02c",
            steps.iter().map(|s| s.activated.len() as f64).collect(),
        )],
    };
    let boundary = steps.iter().position(|s| s.phase == Phase::Optimize);
    let height = 3.0 * MARGIN + 2.0 * PANEL;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for panel in [&rewards, &active] {
        draw_panel(&mut out, panel, steps.len(), boundary);
    }
    out.push_str("</svg>\n");
    out
}

fn draw_panel(out: &mut String, panel: &Panel, n: usize, boundary: Option<usize>) {
    let (x0, x1) = (MARGIN, WIDTH - MARGIN);
    let (y0, y1) = (panel.top, panel.top + PANEL);
    let values = panel.series.iter().flat_map(|s| s.2.iter().copied());
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let sx = |i: usize| x0 + (x1 - x0) * i as f64 / (n.max(2) - 1) as f64;
    let sy = |v: f64| y1 - (y1 - y0) * (v - lo) / (hi - lo);

    let _ = writeln!(
        out,
        r##"<rect x="{x0}" y="{y0}" width="{}" height="{PANEL}" fill="none" stroke="#999"/>"##,
        x1 - x0
    );
    let _ = writeln!(out, r#"<text x="{x0}" y="{}" font-size="13">{}</text>"#, y0 - 8.0, panel.title);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, x0 - 4.0, y0 + 10.0, tick(hi));
    let _ = writeln!(out, r#"<text x="{}" y="{y1}" text-anchor="end">{}</text>"#, x0 - 4.0, tick(lo));
    let _ = writeln!(out, r#"<text x="{x1}" y="{}" text-anchor="end">step {}</text>"#, y1 + 14.0, n.saturating_sub(1));
    if lo < 0.0 && hi > 0.0 {
        let z = sy(0.0);
        let _ = writeln!(out, r##"<line x1="{x0}" y1="{z:.2}" x2="{x1}" y2="{z:.2}" stroke="#ccc"/>"##);
    }
    if let Some(b) = boundary.filter(|&b| b > 0) {
        let x = sx(b);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{y1}" stroke="#888" stroke-dasharray="4 3"/>"##
        );
    }
    for (k, (name, color, ys)) in panel.series.iter().enumerate() {
        let points: Vec<String> = ys
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.2},{:.2}", sx(i), sy(v)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            points.join(" ")
        );
        let lx = x1 - 90.0;
        let ly = y0 + 14.0 + 14.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="2"/><text x="{}" y="{ly}">{name}</text>"#,
            ly - 4.0,
            lx + 16.0,
            ly - 4.0,
            lx + 20.0
        );
    }
}

fn tick(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}
