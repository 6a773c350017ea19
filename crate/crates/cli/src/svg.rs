//! Minimal SVG plots for comparison reports.

use std::fmt::Write as _;

use transync::harness::ComparisonReport;

const W: f64 = 640.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;
const COLORS: [&str; 4] = ["#1b6ca8", "#d1495b", "#66a182", "#edae49"];

fn frame(title: &str, x_label: &str, y_label: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0);
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{0}" stroke="black"/>"#,
        H - PAD,
        W - PAD
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{y_label}</text>"#,
        H / 2.0,
        H / 2.0
    );
    s
}

fn legend(s: &mut String, names: &[&str]) {
    for (i, n) in names.iter().enumerate() {
        let y = PAD + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{n}</text>"#,
            W - PAD - 70.0,
            y - 9.0,
            COLORS[i % COLORS.len()],
            W - PAD - 55.0,
            y
        );
    }
}

/// Step histograms of per-scenario test cost, one outline per model.
pub fn cost_histograms(r: &ComparisonReport) -> String {
    let all: Vec<f64> = r.models.iter().flat_map(|m| m.per_scenario.iter().map(|x| x.total)).collect();
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bins = 20usize;
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let counts: Vec<Vec<usize>> = r
        .models
        .iter()
        .map(|m| {
            let mut c = vec![0; bins];
            for x in &m.per_scenario {
                c[(((x.total - lo) / width) as usize).min(bins - 1)] += 1;
            }
            c
        })
        .collect();
    let ymax = counts.iter().flatten().copied().max().unwrap_or(1).max(1) as f64;
    let mut s = frame("Test-scenario cost by model", &format!("total cost ({lo:.0} to {hi:.0})"), "scenarios");
    for (k, c) in counts.iter().enumerate() {
        let mut pts = String::new();
        for (b, &n) in c.iter().enumerate() {
            let x0 = PAD + (W - 2.0 * PAD) * b as f64 / bins as f64;
            let x1 = PAD + (W - 2.0 * PAD) * (b + 1) as f64 / bins as f64;
            let y = H - PAD - (H - 2.0 * PAD) * n as f64 / ymax;
            let _ = write!(pts, "{x0:.1},{y:.1} {x1:.1},{y:.1} ");
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{pts}"/>"#,
            COLORS[k % COLORS.len()]
        );
    }
    let names: Vec<&str> = r.models.iter().map(|m| m.model.name()).collect();
    legend(&mut s, &names);
    s.push_str("</svg>\n");
    s
}

/// Dispersion against iteration for each hedging run in the report.
pub fn dispersion_curves(r: &ComparisonReport) -> String {
    let runs: Vec<_> = r.models.iter().filter(|m| !m.ph_history.is_empty()).collect();
    let kmax = runs.iter().map(|m| m.ph_history.len()).max().unwrap_or(1).max(2) - 1;
    let dmax = runs.iter().flat_map(|m| m.ph_history.iter().map(|h| h.dispersion)).fold(0.0, f64::max).max(1e-9);
    let mut s = frame("Hedging dispersion", "iteration k", "dispersion (min)");
    for (i, m) in runs.iter().enumerate() {
        let pts: Vec<String> = m
            .ph_history
            .iter()
            .map(|h| {
                let x = PAD + (W - 2.0 * PAD) * h.k as f64 / kmax as f64;
                let y = H - PAD - (H - 2.0 * PAD) * h.dispersion / dmax;
                format!("{x:.1},{y:.1}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
            COLORS[i % COLORS.len()],
            pts.join(" ")
        );
    }
    let names: Vec<&str> = runs.iter().map(|m| m.model.name()).collect();
    legend(&mut s, &names);
    s.push_str("</svg>\n");
    s
}
