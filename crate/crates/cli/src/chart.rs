//! Static SVG bar charts of the per-policy means.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use olcais::measurements::METRIC_NAMES;
use olcais::PolicyComparison;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 300.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 4] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One bar per row, scaled to the largest absolute value.
pub fn bar_chart(title: &str, bars: &[(String, f64)]) -> String {
    let top = bars.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
    let scale = if top > 0.0 { (HEIGHT - 2.0 * MARGIN) / top } else { 0.0 };
    let slot = (WIDTH - 2.0 * MARGIN) / bars.len().max(1) as f64;
    let base = HEIGHT - MARGIN;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(svg, r#"<line x1="{MARGIN}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#, WIDTH - MARGIN);
    for (i, (label, value)) in bars.iter().enumerate() {
        let h = value.abs() * scale;
        let x = MARGIN + i as f64 * slot + slot * 0.15;
        let w = slot * 0.7;
        let cx = x + w / 2.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{x:.2}" y="{:.2}" width="{w:.2}" height="{h:.2}" fill="{}"><title>{}: {value}</title></rect>"#,
            base - h,
            COLORS[i % COLORS.len()],
            escape(label)
        );
        let _ = writeln!(svg, r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{value:.4}</text>"#, base - h - 4.0);
        let _ = writeln!(svg, r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, base + 16.0, escape(label));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `<stem>_<metric>.svg` next to `table_path` for every metric.
pub fn write_charts(table: &[PolicyComparison], table_path: &Path) -> Result<Vec<PathBuf>> {
    let stem = table_path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    let dir = table_path.parent().unwrap_or(Path::new(""));
    let mut paths = Vec::new();
    for (k, metric) in METRIC_NAMES.iter().enumerate() {
        let bars: Vec<(String, f64)> = table.iter().map(|row| (row.policy.clone(), row.values()[k])).collect();
        let path = dir.join(format!("{stem}_{metric}.svg"));
        std::fs::write(&path, bar_chart(metric, &bars)).with_context(|| format!("writing {}", path.display()))?;
        paths.push(path);
    }
    Ok(paths)
}
