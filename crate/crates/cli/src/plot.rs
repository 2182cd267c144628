//! Static SVG bar charts, one per metric, one bar per model.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use cwemap::eval::EvalReport;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Bars scaled against 1.0, each labelled with its value.
pub fn bar_chart(title: &str, bars: &[(String, f64)]) -> String {
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let slot = plot_w / bars.len().max(1) as f64;
    let bar_w = slot * 0.6;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let base = HEIGHT - MARGIN;
    let _ = writeln!(
        svg,
        r##"<line x1="{MARGIN}" y1="{base}" x2="{}" y2="{base}" stroke="#333"/>"##,
        WIDTH - MARGIN
    );
    for (i, (label, value)) in bars.iter().enumerate() {
        let h = value.clamp(0.0, 1.0) * plot_h;
        let x = MARGIN + slot * i as f64 + (slot - bar_w) / 2.0;
        let cx = x + bar_w / 2.0;
        let _ = writeln!(
            svg,
            r##"<rect x="{x:.2}" y="{:.2}" width="{bar_w:.2}" height="{h:.2}" fill="#4472c4"><title>{}: {value:.4}</title></rect>"##,
            base - h,
            escape(label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{value:.4}</text>"#,
            base - h - 4.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            base + 16.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// File stem, title and bars.
type Chart = (String, String, Vec<(String, f64)>);

/// Writes `mrr.svg`, `map_at_k.svg` and `ndcg_at_k.svg` into `dir`.
pub fn write_metric_charts(reports: &[EvalReport], dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut charts: Vec<Chart> = Vec::new();
    charts.push((
        "mrr".into(),
        "MRR".into(),
        reports.iter().map(|r| (r.model.clone(), r.mrr)).collect(),
    ));
    let ks: Vec<usize> = reports
        .first()
        .map(|r| r.map_at.keys().copied().collect())
        .unwrap_or_default();
    for k in ks {
        charts.push((
            format!("map_at_{k}"),
            format!("MAP@{k}"),
            reports
                .iter()
                .map(|r| (r.model.clone(), r.map_at.get(&k).copied().unwrap_or(0.0)))
                .collect(),
        ));
        charts.push((
            format!("ndcg_at_{k}"),
            format!("NDCG@{k}"),
            reports
                .iter()
                .map(|r| (r.model.clone(), r.ndcg_at.get(&k).copied().unwrap_or(0.0)))
                .collect(),
        ));
    }
    let mut written = Vec::new();
    for (stem, title, bars) in charts {
        let path = dir.join(format!("{stem}.svg"));
        std::fs::write(&path, bar_chart(&title, &bars))
            .with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}
