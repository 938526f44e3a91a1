//! Minimal self-contained SVG line charts.

use std::fmt::Write as _;
use std::path::Path;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ChartError {
    #[error("chart has no series")]
    NoSeries,
    #[error("series '{0}' is empty")]
    EmptySeries(String),
    #[error("series '{name}' has x values that are not strictly increasing at index {index}")]
    NonMonotonic { name: String, index: usize },
    #[error("series '{0}' contains a non-finite value")]
    NonFinite(String),
}

pub struct Labels<'a> {
    pub title: &'a str,
    pub x: &'a str,
    pub y: &'a str,
}

fn check(series: &[Series]) -> Result<(), ChartError> {
    if series.is_empty() {
        return Err(ChartError::NoSeries);
    }
    for s in series {
        if s.points.is_empty() {
            return Err(ChartError::EmptySeries(s.name.clone()));
        }
        if s.points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(ChartError::NonFinite(s.name.clone()));
        }
        if let Some(i) = s.points.windows(2).position(|w| w[1].0 <= w[0].0) {
            return Err(ChartError::NonMonotonic {
                name: s.name.clone(),
                index: i + 1,
            });
        }
    }
    Ok(())
}

/// Roughly five evenly spaced round values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if hi - lo < 1e-12 {
        let pad = if lo.abs() > 0.0 { lo.abs() * 0.1 } else { 1.0 };
        (lo - pad, hi + pad)
    } else {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    }
}

fn label(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn render_svg_linechart(series: &[Series], labels: &Labels) -> Result<String, ChartError> {
    check(series)?;
    let all = || series.iter().flat_map(|s| s.points.iter());
    let (x0, x1) = padded_range(all().map(|p| p.0));
    let (y0, y1) = padded_range(all().map(|p| p.1));
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * plot_h;

    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        w,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(labels.title)
    );
    let _ = writeln!(
        w,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(w, r#"<g class="x-ticks">"#);
    for t in ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(
            w,
            r#"<line x1="{x:.2}" y1="{b:.2}" x2="{x:.2}" y2="{b2:.2}" stroke="black"/><text x="{x:.2}" y="{ty:.2}" text-anchor="middle">{}</text>"#,
            label(t),
            b = TOP + plot_h,
            b2 = TOP + plot_h + 5.0,
            ty = TOP + plot_h + 18.0
        );
    }
    let _ = writeln!(w, "</g>");
    let _ = writeln!(w, r#"<g class="y-ticks">"#);
    for t in ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(
            w,
            r#"<line x1="{l2:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><text x="{tx:.2}" y="{ty:.2}" text-anchor="end">{}</text>"#,
            label(t),
            l2 = LEFT - 5.0,
            tx = LEFT - 8.0,
            ty = y + 4.0
        );
    }
    let _ = writeln!(w, "</g>");
    let _ = writeln!(
        w,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0,
        escape(labels.x)
    );
    let _ = writeln!(
        w,
        r#"<text x="18" y="{cy}" text-anchor="middle" transform="rotate(-90 18 {cy})">{}</text>"#,
        escape(labels.y),
        cy = TOP + plot_h / 2.0
    );
    for (i, s) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            w,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
    }
    let _ = writeln!(w, r#"<g class="legend">"#);
    for (i, s) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let y = TOP + 10.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            w,
            r#"<g class="legend-entry"><rect x="{lx}" y="{ry}" width="14" height="4" fill="{colour}"/><text x="{tx}" y="{ty}">{}</text></g>"#,
            escape(&s.name),
            ry = y - 2.0,
            tx = lx + 20.0,
            ty = y + 4.0
        );
    }
    let _ = writeln!(w, "</g>");
    let _ = writeln!(w, "</svg>");
    Ok(out)
}

pub fn emit_svg_linechart(series: &[Series], labels: &Labels, path: &Path) -> anyhow::Result<()> {
    let svg = render_svg_linechart(series, labels)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const LABELS: Labels = Labels { title: "t", x: "p", y: "accuracy" };

    fn series(name: &str, points: &[(f64, f64)]) -> Series {
        Series { name: name.into(), points: points.to_vec() }
    }

    #[test]
    fn one_series_one_polyline() {
        let svg = render_svg_linechart(&[series("a", &[(1.0, 0.5), (2.0, 0.7)])], &LABELS).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn two_series_two_legend_entries() {
        let svg = render_svg_linechart(
            &[series("a<b", &[(1.0, 0.5), (2.0, 0.7)]), series("c", &[(1.0, 0.1)])],
            &LABELS,
        )
        .unwrap();
        assert_eq!(svg.matches(r#"class="legend-entry""#).count(), 2);
        assert!(svg.contains("a&lt;b"));
    }

    #[test]
    fn preconditions() {
        assert_eq!(render_svg_linechart(&[], &LABELS), Err(ChartError::NoSeries));
        assert!(matches!(
            render_svg_linechart(&[series("a", &[])], &LABELS),
            Err(ChartError::EmptySeries(_))
        ));
        assert!(matches!(
            render_svg_linechart(&[series("a", &[(2.0, 0.0), (1.0, 0.0)])], &LABELS),
            Err(ChartError::NonMonotonic { index: 1, .. })
        ));
        assert!(matches!(
            render_svg_linechart(&[series("a", &[(1.0, f64::NAN)])], &LABELS),
            Err(ChartError::NonFinite(_))
        ));
    }

    #[test]
    fn ticks_are_round_and_inside() {
        let t = ticks(0.93, 3.07);
        assert_eq!(t, vec![1.0, 1.5, 2.0, 2.5, 3.0]);
        assert!(ticks(0.0, 1.0).iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
