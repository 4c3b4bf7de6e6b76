//! Self-contained SVG line charts, emitted as text.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::CliError;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// One line with an optional `(low, high)` band per point.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub band: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axes<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
}

fn validate(series: &[Series]) -> Result<(), CliError> {
    let bad = |m: String| Err(CliError::Validation(m));
    if series.is_empty() {
        return bad("chart needs at least one series".into());
    }
    for s in series {
        if s.points.is_empty() {
            return bad(format!("series '{}' has no points", s.label));
        }
        if s.points.windows(2).any(|w| w[1].0 < w[0].0) {
            return bad(format!("series '{}' is not sorted by x", s.label));
        }
        if !s.points.iter().all(|(x, y)| x.is_finite() && y.is_finite()) {
            return bad(format!("series '{}' has non-finite points", s.label));
        }
        if let Some(band) = &s.band {
            if band.len() != s.points.len() || !band.iter().all(|(l, h)| l.is_finite() && h.is_finite()) {
                return bad(format!("band of series '{}' does not match its points", s.label));
            }
        }
    }
    Ok(())
}

/// `(min, max)`, widened when degenerate.
fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi - lo > 0.0 {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - pad, hi + pad)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Render the chart. Output depends only on the arguments.
pub fn render_svg_curve(series: &[Series], axes: &Axes, provenance: Option<&str>) -> Result<String, CliError> {
    validate(series)?;
    let (x0, x1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let ys = series.iter().flat_map(|s| {
        let band = s.band.iter().flatten().flat_map(|&(l, h)| [l, h]);
        s.points.iter().map(|p| p.1).chain(band)
    });
    let (y0, y1) = range(ys);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let py = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * plot_h;

    let mut out = String::new();
    let w = &mut out;
    // Writing to a String cannot fail.
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 800 500" width="800" height="500" font-family="sans-serif" font-size="12">"#
    );
    if let Some(p) = provenance {
        let _ = writeln!(w, "<metadata>{}</metadata>", escape(p));
    }
    let _ = writeln!(w, r#"<rect x="0" y="0" width="800" height="500" fill="white"/>"#);
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(axes.title)
    );

    // Axes and ticks.
    let (bx, by) = (LEFT, TOP + plot_h);
    let _ = writeln!(w, r#"<line x1="{bx:.2}" y1="{by:.2}" x2="{:.2}" y2="{by:.2}" stroke="black"/>"#, LEFT + plot_w);
    let _ = writeln!(w, r#"<line x1="{bx:.2}" y1="{TOP:.2}" x2="{bx:.2}" y2="{by:.2}" stroke="black"/>"#);
    for i in 0..=TICKS {
        let t = i as f64 / TICKS as f64;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let (tx, ty) = (px(xv), py(yv));
        let _ = writeln!(w, r#"<line x1="{tx:.2}" y1="{by:.2}" x2="{tx:.2}" y2="{:.2}" stroke="black"/>"#, by + 5.0);
        let _ = writeln!(w, r#"<text x="{tx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, by + 20.0, tick_label(xv));
        let _ = writeln!(w, r#"<line x1="{:.2}" y1="{ty:.2}" x2="{bx:.2}" y2="{ty:.2}" stroke="black"/>"#, bx - 5.0);
        let _ =
            writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, bx - 8.0, ty + 4.0, tick_label(yv));
    }
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0,
        escape(axes.x_label)
    );
    let _ = writeln!(
        w,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(axes.y_label)
    );

    // Bands first so lines stay on top.
    for (k, s) in series.iter().enumerate() {
        if let Some(band) = &s.band {
            let upper = s.points.iter().zip(band).map(|(p, b)| (p.0, b.1));
            let lower = s.points.iter().zip(band).rev().map(|(p, b)| (p.0, b.0));
            let pts: Vec<String> = upper.chain(lower).map(|(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let _ = writeln!(
                w,
                r#"<polygon points="{}" fill="{}" fill-opacity="0.2" stroke="none"/>"#,
                pts.join(" "),
                PALETTE[k % PALETTE.len()]
            );
        }
    }
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(w, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" "));
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = LEFT + plot_w + 15.0;
        let _ = writeln!(w, r#"<rect x="{lx:.2}" y="{:.2}" width="14" height="4" fill="{color}"/>"#, ly - 4.0);
        let _ = writeln!(w, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 20.0, ly + 2.0, escape(&s.label));
    }
    let _ = writeln!(w, "</svg>");
    Ok(out)
}

pub fn write_svg_curve(series: &[Series], axes: &Axes, provenance: Option<&str>, path: &Path) -> Result<(), CliError> {
    let svg = render_svg_curve(series, axes, provenance)?;
    std::fs::write(path, svg).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" {
            "0".into()
        } else {
            s.to_string()
        }
    }
}
