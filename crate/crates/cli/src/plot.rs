//! Hand-rolled SVG log-log plots mirroring the convergence figures: one
//! polyline per series, decade gridlines, a reference slope triangle.

use std::fmt::Write as _;

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const ML: f64 = 70.0;
const MR: f64 = 24.0;
const MT: f64 = 34.0;
const MB: f64 = 56.0;

/// Renders the series over log-log axes. `slope` draws the reference
/// triangle with that order against the first series' tail.
pub fn emit_plot(series: &[Series], slope: f64, title: &str) -> anyhow::Result<String> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|&(x, y)| x > 0.0 && y > 0.0)
        .collect();
    if pts.is_empty() {
        anyhow::bail!("nothing to plot: no positive data points");
    }
    let (mut x0, mut x1) = (f64::MAX, f64::MIN);
    let (mut y0, mut y1) = (f64::MAX, f64::MIN);
    for &(x, y) in &pts {
        x0 = x0.min(x.log10());
        x1 = x1.max(x.log10());
        y0 = y0.min(y.log10());
        y1 = y1.max(y.log10());
    }
    let pad = |a: &mut f64, b: &mut f64| {
        let d = (*b - *a).max(0.5) * 0.06;
        *a -= d;
        *b += d;
    };
    pad(&mut x0, &mut x1);
    pad(&mut y0, &mut y1);
    // Leave head room below the first curve for the slope triangle.
    y0 -= 0.35;

    let px = |x: f64| ML + (x.log10() - x0) / (x1 - x0) * (W - ML - MR);
    let py = |y: f64| H - MB - (y.log10() - y0) / (y1 - y0) * (H - MT - MB);

    let mut svg = String::new();
    writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    )?;
    writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#)?;
    writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    )?;

    // Decade gridlines and tick labels.
    for k in (x0.ceil() as i64)..=(x1.floor() as i64) {
        let x = px(10f64.powi(k as i32));
        writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{MT}" x2="{x:.2}" y2="{}" stroke="#ddd"/>"##,
            H - MB
        )?;
        writeln!(
            svg,
            r#"<text x="{x:.2}" y="{}" text-anchor="middle">1e{k}</text>"#,
            H - MB + 18.0
        )?;
    }
    for k in (y0.ceil() as i64)..=(y1.floor() as i64) {
        let y = py(10f64.powi(k as i32));
        writeln!(
            svg,
            r##"<line x1="{ML}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/>"##,
            W - MR
        )?;
        writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" text-anchor="end">1e{k}</text>"#,
            ML - 6.0,
            y + 4.0
        )?;
    }
    writeln!(
        svg,
        r#"<rect x="{ML}" y="{MT}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        W - ML - MR,
        H - MT - MB
    )?;
    writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">NDOF</text>"#,
        (ML + W - MR) / 2.0,
        H - 12.0
    )?;

    for (i, s) in series.iter().enumerate() {
        let path: Vec<String> = s
            .points
            .iter()
            .filter(|&&(x, y)| x > 0.0 && y > 0.0)
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        if path.is_empty() {
            continue;
        }
        writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            path.join(" "),
            s.color
        )?;
        for part in &path {
            let (cx, cy) = part.split_once(',').unwrap();
            writeln!(svg, r#"<circle cx="{cx}" cy="{cy}" r="2.5" fill="{}"/>"#, s.color)?;
        }
        let ly = MT + 16.0 + 16.0 * i as f64;
        writeln!(
            svg,
            r#"<line x1="{}" y1="{ly:.2}" x2="{}" y2="{ly:.2}" stroke="{}" stroke-width="1.5"/>"#,
            W - MR - 150.0,
            W - MR - 120.0,
            s.color
        )?;
        writeln!(
            svg,
            r#"<text x="{}" y="{:.2}">{}</text>"#,
            W - MR - 112.0,
            ly + 4.0,
            escape(s.label)
        )?;
    }

    // Reference slope triangle under the tail of the first series.
    if let Some(tri) = triangle(&series[0], slope) {
        let (a, b, c) = tri;
        writeln!(
            svg,
            r##"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="none" stroke="#555"/>"##,
            px(a.0),
            py(a.1),
            px(b.0),
            py(b.1),
            px(c.0),
            py(c.1)
        )?;
        writeln!(
            svg,
            r##"<text x="{:.2}" y="{:.2}" fill="#555">{}</text>"##,
            px(a.0) - 26.0,
            (py(a.1) + py(c.1)) / 2.0,
            slope
        )?;
    }

    writeln!(svg, "</svg>")?;
    Ok(svg)
}

/// Right triangle of the given log-log slope: hypotenuse from A down to B,
/// right angle at C below A, offset under the series tail.
fn triangle(s: &Series, slope: f64) -> Option<((f64, f64), (f64, f64), (f64, f64))> {
    let pts: Vec<(f64, f64)> = s
        .points
        .iter()
        .copied()
        .filter(|&(x, y)| x > 0.0 && y > 0.0)
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let (xb, yb) = *pts.last().unwrap();
    let xa = xb / 10f64.powf(0.35);
    let ya = yb * (xb / xa).powf(slope);
    let off = 0.55;
    Some(((xa, ya * off), (xb, yb * off), (xa, yb * off)))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
