use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Result};

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 60.0;

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|&v| number(v)))?;
    }
    w.flush()?;
    Ok(())
}

fn number(v: f64) -> String {
    if v == 0.0 || (1e-4..1e6).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn decades(lo: f64, hi: f64) -> (f64, f64) {
    let (a, b) = (lo.log10().floor(), hi.log10().ceil());
    if a == b {
        (a - 0.5, b + 0.5)
    } else {
        (a, b)
    }
}

/// Log-log line chart. Non-positive values are dropped.
pub fn loglog_svg(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> Result<String> {
    let pts = || series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| *x > 0.0 && *y > 0.0);
    if pts().next().is_none() {
        bail!("nothing to plot: no positive data");
    }
    let fold = |f: fn(&(f64, f64)) -> f64| {
        pts().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (x0, x1) = fold(|p| p.0);
    let (y0, y1) = fold(|p| p.1);
    let (lx0, lx1) = decades(x0, x1);
    let (ly0, ly1) = decades(y0, y1);
    let sx = |x: f64| MARGIN + (x.log10() - lx0) / (lx1 - lx0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y.log10() - ly0) / (ly1 - ly0) * (H - 2.0 * MARGIN);

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#)?;
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title))?;
    let (left, right, top, bottom) = (MARGIN, W - MARGIN, MARGIN, H - MARGIN);
    writeln!(s, r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#, right - left, bottom - top)?;
    for d in (lx0 as i32)..=(lx1 as i32) {
        let x = MARGIN + (d as f64 - lx0) / (lx1 - lx0) * (W - 2.0 * MARGIN);
        if (left..=right).contains(&x) {
            writeln!(s, r##"<line x1="{x:.1}" y1="{top}" x2="{x:.1}" y2="{bottom}" stroke="#ddd"/>"##)?;
            writeln!(s, r#"<text x="{x:.1}" y="{}" text-anchor="middle">1e{d}</text>"#, bottom + 16.0)?;
        }
    }
    for d in (ly0 as i32)..=(ly1 as i32) {
        let y = H - MARGIN - (d as f64 - ly0) / (ly1 - ly0) * (H - 2.0 * MARGIN);
        if (top..=bottom).contains(&y) {
            writeln!(s, r##"<line x1="{left}" y1="{y:.1}" x2="{right}" y2="{y:.1}" stroke="#ddd"/>"##)?;
            writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">1e{d}</text>"#, left - 6.0, y + 4.0)?;
        }
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 16.0, escape(xlabel))?;
    writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    )?;
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = ser
            .points
            .iter()
            .filter(|(x, y)| *x > 0.0 && *y > 0.0)
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, coords.join(" "))?;
        for c in &coords {
            let (cx, cy) = c.split_once(',').expect("formatted pair");
            writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="2.5" fill="{color}"/>"#)?;
        }
        let ly = top + 16.0 + 16.0 * i as f64;
        writeln!(s, r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#, left + 10.0, escape(&ser.name))?;
    }
    writeln!(s, "</svg>")?;
    Ok(s)
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
