//! Minimal log-log variance plot. Plots are a convenience; the CSV is the contract.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

pub struct Line {
    pub slope: f64,
    pub intercept: f64,
    pub label: String,
    pub color: &'static str,
    pub dashed: bool,
}

/// One point per horizon: `(ln T, ln Var, se of ln Var)`.
pub fn loglog_plot(title: &str, points: &[(f64, f64, f64)], lines: &[Line]) -> String {
    let finite: Vec<_> = points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
    let (mut x0, mut x1) = bounds(finite.iter().map(|p| p.0));
    let (mut y0, mut y1) = bounds(finite.iter().flat_map(|p| [p.1 - p.2, p.1 + p.2]));
    pad(&mut x0, &mut x1);
    pad(&mut y0, &mut y1);
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |y: f64| H - BOTTOM - (y - y0) / (y1 - y0) * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - LEFT - RIGHT,
        H - TOP - BOTTOM
    );
    for (v, label) in ticks(x0, x1) {
        let x = px(v);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#, H - BOTTOM, H - BOTTOM + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{label}</text>"#, H - BOTTOM + 18.0);
    }
    for (v, label) in ticks(y0, y1) {
        let y = py(v);
        let _ = writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{label}</text>"#, LEFT - 8.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">T</text>"#, (LEFT + W - RIGHT) / 2.0, H - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">Var S_T(1)</text>"#,
        (TOP + H - BOTTOM) / 2.0
    );

    let _ = writeln!(s, r#"<clipPath id="frame"><rect x="{LEFT}" y="{TOP}" width="{}" height="{}"/></clipPath>"#, W - LEFT - RIGHT, H - TOP - BOTTOM);
    for (k, l) in lines.iter().enumerate() {
        let dash = if l.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="1.5"{dash} clip-path="url(#frame)"/>"#,
            px(x0),
            py(l.intercept + l.slope * x0),
            px(x1),
            py(l.intercept + l.slope * x1),
            l.color
        );
        let ly = TOP + 16.0 + 16.0 * k as f64;
        let _ = writeln!(s, r#"<line x1="{0}" y1="{ly}" x2="{1}" y2="{ly}" stroke="{2}" stroke-width="1.5"{dash}/>"#, LEFT + 10.0, LEFT + 34.0, l.color);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, LEFT + 40.0, ly + 4.0, escape(&l.label));
    }
    for p in &finite {
        let (x, y) = (px(p.0), py(p.1));
        if p.2 > 0.0 {
            let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, py(p.1 - p.2), py(p.1 + p.2));
        }
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="black"/>"#);
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

fn pad(lo: &mut f64, hi: &mut f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        (*lo, *hi) = (0.0, 1.0);
    }
    let span = (*hi - *lo).max(1e-9);
    *lo -= 0.05 * span;
    *hi += 0.05 * span;
}

/// Ticks at powers of 2 (natural-log axis), thinned to at most ~8.
fn ticks(lo: f64, hi: f64) -> Vec<(f64, String)> {
    let l2 = std::f64::consts::LN_2;
    let (a, b) = ((lo / l2).ceil() as i64, (hi / l2).floor() as i64);
    let step = ((b - a) / 8 + 1).max(1);
    (a..=b)
        .filter(|k| k.rem_euclid(step) == 0)
        .map(|k| (k as f64 * l2, format!("2^{k}")))
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
