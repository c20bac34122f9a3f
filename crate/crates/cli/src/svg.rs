//! Minimal deterministic SVG line plots (no timestamps, fixed formatting).

use std::io::Write;
use std::path::Path;

pub struct Series<'a> {
    pub label: &'a str,
    pub points: &'a [(f64, f64)],
    pub color: &'a str,
}

const W: f64 = 800.0;
const H: f64 = 500.0;
const ML: f64 = 70.0;
const MR: f64 = 20.0;
const MT: f64 = 40.0;
const MB: f64 = 55.0;

fn nice_ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let span = hi - lo;
    let raw = span / n as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm < 1.5 {
        1.0
    } else if norm < 3.0 {
        2.0
    } else if norm < 7.0 {
        5.0
    } else {
        10.0
    } * mag;
    let start = (lo / step).ceil() * step;
    let mut ticks = Vec::new();
    let mut t = start;
    while t <= hi + 1e-12 * span {
        ticks.push(t);
        t += step;
    }
    ticks
}

/// Write a line plot of one or more series.
pub fn line_plot(
    path: &Path,
    title: &str,
    xlabel: &str,
    ylabel: &str,
    series: &[Series<'_>],
) -> std::io::Result<()> {
    let finite: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in &finite {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if !x0.is_finite() {
        x0 = 0.0;
        x1 = 1.0;
        y0 = 0.0;
        y1 = 1.0;
    }
    if x1 - x0 < 1e-300 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-300 {
        y1 = y0 + 1.0;
    }
    let pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    let sx = (W - ML - MR) / (x1 - x0);
    let sy = (H - MT - MB) / (y1 - y0);
    let px = |x: f64| ML + (x - x0) * sx;
    let py = |y: f64| H - MB - (y - y0) * sy;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"22\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{title}</text>\n",
        W / 2.0
    ));
    // Axes box.
    out.push_str(&format!(
        "<rect x=\"{ML:.1}\" y=\"{MT:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>\n",
        W - ML - MR,
        H - MT - MB
    ));
    for t in nice_ticks(x0, x1, 6) {
        let x = px(t);
        out.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{:.1}\" x2=\"{x:.2}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
            H - MB,
            H - MB + 5.0
        ));
        out.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{t:.4}</text>\n",
            H - MB + 18.0
        ));
    }
    for t in nice_ticks(y0, y1, 5) {
        let y = py(t);
        out.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{y:.2}\" x2=\"{ML:.1}\" y2=\"{y:.2}\" stroke=\"black\"/>\n",
            ML - 5.0
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{t:.4}</text>\n",
            ML - 8.0,
            y + 4.0
        ));
    }
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{xlabel}</text>\n",
        ML + (W - ML - MR) / 2.0,
        H - 12.0
    ));
    out.push_str(&format!(
        "<text x=\"18\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.1})\">{ylabel}</text>\n",
        MT + (H - MT - MB) / 2.0,
        MT + (H - MT - MB) / 2.0
    ));
    for (k, s) in series.iter().enumerate() {
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
            .collect();
        if !pts.is_empty() {
            out.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
                pts.join(" "),
                s.color
            ));
        }
        let ly = MT + 16.0 + 16.0 * k as f64;
        out.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            ML + 10.0,
            ML + 34.0,
            s.color
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            ML + 40.0,
            ly + 4.0,
            s.label
        ));
    }
    out.push_str("</svg>\n");
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())
}
