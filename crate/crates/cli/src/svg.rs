//! Minimal static SVG charts: a multi-series line chart and a labeled bar
//! chart. Output is a complete standalone `.svg` document.

use std::fmt::Write;

pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub points: Vec<(f64, f64)>,
}

pub const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

const W: f64 = 860.0;
const H: f64 = 520.0;
const ML: f64 = 72.0; // left margin
const MR: f64 = 24.0;
const MT: f64 = 48.0;
const MB: f64 = 64.0;

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    let s = if a >= 1000.0 {
        format!("{v:.0}")
    } else if a >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    };
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        ML + (x - self.x0) / (self.x1 - self.x0) * (W - ML - MR)
    }
    fn py(&self, y: f64) -> f64 {
        H - MB - (y - self.y0) / (self.y1 - self.y0) * (H - MT - MB)
    }
}

fn open_svg(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\">"
    );
    let _ = writeln!(out, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"28\" text-anchor=\"middle\" font-size=\"17\" font-weight=\"bold\">{}</text>",
        W / 2.0,
        escape(title)
    );
}

fn draw_axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let (bx, by) = (H - MB, W - MR);
    let _ = writeln!(
        out,
        "<line x1=\"{ML}\" y1=\"{bx}\" x2=\"{by}\" y2=\"{bx}\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        out,
        "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{bx}\" stroke=\"black\"/>"
    );
    for i in 0..=5 {
        let t = i as f64 / 5.0;
        let xv = f.x0 + t * (f.x1 - f.x0);
        let yv = f.y0 + t * (f.y1 - f.y0);
        let px = f.px(xv);
        let py = f.py(yv);
        let _ = writeln!(
            out,
            "<line x1=\"{px}\" y1=\"{bx}\" x2=\"{px}\" y2=\"{}\" stroke=\"black\"/>",
            bx + 5.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{px}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>",
            bx + 20.0,
            fmt_num(xv)
        );
        let _ = writeln!(
            out,
            "<line x1=\"{}\" y1=\"{py}\" x2=\"{ML}\" y2=\"{py}\" stroke=\"black\"/>",
            ML - 5.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"12\">{}</text>",
            ML - 9.0,
            py + 4.0,
            fmt_num(yv)
        );
        if i > 0 {
            let _ = writeln!(
                out,
                "<line x1=\"{ML}\" y1=\"{py}\" x2=\"{by}\" y2=\"{py}\" stroke=\"#dddddd\" stroke-width=\"0.6\"/>"
            );
        }
    }
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">{}</text>",
        (ML + W - MR) / 2.0,
        H - 14.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 {})\">{}</text>",
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0,
        escape(y_label)
    );
}

/// Multi-series line chart; ranges come from the data (y padded 5%).
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut x0 = f64::INFINITY;
    let mut x1 = f64::NEG_INFINITY;
    let mut y0 = f64::INFINITY;
    let mut y1 = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let pad = 0.05 * (y1 - y0);
    let f = Frame {
        x0,
        x1,
        y0: y0 - pad,
        y1: y1 + pad,
    };

    let mut out = String::new();
    open_svg(&mut out, title);
    draw_axes(&mut out, &f, x_label, y_label);
    for s in series {
        if s.points.is_empty() {
            continue;
        }
        let mut d = String::new();
        for &(x, y) in &s.points {
            let _ = write!(d, "{:.2},{:.2} ", f.px(x), f.py(y));
        }
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\"/>",
            d.trim_end(),
            s.color
        );
    }
    // legend, top-right inside the plot area
    for (i, s) in series.iter().enumerate() {
        let ly = MT + 16.0 + 20.0 * i as f64;
        let lx = W - MR - 190.0;
        let _ = writeln!(
            out,
            "<rect x=\"{lx}\" y=\"{}\" width=\"14\" height=\"4\" fill=\"{}\"/>",
            ly - 5.0,
            s.color
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{ly}\" font-size=\"13\">{}</text>",
            lx + 20.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Vertical bar chart; y starts at zero. `y_max` pins the axis top (e.g.
/// 100 for percentages), otherwise the data maximum is used.
pub fn bar_chart(
    title: &str,
    y_label: &str,
    entries: &[(String, f64)],
    y_max: Option<f64>,
) -> String {
    let top = y_max
        .unwrap_or_else(|| entries.iter().map(|e| e.1).fold(0.0, f64::max))
        .max(1e-9);
    let f = Frame {
        x0: 0.0,
        x1: 1.0,
        y0: 0.0,
        y1: top,
    };
    let mut out = String::new();
    open_svg(&mut out, title);
    draw_axes(&mut out, &f, "", y_label);
    let n = entries.len().max(1) as f64;
    let span = W - ML - MR;
    let slot = span / n;
    let bar_w = (slot * 0.6).min(90.0);
    for (i, (label, value)) in entries.iter().enumerate() {
        let cx = ML + slot * (i as f64 + 0.5);
        let py = f.py(value.min(top));
        let base = H - MB;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            out,
            "<rect x=\"{:.2}\" y=\"{py:.2}\" width=\"{bar_w:.2}\" height=\"{:.2}\" fill=\"{color}\"/>",
            cx - bar_w / 2.0,
            base - py
        );
        let _ = writeln!(
            out,
            "<text x=\"{cx:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"12\">{}</text>",
            py - 6.0,
            fmt_num(*value)
        );
        let _ = writeln!(
            out,
            "<text x=\"{cx:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"13\">{}</text>",
            base + 36.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}
