//! Minimal deterministic SVG line charts for traces and bound curves.

use std::fmt::Write;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// Points kept per series; longer series are thinned by stride.
const MAX_POINTS: usize = 4000;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct ChartOptions {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub width: f64,
    pub height: f64,
}

impl Default for ChartOptions {
    fn default() -> Self {
        Self {
            title: String::new(),
            x_label: "wall-clock time".into(),
            y_label: "F(w) - F*".into(),
            log_y: true,
            width: 800.0,
            height: 500.0,
        }
    }
}

struct Frame {
    left: f64,
    top: f64,
    w: f64,
    h: f64,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    log_y: bool,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        self.left + (x - self.x0) / (self.x1 - self.x0) * self.w
    }

    fn py(&self, y: f64) -> f64 {
        let v = if self.log_y { y.log10() } else { y };
        self.top + self.h - (v - self.y0) / (self.y1 - self.y0) * self.h
    }
}

fn usable(log_y: bool, (x, y): (f64, f64)) -> bool {
    x.is_finite() && y.is_finite() && (!log_y || y > 0.0)
}

fn thin(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    if points.len() <= MAX_POINTS {
        return points.to_vec();
    }
    let stride = points.len().div_ceil(MAX_POINTS);
    let mut out: Vec<_> = points.iter().copied().step_by(stride).collect();
    if out.last() != points.last() {
        out.push(*points.last().expect("non-empty"));
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the series as an SVG document. Output depends only on the inputs.
pub fn line_chart_svg(series: &[Series], opts: &ChartOptions) -> String {
    let cleaned: Vec<(String, Vec<(f64, f64)>)> = series
        .iter()
        .map(|s| {
            let pts: Vec<_> = s.points.iter().copied().filter(|&p| usable(opts.log_y, p)).collect();
            (s.label.clone(), thin(&pts))
        })
        .collect();

    let all = cleaned.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        let v = if opts.log_y { y.log10() } else { y };
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(v);
        y1 = y1.max(v);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 <= 0.0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if opts.log_y {
        y0 = y0.floor();
        y1 = y1.ceil();
    }
    if y1 - y0 <= 0.0 {
        y0 -= 0.5;
        y1 += 0.5;
    }

    let frame = Frame {
        left: 80.0,
        top: 40.0,
        w: opts.width - 260.0,
        h: opts.height - 100.0,
        x0,
        x1,
        y0,
        y1,
        log_y: opts.log_y,
    };

    let mut svg = String::new();
    let (w, h) = (opts.width, opts.height);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    if !opts.title.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            frame.left + frame.w / 2.0,
            escape(&opts.title)
        );
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        frame.left, frame.top, frame.w, frame.h
    );

    // x ticks
    for i in 0..=5 {
        let x = x0 + (x1 - x0) * i as f64 / 5.0;
        let px = frame.px(x);
        let bottom = frame.top + frame.h;
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.2}" y1="{bottom:.2}" x2="{px:.2}" y2="{:.2}" stroke="#000"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            bottom + 5.0,
            bottom + 20.0,
            tick_label(x)
        );
    }
    // y ticks: decades on a log axis
    let y_ticks: Vec<f64> = if opts.log_y {
        (y0 as i64..=y1 as i64).map(|e| e as f64).collect()
    } else {
        (0..=5).map(|i| y0 + (y1 - y0) * i as f64 / 5.0).collect()
    };
    for v in y_ticks {
        let py = frame.top + frame.h - (v - y0) / (y1 - y0) * frame.h;
        let label = if opts.log_y { format!("1e{}", v as i64) } else { tick_label(v) };
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"##,
            frame.left,
            frame.left + frame.w,
            frame.left - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        frame.left + frame.w / 2.0,
        frame.top + frame.h + 45.0,
        escape(&opts.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        frame.top + frame.h / 2.0,
        frame.top + frame.h / 2.0,
        escape(&opts.y_label)
    );

    for (i, (label, pts)) in cleaned.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        match pts.len() {
            0 => {}
            1 => {
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                    frame.px(pts[0].0),
                    frame.py(pts[0].1)
                );
            }
            _ => {
                let mut d = String::new();
                for (j, &(x, y)) in pts.iter().enumerate() {
                    let _ = write!(d, "{}{:.2},{:.2}", if j == 0 { "M" } else { " L" }, frame.px(x), frame.py(y));
                }
                let _ = writeln!(
                    svg,
                    r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>"#
                );
            }
        }
        let ly = frame.top + 10.0 + 20.0 * i as f64;
        let lx = frame.left + frame.w + 20.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="3"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 25.0,
            lx + 32.0,
            ly + 4.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}
