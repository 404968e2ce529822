//! Minimal deterministic SVG output: fixed two-decimal coordinates, no timestamps or ids.

use std::fmt::Write;

pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub struct Svg {
    out: String,
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
        );
        let _ = writeln!(out, r#"<rect x="0" y="0" width="{width:.0}" height="{height:.0}" fill="white"/>"#);
        Self { out }
    }

    pub fn line(&mut self, (x1, y1): (f64, f64), (x2, y2): (f64, f64), stroke: &str, width: f64) {
        let _ = writeln!(
            self.out,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}" stroke-width="{width:.2}"/>"#
        );
    }

    pub fn dashed(&mut self, (x1, y1): (f64, f64), (x2, y2): (f64, f64), stroke: &str) {
        let _ = writeln!(
            self.out,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}" stroke-width="1" stroke-dasharray="4 3"/>"#
        );
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], stroke: &str) {
        let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            self.out,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
    }

    pub fn circle(&mut self, (x, y): (f64, f64), r: f64, fill: &str) {
        let _ = writeln!(self.out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.2}" fill="{fill}"/>"#);
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.out,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"/>"#
        );
    }

    pub fn text(&mut self, (x, y): (f64, f64), size: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.out,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="{size:.0}" text-anchor="{anchor}">{}</text>"#,
            escape(s)
        );
    }

    pub fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

/// A plotting area mapping data coordinates onto a pixel rectangle.
#[derive(Clone, Copy, Debug)]
pub struct Frame {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

impl Frame {
    /// Widens degenerate ranges so single points still plot.
    pub fn new(left: f64, top: f64, width: f64, height: f64, x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        let widen = |(a, b): (f64, f64)| if b - a > 1e-12 { (a, b) } else { (a - 0.5, b + 0.5) };
        Self {
            left,
            top,
            width,
            height,
            x_range: widen(x_range),
            y_range: widen(y_range),
        }
    }

    pub fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let (x0, x1) = self.x_range;
        let (y0, y1) = self.y_range;
        (
            self.left + (x - x0) / (x1 - x0) * self.width,
            self.top + self.height - (y - y0) / (y1 - y0) * self.height,
        )
    }

    /// Box, title, axis labels and min/max tick labels.
    pub fn axes(&self, svg: &mut Svg, title: &str, x_label: &str, y_label: &str) {
        let (l, t, w, h) = (self.left, self.top, self.width, self.height);
        svg.line((l, t + h), (l + w, t + h), "black", 1.0);
        svg.line((l, t), (l, t + h), "black", 1.0);
        svg.text((l + w / 2.0, t - 8.0), 13.0, "middle", title);
        svg.text((l + w / 2.0, t + h + 30.0), 11.0, "middle", x_label);
        svg.text((l - 40.0, t + h / 2.0), 11.0, "middle", y_label);
        let (x0, x1) = self.x_range;
        let (y0, y1) = self.y_range;
        svg.text((l, t + h + 14.0), 10.0, "middle", &tick(x0));
        svg.text((l + w, t + h + 14.0), 10.0, "middle", &tick(x1));
        svg.text((l - 4.0, t + h), 10.0, "end", &tick(y0));
        svg.text((l - 4.0, t + 4.0), 10.0, "end", &tick(y1));
    }
}

pub fn tick(v: f64) -> String {
    if v == v.round() && v.abs() < 1e6 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

/// Range of all values, or `(0, 1)` when there are none.
pub fn extent(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Line chart with markers and a legend, one colour per series.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h) = (640.0, 420.0);
    let legend = 18.0 * series.len() as f64;
    let mut svg = Svg::new(w, h + legend);
    let x = extent(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let y = extent(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let frame = Frame::new(70.0, 40.0, 540.0, 320.0, x, y);
    frame.axes(&mut svg, title, x_label, y_label);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let px: Vec<_> = s.points.iter().map(|&(a, b)| frame.map(a, b)).collect();
        if px.len() > 1 {
            svg.polyline(&px, color);
        }
        for &p in &px {
            svg.circle(p, 3.0, color);
        }
        let ly = h + 18.0 * i as f64;
        svg.rect(70.0, ly - 9.0, 10.0, 10.0, color);
        svg.text((86.0, ly), 11.0, "start", &s.label);
    }
    svg.finish()
}

/// One bar per value, labelled underneath.
pub fn bar_chart(title: &str, x_label: &str, y_label: &str, labels: &[String], values: &[f64]) -> String {
    let mut svg = Svg::new(640.0, 420.0);
    let (lo, hi) = extent(values.iter().copied().chain([0.0]));
    let frame = Frame::new(70.0, 40.0, 540.0, 320.0, (0.0, values.len().max(1) as f64), (lo, hi));
    frame.axes(&mut svg, title, x_label, y_label);
    for (i, (&v, label)) in values.iter().zip(labels).enumerate() {
        let (x0, y0) = frame.map(i as f64 + 0.15, v.max(0.0));
        let (x1, y1) = frame.map(i as f64 + 0.85, v.min(0.0));
        svg.rect(x0, y0, x1 - x0, y1 - y0, PALETTE[0]);
        let (cx, _) = frame.map(i as f64 + 0.5, 0.0);
        svg.text((cx, frame.top + frame.height + 14.0), 10.0, "middle", label);
    }
    svg.finish()
}
