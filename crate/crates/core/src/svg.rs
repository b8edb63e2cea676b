//! Minimal SVG line and scatter plots. CSV stays the canonical output; these
//! are for a quick look.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Markers,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

impl Series {
    pub fn line(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), points, style: Style::Line }
    }

    pub fn markers(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), points, style: Style::Markers }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<Series>,
}

impl Plot {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), ..Default::default() }
    }

    pub fn with(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    pub fn render(&self) -> Result<String> {
        let tx = |x: f64| if self.log_x { x.log10() } else { x };
        let pts = self.series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| tx(*x).is_finite() && y.is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(tx(x));
            x1 = x1.max(tx(x));
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            // nothing to draw; keep a unit frame
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        widen(&mut x0, &mut x1);
        widen(&mut y0, &mut y1);
        let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
        let sx = |x: f64| LEFT + (tx(x) - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

        let mut out = String::new();
        let w = &mut out;
        writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
        writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#).unwrap();
        writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
        writeln!(w, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(&self.title)).unwrap();
        writeln!(w, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#).unwrap();

        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let (px, py) = (LEFT + f * pw, TOP + ph - f * ph);
            let xl = if self.log_x { format!("1e{xv:.1}") } else { tick(xv) };
            writeln!(w, r#"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0).unwrap();
            writeln!(w, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, escape(&xl)).unwrap();
            writeln!(w, r#"<line x1="{}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/>"#, LEFT - 5.0).unwrap();
            writeln!(w, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, py + 4.0, escape(&tick(yv))).unwrap();
        }
        writeln!(w, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, HEIGHT - 15.0, escape(&self.x_label)).unwrap();
        writeln!(w, r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#, TOP + ph / 2.0, escape(&self.y_label)).unwrap();

        for (k, s) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let visible: Vec<(f64, f64)> = s.points.iter().filter(|(x, y)| tx(*x).is_finite() && y.is_finite()).map(|&(x, y)| (sx(x), sy(y))).collect();
            match s.style {
                Style::Line => {
                    let pts: Vec<String> = visible.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                    writeln!(w, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" ")).unwrap();
                }
                Style::Markers => {
                    for (x, y) in &visible {
                        writeln!(w, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#).unwrap();
                    }
                }
            }
            let ly = TOP + 14.0 + 16.0 * k as f64;
            writeln!(w, r#"<text x="{}" y="{ly}" text-anchor="end" fill="{color}">{}</text>"#, WIDTH - RIGHT - 8.0, escape(&s.label)).unwrap();
        }
        writeln!(w, "</svg>").unwrap();
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()?)?;
        Ok(())
    }
}

fn widen(lo: &mut f64, hi: &mut f64) {
    if *hi - *lo <= f64::EPSILON * lo.abs().max(hi.abs()).max(1e-300) {
        let d = if *lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
        *lo -= d;
        *hi += d;
    }
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) {
        format!("{v:.3e}")
    } else {
        format!("{v:.4}").trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
