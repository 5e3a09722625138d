//! Stacked line charts rendered straight to SVG.

use std::fmt::Write;

const WIDTH: f64 = 820.0;
const PANEL_HEIGHT: f64 = 210.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 40.0;
const GAP: f64 = 40.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Series {
    pub fn new(name: &str, x: &[f64], y: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            x: x.to_vec(),
            y,
        }
    }
}

pub struct Panel {
    pub y_label: String,
    pub series: Vec<Series>,
}

pub struct Figure {
    pub title: String,
    pub panels: Vec<Panel>,
}

/// Round tick positions covering `[lo, hi]`.
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
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn label(v: f64) -> String {
    let s = format!("{:.4}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

impl Figure {
    pub fn render(&self) -> String {
        let n = self.panels.len().max(1) as f64;
        let height = TOP + n * PANEL_HEIGHT + (n - 1.0) * GAP + 50.0;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        for (i, panel) in self.panels.iter().enumerate() {
            let top = TOP + i as f64 * (PANEL_HEIGHT + GAP);
            let last = i + 1 == self.panels.len();
            panel.render(&mut s, top, last);
        }
        s.push_str("</svg>\n");
        s
    }
}

impl Panel {
    fn render(&self, s: &mut String, top: f64, x_axis_label: bool) {
        let w = WIDTH - LEFT - RIGHT;
        let h = PANEL_HEIGHT;
        let (x0, x1) = range(self.series.iter().flat_map(|c| c.x.iter().copied()));
        let (y0, y1) = range(self.series.iter().flat_map(|c| c.y.iter().copied()));
        let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * w;
        let py = |y: f64| top + h - (y - y0) / (y1 - y0) * h;

        let _ = writeln!(s, r##"<rect x="{LEFT}" y="{top}" width="{w}" height="{h}" fill="none" stroke="#444"/>"##);
        for t in ticks(x0, x1) {
            let x = px(t);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{top}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                top + h,
                top + h + 15.0,
                label(t)
            );
        }
        for t in ticks(y0, y1) {
            let y = py(t);
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                LEFT + w,
                LEFT - 6.0,
                y + 4.0,
                label(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
            top + h / 2.0,
            escape(&self.y_label)
        );
        if x_axis_label {
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">time (s)</text>"#,
                LEFT + w / 2.0,
                top + h + 34.0
            );
        }
        for (k, c) in self.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let mut d = String::new();
            for (x, y) in c.x.iter().zip(&c.y).filter(|(x, y)| x.is_finite() && y.is_finite()) {
                let _ = write!(d, "{:.2},{:.2} ", px(*x), py(*y));
            }
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.3"/>"#,
                d.trim_end()
            );
            let ly = top + 14.0 + 18.0 * k as f64;
            let lx = LEFT + w + 12.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                lx + 18.0,
                lx + 24.0,
                ly + 4.0,
                escape(&c.name)
            );
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
