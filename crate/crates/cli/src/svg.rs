//! Static SVG line and scatter plots.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Scatter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
    /// Extra text under the legend, e.g. a fitted slope.
    pub annotation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlotError {
    Empty,
    /// A log axis received a nonpositive value.
    NonPositive(&'static str),
}

impl std::fmt::Display for PlotError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PlotError::Empty => write!(f, "nothing to plot: every series is empty"),
            PlotError::NonPositive(axis) => write!(f, "log-scale {axis} axis needs positive values"),
        }
    }
}

impl std::error::Error for PlotError {}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn new(vals: impl Iterator<Item = f64>, log: bool, name: &'static str) -> Result<Axis, PlotError> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in vals.filter(|v| v.is_finite()) {
            if log && v <= 0.0 {
                return Err(PlotError::NonPositive(name));
            }
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Err(PlotError::Empty);
        }
        if hi - lo < 1e-12 * (1.0 + lo.abs()) {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.04 * (hi - lo);
        Ok(Axis { lo: lo - pad, hi: hi + pad, log })
    }

    fn frac(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    /// Tick positions in data units.
    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo.ceil() as i32, self.hi.floor() as i32);
            if b >= a {
                return (a..=b).map(|e| 10f64.powi(e)).collect();
            }
            return vec![10f64.powf(0.5 * (self.lo + self.hi))];
        }
        let raw = (self.hi - self.lo) / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
        let first = (self.lo / step).ceil() as i64;
        let last = (self.hi / step).floor() as i64;
        (first..=last).map(|i| i as f64 * step).collect()
    }
}

fn label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-3) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Renders `plot`; identical input gives identical bytes.
pub fn render(plot: &Plot) -> Result<String, PlotError> {
    let finite = |p: &&(f64, f64)| p.0.is_finite() && p.1.is_finite();
    if plot.series.iter().all(|s| !s.points.iter().any(|p| finite(&p))) {
        return Err(PlotError::Empty);
    }
    let all = || plot.series.iter().flat_map(|s| s.points.iter().filter(finite));
    let xa = Axis::new(all().map(|p| p.0), plot.log_x, "x")?;
    let ya = Axis::new(all().map(|p| p.1), plot.log_y, "y")?;
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let px = |x: f64| LEFT + xa.frac(x) * pw;
    let py = |y: f64| TOP + (1.0 - ya.frac(y)) * ph;

    let mut s = String::new();
    let w = &mut s;
    writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(w, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(w, r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(&plot.title)).unwrap();
    writeln!(w, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#).unwrap();
    for t in xa.ticks() {
        let x = px(t);
        writeln!(w, r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/>"##, TOP, TOP + ph).unwrap();
        writeln!(w, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 16.0, label(t)).unwrap();
    }
    for t in ya.ticks() {
        let y = py(t);
        writeln!(w, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, LEFT + pw).unwrap();
        writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, label(t)).unwrap();
    }
    let xl = if plot.log_x { format!("{} (log)", plot.x_label) } else { plot.x_label.clone() };
    let yl = if plot.log_y { format!("{} (log)", plot.y_label) } else { plot.y_label.clone() };
    writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 12.0, escape(&xl)).unwrap();
    writeln!(w, r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#, TOP + ph / 2.0, TOP + ph / 2.0, escape(&yl)).unwrap();

    for (i, ser) in plot.series.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let pts: Vec<(f64, f64)> = ser.points.iter().filter(finite).map(|&(x, y)| (px(x), py(y))).collect();
        match ser.style {
            Style::Line => {
                let d: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                writeln!(w, r#"<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{}"/>"#, d.join(" ")).unwrap();
            }
            Style::Scatter => {
                for (x, y) in pts {
                    writeln!(w, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{c}"/>"#).unwrap();
                }
            }
        }
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        writeln!(w, r#"<rect x="{lx:.2}" y="{:.2}" width="12" height="4" fill="{c}"/>"#, ly - 6.0).unwrap();
        writeln!(w, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, lx + 18.0, escape(&ser.name)).unwrap();
    }
    if let Some(a) = &plot.annotation {
        let ly = TOP + 14.0 + 18.0 * plot.series.len() as f64 + 8.0;
        writeln!(w, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, LEFT + pw + 12.0, escape(a)).unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_svg(plot: &Plot, path: &Path) -> io::Result<()> {
    let text = render(plot).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    std::fs::write(path, text)
}
