//! Static SVG plots with their raw data as CSV.

use std::fmt::Write as _;

use anyhow::{bail, Result};

use crate::report::Outputs;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Line,
    Scatter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotStyle {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub mark: Mark,
    /// Power law `y = exp(log_constant)·x^exponent` drawn over the data.
    pub power_law: Option<(f64, f64)>,
    /// Horizontal band from half to twice the median of `y`.
    pub median_band: bool,
}

impl PlotStyle {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> PlotStyle {
        PlotStyle {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_x: false,
            log_y: false,
            mark: Mark::Line,
            power_law: None,
            median_band: false,
        }
    }

    pub fn log_log(mut self) -> Self {
        self.log_x = true;
        self.log_y = true;
        self
    }

    pub fn log_y(mut self) -> Self {
        self.log_y = true;
        self
    }

    pub fn scatter(mut self) -> Self {
        self.mark = Mark::Scatter;
        self
    }

    pub fn with_power_law(mut self, exponent: f64, log_constant: f64) -> Self {
        self.power_law = Some((exponent, log_constant));
        self
    }

    pub fn with_median_band(mut self) -> Self {
        self.median_band = true;
        self
    }
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

struct Axis {
    log: bool,
    lo: f64,
    hi: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Axis {
        let (mut lo, mut hi) = values
            .map(|v| if log { v.log10() } else { v })
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if log {
            lo = lo.floor();
            hi = hi.ceil();
        }
        if hi - lo < 1e-12 * lo.abs().max(1.0) {
            lo -= 0.5;
            hi += 0.5;
        }
        Axis { log, lo, hi }
    }

    fn t(&self, v: f64) -> f64 {
        let u = if self.log { v.log10() } else { v };
        (u - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let step = ((self.hi - self.lo) / 8.0).ceil().max(1.0);
            let mut out = Vec::new();
            let mut e = self.lo;
            while e <= self.hi + 1e-9 {
                out.push((10f64.powf(e), format!("1e{}", e as i64)));
                e += step;
            }
            out
        } else {
            (0..=5)
                .map(|i| {
                    let v = self.lo + (self.hi - self.lo) * i as f64 / 5.0;
                    (v, format!("{:.3}", v))
                })
                .collect()
        }
    }
}

fn usable(points: &[(f64, f64)], style: &PlotStyle) -> Vec<(f64, f64)> {
    points
        .iter()
        .copied()
        .filter(|&(x, y)| {
            x.is_finite() && y.is_finite() && (!style.log_x || x > 0.0) && (!style.log_y || y > 0.0)
        })
        .collect()
}

/// Renders `series` as `<name>.svg` and writes the points to `<name>.csv`
/// (columns `series,x,y`). A plot needs at least two usable points.
pub fn emit_plot_data(out: &mut Outputs, name: &str, series: &[Series], style: &PlotStyle) -> Result<()> {
    let total: usize = series.iter().map(|s| s.points.len()).sum();
    if total == 0 {
        bail!("cannot plot `{name}`: empty series");
    }
    let kept: Vec<Vec<(f64, f64)>> = series.iter().map(|s| usable(&s.points, style)).collect();
    let n_kept: usize = kept.iter().map(Vec::len).sum();
    if n_kept < 2 {
        bail!("cannot plot `{name}`: a trend needs at least two points, got {n_kept}");
    }
    out.write(&format!("{name}.csv"), |w| {
        writeln!(w, "series,x,y")?;
        for s in series {
            for (x, y) in &s.points {
                writeln!(w, "{},{x},{y}", s.label)?;
            }
        }
        Ok(())
    })?;
    let svg = render(series, &kept, style);
    out.write_str(&format!("{name}.svg"), &svg)?;
    Ok(())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn render(series: &[Series], kept: &[Vec<(f64, f64)>], style: &PlotStyle) -> String {
    let all = || kept.iter().flatten();
    let ys: Vec<f64> = all().map(|p| p.1).collect();
    let band = style.median_band.then(|| {
        let m = median(ys.clone());
        (m, 0.5 * m, 2.0 * m)
    });
    let mut y_extent = ys.clone();
    if let Some((_, lo, hi)) = band {
        if !style.log_y || lo > 0.0 {
            y_extent.extend([lo, hi]);
        }
    }
    let xa = Axis::fit(all().map(|p| p.0), style.log_x);
    let ya = Axis::fit(y_extent.into_iter(), style.log_y);
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |x: f64| LEFT + xa.t(x) * pw;
    let py = |y: f64| TOP + (1.0 - ya.t(y)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(&style.title));
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for (v, label) in xa.ticks() {
        let x = px(v);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{label}</text>"#, TOP + ph + 18.0);
    }
    for (v, label) in ya.ticks() {
        let y = py(v);
        let _ = writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{label}</text>"#, LEFT - 8.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 10.0, esc(&style.x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        esc(&style.y_label)
    );
    if let Some((m, lo, hi)) = band {
        let clamp = |y: f64| y.clamp(TOP, TOP + ph);
        if !style.log_y || lo > 0.0 {
            let (top, bottom) = (clamp(py(hi)), clamp(py(lo)));
            let _ = writeln!(
                s,
                r##"<rect x="{LEFT}" y="{top:.2}" width="{pw}" height="{:.2}" fill="#999" fill-opacity="0.2"/>"##,
                bottom - top
            );
        }
        if !style.log_y || m > 0.0 {
            let y = clamp(py(m));
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#555" stroke-dasharray="4 3"/>"##,
                LEFT + pw
            );
        }
    }
    for (i, (ser, pts)) in series.iter().zip(kept).enumerate() {
        let color = COLORS[i % COLORS.len()];
        match style.mark {
            Mark::Line => {
                let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
                let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
            }
            Mark::Scatter => {
                for &(x, y) in pts {
                    let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}"/>"#, px(x), py(y));
                }
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            LEFT + 10.0,
            TOP + 16.0 + 14.0 * i as f64,
            esc(&ser.label)
        );
    }
    if let Some((exponent, log_c)) = style.power_law {
        let (x0, x1) = all().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
        let samples: Vec<String> = (0..=40)
            .map(|i| {
                let u = i as f64 / 40.0;
                let x = if style.log_x { x0 * (x1 / x0).powf(u) } else { x0 + (x1 - x0) * u };
                let y = (log_c + exponent * x.ln()).exp();
                (x, y)
            })
            .filter(|&(_, y)| y.is_finite() && (!style.log_y || y > 0.0))
            .map(|(x, y)| format!("{:.2},{:.2}", px(x), py(y).clamp(TOP, TOP + ph)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="black" stroke-width="1" stroke-dasharray="6 4" points="{}"/>"#,
            samples.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">fit: slope {exponent:.4}</text>"#,
            LEFT + pw - 8.0,
            TOP + ph - 10.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn esc(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
