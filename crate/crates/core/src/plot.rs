//! Self-contained SVG line charts. Every chart carries its data as a CSV
//! block inside an XML comment so a figure can be audited without the run
//! that produced it.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::evaluation::{SweepResult, TrialAggregate};
use crate::regime::ValueDynamics;
use crate::trainer::RunLog;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Linear,
    /// Non-positive values are kept in the data block but not drawn.
    Log,
}

impl Scale {
    fn map(self, v: f64) -> Option<f64> {
        match self {
            Scale::Linear => v.is_finite().then_some(v),
            Scale::Log => (v > 0.0 && v.is_finite()).then(|| v.log10()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Half-widths of a band around each point.
    pub band: Option<Vec<f64>>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series { label: label.into(), points, band: None }
    }

    pub fn with_band(mut self, half_widths: Vec<f64>) -> Self {
        self.band = Some(half_widths);
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_scale: Scale,
    pub y_scale: Scale,
    pub series: Vec<Series>,
    /// Horizontal reference line, e.g. a regime threshold.
    pub reference: Option<(f64, String)>,
}

impl Chart {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Chart {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            x_scale: Scale::Linear,
            y_scale: Scale::Linear,
            series: Vec::new(),
            reference: None,
        }
    }

    fn bounds(&self) -> Option<((f64, f64), (f64, f64))> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in &self.series {
            for (i, &(x, y)) in s.points.iter().enumerate() {
                let Some(mx) = self.x_scale.map(x) else { continue };
                let half = s.band.as_ref().and_then(|b| b.get(i)).copied().unwrap_or(0.0);
                for yy in [y - half, y + half] {
                    if let Some(my) = self.y_scale.map(yy) {
                        xs.push(mx);
                        ys.push(my);
                    }
                }
            }
        }
        if let Some((r, _)) = &self.reference {
            if let Some(my) = self.y_scale.map(*r) {
                ys.push(my);
            }
        }
        let span = |v: &[f64]| -> Option<(f64, f64)> {
            let lo = v.iter().copied().reduce(f64::min)?;
            let hi = v.iter().copied().reduce(f64::max)?;
            if hi - lo < 1e-12 {
                Some((lo - 0.5, hi + 0.5))
            } else {
                let pad = 0.04 * (hi - lo);
                Some((lo - pad, hi + pad))
            }
        };
        Some((span(&xs)?, span(&ys)?))
    }

    pub fn to_svg(&self, digest: Option<&str>) -> Result<String> {
        let ((x0, x1), (y0, y1)) =
            self.bounds().ok_or_else(|| Error::contract(format!("chart '{}' has nothing to draw", self.title)))?;
        let plot_w = WIDTH - LEFT - RIGHT;
        let plot_h = HEIGHT - TOP - BOTTOM;
        let px = |mx: f64| LEFT + (mx - x0) / (x1 - x0) * plot_w;
        let py = |my: f64| TOP + (y1 - my) / (y1 - y0) * plot_h;

        let mut svg = String::new();
        let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        svg.push_str(&self.data_comment(digest));
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + plot_w / 2.0,
            escape(&self.title)
        );

        for (m, label) in ticks(x0, x1, self.x_scale) {
            let x = px(m);
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#e0e0e0"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
                TOP,
                TOP + plot_h,
                TOP + plot_h + 16.0,
                escape(&label)
            );
        }
        for (m, label) in ticks(y0, y1, self.y_scale) {
            let y = py(m);
            let _ = writeln!(
                svg,
                r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#e0e0e0"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
                LEFT,
                LEFT + plot_w,
                LEFT - 6.0,
                y + 4.0,
                escape(&label)
            );
        }
        let _ = writeln!(
            svg,
            r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + plot_w / 2.0,
            HEIGHT - 16.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            TOP + plot_h / 2.0,
            TOP + plot_h / 2.0,
            escape(&self.y_label)
        );

        if let Some((r, label)) = &self.reference {
            if let Some(m) = self.y_scale.map(*r) {
                let y = py(m);
                let _ = writeln!(
                    svg,
                    r#"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="black" stroke-dasharray="6 4"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                    LEFT + plot_w,
                    LEFT + 4.0,
                    y - 4.0,
                    escape(label)
                );
            }
        }

        for (k, s) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            if let Some(band) = &s.band {
                let mut upper = Vec::new();
                let mut lower = Vec::new();
                for (&(x, y), &h) in s.points.iter().zip(band) {
                    if let (Some(mx), Some(hi), Some(lo)) =
                        (self.x_scale.map(x), self.y_scale.map(y + h), self.y_scale.map(y - h))
                    {
                        upper.push(format!("{:.1},{:.1}", px(mx), py(hi)));
                        lower.push(format!("{:.1},{:.1}", px(mx), py(lo)));
                    }
                }
                if upper.len() >= 2 {
                    lower.reverse();
                    let _ = writeln!(
                        svg,
                        r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                        upper.join(" "),
                        lower.join(" ")
                    );
                }
            }
            let pts: Vec<String> = s
                .points
                .iter()
                .filter_map(|&(x, y)| Some(format!("{:.1},{:.1}", px(self.x_scale.map(x)?), py(self.y_scale.map(y)?))))
                .collect();
            if pts.len() == 1 {
                let (cx, cy) = pts[0].split_once(',').expect("formatted pair");
                let _ = writeln!(svg, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
            } else if !pts.is_empty() {
                let _ = writeln!(
                    svg,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                    pts.join(" ")
                );
            }
            let ly = TOP + 14.0 + 18.0 * k as f64;
            let lx = LEFT + plot_w + 12.0;
            let _ = writeln!(
                svg,
                r#"<line x1="{lx:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="3"/><text x="{:.1}" y="{ly:.1}">{}</text>"#,
                ly - 4.0,
                lx + 18.0,
                ly - 4.0,
                lx + 24.0,
                escape(&s.label)
            );
        }
        svg.push_str("</svg>\n");
        Ok(svg)
    }

    pub fn write(&self, path: &Path, digest: Option<&str>) -> Result<()> {
        std::fs::write(path, self.to_svg(digest)?)?;
        Ok(())
    }

    fn data_comment(&self, digest: Option<&str>) -> String {
        let mut out = String::from("<!--\n");
        if let Some(d) = digest {
            let _ = writeln!(out, "config-digest={}", comment_safe(d));
        }
        out.push_str("series,x,y,half_width\n");
        for s in &self.series {
            let label = comment_safe(&s.label).replace(',', ";");
            for (i, &(x, y)) in s.points.iter().enumerate() {
                let half = s.band.as_ref().and_then(|b| b.get(i)).map_or(String::new(), |h| h.to_string());
                let _ = writeln!(out, "{label},{x},{y},{half}");
            }
        }
        out.push_str("-->\n");
        out
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Comments may not contain `--`.
fn comment_safe(text: &str) -> String {
    let mut s = text.to_string();
    while s.contains("--") {
        s = s.replace("--", "-_");
    }
    s
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Tick positions in mapped coordinates, with labels in data units.
fn ticks(lo: f64, hi: f64, scale: Scale) -> Vec<(f64, String)> {
    match scale {
        Scale::Log => {
            let mut step = 1.0;
            while (hi - lo) / step > 8.0 {
                step *= 2.0;
            }
            let mut out = Vec::new();
            let mut e = (lo / step).ceil() * step;
            while e <= hi {
                out.push((e, format!("1e{}", e as i64)));
                e += step;
            }
            out
        }
        Scale::Linear => {
            let raw = (hi - lo) / 6.0;
            let mag = 10f64.powf(raw.log10().floor());
            let step = [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
            let mut out = Vec::new();
            let mut k = (lo / step).ceil();
            while k * step <= hi {
                let v = k * step;
                out.push((v, fmt_tick(if v.abs() < step * 1e-9 { 0.0 } else { v })));
                k += 1.0;
            }
            out
        }
    }
}

/// Training loss on a log axis.
pub fn loss_chart(title: &str, runs: &[(&str, &RunLog)]) -> Chart {
    let mut chart = Chart::new(title, "training step", "Bellman residual loss");
    chart.y_scale = Scale::Log;
    for (label, log) in runs {
        chart.series.push(Series::new(*label, log.losses().into_iter().map(|(s, l)| (s as f64, l)).collect()));
    }
    chart
}

/// One line per tracked state, with the regime threshold as reference.
pub fn value_dynamics_chart(title: &str, dynamics: &ValueDynamics, threshold: Option<f64>) -> Chart {
    let mut chart = Chart::new(title, "training step", "V(s) = max_a Q(s, a)");
    for (state, track) in dynamics.series.iter().enumerate() {
        let points = dynamics.steps.iter().zip(track).map(|(&s, &v)| (s as f64, v)).collect();
        chart.series.push(Series::new(format!("state {state}"), points));
    }
    chart.reference = threshold.map(|t| (t, format!("threshold {t:.4}")));
    chart
}

/// Mean accumulated reward per logged step with its 95% band.
pub fn reward_vs_step_chart(title: &str, steps: &[usize], curves: &[(&str, &TrialAggregate)]) -> Result<Chart> {
    let mut chart = Chart::new(title, "training step", "accumulated reward");
    for (label, agg) in curves {
        if agg.mean.len() != steps.len() {
            return Err(Error::contract(format!("curve '{label}' does not match the step axis")));
        }
        let points = steps.iter().zip(&agg.mean).map(|(&s, &m)| (s as f64, m)).collect();
        let mut series = Series::new(format!("{label} (n={})", agg.trials), points);
        if let Some(h) = &agg.half_width {
            series = series.with_band(h.clone());
        }
        chart.series.push(series);
    }
    Ok(chart)
}

/// Robustness sweep on a log alpha axis; `alpha = 0` stays in the data block.
pub fn reward_vs_alpha_chart(title: &str, sweeps: &[(&str, &SweepResult)]) -> Chart {
    let mut chart = Chart::new(title, "perturbation scale alpha", "accumulated reward");
    chart.x_scale = Scale::Log;
    for (label, sweep) in sweeps {
        let points = sweep.points.iter().map(|p| (p.alpha, p.mean_reward)).collect();
        let band = sweep.points.iter().map(|p| p.ci_half_width).collect();
        chart.series.push(Series::new(*label, points).with_band(band));
    }
    chart
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_chart() -> Chart {
        let mut c = Chart::new("a <b> & \"c\"", "x", "y");
        c.series.push(Series::new("one--two", vec![(0.0, -1.0), (1.0, 2.0), (2.0, 0.5)]).with_band(vec![0.1, 0.2, 0.3]));
        c.series.push(Series::new("single", vec![(1.0, 1.0)]));
        c.reference = Some((0.0, "zero".into()));
        c
    }

    #[test]
    fn data_block_lists_every_point() {
        let svg = sample_chart().to_svg(Some("abc")).unwrap();
        assert!(svg.contains("config-digest=abc"));
        assert!(svg.contains("one-_two,1,2,0.2"));
        assert!(svg.contains("single,1,1,\n"));
        let body = svg.split_once("<!--").unwrap().1.split_once("-->").unwrap().0;
        assert!(!body.contains("--"));
    }

    #[test]
    fn titles_are_escaped() {
        let svg = sample_chart().to_svg(None).unwrap();
        assert!(svg.contains("a &lt;b&gt; &amp; &quot;c&quot;"));
    }

    #[test]
    fn log_axis_skips_non_positive_values() {
        let mut c = Chart::new("loss", "step", "loss");
        c.y_scale = Scale::Log;
        c.series.push(Series::new("l", vec![(0.0, 0.0), (1.0, 1e-3), (2.0, 1e-6)]));
        let svg = c.to_svg(None).unwrap();
        assert!(svg.contains("l,0,0,"));
        assert!(svg.contains("1e-3") || svg.contains("1e-4"));
    }

    #[test]
    fn empty_chart_is_an_error() {
        assert!(Chart::new("t", "x", "y").to_svg(None).is_err());
        let mut c = Chart::new("t", "x", "y");
        c.y_scale = Scale::Log;
        c.series.push(Series::new("neg", vec![(0.0, -1.0)]));
        assert!(c.to_svg(None).is_err());
    }

    #[test]
    fn linear_ticks_cover_range() {
        let t = ticks(-0.23, 1.07, Scale::Linear);
        assert!(t.len() >= 4);
        assert!(t.iter().all(|(v, _)| (-0.23..=1.07).contains(v)));
        assert!(t.iter().any(|(_, l)| l == "0"));
    }
}
