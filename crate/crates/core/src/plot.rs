//! Minimal semilog SVG line plots with interval whiskers.

use std::fmt::Write;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotPoint {
    pub x: f64,
    pub y: f64,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl PlotPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y, lo: None, hi: None }
    }

    pub fn with_interval(x: f64, y: f64, lo: f64, hi: f64) -> Self {
        Self { x, y, lo: Some(lo), hi: Some(hi) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<PlotPoint>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Axes {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Faint text drawn across the plot area.
    pub watermark: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvgPlot {
    pub svg: String,
    /// `(series, point)` indices left out because `y <= 0`.
    pub omitted: Vec<(usize, usize)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders the series on a linear x axis and a log10 y axis.
pub fn emit_svg(series: &[Series], axes: &Axes) -> Result<SvgPlot> {
    if series.is_empty() {
        return Err(Error::EmptyPlot("no series".into()));
    }
    let mut omitted = Vec::new();
    let mut kept: Vec<Vec<PlotPoint>> = Vec::with_capacity(series.len());
    for (si, s) in series.iter().enumerate() {
        let mut pts = Vec::new();
        for (pi, p) in s.points.iter().enumerate() {
            if p.y > 0.0 && p.y.is_finite() && p.x.is_finite() {
                pts.push(*p);
            } else {
                omitted.push((si, pi));
            }
        }
        kept.push(pts);
    }
    let all: Vec<&PlotPoint> = kept.iter().flatten().collect();
    if all.is_empty() {
        return Err(Error::EmptyPlot("no positive values on the log axis".into()));
    }

    let (mut x0, mut x1) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.x), b.max(p.x)));
    if x0 == x1 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for p in &all {
        for v in [Some(p.y), p.lo, p.hi].into_iter().flatten() {
            if v > 0.0 && v.is_finite() {
                ymin = ymin.min(v);
                ymax = ymax.max(v);
            }
        }
    }
    let d0 = ymin.log10().floor() as i32;
    let mut d1 = ymax.log10().ceil() as i32;
    if d1 <= d0 {
        d1 = d0 + 1;
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let py = |y: f64| {
        let t = (y.log10() - d0 as f64) / (d1 - d0) as f64;
        TOP + (1.0 - t.clamp(0.0, 1.0)) * plot_h
    };

    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(w, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(&axes.title)
    );
    for d in d0..=d1 {
        let y = py(10f64.powi(d));
        let _ = writeln!(
            w,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            w,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let ticks = 6;
    for i in 0..=ticks {
        let x = x0 + (x1 - x0) * i as f64 / ticks as f64;
        let _ = writeln!(
            w,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(x),
            TOP + plot_h + 18.0,
            format_tick(x)
        );
    }
    let _ = writeln!(
        w,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 16.0,
        escape(&axes.x_label)
    );
    let _ = writeln!(
        w,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(&axes.y_label)
    );
    if let Some(mark) = &axes.watermark {
        let _ = writeln!(
            w,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="32" fill="#bbbbbb" opacity="0.5">{}</text>"##,
            LEFT + plot_w / 2.0,
            TOP + plot_h / 2.0,
            escape(mark)
        );
    }

    for (si, (s, pts)) in series.iter().zip(&kept).enumerate() {
        let colour = PALETTE[si % PALETTE.len()];
        if pts.len() >= 2 {
            let d: Vec<String> = pts
                .iter()
                .enumerate()
                .map(|(i, p)| format!("{}{:.2},{:.2}", if i == 0 { "M" } else { "L" }, px(p.x), py(p.y)))
                .collect();
            let _ = writeln!(w, r#"<path d="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#, d.join(" "));
        }
        for p in pts {
            let (cx, cy) = (px(p.x), py(p.y));
            if let (Some(lo), Some(hi)) = (p.lo, p.hi) {
                let ylo = if lo > 0.0 { py(lo) } else { TOP + plot_h };
                let yhi = py(hi.max(p.y));
                let _ = writeln!(
                    w,
                    r#"<path d="M{cx:.2},{ylo:.2} L{cx:.2},{yhi:.2} M{:.2},{ylo:.2} L{:.2},{ylo:.2} M{:.2},{yhi:.2} L{:.2},{yhi:.2}" stroke="{colour}"/>"#,
                    cx - 3.0,
                    cx + 3.0,
                    cx - 3.0,
                    cx + 3.0
                );
            }
            let _ = writeln!(w, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="{colour}"/>"#);
        }
        let ly = TOP + 10.0 + 18.0 * si as f64;
        let lx = LEFT + plot_w + 12.0;
        let _ = writeln!(
            w,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{colour}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(w, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.label));
    }
    out.push_str("</svg>\n");
    Ok(SvgPlot { svg: out, omitted })
}

fn format_tick(x: f64) -> String {
    if (x - x.round()).abs() < 1e-9 {
        format!("{}", x.round() as i64)
    } else {
        format!("{x:.2}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(points: Vec<PlotPoint>) -> Vec<Series> {
        vec![Series { label: "a".into(), points }]
    }

    #[test]
    fn two_points() {
        let s = one(vec![PlotPoint::new(0.0, 0.5), PlotPoint::new(1.0, 0.01)]);
        let plot = emit_svg(&s, &Axes::default()).unwrap();
        assert!(plot.svg.starts_with("<svg"));
        assert!(plot.svg.trim_end().ends_with("</svg>"));
        assert_eq!(plot.svg.matches("<circle").count(), 2);
        assert_eq!(plot.svg.matches(r##"fill="none" stroke="#1f77b4""##).count(), 1);
        assert!(plot.omitted.is_empty());
    }

    #[test]
    fn deterministic() {
        let s = one(vec![
            PlotPoint::with_interval(0.0, 0.3, 0.2, 0.4),
            PlotPoint::with_interval(1.0, 1e-3, 0.0, 2e-3),
            PlotPoint::new(2.0, 0.0),
        ]);
        let axes = Axes { title: "t <x>".into(), watermark: Some("reduced-scale".into()), ..Axes::default() };
        let a = emit_svg(&s, &axes).unwrap();
        let b = emit_svg(&s, &axes).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.omitted, vec![(0, 2)]);
        assert!(a.svg.contains("t &lt;x&gt;"));
        assert!(a.svg.contains("reduced-scale"));
    }

    #[test]
    fn empty_input() {
        assert!(matches!(emit_svg(&[], &Axes::default()), Err(Error::EmptyPlot(_))));
        let zeros = one(vec![PlotPoint::new(0.0, 0.0)]);
        assert!(matches!(emit_svg(&zeros, &Axes::default()), Err(Error::EmptyPlot(_))));
    }
}
