//! Deterministic SVG plots: multi-series line charts with optional log axes,
//! plus staircase overlays whose drop positions carry a machine-readable
//! `data-t` attribute.

use std::fmt::Write as _;

const WIDTH: f64 = 840.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
    "#bcbd22", "#e377c2",
];

pub struct Series<'a> {
    pub label: String,
    pub points: &'a [(f64, f64)],
}

pub struct PlotSpec<'a> {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series<'a>>,
    /// Staircase overlay: `(t, level)` drop points, drawn as a step function
    /// with a vertical marker per drop carrying `data-t`.
    pub staircase: Option<Vec<(f64, f64)>>,
}

struct AxisMap {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    log_x: bool,
    log_y: bool,
}

impl AxisMap {
    fn x(&self, v: f64) -> f64 {
        let (v, lo, hi) = if self.log_x {
            (v.ln(), self.x_min.ln(), self.x_max.ln())
        } else {
            (v, self.x_min, self.x_max)
        };
        let frac = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
        MARGIN_L + frac * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn y(&self, v: f64) -> f64 {
        let (v, lo, hi) = if self.log_y {
            (v.ln(), self.y_min.ln(), self.y_max.ln())
        } else {
            (v, self.y_min, self.y_max)
        };
        let frac = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
        HEIGHT - MARGIN_B - frac * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn usable(p: &(f64, f64), log_x: bool, log_y: bool) -> bool {
    p.0.is_finite() && p.1.is_finite() && (!log_x || p.0 > 0.0) && (!log_y || p.1 > 0.0)
}

/// Render the plot. Returns `None` when no series has a drawable point.
pub fn render(spec: &PlotSpec) -> Option<String> {
    let pts: Vec<(f64, f64)> = spec
        .series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .chain(
            spec.staircase
                .iter()
                .flat_map(|st| st.iter().map(|&(t, l)| (t, l))),
        )
        .filter(|p| usable(p, spec.log_x, spec.log_y))
        .collect();
    if pts.is_empty() {
        return None;
    }
    let x_min = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let x_max = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let y_min = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let y_max = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let map = AxisMap {
        x_min,
        x_max: if x_max > x_min { x_max } else { x_min + 1.0 },
        y_min,
        y_max: if y_max > y_min { y_max } else { y_min + 1.0 },
        log_x: spec.log_x,
        log_y: spec.log_y,
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(
        svg,
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{}</text>",
        (WIDTH - MARGIN_R + MARGIN_L) / 2.0,
        escape(&spec.title)
    );

    // frame
    let _ = writeln!(
        svg,
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{:.1}\" height=\"{:.1}\" \
         fill=\"none\" stroke=\"#333\"/>",
        WIDTH - MARGIN_L - MARGIN_R,
        HEIGHT - MARGIN_T - MARGIN_B
    );

    axis_ticks(&mut svg, &map);

    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\">{}</text>",
        (WIDTH - MARGIN_R + MARGIN_L) / 2.0,
        HEIGHT - 12.0,
        escape(&spec.x_label)
    );
    let _ = writeln!(
        svg,
        "<text x=\"18\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\" transform=\"rotate(-90 18 {:.1})\">{}</text>",
        (HEIGHT - MARGIN_B + MARGIN_T) / 2.0,
        (HEIGHT - MARGIN_B + MARGIN_T) / 2.0,
        escape(&spec.y_label)
    );

    if let Some(staircase) = &spec.staircase {
        draw_staircase(&mut svg, &map, staircase);
    }

    for (i, series) in spec.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut path = String::new();
        let mut pen_down = false;
        for p in series.points {
            if !usable(p, spec.log_x, spec.log_y) {
                pen_down = false;
                continue;
            }
            let cmd = if pen_down { 'L' } else { 'M' };
            let _ = write!(path, "{}{:.2} {:.2} ", cmd, map.x(p.0), map.y(p.1));
            pen_down = true;
        }
        if !path.is_empty() {
            let _ = writeln!(
                svg,
                "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"/>",
                path.trim_end()
            );
        }
        let ly = MARGIN_T + 16.0 + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" \
             stroke=\"{color}\" stroke-width=\"2\"/>",
            WIDTH - MARGIN_R + 10.0,
            WIDTH - MARGIN_R + 34.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
            WIDTH - MARGIN_R + 40.0,
            ly + 4.0,
            escape(&series.label)
        );
    }

    svg.push_str("</svg>\n");
    Some(svg)
}

fn draw_staircase(svg: &mut String, map: &AxisMap, staircase: &[(f64, f64)]) {
    // step function: level before each drop is the sum of remaining drops
    let mut drops: Vec<(f64, f64)> = staircase
        .iter()
        .copied()
        .filter(|p| usable(p, map.log_x, false))
        .collect();
    drops.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if drops.is_empty() {
        return;
    }
    let total: f64 = drops.iter().map(|d| d.1).sum();
    let mut level = total;
    let mut path = String::new();
    let x_start = map.x_min.max(f64::MIN_POSITIVE);
    let _ = write!(path, "M{:.2} {:.2} ", map.x(x_start), y_clamped(map, level));
    for &(t, drop) in &drops {
        if t > map.x_max {
            break;
        }
        let x = map.x(t.max(x_start));
        let _ = write!(path, "L{x:.2} {:.2} ", y_clamped(map, level));
        level -= drop;
        let _ = write!(path, "L{x:.2} {:.2} ", y_clamped(map, level));
        let _ = writeln!(
            svg,
            "<line class=\"staircase-drop\" data-t=\"{t}\" x1=\"{x:.2}\" y1=\"{MARGIN_T}\" \
             x2=\"{x:.2}\" y2=\"{:.1}\" stroke=\"#bbbbbb\" stroke-dasharray=\"3 4\"/>",
            HEIGHT - MARGIN_B
        );
    }
    let _ = write!(path, "L{:.2} {:.2}", map.x(map.x_max), y_clamped(map, level));
    let _ = writeln!(
        svg,
        "<path class=\"staircase\" d=\"{path}\" fill=\"none\" stroke=\"#444444\" \
         stroke-width=\"1.2\" stroke-dasharray=\"6 3\"/>"
    );
}

fn y_clamped(map: &AxisMap, level: f64) -> f64 {
    let v = if map.log_y {
        level.max(map.y_min)
    } else {
        level
    };
    map.y(v.min(map.y_max).max(map.y_min))
}

fn axis_ticks(svg: &mut String, map: &AxisMap) {
    let x_ticks = ticks(map.x_min, map.x_max, map.log_x);
    for t in x_ticks {
        let x = map.x(t);
        let _ = writeln!(
            svg,
            "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#333\"/>",
            HEIGHT - MARGIN_B,
            HEIGHT - MARGIN_B + 5.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{x:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">{}</text>",
            HEIGHT - MARGIN_B + 18.0,
            tick_label(t)
        );
    }
    let y_ticks = ticks(map.y_min, map.y_max, map.log_y);
    for t in y_ticks {
        let y = map.y(t);
        let _ = writeln!(
            svg,
            "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{MARGIN_L}\" y2=\"{y:.1}\" stroke=\"#333\"/>",
            MARGIN_L - 5.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{}</text>",
            MARGIN_L - 8.0,
            y + 4.0,
            tick_label(t)
        );
    }
}

fn ticks(lo: f64, hi: f64, log: bool) -> Vec<f64> {
    if log {
        let lo_e = lo.log10().floor() as i32;
        let hi_e = hi.log10().ceil() as i32;
        let step = (((hi_e - lo_e) as usize / 8) + 1).max(1) as i32;
        (lo_e..=hi_e)
            .step_by(step as usize)
            .map(|e| 10f64.powi(e))
            .filter(|&t| t >= lo * 0.999 && t <= hi * 1.001)
            .collect()
    } else {
        (0..=4)
            .map(|i| lo + (hi - lo) * i as f64 / 4.0)
            .collect()
    }
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.0e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Extract the `data-t` values of the staircase drop markers from an SVG
/// produced by [`render`].
pub fn staircase_drop_positions(svg: &str) -> Vec<f64> {
    let mut out = Vec::new();
    for chunk in svg.split("data-t=\"").skip(1) {
        if let Some(end) = chunk.find('"') {
            if let Ok(v) = chunk[..end].parse::<f64>() {
                out.push(v);
            }
        }
    }
    out
}
