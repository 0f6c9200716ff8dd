//! Small deterministic SVG charts: fixed canvas, fixed palette, fixed
//! number formatting. Identical inputs produce identical bytes, which the
//! tests rely on; no external assets, fonts resolve to any monospace.

use std::fmt::Write as _;

pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 560.0;
const LEFT: f64 = 72.0;
const RIGHT_PAD: f64 = 172.0;
const TOP: f64 = 42.0;
const BOTTOM_PAD: f64 = 54.0;
/// Values at or below zero cannot appear on a log axis; they are clamped
/// to this decade instead of being dropped.
const LOG_CLAMP: f64 = 1e-17;
/// Series longer than this are thinned by a deterministic stride.
const MAX_POINTS: usize = 1500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marker {
    Circle,
    Square,
}

#[derive(Debug, Clone)]
pub struct Line {
    pub label: String,
    pub color: String,
    pub width: f64,
    pub dash: Option<String>,
    pub pts: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Markers {
    pub label: String,
    pub color: String,
    pub marker: Marker,
    pub size: f64,
    pub pts: Vec<(f64, f64)>,
}

/// Dashed reference line at a fixed coordinate, horizontal or vertical
/// depending on which list it joins.
#[derive(Debug, Clone)]
pub struct RefLine {
    pub value: f64,
    pub label: String,
}

#[derive(Debug, Clone)]
pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub equal_aspect: bool,
    pub lines: Vec<Line>,
    pub markers: Vec<Markers>,
    pub hlines: Vec<RefLine>,
    pub vlines: Vec<RefLine>,
}

impl Figure {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Figure {
        Figure {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            log_y: false,
            equal_aspect: false,
            lines: Vec::new(),
            markers: Vec::new(),
            hlines: Vec::new(),
            vlines: Vec::new(),
        }
    }

    fn ty(&self, y: f64) -> f64 {
        if self.log_y {
            y.max(LOG_CLAMP).log10()
        } else {
            y
        }
    }

    pub fn render(&self) -> String {
        let plot_w = WIDTH - LEFT - RIGHT_PAD;
        let plot_h = HEIGHT - TOP - BOTTOM_PAD;

        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for l in &self.lines {
            for &(x, y) in &l.pts {
                xs.push(x);
                ys.push(self.ty(y));
            }
        }
        for m in &self.markers {
            for &(x, y) in &m.pts {
                xs.push(x);
                ys.push(self.ty(y));
            }
        }
        for r in &self.hlines {
            ys.push(self.ty(r.value));
        }
        for r in &self.vlines {
            xs.push(r.value);
        }
        let (mut x0, mut x1) = span_of(&xs);
        let (mut y0, mut y1) = span_of(&ys);
        pad_span(&mut x0, &mut x1);
        pad_span(&mut y0, &mut y1);
        if self.equal_aspect {
            let scale = ((x1 - x0) / plot_w).max((y1 - y0) / plot_h);
            let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
            x0 = cx - 0.5 * scale * plot_w;
            x1 = cx + 0.5 * scale * plot_w;
            y0 = cy - 0.5 * scale * plot_h;
            y1 = cy + 0.5 * scale * plot_h;
        }

        let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
        let py = |y: f64| TOP + plot_h - (y - y0) / (y1 - y0) * plot_h;

        let mut out = String::with_capacity(16 * 1024);
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
        );
        let _ = writeln!(
            out,
            "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>"
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"15\">{}</text>",
            LEFT + plot_w / 2.0,
            escape(&self.title)
        );

        // Grid and ticks.
        let x_ticks = linear_ticks(x0, x1);
        let y_ticks = if self.log_y {
            decade_ticks(y0, y1)
        } else {
            linear_ticks(y0, y1)
        };
        for &t in &x_ticks {
            let x = px(t);
            let _ = writeln!(
                out,
                "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#dddddd\" stroke-width=\"1\"/>",
                TOP,
                TOP + plot_h
            );
            let _ = writeln!(
                out,
                "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"11\">{}</text>",
                TOP + plot_h + 16.0,
                tick_label(t)
            );
        }
        for &t in &y_ticks {
            let y = py(t);
            let _ = writeln!(
                out,
                "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#dddddd\" stroke-width=\"1\"/>",
                LEFT,
                LEFT + plot_w
            );
            let label = if self.log_y {
                format!("1e{}", t.round() as i64)
            } else {
                tick_label(t)
            };
            let _ = writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"11\">{label}</text>",
                LEFT - 6.0,
                y + 4.0
            );
        }
        let _ = writeln!(
            out,
            "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>"
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"12\">{}</text>",
            LEFT + plot_w / 2.0,
            HEIGHT - 14.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            "<text x=\"18\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"12\" transform=\"rotate(-90 18 {:.2})\">{}</text>",
            TOP + plot_h / 2.0,
            TOP + plot_h / 2.0,
            escape(&self.y_label)
        );

        // Reference lines.
        for r in &self.hlines {
            let y = py(self.ty(r.value));
            let _ = writeln!(
                out,
                "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#555555\" stroke-width=\"1\" stroke-dasharray=\"6,4\"/>",
                LEFT,
                LEFT + plot_w
            );
        }
        for r in &self.vlines {
            let x = px(r.value);
            let _ = writeln!(
                out,
                "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#555555\" stroke-width=\"1\" stroke-dasharray=\"6,4\"/>",
                TOP,
                TOP + plot_h
            );
            let _ = writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\">{}</text>",
                x + 4.0,
                TOP + 14.0,
                escape(&r.label)
            );
        }

        // Series.
        for l in &self.lines {
            if l.pts.is_empty() {
                continue;
            }
            let dash = l
                .dash
                .as_ref()
                .map(|d| format!(" stroke-dasharray=\"{d}\""))
                .unwrap_or_default();
            let mut points = String::new();
            let stride = l.pts.len().div_ceil(MAX_POINTS).max(1);
            for (i, &(x, y)) in l.pts.iter().enumerate() {
                if i % stride != 0 && i != l.pts.len() - 1 {
                    continue;
                }
                let _ = write!(points, "{:.2},{:.2} ", px(x), py(self.ty(y)));
            }
            let _ = writeln!(
                out,
                "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"{}\"{dash} points=\"{}\"/>",
                l.color,
                l.width,
                points.trim_end()
            );
        }
        for m in &self.markers {
            for &(x, y) in &m.pts {
                let (cx, cy) = (px(x), py(self.ty(y)));
                match m.marker {
                    Marker::Circle => {
                        let _ = writeln!(
                            out,
                            "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{}\" fill=\"{}\"/>",
                            m.size, m.color
                        );
                    }
                    Marker::Square => {
                        let _ = writeln!(
                            out,
                            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>",
                            cx - m.size,
                            cy - m.size,
                            2.0 * m.size,
                            2.0 * m.size,
                            m.color
                        );
                    }
                }
            }
        }

        // Legend, one row per labeled item.
        let lx = LEFT + plot_w + 14.0;
        let mut ly = TOP + 10.0;
        for l in &self.lines {
            if l.label.is_empty() {
                continue;
            }
            let dash = l
                .dash
                .as_ref()
                .map(|d| format!(" stroke-dasharray=\"{d}\""))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "<line x1=\"{lx:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{}\" stroke-width=\"{}\"{dash}/>",
                lx + 22.0,
                l.color,
                l.width
            );
            let _ = writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\">{}</text>",
                lx + 28.0,
                ly + 4.0,
                escape(&l.label)
            );
            ly += 18.0;
        }
        for m in &self.markers {
            if m.label.is_empty() {
                continue;
            }
            match m.marker {
                Marker::Circle => {
                    let _ = writeln!(
                        out,
                        "<circle cx=\"{:.2}\" cy=\"{ly:.2}\" r=\"{}\" fill=\"{}\"/>",
                        lx + 11.0,
                        m.size,
                        m.color
                    );
                }
                Marker::Square => {
                    let _ = writeln!(
                        out,
                        "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>",
                        lx + 11.0 - m.size,
                        ly - m.size,
                        2.0 * m.size,
                        2.0 * m.size,
                        m.color
                    );
                }
            }
            let _ = writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\">{}</text>",
                lx + 28.0,
                ly + 4.0,
                escape(&m.label)
            );
            ly += 18.0;
        }
        for r in self.hlines.iter().filter(|r| !r.label.is_empty()) {
            let _ = writeln!(
                out,
                "<line x1=\"{lx:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"#555555\" stroke-width=\"1\" stroke-dasharray=\"6,4\"/>",
                lx + 22.0
            );
            let _ = writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\">{}</text>",
                lx + 28.0,
                ly + 4.0,
                escape(&r.label)
            );
            ly += 18.0;
        }

        out.push_str("</svg>\n");
        out
    }
}

fn span_of(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if lo > hi {
        (0.0, 1.0)
    } else {
        (lo, hi)
    }
}

fn pad_span(lo: &mut f64, hi: &mut f64) {
    let span = *hi - *lo;
    let pad = if span > 0.0 {
        0.05 * span
    } else {
        0.5 * lo.abs().max(1.0)
    };
    *lo -= pad;
    *hi += pad;
}

/// Round tick positions at a 1/2/5 step that yields 4-8 ticks.
fn linear_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm < 1.5 {
        mag
    } else if norm < 3.5 {
        2.0 * mag
    } else if norm < 7.5 {
        5.0 * mag
    } else {
        10.0 * mag
    };
    let first = (lo / step).ceil();
    let mut ticks = Vec::new();
    let mut k = first;
    while k * step <= hi + 1e-12 * span {
        ticks.push(k * step);
        k += 1.0;
    }
    ticks
}

/// Integer decades covering a log10-transformed range, thinned if the
/// range spans many orders of magnitude.
fn decade_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let first = lo.ceil() as i64;
    let last = hi.floor() as i64;
    let count = (last - first).max(0) + 1;
    let step = ((count + 7) / 8).max(1);
    (first..=last)
        .filter(|e| (e - first) % step == 0)
        .map(|e| e as f64)
        .collect()
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if !(1e-4..1e5).contains(&a) {
        return format!("{v:.0e}");
    }
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo() -> Figure {
        let mut fig = Figure::new("demo", "x", "y");
        fig.lines.push(Line {
            label: "rise".into(),
            color: PALETTE[0].into(),
            width: 1.5,
            dash: None,
            pts: (0..100).map(|i| (i as f64, (i as f64).sqrt())).collect(),
        });
        fig.markers.push(Markers {
            label: "spots".into(),
            color: PALETTE[1].into(),
            marker: Marker::Square,
            size: 4.0,
            pts: vec![(10.0, 5.0), (50.0, 2.0)],
        });
        fig.hlines.push(RefLine {
            value: 3.0,
            label: "floor".into(),
        });
        fig
    }

    #[test]
    fn renders_self_contained_svg() {
        let text = demo().render();
        assert!(text.starts_with("<svg xmlns"));
        assert!(text.trim_end().ends_with("</svg>"));
        assert!(text.contains("polyline"));
        assert!(!text.contains("href"), "must not reference external assets");
    }

    #[test]
    fn rendering_is_deterministic() {
        assert_eq!(demo().render(), demo().render());
    }

    #[test]
    fn log_axis_clamps_zeros() {
        let mut fig = Figure::new("log", "t", "e");
        fig.log_y = true;
        fig.lines.push(Line {
            label: "err".into(),
            color: PALETTE[0].into(),
            width: 1.0,
            dash: None,
            pts: vec![(0.0, 1.0), (1.0, 1e-3), (2.0, 0.0)],
        });
        let text = fig.render();
        assert!(text.contains("1e-3") || text.contains("1e-5"));
    }

    #[test]
    fn long_series_are_thinned() {
        let mut fig = Figure::new("big", "x", "y");
        fig.lines.push(Line {
            label: "dense".into(),
            color: PALETTE[0].into(),
            width: 1.0,
            dash: None,
            pts: (0..100_000).map(|i| (i as f64, (i % 7) as f64)).collect(),
        });
        let text = fig.render();
        assert!(text.len() < 200_000, "svg too large: {}", text.len());
    }

    #[test]
    fn tick_labels_are_compact() {
        assert_eq!(tick_label(0.0), "0");
        assert_eq!(tick_label(2.5), "2.5");
        assert_eq!(tick_label(-1.0), "-1");
        assert_eq!(tick_label(1e-6), "1e-6");
    }
}
