//! Minimal line-plot panels rendered as standalone SVG.

use std::fmt::Write;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

/// Range covering `values`, padded by 5% of the span. A single value gets a
/// fixed pad so the axis never collapses.
fn covering_range(values: impl Iterator<Item = f64>, pad_frac: f64) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let span = hi - lo;
    let pad = if span > 0.0 {
        span * pad_frac
    } else {
        0.05 * lo.abs().max(1.0)
    };
    (lo - pad, hi + pad)
}

impl Panel {
    pub fn new(title: &str, x_label: &str, y_label: &str, series: Vec<Series>) -> Self {
        let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
        let x_range = covering_range(xs, 0.03);
        let ys = series.iter().flat_map(|s| s.points.iter().map(|p| p.1));
        let y_range = covering_range(ys, 0.05);
        Self {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            series,
            x_range,
            y_range,
        }
    }
}

const PALETTE: [&str; 9] = [
    "#7f7f7f", "#17becf", "#d62728", "#2ca02c", "#ff7f0e", "#1f77b4", "#9467bd", "#8c564b",
    "#e377c2",
];

const W: f64 = 380.0;
const H: f64 = 300.0;
const LEFT: f64 = 56.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 34.0;
const BOTTOM: f64 = 46.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Panels side by side with a shared legend underneath.
pub fn render_svg(title: &str, panels: &[Panel]) -> String {
    let legend: Vec<&str> = {
        let mut v: Vec<&str> = Vec::new();
        for p in panels {
            for s in &p.series {
                if !v.contains(&s.label.as_str()) {
                    v.push(&s.label);
                }
            }
        }
        v
    };
    let width = W * panels.len().max(1) as f64;
    let height = H + 40.0 + 18.0 * legend.len().div_ceil(4) as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="16" text-anchor="middle" font-size="13">{}</text>"#,
        width / 2.0,
        esc(title)
    );
    for (pi, panel) in panels.iter().enumerate() {
        let ox = W * pi as f64;
        let (x0, x1) = panel.x_range;
        let (y0, y1) = panel.y_range;
        let px = |x: f64| ox + LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
        let py = |y: f64| 20.0 + TOP + (y1 - y) / (y1 - y0) * (H - TOP - BOTTOM);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
            ox + W / 2.0,
            20.0 + TOP - 10.0,
            esc(&panel.title)
        );
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            px(x0),
            py(y1),
            px(x1) - px(x0),
            py(y0) - py(y1)
        );
        for t in 0..=4 {
            let f = f64::from(t) / 4.0;
            let xv = x0 + f * (x1 - x0);
            let yv = y0 + f * (y1 - y0);
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xv:.2}</text>"#,
                px(xv),
                py(y0) + 14.0
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.3}</text>"#,
                px(x0) - 4.0,
                py(yv) + 4.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            ox + LEFT + (W - LEFT - RIGHT) / 2.0,
            py(y0) + 30.0,
            esc(&panel.x_label)
        );
        for s in &panel.series {
            let color =
                PALETTE[legend.iter().position(|l| *l == s.label).unwrap_or(0) % PALETTE.len()];
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            if pts.len() > 1 {
                let _ = writeln!(
                    svg,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
                    pts.join(" ")
                );
            }
            for &(x, y) in &s.points {
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="2.8" fill="{color}"/>"#,
                    px(x),
                    py(y)
                );
            }
        }
    }
    for (i, label) in legend.iter().enumerate() {
        let x = 20.0 + 140.0 * (i % 4) as f64;
        let y = H + 30.0 + 18.0 * (i / 4) as f64;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<rect x="{x}" y="{}" width="12" height="4" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
            y - 4.0,
            x + 16.0,
            y + 1.0,
            esc(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_cover_values() {
        let p = Panel::new(
            "t",
            "x",
            "y",
            vec![Series {
                label: "a".into(),
                points: vec![(0.1, 2.0), (1.0, 3.5)],
            }],
        );
        assert!(p.x_range.0 <= 0.1 && p.x_range.1 >= 1.0);
        assert!(p.y_range.0 <= 2.0 && p.y_range.1 >= 3.5);
    }

    #[test]
    fn single_point_gets_nonzero_range() {
        let p = Panel::new(
            "t",
            "x",
            "y",
            vec![Series {
                label: "a".into(),
                points: vec![(0.5, 0.5)],
            }],
        );
        assert!(p.x_range.1 > p.x_range.0 && p.y_range.1 > p.y_range.0);
        let svg = render_svg("one", &[p]);
        assert!(svg.contains("<circle") && !svg.contains("NaN"));
    }
}
