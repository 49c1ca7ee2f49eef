//! Static SVG rendering of cumulative-regret curves.
//!
//! Pure string assembly: identical aggregates produce byte-identical files.
//! Each curve gets a line for its mean and a shaded band for +/- one
//! standard deviation, with a legend naming the algorithm and its budget.

use super::AggregateCurve;
use std::fmt::Write as _;

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 24.0;
const MARGIN_BOTTOM: f64 = 52.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
];

fn nice_step(span: f64, target_ticks: usize) -> f64 {
    if span <= 0.0 {
        return 1.0;
    }
    let raw = span / target_ticks as f64;
    let mag = 10f64.powf(raw.log10().floor());
    for mult in [1.0, 2.0, 5.0, 10.0] {
        if mag * mult >= raw {
            return mag * mult;
        }
    }
    mag * 10.0
}

struct Frame {
    x_max: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, episode: f64) -> f64 {
        MARGIN_LEFT + (episode / self.x_max) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y(&self, value: f64) -> f64 {
        let inner = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        HEIGHT - MARGIN_BOTTOM - (value / self.y_max) * inner
    }
}

fn curve_name(agg: &AggregateCurve) -> String {
    match agg.epsilon {
        Some(e) => format!("{} (eps = {e})", agg.algorithm),
        None => agg.algorithm.clone(),
    }
}

/// Renders the whole figure. Requires at least one aggregate.
pub fn render_svg(aggregates: &[AggregateCurve]) -> String {
    assert!(!aggregates.is_empty(), "plot needs at least one aggregate");
    let x_max = aggregates
        .iter()
        .map(|a| a.mean.len())
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let y_max = aggregates
        .iter()
        .flat_map(|a| a.mean.iter().zip(&a.std).map(|(m, s)| m + s))
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let frame = Frame {
        x_max,
        y_max: y_max * 1.05,
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );

    // Axes.
    let x0 = frame.x(0.0);
    let y0 = frame.y(0.0);
    let x1 = frame.x(frame.x_max);
    let y1 = frame.y(frame.y_max);
    let _ = writeln!(
        svg,
        r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}" stroke="black" stroke-width="1"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}" stroke="black" stroke-width="1"/>"#
    );

    // Ticks and grid.
    let x_step = nice_step(frame.x_max, 6);
    let mut t = 0.0;
    while t <= frame.x_max + 1e-9 {
        let px = frame.x(t);
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{y0:.2}" x2="{px:.2}" y2="{:.2}" stroke="black" stroke-width="1"/>"#,
            y0 + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{px:.2}" y="{:.2}" font-family="monospace" font-size="12" text-anchor="middle">{t:.0}</text>"#,
            y0 + 20.0
        );
        t += x_step;
    }
    let y_step = nice_step(frame.y_max, 6);
    let mut v = 0.0;
    while v <= frame.y_max + 1e-9 {
        let py = frame.y(v);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{x0:.2}" y2="{py:.2}" stroke="black" stroke-width="1"/>"#,
            x0 - 5.0
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{x0:.2}" y1="{py:.2}" x2="{x1:.2}" y2="{py:.2}" stroke="#dddddd" stroke-width="0.5"/>"##
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="monospace" font-size="12" text-anchor="end">{v:.0}</text>"#,
            x0 - 8.0,
            py + 4.0
        );
        v += y_step;
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-family="monospace" font-size="13" text-anchor="middle">episode</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" font-family="monospace" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.2})">cumulative regret</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );

    // Bands then lines, so every mean stays visible.
    for (ci, agg) in aggregates.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        if agg.mean.is_empty() {
            continue;
        }
        let mut band = String::new();
        for (i, (m, s)) in agg.mean.iter().zip(&agg.std).enumerate() {
            let _ = write!(
                band,
                "{:.2},{:.2} ",
                frame.x((i + 1) as f64),
                frame.y((m + s).min(frame.y_max))
            );
        }
        for (i, (m, s)) in agg.mean.iter().zip(&agg.std).enumerate().rev() {
            let _ = write!(
                band,
                "{:.2},{:.2} ",
                frame.x((i + 1) as f64),
                frame.y((m - s).max(0.0))
            );
        }
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
            band.trim_end()
        );
    }
    for (ci, agg) in aggregates.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        let mut line = String::new();
        for (i, m) in agg.mean.iter().enumerate() {
            let _ = write!(line, "{:.2},{:.2} ", frame.x((i + 1) as f64), frame.y(*m));
        }
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
            line.trim_end()
        );
    }

    // Legend, top-left inside the frame.
    for (ci, agg) in aggregates.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        let ly = MARGIN_TOP + 14.0 + 18.0 * ci as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2.5"/>"#,
            x0 + 10.0,
            x0 + 38.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="monospace" font-size="12">{}</text>"#,
            x0 + 44.0,
            ly + 4.0,
            curve_name(agg)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
