//! Minimal SVG rendering of mean regret curves.

use std::fmt::Write as _;

use super::{Algorithm, Bands};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 5] = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd"];

/// One polyline per algorithm of mean regret against cumulative epochs.
pub fn regret_svg(bands: &[(Algorithm, Bands)]) -> String {
    let max_x = bands.iter().flat_map(|(_, b)| b.grid.iter().copied()).max().unwrap_or(1).max(1) as f64;
    let max_y = bands
        .iter()
        .flat_map(|(_, b)| b.mean.iter().copied())
        .fold(0.0, f64::max)
        .max(1e-9);
    let px = |x: f64| MARGIN + x / max_x * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - y / max_y * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let mut w = |s: String| svg.push_str(&s);
    w(format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    w(format!("<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"));
    w(format!(
        "<line x1=\"{MARGIN}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN,
        WIDTH - MARGIN
    ));
    w(format!("<line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{}\" stroke=\"black\"/>\n", HEIGHT - MARGIN));
    w(format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">cumulative epochs (max {max_x})</text>\n",
        WIDTH / 2.0,
        HEIGHT - 15.0
    ));
    w(format!("<text x=\"15\" y=\"{}\" transform=\"rotate(-90 15 {0})\" text-anchor=\"middle\">mean regret (max {max_y:.4})</text>\n", HEIGHT / 2.0));
    for (i, (a, b)) in bands.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut points = String::new();
        let mut prev: Option<f64> = None;
        for (&x, &y) in b.grid.iter().zip(&b.mean) {
            if let Some(p) = prev {
                write!(points, "{:.1},{:.1} ", px(x as f64), py(p)).expect("string write");
            }
            write!(points, "{:.1},{:.1} ", px(x as f64), py(y)).expect("string write");
            prev = Some(y);
        }
        w(format!("<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n", points.trim_end()));
        let ly = MARGIN + 16.0 * i as f64;
        w(format!(
            "<text x=\"{}\" y=\"{ly}\" fill=\"{color}\">{a}</text>\n",
            WIDTH - MARGIN - 40.0
        ));
    }
    w("</svg>\n".into());
    svg
}
