//! Static SVG scatter rendering of a 2D embedding.

use crate::csv::EmbeddingRow;

/// Fixed 20-color palette (enough for CIFAR-100 superclasses); classes
/// beyond 20 cycle.
pub const PALETTE: [&str; 20] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#aec7e8", "#ffbb78", "#98df8a", "#ff9896", "#c5b0d5", "#c49c94",
    "#f7b6d2", "#c7c7c7", "#dbdb8d", "#9edae5",
];

/// Render one circle per row, equal-aspect, fitted to the data extent with
/// a 5% margin per axis. The y axis is flipped into plot orientation.
pub fn render_scatter(rows: &[EmbeddingRow]) -> String {
    // plot coordinates: x = z1, y = -z2
    let xs: Vec<f64> = rows.iter().map(|r| r.z[0]).collect();
    let ys: Vec<f64> = rows.iter().map(|r| -r.z[1]).collect();
    let (min_x, max_x) = extent(&xs);
    let (min_y, max_y) = extent(&ys);
    let span_x = (max_x - min_x).max(1e-9);
    let span_y = (max_y - min_y).max(1e-9);
    let vx = min_x - 0.05 * span_x;
    let vy = min_y - 0.05 * span_y;
    let vw = 1.1 * span_x;
    let vh = 1.1 * span_y;

    let width = 800.0;
    let height = (width * vh / vw).round().max(1.0);
    let radius = 0.008 * vw.max(vh);

    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"{vx} {vy} {vw} {vh}\">\n"
    ));
    for (row, (&x, &y)) in rows.iter().zip(xs.iter().zip(&ys)) {
        let color = PALETTE[row.label % PALETTE.len()];
        out.push_str(&format!(
            "  <circle cx=\"{x}\" cy=\"{y}\" r=\"{radius}\" fill=\"{color}\" fill-opacity=\"0.8\"/>\n"
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn extent(vals: &[f64]) -> (f64, f64) {
    if vals.is_empty() {
        return (0.0, 1.0);
    }
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}
