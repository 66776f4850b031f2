//! Log-log sweep plot emitted as direct SVG markup: one polyline per norm,
//! dashed guide lines at the predicted slopes, no plotting dependency.

use crate::metrics::NormKind;
use crate::metrics::SweepResult;
use crate::scenarios::Preset;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 190.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

pub fn sweep_plot(preset: &Preset, result: &SweepResult) -> String {
    let mut series: Vec<(NormKind, Vec<(f64, f64)>)> = Vec::new();
    for norm in &preset.norms {
        let pts: Vec<(f64, f64)> = result
            .series(*norm)
            .into_iter()
            .filter(|(nu, v)| *nu > 0.0 && *v > 0.0)
            .map(|(nu, v)| (nu.log10(), v.log10()))
            .collect();
        if pts.len() >= 2 {
            series.push((*norm, pts));
        }
    }
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"monospace\" font-size=\"16\">{} sweep: norm vs ν (log-log)</text>\n",
        MARGIN_L, preset.name
    ));
    if series.is_empty() {
        svg.push_str("<text x=\"80\" y=\"240\" font-family=\"monospace\">no positive data to plot</text>\n</svg>\n");
        return svg;
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, pts) in &series {
        for (x, y) in pts {
            x0 = x0.min(*x);
            x1 = x1.max(*x);
            y0 = y0.min(*y);
            y1 = y1.max(*y);
        }
    }
    let pad = 0.25;
    x0 -= pad * 0.2;
    x1 += pad * 0.2;
    y0 -= pad;
    y1 += pad;
    let sx = (WIDTH - MARGIN_L - MARGIN_R) / (x1 - x0);
    let sy = (HEIGHT - MARGIN_T - MARGIN_B) / (y1 - y0);
    let map = |x: f64, y: f64| -> (f64, f64) {
        (
            MARGIN_L + (x - x0) * sx,
            HEIGHT - MARGIN_B - (y - y0) * sy,
        )
    };

    // axes and integer-decade ticks
    let (ax0, ay0) = map(x0, y0);
    let (ax1, _) = map(x1, y0);
    let (_, ay1) = map(x0, y1);
    svg.push_str(&format!(
        "<line x1=\"{ax0}\" y1=\"{ay0}\" x2=\"{ax1}\" y2=\"{ay0}\" stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "<line x1=\"{ax0}\" y1=\"{ay0}\" x2=\"{ax0}\" y2=\"{ay1}\" stroke=\"black\"/>\n"
    ));
    let mut tick = x0.ceil();
    while tick <= x1 {
        let (tx, ty) = map(tick, y0);
        svg.push_str(&format!(
            "<line x1=\"{tx}\" y1=\"{ty}\" x2=\"{tx}\" y2=\"{}\" stroke=\"black\"/>\n",
            ty + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\">1e{tick:.0}</text>\n",
            tx - 14.0,
            ty + 20.0
        ));
        tick += 1.0;
    }
    let mut tick = y0.ceil();
    while tick <= y1 {
        let (tx, ty) = map(x0, tick);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ty}\" x2=\"{tx}\" y2=\"{ty}\" stroke=\"black\"/>\n",
            tx - 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\">1e{tick:.0}</text>\n",
            tx - 52.0,
            ty + 4.0
        ));
        tick += 1.0;
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"13\">ν</text>\n",
        (ax0 + ax1) / 2.0,
        HEIGHT - 12.0
    ));

    for (i, (norm, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|(x, y)| {
                let (px, py) = map(*x, *y);
                format!("{px:.1},{py:.1}")
            })
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        for (x, y) in pts {
            let (px, py) = map(*x, *y);
            svg.push_str(&format!(
                "<circle cx=\"{px:.1}\" cy=\"{py:.1}\" r=\"3\" fill=\"{color}\"/>\n"
            ));
        }
        // dashed guide with the predicted slope anchored at the largest ν
        let predicted = norm.predicted(&preset.exponents);
        if let Some((xa, ya)) = pts.first() {
            let xb = pts.last().map(|(x, _)| *x).unwrap_or(*xa);
            let yb = ya + predicted * (xb - xa);
            let (p1x, p1y) = map(*xa, *ya);
            let (p2x, p2y) = map(xb, yb);
            svg.push_str(&format!(
                "<line x1=\"{p1x:.1}\" y1=\"{p1y:.1}\" x2=\"{p2x:.1}\" y2=\"{p2y:.1}\" stroke=\"{color}\" stroke-dasharray=\"6,4\" stroke-width=\"1\"/>\n"
            ));
        }
        let ly = MARGIN_T + 18.0 * i as f64;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            WIDTH - MARGIN_R + 10.0,
            WIDTH - MARGIN_R + 34.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\">{} (pred {:.3})</text>\n",
            WIDTH - MARGIN_R + 40.0,
            ly + 4.0,
            norm.csv_column(),
            predicted
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
