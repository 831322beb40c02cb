//! Minimal SVG rendering of ROC curves, written by hand so plotting needs
//! no extra dependency.

use std::fmt::Write as _;

use ssce_core::downstream::RocCurve;

const SIZE: f64 = 360.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// Plots TPR against FPR on `[0, max_fpr]`, the region the partial area
/// covers. All curves must share one `max_fpr`.
pub fn roc_svg(curves: &[(&str, &RocCurve)]) -> String {
    let max_fpr = curves.first().map_or(1.0, |c| c.1.max_fpr);
    let width = SIZE + 2.0 * MARGIN + 120.0;
    let height = SIZE + 2.0 * MARGIN;
    let x = |f: f64| MARGIN + SIZE * (f / max_fpr);
    let y = |t: f64| MARGIN + SIZE * (1.0 - t);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#);
    for k in 0..=5 {
        let f = k as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.2}</text>"#,
            x(f * max_fpr),
            MARGIN + SIZE + 16.0,
            f * max_fpr
        );
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{f:.1}</text>"#, MARGIN - 6.0, y(f) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">FPR</text>"#, MARGIN + SIZE / 2.0, height - 8.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">TPR</text>"#,
        MARGIN + SIZE / 2.0,
        MARGIN + SIZE / 2.0
    );

    for (i, (name, curve)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut points = String::new();
        for k in 0..curve.fpr.len() {
            let (f, t) = (curve.fpr[k], curve.tpr[k]);
            if f > max_fpr {
                // Clip the segment that leaves the plotted region.
                let (f0, t0) = (curve.fpr[k - 1], curve.tpr[k - 1]);
                let t_end = t0 + (t - t0) * (max_fpr - f0) / (f - f0);
                let _ = write!(points, "{:.2},{:.2} ", x(max_fpr), y(t_end));
                break;
            }
            let _ = write!(points, "{:.2},{:.2} ", x(f), y(t));
        }
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, points.trim_end());
        let ly = MARGIN + 14.0 + 18.0 * i as f64;
        let lx = MARGIN + SIZE + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/>"#, ly - 4.0, lx + 16.0, ly - 4.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{ly:.1}">{}</text>"#, lx + 20.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
