//! Minimal hand-written SVG: ROC curves and a 2x2 confusion matrix.
//! Coordinates are printed with fixed precision so output is byte-stable.

use std::fmt::Write;

use slide_mil::metrics::{ConfusionMatrix, RocCurve};

const SIZE: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn header(out: &mut String, width: f64, height: f64) {
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One polyline per `(label, curve, auc)`, with the chance diagonal.
pub fn roc_svg(title: &str, curves: &[(String, &RocCurve, f64)]) -> String {
    let x = |fpr: f64| MARGIN + fpr * SIZE;
    let y = |tpr: f64| MARGIN + (1.0 - tpr) * SIZE;
    let mut out = String::new();
    header(&mut out, SIZE + 2.0 * MARGIN, SIZE + 2.0 * MARGIN + 20.0 * curves.len() as f64);
    writeln!(out, r#"<text x="{:.0}" y="30" text-anchor="middle" font-size="14">{}</text>"#, MARGIN + SIZE / 2.0, escape(title)).unwrap();
    writeln!(
        out,
        r#"<rect x="{MARGIN:.0}" y="{MARGIN:.0}" width="{SIZE:.0}" height="{SIZE:.0}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{t:.2}</text>"#, x(t), MARGIN + SIZE + 16.0).unwrap();
        writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{t:.2}</text>"#, MARGIN - 6.0, y(t) + 4.0).unwrap();
    }
    writeln!(
        out,
        r#"<text x="{:.0}" y="{:.0}" text-anchor="middle">False positive rate</text>"#,
        MARGIN + SIZE / 2.0,
        MARGIN + SIZE + 34.0
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="14" y="{:.0}" text-anchor="middle" transform="rotate(-90 14 {:.0})">True positive rate</text>"#,
        MARGIN + SIZE / 2.0,
        MARGIN + SIZE / 2.0
    )
    .unwrap();
    writeln!(
        out,
        r##"<path d="M{:.2},{:.2} L{:.2},{:.2}" stroke="#999999" stroke-dasharray="4 4" fill="none"/>"##,
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0)
    )
    .unwrap();
    for (i, (label, curve, auc)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        for (k, p) in curve.points.iter().enumerate() {
            write!(d, "{}{:.2},{:.2}", if k == 0 { "M" } else { " L" }, x(p.fpr), y(p.tpr)).unwrap();
        }
        writeln!(out, r#"<path d="{d}" stroke="{color}" stroke-width="2" fill="none"/>"#).unwrap();
        let ly = MARGIN + SIZE + 56.0 + 20.0 * i as f64;
        writeln!(
            out,
            r#"<rect x="{MARGIN:.0}" y="{:.0}" width="12" height="12" fill="{color}"/><text x="{:.0}" y="{:.0}">{} (AUC = {auc:.3})</text>"#,
            ly - 10.0,
            MARGIN + 18.0,
            ly,
            escape(label)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

/// Rows are the true class, columns the predicted class, positive first.
pub fn confusion_svg(title: &str, cm: &ConfusionMatrix) -> String {
    let cell = 120.0;
    let left = 110.0;
    let top = 70.0;
    let mut out = String::new();
    header(&mut out, left + 2.0 * cell + 30.0, top + 2.0 * cell + 50.0);
    writeln!(out, r#"<text x="{:.0}" y="24" text-anchor="middle" font-size="14">{}</text>"#, left + cell, escape(title)).unwrap();
    let cells = [[cm.tp, cm.fn_], [cm.fp, cm.tn]];
    let max = cells.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    for (r, row) in cells.iter().enumerate() {
        for (c, &count) in row.iter().enumerate() {
            let (cx, cy) = (left + c as f64 * cell, top + r as f64 * cell);
            // darker blue for larger counts
            let shade = 255 - (175.0 * count as f64 / max).round() as u8;
            writeln!(
                out,
                r#"<rect x="{cx:.0}" y="{cy:.0}" width="{cell:.0}" height="{cell:.0}" fill="rgb({shade},{shade},255)" stroke="black"/>"#
            )
            .unwrap();
            writeln!(
                out,
                r#"<text x="{:.0}" y="{:.0}" text-anchor="middle" font-size="20">{count}</text>"#,
                cx + cell / 2.0,
                cy + cell / 2.0 + 7.0
            )
            .unwrap();
        }
    }
    for (i, name) in ["Positive", "Negative"].iter().enumerate() {
        let mid = i as f64 * cell + cell / 2.0;
        writeln!(out, r#"<text x="{:.0}" y="{:.0}" text-anchor="middle">{name}</text>"#, left + mid, top - 8.0).unwrap();
        writeln!(out, r#"<text x="{:.0}" y="{:.0}" text-anchor="end">{name}</text>"#, left - 8.0, top + mid + 4.0).unwrap();
    }
    writeln!(out, r#"<text x="{:.0}" y="{:.0}" text-anchor="middle">Predicted</text>"#, left + cell, top + 2.0 * cell + 24.0).unwrap();
    writeln!(out, r#"<text x="14" y="{:.0}" text-anchor="start">True</text>"#, top - 8.0).unwrap();
    out.push_str("</svg>\n");
    out
}
