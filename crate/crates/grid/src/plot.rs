//! Plot data artifacts: a `bus,value` CSV and a static SVG bar chart.

use std::fmt::Write;

use crate::feeder::BusId;

pub fn csv(rows: &[(BusId, f64)]) -> String {
    let mut out = String::from("bus,value\n");
    for (bus, value) in rows {
        let _ = writeln!(out, "{bus},{}", fixed6(*value));
    }
    out
}

/// Formats to six decimals, folding negative zero into zero.
pub fn fixed6(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

pub fn svg_bars(title: &str, unit: &str, rows: &[(BusId, f64)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 320.0;
    const PAD: f64 = 40.0;
    let lo = rows.iter().map(|r| r.1).fold(0.0_f64, f64::min);
    let hi = rows.iter().map(|r| r.1).fold(0.0_f64, f64::max);
    let span = if hi - lo > 0.0 { hi - lo } else { 1.0 };
    let plot_w = W - 2.0 * PAD;
    let plot_h = H - 2.0 * PAD;
    let bar_w = if rows.is_empty() { 0.0 } else { plot_w / rows.len() as f64 };
    let y_of = |v: f64| PAD + plot_h * (hi - v) / span;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(out, r#"<text x="{PAD}" y="24" font-family="sans-serif" font-size="14">{}</text>"#, escape(title));
    let _ = writeln!(
        out,
        r#"<line x1="{PAD}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        y_of(0.0),
        W - PAD,
        y_of(0.0)
    );
    for (i, (bus, value)) in rows.iter().enumerate() {
        let x = PAD + bar_w * i as f64;
        let (top, bottom) = if *value >= 0.0 { (y_of(*value), y_of(0.0)) } else { (y_of(0.0), y_of(*value)) };
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="steelblue"><title>bus {bus}: {} {}</title></rect>"#,
            x + 0.1 * bar_w,
            top,
            0.8 * bar_w,
            bottom - top,
            fixed6(*value),
            escape(unit)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="middle">{bus}</text>"#,
            x + 0.5 * bar_w,
            H - PAD + 14.0
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
