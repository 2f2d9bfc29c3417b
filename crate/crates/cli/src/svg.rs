//! Minimal SVG plotting: histogram panels and grouped bar charts.

use std::fmt::Write as _;

pub const PALETTE: [&str; 6] = ["#222222", "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e"];

const PANEL_W: f64 = 220.0;
const PANEL_H: f64 = 150.0;
const MARGIN: f64 = 34.0;

/// One histogram: `(left edge, width, height)` bars.
#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub bars: Vec<(f64, f64, f64)>,
}

impl Series {
    /// Normalized histogram of `values` with unit-free bin `width`.
    pub fn histogram(label: impl Into<String>, color: &'static str, values: &[f64], width: f64) -> Self {
        let mut counts: std::collections::BTreeMap<i64, f64> = Default::default();
        for v in values {
            *counts.entry((v / width).floor() as i64).or_default() += 1.0;
        }
        let total = values.len().max(1) as f64;
        Series {
            label: label.into(),
            color,
            bars: counts
                .into_iter()
                .map(|(b, c)| (b as f64 * width, width, c / total))
                .collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Panel {
    pub title: String,
    pub series: Vec<Series>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 100.0 || v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn header(out: &mut String, w: f64, h: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.1}" y="16" font-size="13" text-anchor="middle">{}</text>"#, w / 2.0, esc(title));
}

fn legend(out: &mut String, items: &[(String, &str)], y: f64) {
    let mut x = 10.0;
    for (label, color) in items {
        let _ = writeln!(out, r#"<rect x="{x:.1}" y="{:.1}" width="10" height="10" fill="{color}" fill-opacity="0.5" stroke="{color}"/>"#, y - 9.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{y:.1}">{}</text>"#, x + 14.0, esc(label));
        x += 24.0 + 6.0 * label.len() as f64;
    }
}

/// Small multiples of overlaid histograms, `columns` panels per row.
pub fn histogram_grid(title: &str, panels: &[Panel], columns: usize) -> String {
    let columns = columns.max(1);
    let rows = panels.len().div_ceil(columns).max(1);
    let (w, h) = (columns as f64 * (PANEL_W + MARGIN) + MARGIN, rows as f64 * (PANEL_H + MARGIN + 14.0) + 50.0);
    let mut out = String::new();
    header(&mut out, w, h, title);
    let mut seen: Vec<(String, &str)> = Vec::new();
    for p in panels {
        for s in &p.series {
            if !seen.iter().any(|(l, _)| *l == s.label) {
                seen.push((s.label.clone(), s.color));
            }
        }
    }
    legend(&mut out, &seen, 34.0);
    for (i, p) in panels.iter().enumerate() {
        let x0 = MARGIN + (i % columns) as f64 * (PANEL_W + MARGIN);
        let y0 = 50.0 + (i / columns) as f64 * (PANEL_H + MARGIN + 14.0) + 14.0;
        draw_panel(&mut out, p, x0, y0);
    }
    out.push_str("</svg>\n");
    out
}

fn draw_panel(out: &mut String, p: &Panel, x0: f64, y0: f64) {
    let bars = p.series.iter().flat_map(|s| s.bars.iter());
    let (mut lo, mut hi, mut top) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for &(x, w, h) in bars {
        lo = lo.min(x);
        hi = hi.max(x + w);
        top = top.max(h);
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, x0 + PANEL_W / 2.0, y0 - 4.0, esc(&p.title));
    let _ = writeln!(out, r##"<rect x="{x0:.1}" y="{y0:.1}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#999"/>"##);
    if !lo.is_finite() || hi <= lo || top <= 0.0 {
        let _ = writeln!(out, r##"<text x="{:.1}" y="{:.1}" text-anchor="middle" fill="#999">empty</text>"##, x0 + PANEL_W / 2.0, y0 + PANEL_H / 2.0);
        return;
    }
    let sx = PANEL_W / (hi - lo);
    let sy = (PANEL_H - 4.0) / top;
    for s in &p.series {
        for &(x, w, h) in &s.bars {
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{c}" fill-opacity="0.35" stroke="{c}" stroke-width="0.4"/>"#,
                x0 + (x - lo) * sx,
                y0 + PANEL_H - h * sy,
                (w * sx).max(0.5),
                h * sy,
                c = s.color
            );
        }
    }
    let yb = y0 + PANEL_H + 11.0;
    let _ = writeln!(out, r#"<text x="{x0:.1}" y="{yb:.1}">{}</text>"#, fmt_tick(lo));
    let _ = writeln!(out, r#"<text x="{:.1}" y="{yb:.1}" text-anchor="end">{}</text>"#, x0 + PANEL_W, fmt_tick(hi));
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 2.0, y0 + 8.0, fmt_tick(top));
}

/// Grouped vertical bars; each group holds `(series label, value)` pairs.
pub fn bar_chart(title: &str, y_label: &str, groups: &[(String, Vec<(String, f64)>)], y_max: f64) -> String {
    let per = groups.iter().map(|g| g.1.len()).max().unwrap_or(1).max(1);
    let bar_w = 18.0;
    let group_w = per as f64 * bar_w + 24.0;
    let plot_h = 220.0;
    let (x0, y0) = (50.0, 50.0);
    let w = x0 + groups.len() as f64 * group_w + 30.0;
    let h = y0 + plot_h + 40.0;
    let mut out = String::new();
    header(&mut out, w.max(260.0), h, title);
    let mut labels: Vec<(String, &str)> = Vec::new();
    for (_, bars) in groups {
        for (l, _) in bars {
            if !labels.iter().any(|(x, _)| x == l) {
                labels.push((l.clone(), PALETTE[(labels.len() + 1) % PALETTE.len()]));
            }
        }
    }
    legend(&mut out, &labels, 34.0);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#, y0 + plot_h, w - 20.0, y0 + plot_h);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{:.1}" stroke="black"/>"#, y0 + plot_h);
    for t in 0..=4 {
        let v = y_max * t as f64 / 4.0;
        let y = y0 + plot_h - plot_h * t as f64 / 4.0;
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 4.0, y + 3.0, fmt_tick(v));
    }
    let _ = writeln!(
        out,
        r#"<text x="12" y="{:.1}" transform="rotate(-90 12 {:.1})" text-anchor="middle">{}</text>"#,
        y0 + plot_h / 2.0,
        y0 + plot_h / 2.0,
        esc(y_label)
    );
    for (gi, (name, bars)) in groups.iter().enumerate() {
        let gx = x0 + 12.0 + gi as f64 * group_w;
        for (bi, (l, v)) in bars.iter().enumerate() {
            let color = labels.iter().find(|(x, _)| x == l).map_or("#777", |(_, c)| c);
            let bh = (v / y_max).clamp(0.0, 1.0) * plot_h;
            let _ = writeln!(
                out,
                r#"<rect x="{:.1}" y="{:.2}" width="{bar_w}" height="{bh:.2}" fill="{color}" fill-opacity="0.7"><title>{} {}: {v:.4}</title></rect>"#,
                gx + bi as f64 * bar_w,
                y0 + plot_h - bh,
                esc(name),
                esc(l)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            gx + per as f64 * bar_w / 2.0,
            y0 + plot_h + 14.0,
            esc(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_is_normalized() {
        let s = Series::histogram("a", PALETTE[0], &[1.0, 1.5, 3.0, 3.2], 1.0);
        assert_eq!(s.bars, vec![(1.0, 1.0, 0.5), (3.0, 1.0, 0.5)]);
    }

    #[test]
    fn documents_are_well_formed() {
        let grid = histogram_grid(
            "t <1>",
            &[
                Panel {
                    title: "p".into(),
                    series: vec![Series::histogram("a", PALETTE[0], &[1.0, 2.0], 1.0)],
                },
                Panel {
                    title: "empty".into(),
                    series: vec![],
                },
            ],
            2,
        );
        assert!(grid.starts_with("<svg") && grid.trim_end().ends_with("</svg>"));
        assert!(grid.contains("t &lt;1&gt;"));
        let bars = bar_chart("b", "AUROC", &[("VGG05".into(), vec![("T=1".into(), 0.8), ("T*".into(), 0.9)])], 1.0);
        assert_eq!(bars.matches("<rect x=").count(), 2 + 2);
    }
}
