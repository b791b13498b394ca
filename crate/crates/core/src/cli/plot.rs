//! Static SVG forest plot: per-study observed log odds ratios followed by
//! model posterior means with 95% credible intervals, and a null line.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::models::ModelKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotColors {
    pub study: String,
    pub standard_fe: String,
    pub standard_re: String,
    pub bookend: String,
}

impl Default for PlotColors {
    fn default() -> Self {
        Self {
            study: "#808080".into(),
            standard_fe: "#1f4e9c".into(),
            standard_re: "#2a8a4a".into(),
            bookend: "#c0392b".into(),
        }
    }
}

impl PlotColors {
    fn for_row(&self, kind: RowKind) -> &str {
        match kind {
            RowKind::Study => &self.study,
            RowKind::Model(ModelKind::StandardFe) => &self.standard_fe,
            RowKind::Model(ModelKind::StandardRe) => &self.standard_re,
            RowKind::Model(ModelKind::Bookend) => &self.bookend,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Study,
    Model(ModelKind),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestRow {
    pub label: String,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub kind: RowKind,
}

const WIDTH: f64 = 760.0;
const LABEL_W: f64 = 170.0;
const TEXT_W: f64 = 190.0;
const ROW_H: f64 = 26.0;
const TOP: f64 = 36.0;
const AXIS_H: f64 = 44.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag)
}

pub fn render_forest_svg(title: &str, rows: &[ForestRow], colors: &PlotColors) -> String {
    let finite: Vec<f64> = rows.iter().flat_map(|r| [r.lower, r.upper, r.estimate]).filter(|v| v.is_finite()).collect();
    let lo = finite.iter().copied().fold(0.0f64, f64::min);
    let hi = finite.iter().copied().fold(0.0f64, f64::max);
    let pad = ((hi - lo) * 0.08).max(0.05);
    let (x_min, x_max) = (lo - pad, hi + pad);
    let plot_l = LABEL_W;
    let plot_r = WIDTH - TEXT_W;
    let sx = |v: f64| plot_l + (v - x_min) / (x_max - x_min) * (plot_r - plot_l);

    let n_study = rows.iter().filter(|r| r.kind == RowKind::Study).count();
    let gap = if n_study > 0 && n_study < rows.len() { ROW_H * 0.5 } else { 0.0 };
    let row_y = |i: usize| TOP + ROW_H * (i as f64 + 0.5) + if i >= n_study { gap } else { 0.0 };
    let body_h = ROW_H * rows.len() as f64 + gap;
    let height = TOP + body_h + AXIS_H;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="Helvetica, Arial, sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" font-size="14" font-weight="bold">{}</text>"#, 10, escape(title));

    let axis_y = TOP + body_h + 6.0;
    let zero = sx(0.0);
    let _ = writeln!(
        svg,
        r##"<line x1="{zero:.2}" y1="{TOP}" x2="{zero:.2}" y2="{axis_y:.2}" stroke="#444" stroke-dasharray="4 3"/>"##
    );
    let _ = writeln!(svg, r##"<line x1="{plot_l}" y1="{axis_y:.2}" x2="{plot_r}" y2="{axis_y:.2}" stroke="#000"/>"##);
    let step = nice_step(x_max - x_min);
    let first = (x_min / step).ceil() as i64;
    let last = (x_max / step).floor() as i64;
    for k in first..=last {
        let t = k as f64 * step;
        let x = sx(t);
        // Round away accumulated binary noise so labels print as 0.2, not 0.20000000000000004.
        let label = (t * 1e6).round() / 1e6 + 0.0;
        let _ = writeln!(svg, r##"<line x1="{x:.2}" y1="{axis_y:.2}" x2="{x:.2}" y2="{:.2}" stroke="#000"/>"##, axis_y + 4.0);
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#, axis_y + 17.0);
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">log odds ratio</text>"#,
        (plot_l + plot_r) / 2.0,
        axis_y + 34.0
    );

    for (i, row) in rows.iter().enumerate() {
        let y = row_y(i);
        let color = escape(colors.for_row(row.kind));
        let weight = if row.kind == RowKind::Study { "normal" } else { "bold" };
        let _ = writeln!(
            svg,
            r#"<text x="10" y="{:.2}" font-weight="{weight}">{}</text>"#,
            y + 4.0,
            escape(&row.label)
        );
        if row.lower.is_finite() && row.upper.is_finite() {
            let _ = writeln!(
                svg,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/>"#,
                sx(row.lower),
                sx(row.upper)
            );
        }
        if row.estimate.is_finite() {
            let x = sx(row.estimate);
            match row.kind {
                RowKind::Study => {
                    let _ = writeln!(svg, r#"<rect x="{:.2}" y="{:.2}" width="8" height="8" fill="{color}"/>"#, x - 4.0, y - 4.0);
                }
                RowKind::Model(_) => {
                    let _ = writeln!(
                        svg,
                        r#"<polygon points="{:.2},{y:.2} {x:.2},{:.2} {:.2},{y:.2} {x:.2},{:.2}" fill="{color}"/>"#,
                        x - 7.0,
                        y - 6.0,
                        x + 7.0,
                        y + 6.0
                    );
                }
            }
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}">{:.3} [{:.3}, {:.3}]</text>"#,
            plot_r + 12.0,
            y + 4.0,
            row.estimate,
            row.lower,
            row.upper
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_rows_in_order_with_null_line() {
        let rows = vec![
            ForestRow { label: "Study 1".into(), estimate: -0.57, lower: -0.75, upper: -0.39, kind: RowKind::Study },
            ForestRow { label: "Study <2>".into(), estimate: -0.42, lower: -0.71, upper: -0.12, kind: RowKind::Study },
            ForestRow {
                label: "Standard FE".into(),
                estimate: -0.458,
                lower: -0.58,
                upper: -0.34,
                kind: RowKind::Model(ModelKind::StandardFe),
            },
        ];
        let svg = render_forest_svg("Forest plot", &rows, &PlotColors::default());
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("stroke-dasharray"));
        assert!(svg.contains("Study &lt;2&gt;"));
        assert!(svg.contains("#1f4e9c"));
        let a = svg.find("Study 1").unwrap();
        let b = svg.find("Study &lt;2&gt;").unwrap();
        let c = svg.find("Standard FE").unwrap();
        assert!(a < b && b < c);
    }

    #[test]
    fn tick_steps_are_round() {
        assert_eq!(nice_step(1.2), 0.2);
        assert_eq!(nice_step(3.0), 0.5);
    }
}
